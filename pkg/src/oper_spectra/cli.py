"""``oper-spectra`` command line.

Every command validates its inputs first (status 2 and no output on a bad
config), then writes its artifacts plus ``manifest.json`` into ``--out``.
Numerical failures give status 1 and an ``error.json`` report.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import acceptance
from .abelian import (
    CurvePoint,
    cycle_monodromy,
    hecke_eigenvalue_F,
    integer_harmonic_class,
    load_curve,
    oper_eigenvalues_ab,
    period_matrix,
    reconstruction_residual,
)
from .errors import ConfigError, NumericalFailure
from .io import write_csv, write_json, write_manifest
from .monodromy import (
    _spread,
    compute_monodromy,
    default_words,
    irreducibility_margin,
    loop_basis,
    reality_residual,
)
from .oper import load_config, oper_family
from .realoper import SearchOptions, enumerate_real_opers
from .section import eigenvalue_section, invariant_hermitian_form, sym_power_section
from .transport import straight

log = logging.getLogger("oper_spectra")

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_TOL = 1e-12
DEFAULT_RECT = (-1.2, 0.7, -1.0, 1.0)


@dataclass
class RunConfig:
    """Validated command-line request."""

    command: str
    inputs: list
    out: Path
    tol: float
    workers: int
    seed: int
    grid: tuple | None = None
    rect: tuple | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise ConfigError(f"--tol must be positive, got {self.tol}")
        if self.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {self.workers}")
        if self.grid is not None and min(self.grid) < 1:
            raise ConfigError(f"--grid must be positive, got {self.grid}")
        if self.rect is not None:
            x0, x1, y0, y1 = self.rect
            if not (x0 <= x1 and y0 <= y1):
                raise ConfigError(f"--rect must be xmin xmax ymin ymax, got {self.rect}")


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", type=Path, required=config_required, help="input JSON")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="transport tolerance")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=acceptance.DEFAULT_SEED)


def _grid_args(p: argparse.ArgumentParser, default) -> None:
    p.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"), default=default)
    p.add_argument("--rect", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))


def _mu_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mu", type=float, nargs=2, metavar=("RE", "IM"),
                   help="set the free accessory parameter of the family")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oper-spectra", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("monodromy", help="monodromy generators of a sealed config")
    _common(p)
    _mu_arg(p)

    p = sub.add_parser("find-real", help="scan and polish for real opers")
    _common(p)
    _grid_args(p, [32, 32])

    p = sub.add_parser("phi", help="eigenvalue section on a grid")
    _common(p)
    _grid_args(p, [16, 16])
    _mu_arg(p)

    p = sub.add_parser("sym-check", help="Sym^m section against a power of Phi")
    _common(p)
    _grid_args(p, [8, 8])
    _mu_arg(p)
    p.add_argument("--m", type=int, default=2)

    ab = sub.add_parser("abelian", help="abelian (hyperelliptic) computations")
    absub = ab.add_subparsers(dest="action", required=True)
    for name, helptext in (("periods", "period matrix and tau"),
                           ("class", "harmonic class with integer periods"),
                           ("hecke", "F along a straight path"),
                           ("verify", "Hecke and dF checks on seeded samples")):
        q = absub.add_parser(name, help=helptext)
        _common(q, config_required=False)
        q.add_argument("--curve", type=Path, help="curve JSON (alias of --config)")
        if name != "periods":
            q.add_argument("--m", type=int, nargs="+", required=True, help="integer periods (a..., b...)")
        if name == "hecke":
            q.add_argument("--p0", type=float, nargs=2, default=[0.3, 0.8], metavar=("RE", "IM"))
            q.add_argument("--p", type=float, nargs=2, default=[1.3, -0.4], metavar=("RE", "IM"))
            q.add_argument("--samples", type=int, default=21)

    p = sub.add_parser("selfcheck", help="run the acceptance criteria")
    _common(p, config_required=False)
    p.add_argument("--only", type=int, nargs="+", help="criterion numbers")
    return parser


# ---------------------------------------------------------------- commands

def _load_oper(args):
    config, raw = load_config(args.config)
    free_index = raw.get("free_index")
    mu = getattr(args, "mu", None)
    if mu is not None:
        family = oper_family(config, free_index=free_index)
        if family.rigid:
            raise ConfigError("--mu given but the config has no free accessory parameter")
        config = family.config_at(complex(*mu))
    if not config.sealed:
        raise ConfigError(f"{args.config}: config is not sealed at infinity")
    return config, raw


def _section_grid(config, rc: RunConfig) -> np.ndarray:
    if rc.rect is not None:
        x0, x1, y0, y1 = rc.rect
    else:
        mean, spread = _spread(config.punctures)
        w = spread + 1.0
        x0, x1, y0, y1 = mean.real - w, mean.real + w, mean.imag - w, mean.imag + w
    nx, ny = rc.grid
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    return (xs[None, :] + 1j * ys[:, None]).ravel()


def cmd_monodromy(rc: RunConfig) -> list:
    config = rc.extra["config"]
    basis = loop_basis(config.punctures)
    rep = compute_monodromy(config, basis, tol=rc.tol)
    k = rep.n_generators
    words = default_words(k)
    data = {
        "config": config.to_dict(),
        "basis": {"basepoint": rep.basepoint, "order": list(basis.order), "radius": basis.radius,
                  "clearance": basis.clearance},
        "representation": rep.to_dict(),
        "det": [complex(np.linalg.det(M)) for M in rep.generators],
        "local_traces": [complex(np.trace(M)) for M in rep.generators],
        "words": [list(w) for w in words],
        "reality_residual": reality_residual(rep, words),
        "irreducibility_margin": irreducibility_margin(rep) if k >= 2 else None,
    }
    return [write_json(rc.out / "monodromy.json", data)]


def cmd_find_real(rc: RunConfig) -> list:
    config, raw = rc.extra["config"], rc.extra["raw"]
    family = oper_family(config, free_index=raw.get("free_index"))
    rect = rc.rect or tuple(raw.get("rect", DEFAULT_RECT))
    opts = SearchOptions(tol=rc.tol, workers=rc.workers)
    res = enumerate_real_opers(family, rect, tuple(rc.grid), opts)
    hits = []
    for h in res.hits:
        d = h.to_dict()
        d["mu_vector"] = family.mu_vector(h.mu)
        hits.append(d)
    data = {"family": family.to_dict(), "rect": list(rect), "grid": list(rc.grid), "hits": hits,
            "candidates": len(res.candidates),
            "failures": [{"stage": st, "mu": mu, "message": msg} for st, mu, msg in res.failures]}
    out = [write_json(rc.out / "hits.json", data)]
    out.append(write_csv(rc.out / "scan_log.csv", ["mu_re", "mu_im", "residual"],
                         [(mu.real, mu.imag, r) for mu, r in res.scan_log]))
    return out


def cmd_phi(rc: RunConfig) -> list:
    config = rc.extra["config"]
    rep = compute_monodromy(config, tol=rc.tol)
    form = invariant_hermitian_form(rep)
    sec = eigenvalue_section(config, rep, form, _section_grid(config, rc), rc.tol)
    info = form.to_dict()
    info.update({"signature": list(form.signature), "weight": list(sec.weight), "chart": sec.chart,
                 "skipped": [{"z": z, "reason": why} for z, why in sec.skipped]})
    return [write_csv(rc.out / "phi.csv", ["x", "y", "phi"],
                      [(z.real, z.imag, v) for z, v in zip(sec.points, sec.values)]),
            write_json(rc.out / "form.json", info)]


def cmd_sym_check(rc: RunConfig) -> list:
    config, m = rc.extra["config"], rc.extra["m"]
    rep = compute_monodromy(config, tol=rc.tol)
    form = invariant_hermitian_form(rep)
    grid = _section_grid(config, rc)
    s1 = eigenvalue_section(config, rep, form, grid, rc.tol)
    sm = sym_power_section(config, rep, form, m, grid, rc.tol)
    pw = s1.values ** m
    c = float(np.dot(sm.values, pw) / np.dot(pw, pw))
    dev = np.abs(sm.values - c * pw) / np.abs(c * pw)
    summary = {"m": m, "c": c, "max_relative_deviation": float(np.max(dev)),
               "sym_form_residual": sm.form_residual, "points": int(len(pw))}
    return [write_csv(rc.out / "sym.csv", ["x", "y", "phi", "phi_m", "relative_deviation"],
                      [(z.real, z.imag, a, b, d) for z, a, b, d in zip(s1.points, s1.values, sm.values, dev)]),
            write_json(rc.out / "sym.json", summary)]


def cmd_abelian(rc: RunConfig) -> list:
    curve, action = rc.extra["curve"], rc.extra["action"]
    periods = period_matrix(curve)
    if action == "periods":
        data = periods.to_dict()
        sym, eig = periods.riemann_defects()
        data.update({"riemann_asymmetry": sym, "riemann_min_im_eig": eig, "curve": curve.to_dict()})
        return [write_json(rc.out / "periods.json", data)]
    cls = integer_harmonic_class(periods, rc.extra["m"])
    if action == "class":
        a, b = oper_eigenvalues_ab(cls)
        data = cls.to_dict()
        data.update({"reconstruction_residual": reconstruction_residual(periods, cls), "a": a, "b": b,
                     "cycle_monodromy": cycle_monodromy(periods, cls), "curve": curve.to_dict()})
        return [write_json(rc.out / "class.json", data)]
    if action == "hecke":
        p0 = CurvePoint(complex(*rc.extra["p0"]), 1)
        target = complex(*rc.extra["p"])
        rows = []
        for t in np.linspace(0.0, 1.0, rc.extra["samples"]):
            x = p0.x + t * (target - p0.x)
            F = hecke_eigenvalue_F(curve, cls, p0, None, straight(p0.x, x))
            rows.append((t, x.real, x.imag, F.real, F.imag))
        return [write_csv(rc.out / "hecke.csv", ["t", "x_re", "x_im", "F_re", "F_im"], rows),
                write_json(rc.out / "hecke.json", {"m": cls.to_dict()["m"], "c": cls.c, "p0": p0.x,
                                                  "p": target, "sheet0": p0.sheet,
                                                  "curve": curve.to_dict()})]
    passed, measured = acceptance.abelian_checks(curve, rc.extra["m"], np.random.default_rng(rc.seed))
    return [write_json(rc.out / "verify.json", {"passed": passed, "measured": measured,
                                                "thresholds": acceptance.ABELIAN_LIMITS,
                                                "seed": rc.seed, "curve": curve.to_dict()})]


def cmd_selfcheck(rc: RunConfig) -> list:
    results = acceptance.run_all(tol=rc.tol, seed=rc.seed, only=rc.extra.get("only"))
    print(acceptance.format_table(results))
    rc.extra["status"] = 0 if all(r.passed for r in results) else 1
    # timings vary between runs and are kept out of the report
    report = [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in results]
    return [write_json(rc.out / "selfcheck.json", {"tol": rc.tol, "seed": rc.seed, "criteria": report})]


COMMANDS = {"monodromy": cmd_monodromy, "find-real": cmd_find_real, "phi": cmd_phi,
            "sym-check": cmd_sym_check, "abelian": cmd_abelian, "selfcheck": cmd_selfcheck}


# ---------------------------------------------------------------- driver

def _prepare(args) -> RunConfig:
    """Parse and validate every input; raises ConfigError before anything is written."""
    rc = RunConfig(args.command, [], args.out, args.tol, args.workers, args.seed,
                   tuple(args.grid) if getattr(args, "grid", None) else None,
                   tuple(args.rect) if getattr(args, "rect", None) else None)
    rc.validate()
    if args.command in ("monodromy", "find-real", "phi", "sym-check"):
        config, raw = _load_oper(args)
        rc.inputs.append(args.config)
        rc.extra.update(config=config, raw=raw)
        if args.command == "sym-check":
            if args.m < 1:
                raise ConfigError("--m must be >= 1")
            rc.extra["m"] = args.m
    elif args.command == "abelian":
        path = args.curve or args.config
        if path is None:
            raise ConfigError("abelian commands need --curve")
        rc.inputs.append(path)
        curve = load_curve(path)
        rc.extra.update(curve=curve, action=args.action)
        if args.action != "periods":
            if len(args.m) != 2 * curve.genus:
                raise ConfigError(f"--m needs {2 * curve.genus} integers for genus {curve.genus}")
            rc.extra["m"] = tuple(args.m)
        if args.action == "hecke":
            if args.samples < 2:
                raise ConfigError("--samples must be >= 2")
            rc.extra.update(p0=args.p0, p=args.p, samples=args.samples)
    elif args.command == "selfcheck":
        only = args.only
        if only is not None and any(k < 1 or k > len(acceptance.CRITERIA) for k in only):
            raise ConfigError(f"--only takes criterion numbers 1..{len(acceptance.CRITERIA)}")
        rc.extra["only"] = only
    return rc


def _setup_logging() -> None:
    level = os.environ.get("OPER_SPECTRA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    command = args.command + (f" {args.action}" if args.command == "abelian" else "")
    try:
        rc = _prepare(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rc.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    status, outputs = 0, []
    try:
        outputs = COMMANDS[args.command](rc)
        status = rc.extra.get("status", 0)
    except NumericalFailure as exc:
        status = 1
        log.error("%s failed: %s", command, exc)
        outputs = [write_json(rc.out / "error.json", {"command": command, "error": type(exc).__name__,
                                                      "message": str(exc)})]
    except ConfigError as exc:  # detected only once the computation starts
        status = 2
        log.error("%s: %s", command, exc)
        outputs = [write_json(rc.out / "error.json", {"command": command, "error": type(exc).__name__,
                                                      "message": str(exc)})]
    write_manifest(rc.out, command, argv, rc.inputs, outputs, rc.seed, time.perf_counter() - t0, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
