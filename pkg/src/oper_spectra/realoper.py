"""Search for accessory parameters whose monodromy is real.

The objective is the vector of imaginary parts of word traces.  A coarse grid
scan proposes candidates, damped Gauss-Newton polishes them, and each polished
point is certified by the invariant Hermitian form (a one-dimensional nullspace
with a clear singular-value gap).
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import NumericalFailure, SingularJacobian
from .monodromy import (
    LoopBasis,
    commutator_margins,
    default_words,
    family_generators,
    loop_basis,
    word_traces,
)
from .oper import OperFamily
from .section import invariance_singular_values

log = logging.getLogger(__name__)

CONVERGED_RESIDUAL = 1e-9
MIN_SVD_GAP = 1e-4
IRREDUCIBLE_MARGIN = 1e-3


@dataclass
class RealOperHit:
    mu: complex
    residual_norm: float
    svd_gap: float
    jacobian_condition: float
    converged: bool
    irreducibility_margin: float = float("nan")
    iterations: int = 0
    rigid: bool = False
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mu"] = [self.mu.real, self.mu.imag]
        return d


@dataclass
class ScanResult:
    candidates: list
    log: list  # (mu, residual norm); nan for failed cells
    failures: list
    rigid: bool = False


@dataclass
class Enumeration:
    hits: list
    candidates: list
    scan_log: list
    failures: list
    evaluations: list = field(default_factory=list)


@dataclass
class SearchOptions:
    scan_tol: float = 1e-10
    tol: float = 1e-12
    target: float = 1e-10
    max_iter: int = 50
    dedup: float = 1e-6
    max_step: float = 0.25
    stall_iters: int = 3
    coarse_target: float = 1e-7
    coarse_accept: float = 1e-5
    merge_radius: float = 1e-5
    conjugate_seeds: bool = True
    workers: int = 1
    words: list | None = None


class _Objective:
    """Residual vectors for batches of family parameters (picklable for workers)."""

    def __init__(self, family: OperFamily, basis: LoopBasis, words, tol: float):
        self.family = family
        self.basis = basis
        self.words = words
        self.tol = tol

    def generators(self, s_values) -> np.ndarray:
        return family_generators(self.family, s_values, self.basis, self.tol)

    def residuals(self, s_values) -> np.ndarray:
        g = self.generators(s_values)
        return np.imag(word_traces(g, self.words))

    def __call__(self, s_values) -> np.ndarray:
        return self.residuals(s_values)


def _make_objective(family: OperFamily, words, tol: float, basis=None) -> _Objective:
    basis = basis or loop_basis(family.base.punctures)
    if words is None:
        words = default_words(len(basis.loops))
    return _Objective(family, basis, words, tol)


def _scan_row(obj: _Objective, row: np.ndarray):
    """Residual norms along one grid row; falls back to single cells on failure."""
    try:
        return np.linalg.norm(obj(row), axis=-1), []
    except NumericalFailure as exc:
        log.info("row batch failed (%s); retrying cell by cell", exc)
    out = np.empty(row.size)
    failures = []
    for k, s in enumerate(row):
        try:
            out[k] = float(np.linalg.norm(obj([s])))
        except NumericalFailure as exc:
            out[k] = np.nan
            failures.append((complex(s), str(exc)))
            log.warning("cell mu=%s skipped: %s", s, exc)
    return out, failures


def _grid(rect, grid):
    a, b, c, d = (float(x) for x in rect)
    nx, ny = (int(n) for n in grid)
    xs = np.linspace(a, b, nx)
    ys = np.linspace(c, d, ny)
    return xs, ys


def scan(family: OperFamily, rect, grid=(32, 32), tol: float = 1e-10, words=None,
         workers: int = 1, basis: LoopBasis | None = None) -> ScanResult:
    """Grid-local minima of ||residual||^2 lying below the grid median.

    ``rect`` is ``(re_min, re_max, im_min, im_max)``.  Candidates are ordered by
    (Re, Im).  Rows are batched and may be spread over ``workers`` processes;
    results do not depend on the worker count.
    """
    if family.rigid:
        return ScanResult([0j], [], [], rigid=True)
    nx, ny = (int(n) for n in grid)
    if nx < 8 or ny < 8:
        raise ValueError("grid needs at least 8 x 8 nodes")
    a, b, c, d = (float(x) for x in rect)
    if b <= a or d <= c:
        return ScanResult([], [], [])
    obj = _make_objective(family, words, tol, basis)
    xs, ys = _grid(rect, grid)
    rows = [xs + 1j * y for y in ys]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_row, [obj] * len(rows), rows))
    else:
        results = [_scan_row(obj, row) for row in rows]
    R = np.vstack([r for r, _ in results])
    failures = [f for _, fs in results for f in fs]
    obj_sq = R ** 2
    median = float(np.nanmedian(obj_sq))
    padded = np.pad(obj_sq, 1, constant_values=np.inf)
    padded = np.where(np.isnan(padded), np.inf, padded)
    cands = []
    for i in range(ny):
        for j in range(nx):
            v = obj_sq[i, j]
            if not np.isfinite(v) or v >= median:
                continue
            window = padded[i:i + 3, j:j + 3].copy()
            window[1, 1] = np.inf
            if v <= window.min():
                cands.append(complex(xs[j], ys[i]))
    cands.sort(key=lambda z: (z.real, z.imag))
    scan_log = [(complex(xs[j], ys[i]), float(R[i, j])) for i in range(ny) for j in range(nx)]
    return ScanResult(cands, scan_log, failures)


def _certify(obj: _Objective, s_values) -> list:
    """(svd gap, irreducibility margin) for each parameter value, one batch."""
    gens = obj.generators(list(s_values))
    out = []
    for g in gens:
        sigma = invariance_singular_values(g)
        margin = float(commutator_margins(g)) if g.shape[0] >= 2 else 0.0
        out.append((float(sigma[1] - sigma[0]), margin))
    return out


def _evaluate(obj: _Objective, pts: np.ndarray):
    """Residual vectors for a batch; rows that fail on their own come back as nan."""
    try:
        return obj(pts), {}
    except NumericalFailure:
        pass
    rows, errors = [], {}
    for k, s in enumerate(pts):
        try:
            rows.append(obj([s])[0])
        except NumericalFailure as exc:
            rows.append(None)
            errors[k] = exc
    width = next((len(r) for r in rows if r is not None), 1)
    out = np.array([r if r is not None else np.full(width, np.nan) for r in rows])
    return out, errors


def _fd_points(s: np.ndarray):
    h = 1e-6 * (1 + np.abs(s))
    pts = np.stack([s, s + h, s - h, s + 1j * h, s - 1j * h], axis=1).reshape(-1)
    return pts, h


def _jacobians(obj: _Objective, s: np.ndarray):
    """Residuals and central-difference Jacobians (k, n_words, 2) at each s."""
    pts, h = _fd_points(s)
    r, errors = _evaluate(obj, pts)
    r = r.reshape(len(s), 5, -1)
    J = np.stack([(r[:, 1] - r[:, 2]) / (2 * h[:, None]), (r[:, 3] - r[:, 4]) / (2 * h[:, None])], axis=2)
    bad = sorted({k // 5 for k in errors})
    return r[:, 0], J, {k: errors[min(e for e in errors if e // 5 == k)] for k in bad}


def polish_many(family: OperFamily, mu0s, opts: SearchOptions | None = None,
                basis: LoopBasis | None = None, evaluations: list | None = None) -> list:
    """Damped Gauss-Newton from several starts at once (one batched transport per stage).

    Each entry of the result is a :class:`RealOperHit` or the exception that
    stopped that start.
    """
    opts = opts or SearchOptions()
    obj = _make_objective(family, opts.words, opts.tol, basis)
    s = np.asarray([complex(m) for m in mu0s], dtype=complex)
    n = s.size
    if n == 0:
        return []
    if family.rigid:
        r, errors = _evaluate(obj, s)
        cert = _certify(obj, s)
        out = []
        for k in range(n):
            norm = float(np.linalg.norm(r[k]))
            gap, margin = cert[k]
            out.append(_flag(RealOperHit(complex(s[k]), norm, gap, 1.0,
                                         norm < CONVERGED_RESIDUAL and gap > MIN_SVD_GAP, margin, 0,
                                         rigid=True)))
        return out
    result: list = [None] * n
    r, J, errors = _jacobians(obj, s)
    for k, exc in errors.items():
        result[k] = exc
    norm = np.linalg.norm(r, axis=1)
    iters = np.zeros(n, dtype=int)
    stalled = np.zeros(n, dtype=int)
    active = np.array([result[k] is None for k in range(n)])

    def retire():
        active[:] = active & (norm >= opts.target) & (iters < opts.max_iter) & (stalled < opts.stall_iters)

    retire()
    while active.any():
        idx = np.flatnonzero(active)
        ds = np.zeros(n, dtype=complex)
        for k in idx:
            sv = np.linalg.svd(J[k], compute_uv=False)
            if sv[0] == 0 or not np.isfinite(sv).all() or sv[-1] / sv[0] < 1e-14:
                result[k] = SingularJacobian(f"Jacobian singular at mu={s[k]}")
                active[k] = False
                continue
            step = np.linalg.lstsq(J[k], -r[k], rcond=None)[0]
            d = complex(step[0], step[1])
            if abs(d) > opts.max_step:
                d *= opts.max_step / abs(d)
            ds[k] = d
        iters[active] += 1
        lam = np.ones(n)
        pending = np.flatnonzero(active)
        accepted = np.zeros(n, dtype=bool)
        trial_norm = np.full(n, np.inf)
        for _ in range(8):
            if pending.size == 0:
                break
            trial = s[pending] + lam[pending] * ds[pending]
            rt, _ = _evaluate(obj, trial)
            nt = np.linalg.norm(rt, axis=1)
            if evaluations is not None:
                evaluations.extend(("polish", complex(z), float(v)) for z, v in zip(trial, nt))
            ok = np.isfinite(nt) & (nt < norm[pending])
            accepted[pending[ok]] = True
            trial_norm[pending[ok]] = nt[ok]
            lam[pending[~ok]] *= 0.5
            pending = pending[~ok]
        # no descent direction left: stop where we are
        active[pending] = False
        moved = np.flatnonzero(accepted)
        if moved.size:
            # progress below a factor 2 per step means rounding noise has taken over
            stalled[moved] = np.where(trial_norm[moved] > 0.5 * norm[moved], stalled[moved] + 1, 0)
            s[moved] = s[moved] + lam[moved] * ds[moved]
            r_new, J_new, errs = _jacobians(obj, s[moved])
            r[moved], J[moved] = r_new, J_new
            norm[moved] = np.linalg.norm(r_new, axis=1)
            for j, exc in errs.items():
                result[moved[j]] = exc
                active[moved[j]] = False
        retire()
    live = [k for k in range(n) if result[k] is None]
    cert = _certify(obj, s[live]) if live else []
    for k, (gap, margin) in zip(live, cert):
        sv = np.linalg.svd(J[k], compute_uv=False)
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
        converged = bool(norm[k] < CONVERGED_RESIDUAL and gap > MIN_SVD_GAP)
        result[k] = _flag(RealOperHit(complex(s[k]), float(norm[k]), gap, cond, converged, margin,
                                      int(iters[k])))
    return result


def polish(family: OperFamily, mu0: complex, opts: SearchOptions | None = None,
           basis: LoopBasis | None = None, evaluations: list | None = None) -> RealOperHit:
    """Damped Gauss-Newton on (Re mu, Im mu) against the reality residual.

    Returns the best iterate; ``converged`` is False when the residual target or
    the certification thresholds are missed.
    """
    out = polish_many(family, [mu0], opts, basis, evaluations)[0]
    if isinstance(out, Exception):
        raise out
    return out


def _flag(hit: RealOperHit) -> RealOperHit:
    if not hit.converged:
        hit.flags.append("not-converged")
    if not hit.irreducibility_margin > IRREDUCIBLE_MARGIN:
        hit.flags.append("reducible")
    return hit


def residual_at(family: OperFamily, s: complex, tol: float = 1e-12, words=None,
                basis: LoopBasis | None = None) -> float:
    obj = _make_objective(family, words, tol, basis)
    return float(np.linalg.norm(obj([s])[0]))


def isolation_factor(family: OperFamily, hit: RealOperHit, distance: float = 0.01,
                     tol: float = 1e-12, floor: float = 1e-14) -> float:
    """Smallest ratio residual(mu* + distance * u) / residual(mu*) over 4 directions."""
    obj = _make_objective(family, None, tol)
    pts = np.array([hit.mu + distance * u for u in (1, 1j, -1, -1j)] + [hit.mu])
    r = np.linalg.norm(obj(pts), axis=-1)
    return float(np.min(r[:4]) / max(r[4], floor))


def is_real_family(family: OperFamily) -> bool:
    """All punctures, exponents and the parameter line real: hits come in conjugate pairs."""
    base = family.base
    vals = list(base.punctures) + list(family.particular) + list(family.direction or ())
    return (all(abs(complex(v).imag) == 0 for v in vals)
            and all(np.isreal(d) for d in base.delta))


def _in_rect(z: complex, rect) -> bool:
    a, b, c, d = rect
    return a <= z.real <= b and c <= z.imag <= d


def enumerate_real_opers(family: OperFamily, rect, grid=(32, 32),
                         opts: SearchOptions | None = None) -> Enumeration:
    """scan -> polish -> deduplicate; converged hits inside ``rect`` sorted by (Re, Im)."""
    opts = opts or SearchOptions()
    basis = loop_basis(family.base.punctures)
    sr = scan(family, rect, grid, opts.scan_tol, opts.words, opts.workers, basis)
    failures = [("scan", mu, msg) for mu, msg in sr.failures]
    evaluations = [("scan", mu, r) for mu, r in sr.log]
    polished = []
    coarse_opts = replace(opts, tol=opts.scan_tol, target=opts.coarse_target)

    def fine(starts, origins, stage):
        for mu0, hit in zip(origins, polish_many(family, starts, opts, basis, evaluations)):
            if isinstance(hit, Exception):
                failures.append((stage, mu0, str(hit)))
            elif not hit.converged:
                failures.append((stage, mu0, f"not converged (residual {hit.residual_norm:.3e}, "
                                             f"gap {hit.svd_gap:.3e})"))
            elif family.rigid or _in_rect(hit.mu, rect):
                polished.append(hit)

    # cheap descent at the scan tolerance first; many candidates share a basin
    starts, origins = [], []
    for mu0, coarse in zip(sr.candidates, polish_many(family, sr.candidates, coarse_opts, basis, evaluations)):
        if isinstance(coarse, Exception):
            failures.append(("polish", mu0, str(coarse)))
        elif coarse.residual_norm > opts.coarse_accept:
            failures.append(("polish", mu0, f"descent stalled at residual {coarse.residual_norm:.3e}"))
        elif all(abs(coarse.mu - z) > opts.merge_radius for z in starts):
            starts.append(coarse.mu)
            origins.append(mu0)
    fine(starts, origins, "polish")
    if opts.conjugate_seeds and not family.rigid and is_real_family(family):
        # narrow trenches can hide one member of a conjugate pair from the grid
        mirrors = []
        for hit in list(polished):
            m = hit.mu.conjugate()
            if abs(m - hit.mu) > opts.dedup and all(abs(m - h.mu) > opts.dedup for h in polished) \
                    and all(abs(m - z) > opts.dedup for z in mirrors):
                mirrors.append(m)
        fine(mirrors, mirrors, "conjugate")
    hits: list = []
    for hit in sorted(polished, key=lambda h: h.residual_norm):
        if all(abs(hit.mu - h.mu) > opts.dedup for h in hits):
            hits.append(hit)
    hits.sort(key=lambda h: (h.mu.real, h.mu.imag))
    return Enumeration(hits, sr.candidates, sr.log, failures, evaluations)
