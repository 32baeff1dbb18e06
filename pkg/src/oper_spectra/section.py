"""Invariant Hermitian pairings and the single-valued sections built from them.

With ``s(z) = (y_1(z), y_2(z))`` the solutions normalized by ``(y, y')(z_0) = I``
at the basepoint, continuation around loop ``j`` sends ``s`` to ``s M_j``.  A
Hermitian ``H`` with ``M_j H M_j^† = H`` for all generators therefore makes

    Phi(z) = s(z) H s(z)^†

single-valued.  ``Phi`` is a real section of weight (1/2, 1/2); the symmetric
power version uses the induced pairing on ``Sym^m`` and has weight (m/2, m/2).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ClearanceViolation,
    IrreducibilityRequired,
    NotRealOper,
    NumericalFailure,
    StencilTooCoarse,
)
from .monodromy import MonodromyRep, default_clearance, default_radius, route
from .oper import OperConfig, evaluate_t, to_first_order_system
from .transport import Arc, PathSpec, Segment, transport, winding_number

IRREDUCIBLE_TOL = 1e-8
REAL_TOL = 1e-6

# real basis of 2x2 Hermitian matrices
_HERM_BASIS = np.array([
    [[1, 0], [0, 0]],
    [[0, 0], [0, 1]],
    [[0, 1], [1, 0]],
    [[0, 1j], [-1j, 0]],
], dtype=complex)


@dataclass
class HermitianForm:
    H: np.ndarray
    det_sign: int
    residual: float
    sigma: np.ndarray
    gap: float

    @property
    def signature(self) -> tuple[int, int]:
        ev = np.linalg.eigvalsh(self.H)
        return int(np.sum(ev > 0)), int(np.sum(ev < 0))

    def to_dict(self) -> dict:
        return {
            "H": [[[float(x.real), float(x.imag)] for x in row] for row in self.H],
            "det_sign": self.det_sign,
            "residual": self.residual,
            "sigma": [float(s) for s in self.sigma],
            "gap": self.gap,
        }


def hermitian_from_params(v) -> np.ndarray:
    return np.tensordot(np.asarray(v, dtype=float), _HERM_BASIS, axes=(0, 0))


def invariance_operator(generators: np.ndarray) -> np.ndarray:
    """Real matrix of ``H -> (M_j H M_j^† - H)_j`` on the 4 Hermitian parameters."""
    cols = []
    for E in _HERM_BASIS:
        blocks = [(M @ E @ M.conj().T - E).ravel() for M in generators]
        flat = np.concatenate(blocks)
        cols.append(np.concatenate([flat.real, flat.imag]))
    return np.stack(cols, axis=1)


def invariance_singular_values(generators: np.ndarray) -> np.ndarray:
    """Singular values of the invariance operator in increasing order."""
    return np.linalg.svd(invariance_operator(generators), compute_uv=False)[::-1]


def form_residual(generators: np.ndarray, H: np.ndarray) -> float:
    return max((float(np.linalg.norm(M @ H @ M.conj().T - H, 2)) for M in generators), default=0.0)


def invariant_hermitian_form(rep: MonodromyRep, irreducible_tol: float = IRREDUCIBLE_TOL,
                             real_tol: float = REAL_TOL) -> HermitianForm:
    """Least-singular Hermitian solution of ``M_j H M_j^† = H``, scaled to |det H| = 1.

    Thresholds are relative to the largest singular value of the operator.
    """
    gens = np.asarray(rep.generators, dtype=complex)
    op = invariance_operator(gens)
    _, s, vh = np.linalg.svd(op)
    sigma = s[::-1]
    scale = max(1.0, float(s[0]))
    if sigma[1] <= irreducible_tol * scale:
        raise IrreducibilityRequired(
            f"invariant forms span {int(np.sum(sigma <= irreducible_tol * scale))} dimensions")
    if sigma[0] > real_tol * scale:
        raise NotRealOper(f"no invariant Hermitian form: sigma_1 = {sigma[0]:.3e}")
    v = vh[-1]
    det = v[0] * v[1] - v[2] ** 2 - v[3] ** 2
    if abs(det) < 1e-14:
        raise NumericalFailure("invariant form is degenerate")
    if det > 0:
        flip = v[0] + v[1] < 0
    else:
        flip = v[int(np.argmax(np.abs(v)))] < 0
    if flip:
        v = -v
    H = hermitian_from_params(v) / math.sqrt(abs(det))
    H = 0.5 * (H + H.conj().T)
    return HermitianForm(H, 1 if det > 0 else -1, form_residual(gens, H), sigma,
                         float(sigma[1] - sigma[0]))


@dataclass
class EigenSection:
    """Samples of a real section of weight ``(w, w)`` in the affine z-chart."""

    points: np.ndarray
    values: np.ndarray
    weight: tuple
    chart: str = "z"
    shape: tuple | None = None
    spacing: float | None = None
    skipped: list = field(default_factory=list)
    form_residual: float | None = None

    @property
    def near_zeros(self) -> list:
        """Sample points where |Phi| is below 1e-10 of its maximum."""
        if self.values.size == 0:
            return []
        cut = 1e-10 * float(np.max(np.abs(self.values)))
        return [complex(z) for z, v in zip(self.points, self.values) if abs(v) <= cut]

    @property
    def changes_sign(self) -> bool:
        return bool(self.values.size and np.min(self.values) < 0 < np.max(self.values))


def _geometry(config: OperConfig, rep: MonodromyRep):
    radius = default_radius(config.punctures)
    return radius, default_clearance(config.punctures, radius)


def continuation_path(config: OperConfig, rep: MonodromyRep, point: complex) -> PathSpec:
    """Deterministic path from the basepoint to ``point`` around puncture discs."""
    radius, _ = _geometry(config, rep)
    return route(rep.basepoint, point, config.punctures, radius)


def solution_row(config: OperConfig, path: PathSpec, tol: float = 1e-12,
                 clearance: float | None = None) -> np.ndarray:
    """``(y_1, y_2)`` at the end of ``path`` (normalized at its start)."""
    system = to_first_order_system(config)
    if clearance is None:
        clearance = default_clearance(config.punctures)
    Y = transport(system, path, tol=tol, clearance=clearance)
    return Y[0]


def pair(H: np.ndarray, row: np.ndarray) -> float:
    return float(np.real(row @ H @ row.conj()))


def _sections_rows(config, rep, grid, tol):
    radius, clearance = _geometry(config, rep)
    pts, rows, skipped = [], [], []
    for z in sorted((complex(z) for z in grid), key=lambda w: (w.real, w.imag)):
        if any(abs(z - p) < clearance for p in config.punctures):
            skipped.append((z, "ClearanceViolation"))
            continue
        path = route(rep.basepoint, z, config.punctures, radius)
        try:
            rows.append(solution_row(config, path, tol, clearance))
        except ClearanceViolation as exc:
            skipped.append((z, f"ClearanceViolation: {exc}"))
            continue
        pts.append(z)
    return np.asarray(pts, dtype=complex), np.asarray(rows, dtype=complex).reshape(-1, 2), skipped


def eigenvalue_section(config: OperConfig, rep: MonodromyRep, H, grid, tol: float = 1e-12) -> EigenSection:
    """Phi = s H s^† on the grid points (sorted by (Re, Im)); points too close to a puncture are skipped."""
    H = getattr(H, "H", H)
    pts, rows, skipped = _sections_rows(config, rep, grid, tol)
    values = np.array([pair(H, r) for r in rows])
    return EigenSection(pts, values, (0.5, 0.5), skipped=skipped)


def puncture_loop(config: OperConfig, rep: MonodromyRep, point: complex, j: int) -> PathSpec:
    """Closed path based at ``point`` that winds once around puncture ``j`` and no other.

    Appending it to a continuation path changes the homotopy class by one
    puncture loop while keeping the detour local to ``point``.
    """
    radius, _ = _geometry(config, rep)
    zj = config.punctures[j]
    point = complex(point)
    if abs(point - zj) <= radius:
        raise ValueError("point lies inside the loop circle")
    circle = Arc.make(zj, radius, cmath.phase(point - zj), 2 * math.pi)
    others = [p for k, p in enumerate(config.punctures) if k != j]
    tail = route(point, circle.start, others, radius)
    loop = tail.then(PathSpec((circle,))).then(tail.reversed())
    for k, p in enumerate(config.punctures):
        if winding_number(loop, p) != (1 if k == j else 0):
            raise ValueError(f"loop around puncture {j} also winds around puncture {k}")
    return loop


def path_pair_defect(H: np.ndarray, row_a: np.ndarray, row_b: np.ndarray) -> float:
    """``|Phi_a - Phi_b|`` relative to the pairing scale ``||H|| max(|s_a|^2, |s_b|^2)``.

    Phi = s H s^† cancels heavily where |s| is large and Phi is not, so a
    defect relative to |Phi| measures rounding there; the pairing scale keeps
    the measure at the size of the floating-point error of the pairing itself.
    """
    scale = float(np.linalg.norm(H, 2)) * max(float(np.vdot(row_a, row_a).real),
                                              float(np.vdot(row_b, row_b).real))
    return abs(pair(H, row_a) - pair(H, row_b)) / scale if scale > 0 else 0.0


def check_single_valued(config: OperConfig, rep: MonodromyRep, H, point: complex,
                        path_a: PathSpec, path_b: PathSpec, tol: float = 1e-12) -> float:
    H = getattr(H, "H", H)
    for p in (path_a, path_b):
        if p.start != rep.basepoint or abs(p.end - point) > 1e-12 * max(1.0, abs(point)):
            raise ValueError("paths must run from the basepoint to the point")
    return path_pair_defect(H, solution_row(config, path_a, tol), solution_row(config, path_b, tol))


def sym_power_form(H: np.ndarray, m: int) -> np.ndarray:
    """Induced pairing on ``Sym^m`` in the monomial basis ``y1^(m-k) y2^k``.

    Entry ``(k, l)`` is the coefficient of ``y1^(m-k) y2^k conj(y1^(m-l) y2^l)``
    in ``(s H s^†)^m``.
    """
    out = np.ones((1, 1), dtype=complex)
    for _ in range(m):
        nxt = np.zeros((out.shape[0] + 1, out.shape[1] + 1), dtype=complex)
        for a in range(2):
            for b in range(2):
                nxt[a:a + out.shape[0], b:b + out.shape[1]] += H[a, b] * out
        out = nxt
    return out


def sym_power_matrix(M: np.ndarray, m: int) -> np.ndarray:
    """Action of ``M`` on the monomial row vector: ``w(s M) = w(s) Sym^m(M)``."""
    # column l = coefficients of (sM)_1^(m-l) (sM)_2^l in the monomials of s
    col1 = np.array([M[0, 0], M[1, 0]])  # (sM)_1 = y1 M00 + y2 M10
    col2 = np.array([M[0, 1], M[1, 1]])
    out = np.zeros((m + 1, m + 1), dtype=complex)
    for l in range(m + 1):
        poly = np.ones(1, dtype=complex)
        for _ in range(m - l):
            poly = np.convolve(poly, col1)
        for _ in range(l):
            poly = np.convolve(poly, col2)
        out[:, l] = poly
    return out


def monomials(rows: np.ndarray, m: int) -> np.ndarray:
    y1, y2 = rows[:, 0:1], rows[:, 1:2]
    k = np.arange(m + 1)[None, :]
    return y1 ** (m - k) * y2 ** k


def sym_power_section(config: OperConfig, rep: MonodromyRep, H, m: int, grid,
                      tol: float = 1e-12) -> EigenSection:
    """Section of weight (m/2, m/2) from the induced pairing on ``Sym^m``."""
    if m < 0:
        raise ValueError("m must be non-negative")
    H = getattr(H, "H", H)
    S = sym_power_form(H, m)
    sym_gens = [sym_power_matrix(M, m) for M in rep.generators]
    resid = max((float(np.linalg.norm(G @ S @ G.conj().T - S, 2)) for G in sym_gens), default=0.0)
    pts, rows, skipped = _sections_rows(config, rep, grid, tol)
    W = monomials(rows, m)
    values = np.real(np.einsum("pk,kl,pl->p", W, S, W.conj()))
    return EigenSection(pts, values, (m / 2, m / 2), skipped=skipped, form_residual=resid)


def stencil_section(config: OperConfig, rep: MonodromyRep, H, center: complex, h: float,
                    size: int = 5, tol: float = 1e-12) -> EigenSection:
    """Phi on the ``size x size`` grid ``center + h (i + 1j k)``.

    The centre is reached along the continuation path; stencil nodes are reached
    by short straight hops from the centre so neighbouring samples share almost
    all of their transport.
    """
    H = getattr(H, "H", H)
    radius, clearance = _geometry(config, rep)
    half = (size - 1) / 2 * h * math.sqrt(2)
    if any(abs(center - p) < clearance + half for p in config.punctures):
        raise ClearanceViolation("stencil overlaps a puncture neighbourhood")
    system = to_first_order_system(config)
    Yc = transport(system, route(rep.basepoint, center, config.punctures, radius), tol=tol,
                   clearance=clearance)
    offs = (np.arange(size) - (size - 1) / 2) * h
    pts, vals = [], []
    for dy in offs:
        for dx in offs:
            z = center + complex(dx, dy)
            if z == center:
                Y = Yc
            else:
                Y = transport(system, PathSpec((Segment(center, z),)), Yc, tol=tol)
            pts.append(z)
            vals.append(pair(H, Y[0]))
    return EigenSection(np.asarray(pts), np.asarray(vals), (0.5, 0.5), shape=(size, size), spacing=h)


def verify_oper_ode(section: EigenSection, config: OperConfig, h: float | None = None) -> float:
    """Max relative residual of ``(d_z^2 + t) Phi`` and its conjugate on stencil centres."""
    if section.shape is None or min(section.shape) < 3:
        raise StencilTooCoarse("need a square stencil of at least 3x3 samples")
    h = section.spacing if h is None else h
    if h is None or h <= 0:
        raise StencilTooCoarse("stencil spacing unknown")
    ny, nx = section.shape
    P = section.values.reshape(ny, nx)
    Z = section.points.reshape(ny, nx)
    worst = 0.0
    for i in range(1, ny - 1):
        for j in range(1, nx - 1):
            f = P[i, j]
            fxx = (P[i, j + 1] - 2 * f + P[i, j - 1]) / h ** 2
            fyy = (P[i + 1, j] - 2 * f + P[i - 1, j]) / h ** 2
            fxy = (P[i + 1, j + 1] - P[i + 1, j - 1] - P[i - 1, j + 1] + P[i - 1, j - 1]) / (4 * h ** 2)
            dzz = (fxx - fyy - 2j * fxy) / 4
            dbb = (fxx - fyy + 2j * fxy) / 4
            t = evaluate_t(config, Z[i, j])
            for d2, tt in ((dzz, t), (dbb, t.conjugate())):
                num = abs(d2 + tt * f)
                den = abs(d2) + abs(tt * f)
                if den == 0:
                    den = max(abs(f), 1.0)
                worst = max(worst, num / den)
    return worst
