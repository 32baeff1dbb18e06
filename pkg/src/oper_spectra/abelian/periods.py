"""Period matrices of hyperelliptic curves.

Branch points e_1, ..., e_n are sorted by (Re, Im) and joined into a chain.
The cuts are [e_1, e_2], [e_3, e_4], ... (plus [e_{2g+1}, infinity] for odd
degree).  The region U above the chain carries a fixed branch y_U, obtained by
continuing the principal root from a far anchor straight down into U.

With half-periods I_k = int_{e_k}^{e_{k+1}} x^j dx / y_U (upper side) the
counterclockwise cycles give

    a_i = -2 I_{2i-1},        b_i = -2 sum_{k even, 2i <= k <= 2g} I_k,

a_i encircling [e_{2i-1}, e_{2i}] and b_i encircling e_{2i}, ..., e_{2g+1}.
The half-periods are computed with x = e_k + (e_{k+1} - e_k)(1 - cos t)/2, which
turns x^j dx / y into a smooth integrand on [0, pi].  An independent oracle
integrates the closed cycles directly.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalFailure, QuadratureFailure
from ..transport import Arc, PathSpec, Segment, winding_number
from .curve import HyperellipticCurve, integrate_differentials, track

QUAD_TOL = 1e-13


@dataclass
class Cycle:
    """Closed x-plane loop with the branch of y fixed at its start."""

    name: str
    path: PathSpec
    y_start: complex
    encloses: tuple


@dataclass
class PeriodData:
    curve: HyperellipticCurve
    A: np.ndarray  # A[j, i] = period of x^j dx / y over a_i
    B: np.ndarray
    tau: np.ndarray
    cycles: list = field(default_factory=list)
    b_flipped: bool = False
    half_periods: np.ndarray | None = None

    @property
    def genus(self) -> int:
        return self.curve.genus

    @property
    def lattice(self) -> np.ndarray:
        """Columns: the 2g period vectors (a_1..a_g, b_1..b_g) in C^g."""
        return np.hstack([self.A, self.B])

    def riemann_defects(self) -> tuple[float, float]:
        """(asymmetry of tau, smallest eigenvalue of Im tau)."""
        tau = self.tau
        return float(np.max(np.abs(tau - tau.T))), float(np.min(np.linalg.eigvalsh(0.5 * (tau.imag + tau.imag.T))))

    def to_dict(self) -> dict:
        def cm(m):
            return [[[complex(v).real, complex(v).imag] for v in row] for row in np.atleast_2d(m)]
        return {
            "genus": self.genus,
            "branch_points": [[z.real, z.imag] for z in self.curve.branch_points],
            "A": cm(self.A), "B": cm(self.B), "tau": cm(self.tau),
            "cycles": [{"name": c.name, "encloses": list(c.encloses)} for c in self.cycles],
            "b_orientation_flipped": self.b_flipped,
            "convention": "A[j][i] = integral of x^j dx/y over a_i; tau = A^-1 B; "
                          "points (x, sheet) with y = sheet * principal sqrt f(x)",
        }


# ---------------------------------------------------------------- geometry

def _chain(curve: HyperellipticCurve) -> np.ndarray:
    return curve.branch_points


def _left_normal(a: complex, b: complex) -> complex:
    d = b - a
    return 1j * d / abs(d)


def _min_separation(e) -> float:
    return min(abs(a - b) for i, a in enumerate(e) for b in e[i + 1:])


def _offset(curve: HyperellipticCurve) -> float:
    """Distance at which cycles hug the chain."""
    e = _chain(curve)
    r = _min_separation(e)
    for k in range(len(e) - 1):
        seg = Segment(e[k], e[k + 1])
        for j, p in enumerate(e):
            if j not in (k, k + 1):
                r = min(r, seg.distance_to(p))
    return 0.3 * r


def _top(curve: HyperellipticCurve) -> float:
    e = _chain(curve)
    return float(np.max(e.imag)) + 2.0 * curve.scale


def _ray_is_clear(curve: HyperellipticCurve, x: complex) -> bool:
    """True if the upward vertical ray from ``x`` misses the chain."""
    e = _chain(curve)
    for a, b in zip(e[:-1], e[1:]):
        lo, hi = sorted((a.real, b.real))
        if not lo <= x.real <= hi:
            continue
        if a.real == b.real:
            if max(a.imag, b.imag) > x.imag:
                return False
            continue
        h = a.imag + (b.imag - a.imag) * (x.real - a.real) / (b.real - a.real)
        if h > x.imag:
            return False
    return True


def upper_branch(curve: HyperellipticCurve, x: complex) -> complex:
    """y_U at a point of U: principal root at a far anchor, continued into U."""
    if not _ray_is_clear(curve, x):
        raise QuadratureFailure(f"cannot reach {x} from above without crossing the chain")
    e = _chain(curve)
    top = _top(curve)
    anchor = complex(float(np.min(e.real)) - curve.scale, top)
    corner = complex(x.real, top)
    pieces = [Segment(anchor, corner)] if corner != anchor else []
    pieces.append(Segment(corner, complex(x)))
    tr = track(curve, PathSpec(tuple(pieces)), complex(np.sqrt(complex(curve.f(anchor)))))
    return tr.y_end


# ---------------------------------------------------------------- main pipeline

def _walk(roots, xs, x0: complex, v0: complex) -> np.ndarray:
    """Continue v with v^2 ~ prod (x - roots) from x0 through the points xs in order."""
    out = np.empty(len(xs), dtype=complex)
    cur, v = x0, v0
    for k, x in enumerate(xs):
        while True:
            d = float(np.min(np.abs(cur - roots))) if len(roots) else math.inf
            gap = abs(x - cur)
            if gap < 0.5 * d:
                break
            step = cur + 0.4 * d * (x - cur) / gap
            v *= np.prod(np.sqrt((step - roots) / (cur - roots)))
            cur = step
        if len(roots):
            v *= np.prod(np.sqrt((x - roots) / (cur - roots)))
        cur = x
        out[k] = v
    return out


def _theta_edges(a: complex, delta: complex, others: np.ndarray, lo: float = 0.0, hi: float = math.pi,
                 depth: int = 0) -> list:
    """Panels in t whose x-extent is at most half their distance to the other branch points."""
    x0, x1 = a + delta * 0.5 * (1 - math.cos(lo)), a + delta * 0.5 * (1 - math.cos(hi))
    xm = a + delta * 0.5 * (1 - math.cos(0.5 * (lo + hi)))
    d = float(np.min(np.abs(xm - others))) if len(others) else math.inf
    if abs(x1 - x0) <= 0.5 * d or depth > 40:
        return [lo]
    mid = 0.5 * (lo + hi)
    return (_theta_edges(a, delta, others, lo, mid, depth + 1)
            + _theta_edges(a, delta, others, mid, hi, depth + 1))


def _segment_integral(curve: HyperellipticCurve, k: int, refine: int, order: int = 24) -> np.ndarray:
    e = _chain(curve)
    a, b = e[k], e[k + 1]
    delta = b - a
    others = np.delete(e, [k, k + 1])
    mid = 0.5 * (a + b)
    # y = delta * sqrt(s (1 - s)) * w with w^2 = -lead * prod_others (x - e_j)
    n = _left_normal(a, b)
    eps = 0.25 * _offset(curve)
    y_mid = upper_branch(curve, mid + eps * n)
    y_mid = complex(curve.continue_y(mid + eps * n, y_mid, mid))
    w_mid = 2.0 * y_mid / delta
    gx, gw = np.polynomial.legendre.leggauss(order)
    coarse = np.array(_theta_edges(a, delta, others) + [math.pi])
    # split every adaptive panel into `refine` equal parts
    edges = np.concatenate([np.linspace(lo, hi, refine + 1)[:-1] for lo, hi in zip(coarse[:-1], coarse[1:])]
                           + [[math.pi]])
    theta = np.concatenate([0.5 * (lo + hi) + 0.5 * (hi - lo) * gx for lo, hi in zip(edges[:-1], edges[1:])])
    weights = np.concatenate([0.5 * (hi - lo) * gw for lo, hi in zip(edges[:-1], edges[1:])])
    s = 0.5 * (1.0 - np.cos(theta))
    x = a + delta * s
    w = np.empty_like(x)
    right = theta >= 0.5 * math.pi
    left = ~right
    w[right] = _walk(others, x[right], mid, w_mid)
    w[left] = _walk(others, x[left][::-1], mid, w_mid)[::-1]
    powers = np.arange(curve.genus)[:, None]
    return (x[None, :] ** powers / w[None, :]) @ weights


def half_periods(curve: HyperellipticCurve, tol: float = QUAD_TOL) -> np.ndarray:
    """``I[j, k] = int_{e_{k+1}}^{e_{k+2}} x^j dx / y_U`` (0-based k), k < 2g."""
    g = curve.genus
    out = np.empty((g, 2 * g), dtype=complex)
    for k in range(2 * g):
        prev = None
        refine = 1
        while True:
            cur = _segment_integral(curve, k, refine)
            if prev is not None and np.max(np.abs(cur - prev)) <= tol * max(1.0, np.max(np.abs(cur))):
                break
            if refine >= 64:
                raise QuadratureFailure(f"half-period {k + 1} did not converge")
            prev = cur
            refine *= 2
        out[:, k] = cur
    return out


def _orient(A, B):
    tau = np.linalg.solve(A, B)
    eig = np.linalg.eigvalsh(0.5 * (tau.imag + tau.imag.T))
    if np.all(eig > 0):
        return A, B, tau, False
    if np.all(eig < 0):
        return A, -B, -tau, True
    raise NumericalFailure("Im tau is indefinite: the cycle basis is inconsistent")


def period_matrix(curve: HyperellipticCurve, tol: float = QUAD_TOL, with_cycles: bool = True) -> PeriodData:
    """A, B and tau = A^-1 B for the basis described in the module docstring."""
    g = curve.genus
    I = half_periods(curve, tol)
    A = np.stack([-2.0 * I[:, 2 * i] for i in range(g)], axis=1)
    B = np.stack([-2.0 * sum(I[:, k - 1] for k in range(2 * (i + 1), 2 * g + 1, 2)) for i in range(g)], axis=1)
    A, B, tau, flipped = _orient(A, B)
    cycles = cycle_basis(curve) if with_cycles else []
    if flipped:
        cycles = cycles[:g] + [_reverse_cycle(curve, c) for c in cycles[g:]]
    return PeriodData(curve, A, B, tau, cycles, flipped, I)


# ---------------------------------------------------------------- explicit cycles

def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2 * math.pi) - math.pi


def chain_loop(curve: HyperellipticCurve, p: int, q: int, r: float | None = None) -> PathSpec:
    """Counterclockwise loop hugging the chain e_p..e_q (0-based, p < q) at distance r.

    Starts and ends at the top-side midpoint of segment (q-1, q).
    """
    e = _chain(curve)
    r = _offset(curve) if r is None else r
    normals = [_left_normal(e[k], e[k + 1]) for k in range(p, q)]
    start = 0.5 * (e[q - 1] + e[q]) + r * normals[-1]
    pieces: list = []
    cur = start

    def seg(to):
        nonlocal cur
        pieces.append(Segment(cur, to))
        cur = to

    def arc(center, a0, a1, sweep=None, end=None):
        nonlocal cur
        sw = _wrap(a1 - a0) if sweep is None else sweep
        if sw == 0:
            return
        piece = Arc.make(center, r, a0, sw, start=cur, end=end)
        pieces.append(piece)
        cur = piece.end

    # top side, backwards from e_q to e_p
    for idx in range(q - 1, p - 1, -1):
        n = normals[idx - p]
        seg(e[idx] + r * n)
        if idx > p:
            n_prev = normals[idx - 1 - p]
            arc(e[idx], cmath.phase(n), cmath.phase(n_prev))
    # cap around e_p
    n0 = normals[0]
    arc(e[p], cmath.phase(n0), cmath.phase(-n0), sweep=math.pi)
    # bottom side, forwards
    for idx in range(p, q):
        n = normals[idx - p]
        seg(e[idx + 1] - r * n)
        if idx + 1 < q:
            n_next = normals[idx + 1 - p]
            arc(e[idx + 1], cmath.phase(-n), cmath.phase(-n_next))
    # cap around e_q, back on top
    nl = normals[-1]
    arc(e[q], cmath.phase(-nl), cmath.phase(nl), sweep=math.pi)
    seg(start)
    return PathSpec(tuple(pieces))


def _checked_cycle(curve: HyperellipticCurve, name: str, p: int, q: int) -> Cycle:
    e = _chain(curve)
    path = chain_loop(curve, p, q)
    inside = tuple(range(p, q + 1))
    for j, z in enumerate(e):
        w = winding_number(path, z)
        if w != (1 if j in inside else 0):
            raise NumericalFailure(f"cycle {name} winds {w} times around branch point {j + 1}")
    return Cycle(name, path, upper_branch(curve, path.start), tuple(j + 1 for j in inside))


def _reverse_cycle(curve: HyperellipticCurve, c: Cycle) -> Cycle:
    tr = track(curve, c.path, c.y_start)
    return Cycle(c.name, c.path.reversed(), tr.y_end, c.encloses)


def cycle_basis(curve: HyperellipticCurve) -> list:
    """Explicit loops a_1..a_g, b_1..b_g (counterclockwise)."""
    g = curve.genus
    out = [_checked_cycle(curve, f"a{i + 1}", 2 * i, 2 * i + 1) for i in range(g)]
    out += [_checked_cycle(curve, f"b{i + 1}", 2 * i + 1, 2 * g) for i in range(g)]
    return out


def cycle_integral(curve: HyperellipticCurve, cycle: Cycle) -> np.ndarray:
    tr = track(curve, cycle.path, cycle.y_start)
    if abs(tr.y_end - cycle.y_start) > 1e-9 * max(1.0, abs(cycle.y_start)):
        raise NumericalFailure(f"cycle {cycle.name} does not close on the curve")
    return integrate_differentials(tr)


def period_matrix_by_cycles(curve: HyperellipticCurve) -> PeriodData:
    """Oracle: integrate the explicit closed cycles directly (no half-periods)."""
    g = curve.genus
    cycles = cycle_basis(curve)
    P = np.stack([cycle_integral(curve, c) for c in cycles], axis=1)
    A, B, tau, flipped = _orient(P[:, :g], P[:, g:])
    return PeriodData(curve, A, B, tau, cycles, flipped)
