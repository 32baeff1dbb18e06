"""Hyperelliptic curves y^2 = f(x), points on them, and integration of x^j dx / y.

Branches of ``y`` are continued with the factored form

    y(x) = y(a) * prod_j sqrt((x - e_j) / (a - e_j)),

which is exact analytic continuation as long as ``|x - a| < |a - e_j|`` for
every root ``e_j`` (each ratio stays in the right half plane).  Paths are cut
into panels short enough for that, and for Gauss-Legendre to converge fast.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import BranchPointCollision, ConfigError, PathThroughBranchPoint, SheetMismatch
from ..transport import Arc, PathSpec

GL_NODES = 16
# panel length relative to the distance from its midpoint to the nearest root
PANEL_RATIO = 0.5
MIN_SEPARATION = 1e-8

_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(v)


@dataclass(frozen=True)
class HyperellipticCurve:
    """``y^2 = f(x)`` with ``f = sum_k coefficients[k] x^k`` (ascending powers)."""

    coefficients: tuple

    def __post_init__(self):
        c = [complex(v) for v in self.coefficients]
        while c and c[-1] == 0:
            c.pop()
        object.__setattr__(self, "coefficients", tuple(c))
        if self.degree not in (3, 4, 5, 6):
            raise ConfigError(f"f must have degree 3..6, got {self.degree}")
        e = self.branch_points
        sep = min(abs(a - b) for i, a in enumerate(e) for b in e[i + 1:])
        if not np.isfinite(sep) or sep <= MIN_SEPARATION * max(1.0, float(np.max(np.abs(e)))):
            raise BranchPointCollision(f"f is not squarefree (root separation {sep:.2e})")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def genus(self) -> int:
        return (self.degree - 1) // 2

    @property
    def leading(self) -> complex:
        return self.coefficients[-1]

    @cached_property
    def branch_points(self) -> np.ndarray:
        """Finite roots of f sorted by (Re, Im); infinity is a branch point for odd degree."""
        roots = np.roots(self.coefficients[::-1])
        roots = np.array(sorted(roots, key=lambda z: (round(z.real, 12), round(z.imag, 12))))
        # polish: np.roots is accurate to ~1e-15 relative for well-separated roots
        df = np.polynomial.polynomial.polyder(self.coefficients)
        for _ in range(2):
            d = np.polynomial.polynomial.polyval(roots, df)
            ok = np.abs(d) > 0
            roots = np.where(ok, roots - self.f(roots) / np.where(ok, d, 1.0), roots)
        return roots

    @property
    def scale(self) -> float:
        return float(max(1.0, np.max(np.abs(self.branch_points))))

    def f(self, x):
        return np.polynomial.polynomial.polyval(x, self.coefficients)

    def distance_to_branch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        return np.min(np.abs(x[..., None] - self.branch_points), axis=-1)

    def continue_y(self, a: complex, ya: complex, x):
        """Continue the branch ``ya`` at ``a`` to ``x`` (must be within the safe disc)."""
        x = np.asarray(x, dtype=complex)
        ratios = (x[..., None] - self.branch_points) / (a - self.branch_points)
        return ya * np.prod(np.sqrt(ratios), axis=-1)

    def to_dict(self) -> dict:
        return {"coefficients": [[c.real, c.imag] if c.imag else c.real for c in self.coefficients]}

    @classmethod
    def from_dict(cls, d: dict) -> "HyperellipticCurve":
        if "coefficients" not in d:
            raise ConfigError("curve needs 'coefficients' (ascending powers of x)")
        return cls(tuple(_complex(v) for v in d["coefficients"]))


def load_curve(path) -> HyperellipticCurve:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read curve file {path}: {exc}") from exc
    try:
        return HyperellipticCurve.from_dict(raw)
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"malformed curve file {path}: {exc}") from exc


@dataclass(frozen=True)
class CurvePoint:
    """Point ``(x, y)`` with ``y = sheet * principal_sqrt(f(x))``, sheet in {+1, -1}."""

    x: complex
    sheet: int = 1

    def __post_init__(self):
        object.__setattr__(self, "x", complex(self.x))
        if self.sheet not in (1, -1):
            raise ValueError("sheet must be +1 or -1")

    def y(self, curve: HyperellipticCurve) -> complex:
        return self.sheet * complex(np.sqrt(complex(curve.f(self.x))))

    @staticmethod
    def from_y(curve: HyperellipticCurve, x: complex, y: complex) -> "CurvePoint":
        principal = complex(np.sqrt(complex(curve.f(x))))
        return CurvePoint(x, 1 if abs(y - principal) <= abs(y + principal) else -1)


def piece_points(piece, s) -> np.ndarray:
    """Vectorized ``piece.point``."""
    s = np.asarray(s, dtype=float)
    if isinstance(piece, Arc):
        return piece.center + piece.radius * np.exp(1j * (piece.start_angle + s * piece.sweep))
    return piece.start + s * (piece.end - piece.start)


@dataclass
class Panel:
    piece: int
    s0: float
    s1: float
    x0: complex
    y0: complex


@dataclass
class TrackedPath:
    """A path with the branch of ``y`` fixed on every panel."""

    curve: HyperellipticCurve
    path: PathSpec
    panels: list
    y_start: complex
    y_end: complex

    def end_point(self) -> CurvePoint:
        return CurvePoint.from_y(self.curve, self.path.end, self.y_end)

    def y_at(self, piece: int, s):
        """Branch value at parameter ``s`` of piece ``piece`` (vectorized in s)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty(s.shape, dtype=complex)
        cands = [p for p in self.panels if p.piece == piece]
        starts = np.array([p.s0 for p in cands])
        idx = np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(cands) - 1)
        pc = self.path.pieces[piece]
        for k in np.unique(idx):
            m = idx == k
            p = cands[k]
            out[m] = self.curve.continue_y(p.x0, p.y0, piece_points(pc, s[m]))
        return out


def _panels_for(curve: HyperellipticCurve, piece, s0: float, s1: float, out: list, depth=0):
    mid = piece.point(0.5 * (s0 + s1))
    length = piece.length * (s1 - s0)
    d = float(curve.distance_to_branch(mid))
    if length <= PANEL_RATIO * d or depth > 60:
        out.append((s0, s1))
        return
    sm = 0.5 * (s0 + s1)
    _panels_for(curve, piece, s0, sm, out, depth + 1)
    _panels_for(curve, piece, sm, s1, out, depth + 1)


def track(curve: HyperellipticCurve, path: PathSpec, start: CurvePoint | complex) -> TrackedPath:
    """Fix the branch of ``y`` along ``path`` starting from a point or a y value."""
    clearance = min(path.distance_to(e) for e in curve.branch_points)
    if clearance <= 1e-9 * curve.scale:
        raise PathThroughBranchPoint(f"path passes within {clearance:.2e} of a branch point")
    if isinstance(start, CurvePoint):
        if abs(start.x - path.start) > 1e-12 * curve.scale:
            raise ValueError("path does not start at the given point")
        y = start.y(curve)
    else:
        y = complex(start)
    x = path.start
    panels = []
    for i, piece in enumerate(path.pieces):
        bounds: list = []
        _panels_for(curve, piece, 0.0, 1.0, bounds)
        for s0, s1 in bounds:
            x0 = piece.point(s0)
            if x0 != x:
                y = complex(curve.continue_y(x, y, x0))
            panels.append(Panel(i, s0, s1, x0, y))
            x = x0
        x1 = piece.point(1.0)
        y = complex(curve.continue_y(x, y, x1))
        x = x1
    return TrackedPath(curve, path, panels, panels[0].y0, y)


def integrate_differentials(tracked: TrackedPath, powers=None) -> np.ndarray:
    """``[int x^j dx / y for j in powers]`` by panel Gauss-Legendre (default j < genus)."""
    curve = tracked.curve
    powers = range(curve.genus) if powers is None else powers
    powers = np.asarray(list(powers))
    total = np.zeros(powers.size, dtype=complex)
    for p in tracked.panels:
        piece = tracked.path.pieces[p.piece]
        s = 0.5 * (p.s0 + p.s1) + 0.5 * (p.s1 - p.s0) * _GL_X
        x = piece_points(piece, s)
        y = curve.continue_y(p.x0, p.y0, x)
        w = 0.5 * (p.s1 - p.s0) * _GL_W * piece.velocity(s) / y
        total += (x[None, :] ** powers[:, None]) @ w
    return total


def tracked_between(curve: HyperellipticCurve, p0: CurvePoint, p: CurvePoint | None,
                    path: PathSpec) -> TrackedPath:
    """Track ``path`` from ``p0``; checks that it lands on ``p`` (if given)."""
    if p is not None and abs(path.end - p.x) > 1e-12 * curve.scale:
        raise ValueError("path does not end at the target point")
    tr = track(curve, path, p0)
    if p is not None:
        target = p.y(curve)
        if abs(tr.y_end - target) > abs(tr.y_end + target):
            raise SheetMismatch(f"continuation along the path ends on the other sheet at x={p.x}")
    return tr
