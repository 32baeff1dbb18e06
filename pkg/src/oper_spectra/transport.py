"""Parallel transport of linear ODE systems along piecewise paths in the plane.

A path is a chain of straight segments and circular arcs.  Transport solves
``dY/dz = A(z) Y`` along the path with an adaptive 8th order embedded
Runge-Kutta method (Dormand-Prince 8(5,3)) and returns the matrix ``T`` with
``Y(end) = T Y(start)``.

Coefficient evaluators may return a stack of matrices with shape
``(..., n, n)``; the whole stack is then transported in lockstep with a shared
step size, which is how parameter sweeps are vectorized.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .errors import (
    BasepointInsideCircle,
    ClearanceViolation,
    DimensionMismatch,
    PointOnPath,
    StepUnderflow,
)

TWO_PI = 2.0 * math.pi

_N_STAGES = _dop.N_STAGES
_A = _dop.A[:_N_STAGES, :_N_STAGES]
_B = _dop.B
_C = _dop.C[:_N_STAGES]
_E3 = _dop.E3
_E5 = _dop.E5

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_MIN_STEP = 1e-12
_SHORT_PIECE = 1e-4  # length * (1 + |A|) below which a piece takes one uncontrolled step


@dataclass(frozen=True)
class Segment:
    start: complex
    end: complex

    def point(self, s):
        if s == 0:
            return self.start
        if s == 1:
            return self.end
        return self.start + s * (self.end - self.start)

    def velocity(self, s):
        return self.end - self.start

    @property
    def length(self) -> float:
        return abs(self.end - self.start)

    def reversed(self) -> "Segment":
        return Segment(self.end, self.start)

    def distance_to(self, p: complex) -> float:
        d = self.end - self.start
        if d == 0:
            return abs(p - self.start)
        s = ((p - self.start) * d.conjugate()).real / abs(d) ** 2
        s = min(1.0, max(0.0, s))
        return abs(p - (self.start + s * d))

    def arg_change(self, p: complex) -> float:
        return cmath.phase((self.end - p) / (self.start - p))


@dataclass(frozen=True)
class Arc:
    """Circular arc; ``sweep`` is signed (positive = counterclockwise).

    ``start`` and ``end`` are stored so that chained pieces can share
    endpoints bit for bit.  Use :meth:`make` to build one.
    """

    center: complex
    radius: float
    start_angle: float
    sweep: float
    start: complex
    end: complex

    @classmethod
    def make(cls, center, radius, start_angle, sweep, start=None, end=None):
        if radius <= 0:
            raise ValueError("arc radius must be positive")
        if start is None:
            start = center + radius * cmath.exp(1j * start_angle)
        if end is None:
            turns = sweep / TWO_PI
            if turns != 0 and turns == round(turns):
                end = start
            else:
                end = center + radius * cmath.exp(1j * (start_angle + sweep))
        return cls(complex(center), float(radius), float(start_angle),
                   float(sweep), complex(start), complex(end))

    def point(self, s):
        if s == 0:
            return self.start
        if s == 1:
            return self.end
        return self.center + self.radius * np.exp(1j * (self.start_angle + s * self.sweep))

    def velocity(self, s):
        return 1j * self.sweep * self.radius * np.exp(1j * (self.start_angle + s * self.sweep))

    @property
    def length(self) -> float:
        return abs(self.sweep) * self.radius

    def reversed(self) -> "Arc":
        return Arc(self.center, self.radius, self.start_angle + self.sweep,
                   -self.sweep, self.end, self.start)

    def _on_arc(self, angle: float) -> bool:
        if abs(self.sweep) >= TWO_PI:
            return True
        lo = self.start_angle if self.sweep > 0 else self.start_angle + self.sweep
        return (angle - lo) % TWO_PI <= abs(self.sweep)

    def distance_to(self, p: complex) -> float:
        rel = p - self.center
        if rel != 0 and self._on_arc(cmath.phase(rel)):
            return abs(abs(rel) - self.radius)
        if rel == 0:
            return self.radius
        return min(abs(p - self.start), abs(p - self.end))

    def arg_change(self, p: complex) -> float:
        gap = abs(abs(p - self.center) - self.radius)
        pieces = max(4, int(math.ceil(self.length / max(gap, 1e-300))) + 1)
        pieces = min(pieces, 1_000_000)
        total = 0.0
        prev = self.start
        for k in range(1, pieces + 1):
            cur = self.end if k == pieces else self.point(k / pieces)
            total += cmath.phase((cur - p) / (prev - p))
            prev = cur
        return total


Piece = Union[Segment, Arc]


@dataclass(frozen=True)
class PathSpec:
    """Ordered chain of segments and arcs with exactly shared endpoints."""

    pieces: tuple

    def __post_init__(self):
        pieces = tuple(self.pieces)
        object.__setattr__(self, "pieces", pieces)
        for a, b in zip(pieces, pieces[1:]):
            if a.end != b.start:
                raise ValueError(f"path pieces do not join: {a.end!r} != {b.start!r}")

    @property
    def start(self) -> complex:
        return self.pieces[0].start

    @property
    def end(self) -> complex:
        return self.pieces[-1].end

    @property
    def length(self) -> float:
        return sum(p.length for p in self.pieces)

    @property
    def is_closed(self) -> bool:
        return self.start == self.end

    def reversed(self) -> "PathSpec":
        return PathSpec(tuple(p.reversed() for p in reversed(self.pieces)))

    def then(self, other: "PathSpec") -> "PathSpec":
        """Concatenation: traverse ``self`` first, then ``other``."""
        return PathSpec(self.pieces + other.pieces)

    def distance_to(self, p: complex) -> float:
        return min(piece.distance_to(p) for piece in self.pieces)

    def sample(self, per_piece: int = 16) -> np.ndarray:
        pts = [self.start]
        for piece in self.pieces:
            for k in range(1, per_piece + 1):
                pts.append(piece.point(k / per_piece))
        return np.asarray(pts, dtype=complex)


def straight(a: complex, b: complex) -> PathSpec:
    return PathSpec((Segment(complex(a), complex(b)),))


def concat(*paths: PathSpec) -> PathSpec:
    pieces: list = []
    for p in paths:
        pieces.extend(p.pieces)
    return PathSpec(tuple(pieces))


@dataclass
class LinearSystemSpec:
    """``dY/dz = A(z) Y`` with a set of declared singular points."""

    dimension: int
    coefficients: Callable[[complex], np.ndarray]
    singular_points: tuple = ()
    metadata: dict = field(default_factory=dict)

    def validate(self, samples: Sequence[complex] = (0.3 + 0.7j, -1.1 + 0.2j, 2.3 - 1.9j)):
        for z in samples:
            if any(abs(z - s) < 1e-9 for s in self.singular_points):
                continue
            a = np.asarray(self.coefficients(z))
            if a.shape[-2:] != (self.dimension, self.dimension):
                raise DimensionMismatch(f"coefficient shape {a.shape} for dimension {self.dimension}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"coefficient evaluator not finite at z={z}")


def winding_number(path: PathSpec, point: complex) -> int:
    """Winding number of a closed path around ``point`` by arg accumulation."""
    point = complex(point)
    if path.distance_to(point) <= 1e-14 * max(1.0, abs(point)):
        raise PointOnPath(f"{point} lies on the path")
    total = sum(piece.arg_change(point) for piece in path.pieces)
    return int(round(total / TWO_PI))


def circle_loop(center: complex, basepoint: complex, radius: float) -> PathSpec:
    """Basepoint -> nearest circle point, once counterclockwise, and back."""
    center, basepoint = complex(center), complex(basepoint)
    if abs(basepoint - center) <= radius:
        raise BasepointInsideCircle(f"|basepoint - center| = {abs(basepoint - center)} <= {radius}")
    theta = cmath.phase(basepoint - center)
    arc = Arc.make(center, radius, theta, TWO_PI)
    return PathSpec((Segment(basepoint, arc.start), arc, Segment(arc.end, basepoint)))


def min_distance(path: PathSpec, points: Sequence[complex]) -> float:
    if len(points) == 0:
        return math.inf
    return min(path.distance_to(complex(p)) for p in points)


def _error_norm(K, h, scale):
    err5 = np.tensordot(_E5, K, axes=(0, 0)) / scale
    err3 = np.tensordot(_E3, K, axes=(0, 0)) / scale
    axes = (-2, -1)
    e5 = np.sum(np.abs(err5) ** 2, axis=axes)
    e3 = np.sum(np.abs(err3) ** 2, axis=axes)
    denom = e5 + 0.01 * e3
    size = scale.shape[-1] * scale.shape[-2]
    with np.errstate(invalid="ignore", divide="ignore"):
        norm = np.where(denom > 0, abs(h) * e5 / np.sqrt(denom * size), 0.0)
    return float(np.max(norm))


def _transport_piece(coefficients, piece, Y, tol, h_arc):
    """Advance ``Y`` across one piece; returns (Y, suggested arclength step)."""
    length = piece.length
    if length == 0:
        return Y, h_arc

    def rhs(s, y):
        return piece.velocity(s) * (np.asarray(coefficients(piece.point(s))) @ y)

    s = 0.0
    h = min(1.0, h_arc / length)
    K = np.empty((_N_STAGES + 1,) + Y.shape, dtype=complex)
    f0 = rhs(0.0, Y)
    a_mid = float(np.max(np.abs(coefficients(piece.point(0.5)))))
    if length * (1.0 + a_mid) <= _SHORT_PIECE:
        # one 8th-order step: local error ~ (length |A|)^8, far below any tolerance
        K[0] = f0
        for i in range(1, _N_STAGES):
            K[i] = rhs(_C[i], Y + np.tensordot(_A[i, :i], K[:i], axes=(0, 0)))
        return Y + np.tensordot(_B, K[:_N_STAGES], axes=(0, 0)), h_arc
    while s < 1.0:
        if h < _MIN_STEP:
            raise StepUnderflow(f"step {h:.3e} below minimum on {piece}")
        h = min(h, 1.0 - s)
        K[0] = f0
        for i in range(1, _N_STAGES):
            dy = np.tensordot(_A[i, :i], K[:i], axes=(0, 0)) * h
            K[i] = rhs(s + _C[i] * h, Y + dy)
        y_new = Y + h * np.tensordot(_B, K[:_N_STAGES], axes=(0, 0))
        s_new = 1.0 if s + h >= 1.0 else s + h
        f_new = rhs(s_new, y_new)
        K[_N_STAGES] = f_new
        # tolerance per unit arclength of the step
        scale = tol * (1.0 + np.maximum(np.abs(Y), np.abs(y_new))) * max(h * length, 1e-300)
        err = _error_norm(K, h, scale)
        if err <= 1.0:
            s, Y, f0 = s_new, y_new, f_new
            factor = _MAX_FACTOR if err == 0 else min(_MAX_FACTOR, _SAFETY * err ** (-1.0 / 8.0))
            h *= factor
        else:
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-1.0 / 8.0))
    return Y, h * length


def transport(system: LinearSystemSpec, path: PathSpec, initial=None, tol: float = 1e-12,
              clearance: float = 0.0) -> np.ndarray:
    """Fundamental transport of ``system`` along ``path`` applied to ``initial``.

    ``initial`` defaults to the identity.  Raises :class:`ClearanceViolation`
    if the path comes within ``clearance`` of a singular point (or touches
    one when ``clearance`` is 0).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = system.dimension
    if initial is None:
        initial = np.eye(n, dtype=complex)
    Y = np.array(initial, dtype=complex)
    if Y.ndim < 2 or Y.shape[-2] != n:
        raise DimensionMismatch(f"initial value shape {Y.shape} incompatible with dimension {n}")
    if system.singular_points:
        dist = min_distance(path, system.singular_points)
        if dist < clearance or dist <= 1e-14:
            raise ClearanceViolation(f"path passes within {dist:.3e} of a singular point "
                                     f"(clearance {clearance:.3e})")
    probe = np.asarray(system.coefficients(path.start))
    if probe.shape[-2:] != (n, n):
        raise DimensionMismatch(f"coefficient shape {probe.shape} for dimension {n}")
    Y = np.broadcast_to(Y, np.broadcast_shapes(probe.shape[:-2] + Y.shape[-2:], Y.shape)).astype(complex)
    a_norm = float(np.max(np.abs(probe))) + 1e-300
    h_arc = min(path.length or 1.0, 0.5 / a_norm ** 0.5 if a_norm > 1 else 0.5)
    # the per-step control is per unit arclength; spread tol over the whole path
    tol_path = tol / max(1.0, path.length)
    for piece in path.pieces:
        Y, h_arc = _transport_piece(system.coefficients, piece, Y, tol_path, h_arc)
    return Y
