"""Monodromy of second-order opers and trace-based reality diagnostics.

Conventions
-----------
* A generator ``M_j`` is the transport of ``(y, y')`` around loop ``j`` of the
  basis, i.e. the fundamental matrix continued around the loop becomes
  ``Y M_j``.  Composing loops (first ``a`` then ``b``) multiplies as ``M_b M_a``.
* Loops are ordered by increasing ``arg(z_j - basepoint)``; with this order the
  counterclockwise loop around all finite punctures is ``M_n ... M_2 M_1``.
* Words are tuples of 1-based generator indices; ``-j`` denotes ``M_j^{-1}``.
  The word ``(i, j, k)`` means the matrix product ``M_i M_j M_k``.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadWord, ConfigError, ProductDefectExceeded
from .oper import OperConfig, OperFamily, to_first_order_system
from .transport import (
    TWO_PI,
    Arc,
    LinearSystemSpec,
    PathSpec,
    Segment,
    transport,
    winding_number,
)

DEFECT_LIMIT = 1e-5


def _spread(points) -> tuple[complex, float]:
    pts = np.asarray(points, dtype=complex)
    if pts.size == 0:
        return 0j, 1.0
    mean = complex(pts.mean())
    spread = float(np.max(np.abs(pts - mean)))
    return mean, spread if spread > 0 else 1.0


def min_pairwise_distance(points) -> float:
    pts = list(points)
    if len(pts) < 2:
        return 1.0
    return min(abs(a - b) for a, b in itertools.combinations(pts, 2))


def default_basepoint(points) -> complex:
    mean, spread = _spread(points)
    return mean - 2j * spread


def default_radius(points) -> float:
    return 0.4 * min_pairwise_distance(points)


def default_clearance(points, radius: float | None = None) -> float:
    """Half the gap between a loop circle and the nearest other puncture."""
    if radius is None:
        radius = default_radius(points)
    return 0.5 * (min_pairwise_distance(points) - radius)


def route(start: complex, target: complex, obstacles, radius: float, side_of=None) -> PathSpec:
    """Straight path from ``start`` to ``target`` that detours around obstacle discs.

    Each obstacle disc of ``radius`` cut by the straight line is bypassed on an
    arc.  ``side_of(p)`` returns +1 when obstacle ``p`` should stay on the left
    of the path and -1 for the right; by default the side is the one the obstacle
    already lies on (ties go right).  If ``target`` lies inside a disc the path
    enters it radially.
    """
    start, target = complex(start), complex(target)
    d = target - start
    if d == 0:
        return PathSpec((Segment(start, target),))

    def default_side(p):
        cross = (d.conjugate() * (p - start)).imag
        return 1 if cross > 0 else -1

    side_of = side_of or default_side
    hits = []
    final_disc = None
    for p in obstacles:
        p = complex(p)
        if abs(target - p) < radius:
            final_disc = p
            continue
        # |start + u d - p| = radius
        w = start - p
        a = abs(d) ** 2
        b = 2 * (w * d.conjugate()).real
        c = abs(w) ** 2 - radius ** 2
        disc = b * b - 4 * a * c
        if disc <= 0:
            continue
        r = math.sqrt(disc)
        u1, u2 = (-b - r) / (2 * a), (-b + r) / (2 * a)
        if u2 <= 0 or u1 >= 1:
            continue
        hits.append((u1, u2, p))
    if final_disc is not None:
        w = final_disc - start
        a = abs(d) ** 2
        b = -2 * (w * d.conjugate()).real
        c = abs(w) ** 2 - radius ** 2
        u1 = (-b - math.sqrt(max(b * b - 4 * a * c, 0.0))) / (2 * a)
        hits.append((u1, None, final_disc))
    hits.sort(key=lambda h: h[0])

    pieces: list = []
    cur = start
    for u1, u2, p in hits:
        entry = start + u1 * d
        if entry != cur:
            pieces.append(Segment(cur, entry))
        theta_in = cmath.phase(entry - p)
        if u2 is None:
            radial = p + radius * (target - p) / abs(target - p)
            exit_pt = radial
        else:
            exit_pt = start + u2 * d
        theta_out = cmath.phase(exit_pt - p)
        if side_of(p) > 0:
            sweep = (theta_out - theta_in) % TWO_PI
        else:
            sweep = -((theta_in - theta_out) % TWO_PI)
        if sweep != 0:
            pieces.append(Arc.make(p, radius, theta_in, sweep, start=entry, end=exit_pt))
        cur = exit_pt
    if cur != target:
        pieces.append(Segment(cur, target))
    return PathSpec(tuple(pieces))


@dataclass(frozen=True)
class LoopBasis:
    """Loops at ``basepoint``, loop ``k`` encircling puncture ``order[k]``."""

    basepoint: complex
    loops: tuple
    order: tuple
    radius: float
    clearance: float
    big_loop: PathSpec
    punctures: tuple = field(default=())

    def certify(self) -> None:
        for k, loop in enumerate(self.loops):
            for j, z in enumerate(self.punctures):
                expected = 1 if j == self.order[k] else 0
                w = winding_number(loop, z)
                if w != expected:
                    raise ConfigError(f"loop {k} winds {w} times around puncture {j}")
        for z in self.punctures:
            if winding_number(self.big_loop, z) != 1:
                raise ConfigError("enclosing loop does not wind once around every puncture")


def _order_key(p: complex, basepoint: complex):
    return (cmath.phase(p - basepoint), abs(p - basepoint))


def loop_basis(punctures, basepoint: complex | None = None, radius: float | None = None,
               clearance: float | None = None) -> LoopBasis:
    """Star-shaped basis of counterclockwise loops, ordered by argument."""
    pts = [complex(z) for z in punctures]
    if basepoint is None:
        basepoint = default_basepoint(pts)
    basepoint = complex(basepoint)
    if radius is None:
        radius = default_radius(pts)
    if clearance is None:
        clearance = default_clearance(pts, radius)
    mean, spread = _spread(pts)
    if pts and abs(basepoint - mean) <= spread + radius:
        raise ConfigError("basepoint must lie outside the disc around the punctures "
                          f"(|b - mean| = {abs(basepoint - mean):.3g}, need > {spread + radius:.3g})")
    order = sorted(range(len(pts)), key=lambda j: _order_key(pts[j], basepoint))
    loops = []
    for j in order:
        zj = pts[j]
        key_j = _order_key(zj, basepoint)
        theta = cmath.phase(basepoint - zj)
        circle = Arc.make(zj, radius, theta, TWO_PI)
        others = [pts[k] for k in range(len(pts)) if k != j]

        def side(p, key_j=key_j):
            return -1 if _order_key(p, basepoint) < key_j else 1

        tail = route(basepoint, circle.start, others, radius, side)
        loops.append(tail.then(PathSpec((circle,))).then(tail.reversed()))
    big = PathSpec((Arc.make(mean, abs(basepoint - mean), cmath.phase(basepoint - mean), TWO_PI,
                             start=basepoint, end=basepoint),))
    basis = LoopBasis(basepoint, tuple(loops), tuple(order), float(radius), float(clearance),
                      big, tuple(pts))
    basis.certify()
    return basis


@dataclass
class MonodromyRep:
    """Generators ``M_k`` (in loop-basis order) of the monodromy representation."""

    basepoint: complex
    generators: np.ndarray
    order: tuple
    defect: float = 0.0
    sign_at_infinity: int = 1
    infinity_generator: np.ndarray | None = None
    enclosing: np.ndarray | None = None

    def __post_init__(self):
        self.generators = np.asarray(self.generators, dtype=complex)

    @property
    def n_generators(self) -> int:
        return self.generators.shape[0]

    def to_dict(self) -> dict:
        def mat(m):
            return [[float(m[i, j].real), float(m[i, j].imag)] for i in range(2) for j in range(2)]

        d = {
            "basepoint": [self.basepoint.real, self.basepoint.imag],
            "order": list(self.order),
            "generators": [mat(m) for m in self.generators],
            "defect": self.defect,
            "sign_at_infinity": self.sign_at_infinity,
        }
        if self.infinity_generator is not None:
            d["infinity_generator"] = mat(self.infinity_generator)
        return d


def _nearest_sign_identity(m: np.ndarray) -> tuple[int, float]:
    eye = np.eye(2)
    plus = np.linalg.norm(m - eye, 2)
    minus = np.linalg.norm(m + eye, 2)
    return (1, plus) if plus <= minus else (-1, minus)


def loop_product(generators: np.ndarray) -> np.ndarray:
    """``M_n ... M_1``: the loop around all finite punctures; works on stacks."""
    gens = np.asarray(generators)
    out = np.broadcast_to(np.eye(2, dtype=complex), gens.shape[:-3] + (2, 2)).copy()
    for k in range(gens.shape[-3]):
        out = gens[..., k, :, :] @ out
    return out


def generator_stack(system: LinearSystemSpec, basis: LoopBasis, tol: float) -> np.ndarray:
    """Transports around every basis loop, shape ``(..., k, 2, 2)``."""
    mats = [transport(system, loop, tol=tol, clearance=basis.clearance) for loop in basis.loops]
    if not mats:
        return np.zeros((0, 2, 2), dtype=complex)
    return np.stack(mats, axis=-3)


def compute_monodromy(config: OperConfig, basis: LoopBasis | None = None, tol: float = 1e-12,
                      check: bool = True) -> MonodromyRep:
    """Monodromy generators of a sealed config plus the loop-relation defect.

    The loop around infinity is recovered from the relation: the enclosing
    circle through the basepoint is integrated directly in the ``z`` chart, and
    ``M_inf`` is its inverse.  ``defect`` measures ``||M_inf M_n ... M_1 - (+-I)||``
    (without an infinity puncture, ``||M_n ... M_1 - (+-I)||``).
    """
    if basis is None:
        basis = loop_basis(config.punctures)
    system = to_first_order_system(config)
    gens = generator_stack(system, basis, tol)
    product = loop_product(gens) if len(gens) else np.eye(2, dtype=complex)
    m_inf = None
    enclosing = None
    if config.infinity:
        enclosing = transport(system, basis.big_loop, tol=tol, clearance=basis.clearance) \
            if config.punctures else np.eye(2, dtype=complex)
        m_inf = np.linalg.inv(enclosing)
        _, defect = _nearest_sign_identity(m_inf @ product)
        sign = 1 if np.trace(m_inf).real >= 0 else -1
    else:
        sign, defect = _nearest_sign_identity(product)
    rep = MonodromyRep(basis.basepoint, gens, basis.order, float(defect), int(sign), m_inf, enclosing)
    if check and defect > DEFECT_LIMIT:
        raise ProductDefectExceeded(f"loop product defect {defect:.3e} > {DEFECT_LIMIT:g}")
    return rep


def family_generators(family: OperFamily, s_values, basis: LoopBasis, tol: float = 1e-12) -> np.ndarray:
    """Generator stacks ``(len(s_values), k, 2, 2)`` for many family members at once."""
    system = family.system_batch(s_values)
    return generator_stack(system, basis, tol)


def _word_matrix(gens: np.ndarray, word) -> np.ndarray:
    k = gens.shape[-3]
    out = np.broadcast_to(np.eye(2, dtype=complex), gens.shape[:-3] + (2, 2)).copy()
    for letter in word:
        idx = int(letter)
        if idx == 0 or abs(idx) > k:
            raise BadWord(f"letter {letter} out of range for {k} generators")
        m = gens[..., abs(idx) - 1, :, :]
        if idx < 0:
            m = _inverse(m)
        out = _mul(out, m)
    return out


def _mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Explicit entries: products of SU(2)-shaped matrices stay SU(2)-shaped to the last bit,
    # so their traces come out exactly real.
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=complex)
    for i in range(2):
        for j in range(2):
            out[..., i, j] = a[..., i, 0] * b[..., 0, j] + a[..., i, 1] * b[..., 1, j]
    return out


def _inverse(m: np.ndarray) -> np.ndarray:
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    adj = np.empty_like(m)
    adj[..., 0, 0] = m[..., 1, 1]
    adj[..., 1, 1] = m[..., 0, 0]
    adj[..., 0, 1] = -m[..., 0, 1]
    adj[..., 1, 0] = -m[..., 1, 0]
    return adj / det[..., None, None]


def _trace(m: np.ndarray):
    if m.ndim == 2:
        re = math.fsum((m[0, 0].real, m[1, 1].real))
        im = math.fsum((m[0, 0].imag, m[1, 1].imag))
        return complex(re, im)
    return m[..., 0, 0] + m[..., 1, 1]


def word_traces(gens: np.ndarray, words) -> np.ndarray:
    """Traces of word products; ``gens`` may carry leading batch axes."""
    gens = np.asarray(gens, dtype=complex)
    out = [_trace(_word_matrix(gens, w)) for w in words]
    return np.stack([np.asarray(t) for t in out], axis=-1) if out else np.zeros(gens.shape[:-3] + (0,))


def trace_coordinates(rep: MonodromyRep, words) -> np.ndarray:
    return word_traces(rep.generators, words)


def default_words(k: int) -> list:
    words = [(j,) for j in range(1, k + 1)]
    words += [(i, j) for i in range(1, k + 1) for j in range(i + 1, k + 1)]
    if k >= 3:
        words.append((1, 2, 3))
    return words


def reality_residual(rep: MonodromyRep, words=None) -> np.ndarray:
    """Imaginary parts of the word traces; vanishes on real-monodromy opers."""
    if words is None:
        words = default_words(rep.n_generators)
    return np.imag(trace_coordinates(rep, words))


def commutator_margins(gens: np.ndarray) -> np.ndarray:
    """``max_{j<k} |tr[M_j, M_k] - 2|`` over leading batch axes."""
    gens = np.asarray(gens, dtype=complex)
    k = gens.shape[-3]
    best = np.zeros(gens.shape[:-3])
    for i, j in itertools.combinations(range(1, k + 1), 2):
        t = _trace(_word_matrix(gens, (i, j, -i, -j)))
        best = np.maximum(best, np.abs(np.asarray(t) - 2.0))
    return best


def irreducibility_margin(rep: MonodromyRep) -> float:
    """Zero (up to rounding) exactly when some pair of generators is reducible."""
    return float(commutator_margins(rep.generators))
