"""Integer-period harmonic classes, their Fourier harmonics and Hecke eigenvalues.

A class is fixed by integer periods m (length 2g, ordered a_1..a_g, b_1..b_g).
Its holomorphic part is omega = sum_j c_j x^j dx / y with 2 Re(periods of
omega) = m, and the harmonic form is omega + conj(omega).

Two independent routes evaluate the Hecke eigenvalue:

* ``hecke_eigenvalue_F`` integrates the scalar form omega along the path with
  adaptive quadrature and exponentiates;
* ``abel_jacobi`` integrates the basis differentials with panel Gauss-Legendre,
  and ``fourier_harmonic_eval`` evaluates exp(2 pi i 2 Re(c . v)) on the torus.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ..errors import QuadratureFailure, SingularPeriodSystem, StencilNearBranchPoint
from ..transport import PathSpec, straight
from .curve import CurvePoint, HyperellipticCurve, integrate_differentials, tracked_between, track
from .periods import PeriodData

TWO_PI_I = 2j * math.pi
UNIMODULAR_TOL = 1e-10
QUAD_ACCEPT = 1e-10


@dataclass
class HarmonicClass:
    m: np.ndarray  # integer periods over (a_1..a_g, b_1..b_g)
    c: np.ndarray  # coefficients of the holomorphic part in the x^j dx / y basis

    def to_dict(self) -> dict:
        return {"m": [int(v) for v in self.m], "c": [[z.real, z.imag] for z in self.c]}


def period_system(periods: PeriodData) -> np.ndarray:
    """Real 2g x 2g matrix mapping (Re c, Im c) to 2 Re(c . cycle periods)."""
    P = periods.lattice  # (g, 2g)
    return 2.0 * np.hstack([P.real.T, -P.imag.T])


def integer_harmonic_class(periods: PeriodData, m) -> HarmonicClass:
    g = periods.genus
    m = np.asarray(m)
    if m.shape != (2 * g,):
        raise ValueError(f"m must have length {2 * g}")
    if not np.all(np.equal(np.mod(m, 1), 0)):
        raise ValueError("m must be integral")
    M = period_system(periods)
    if np.linalg.cond(M) > 1e12:
        raise SingularPeriodSystem("period system is singular; periods violate the Riemann relations")
    x = np.linalg.solve(M, m.astype(float))
    return HarmonicClass(m.astype(int), x[:g] + 1j * x[g:])


def class_periods(periods: PeriodData, cls: HarmonicClass) -> np.ndarray:
    """``2 Re`` of the periods of omega over the basis cycles (should equal m)."""
    return 2.0 * np.real(cls.c @ periods.lattice)


def reconstruction_residual(periods: PeriodData, cls: HarmonicClass) -> float:
    return float(np.max(np.abs(class_periods(periods, cls) - cls.m), initial=0.0))


# ---------------------------------------------------------------- path integrals

def _form_integral_quad(curve: HyperellipticCurve, c: np.ndarray, tracked) -> complex:
    """Adaptive quadrature of sum_j c_j x^j dx / y along a tracked path."""
    total = 0j
    powers = np.arange(len(c))
    for i, piece in enumerate(tracked.path.pieces):
        breaks = sorted({p.s0 for p in tracked.panels if p.piece == i} - {0.0})

        def integrand(s, piece=piece, i=i):
            x = piece.point(s)
            y = tracked.y_at(i, s)[0]
            return complex(np.dot(c, x ** powers) * piece.velocity(s) / y)

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", integrate.IntegrationWarning)
            val, err = integrate.quad(integrand, 0.0, 1.0, complex_func=True, points=breaks or None,
                                      epsabs=1e-15, epsrel=1e-13, limit=400)
        # the target sits at the rounding floor; a warning only matters if the estimate is poor
        if caught and abs(err) > QUAD_ACCEPT * max(1.0, abs(val)):
            raise QuadratureFailure(f"form integral on piece {i}: {caught[0].message} (error {abs(err):.2e})")
        total += val
    return total


def _unimodular(z: complex) -> complex:
    if abs(abs(z) - 1.0) > UNIMODULAR_TOL:
        raise AssertionError(f"|F| = {abs(z)} is not 1")
    return z


def hecke_eigenvalue_F(curve: HyperellipticCurve, cls: HarmonicClass, p0: CurvePoint,
                       p: CurvePoint | None, path: PathSpec) -> complex:
    """``exp(2 pi i * 2 Re int_path omega)`` along ``path`` from p0 to p."""
    if not np.any(cls.c):
        return 1.0 + 0j
    if path.length == 0:
        return 1.0 + 0j
    tr = tracked_between(curve, p0, p, path)
    J = _form_integral_quad(curve, cls.c, tr)
    return _unimodular(complex(np.exp(TWO_PI_I * 2.0 * J.real)))


@dataclass
class AbelJacobiValue:
    value: np.ndarray  # (int_path x^j dx / y)_j
    lattice: np.ndarray  # columns of A and B
    end: CurvePoint


def abel_jacobi(curve: HyperellipticCurve, periods: PeriodData, p0: CurvePoint,
                p: CurvePoint | None, path: PathSpec) -> AbelJacobiValue:
    if path.length == 0:
        return AbelJacobiValue(np.zeros(curve.genus, dtype=complex), periods.lattice, p0)
    tr = tracked_between(curve, p0, p, path)
    return AbelJacobiValue(integrate_differentials(tr), periods.lattice, tr.end_point())


def fourier_harmonic_eval(periods: PeriodData, cls: HarmonicClass, v) -> complex:
    """``f(v) = exp(2 pi i * 2 Re(c . v))`` on C^g; invariant under the period lattice."""
    v = np.asarray(v, dtype=complex)
    return _unimodular(complex(np.exp(TWO_PI_I * 2.0 * np.real(np.dot(cls.c, v)))))


def verify_hecke_relation(curve: HyperellipticCurve, periods: PeriodData, cls: HarmonicClass,
                          v, p0: CurvePoint, p: CurvePoint | None, path: PathSpec) -> float:
    """``|f(v + AJ(p)) - F(p) f(v)|`` with AJ and F from separate quadratures."""
    if not np.any(cls.c):
        return 0.0
    aj = abel_jacobi(curve, periods, p0, p, path).value
    F = hecke_eigenvalue_F(curve, cls, p0, p, path)
    v = np.asarray(v, dtype=complex)
    return abs(fourier_harmonic_eval(periods, cls, v + aj) - F * fourier_harmonic_eval(periods, cls, v))


def oper_eigenvalues_ab(cls: HarmonicClass) -> tuple[np.ndarray, np.ndarray]:
    """``a = 2 pi i c`` (holomorphic part), ``b = 2 pi i conj(c)`` (antiholomorphic part)."""
    c = np.asarray(cls.c, dtype=complex)
    a = TWO_PI_I * c
    b = TWO_PI_I * np.conj(c)
    if not np.array_equal(b, -np.conj(a)):
        raise AssertionError("b != -conj(a)")
    return a, b


def cycle_monodromy(periods: PeriodData, cls: HarmonicClass) -> np.ndarray:
    """``exp(int_cycle (a + b))`` over the basis cycles; unimodular for real classes."""
    a, b = oper_eigenvalues_ab(cls)
    P = periods.lattice
    return np.exp(a @ P + b @ np.conj(P))


def verify_dF(curve: HyperellipticCurve, cls: HarmonicClass, p0: CurvePoint, p: CurvePoint | None,
              h: float, path: PathSpec) -> float:
    """Relative residual of dF = (a + b) F by central differences in x around p."""
    if not np.any(cls.c):
        return 0.0
    x = path.end
    if float(curve.distance_to_branch(x)) <= 10.0 * h:
        raise StencilNearBranchPoint(f"stencil at {x} with h={h} is too close to a branch point")
    tr = tracked_between(curve, p0, p, path)
    F = hecke_eigenvalue_F(curve, cls, p0, p, path)
    y = tr.y_end

    def shifted(d):
        t = track(curve, straight(x, x + d), y)
        J = np.dot(cls.c, integrate_differentials(t))
        return F * np.exp(TWO_PI_I * 2.0 * J.real)

    Fx = (shifted(h) - shifted(-h)) / (2 * h)
    Fy = (shifted(1j * h) - shifted(-1j * h)) / (2 * h)
    dF = 0.5 * (Fx - 1j * Fy)
    dbarF = 0.5 * (Fx + 1j * Fy)
    g = np.dot(cls.c, x ** np.arange(len(cls.c))) / y
    a_x = TWO_PI_I * g
    b_x = TWO_PI_I * np.conj(g)
    return float((abs(dF - a_x * F) + abs(dbarF - b_x * F)) / (abs(a_x) + abs(b_x)))
