"""Abelian (rank one) case: periods, harmonic classes and Hecke eigenvalues on hyperelliptic curves."""

from .curve import CurvePoint, HyperellipticCurve, load_curve
from .harmonic import (
    AbelJacobiValue,
    HarmonicClass,
    abel_jacobi,
    cycle_monodromy,
    fourier_harmonic_eval,
    hecke_eigenvalue_F,
    integer_harmonic_class,
    oper_eigenvalues_ab,
    reconstruction_residual,
    verify_dF,
    verify_hecke_relation,
)
from .periods import PeriodData, period_matrix, period_matrix_by_cycles

__all__ = [
    "AbelJacobiValue", "CurvePoint", "HarmonicClass", "HyperellipticCurve", "PeriodData",
    "abel_jacobi", "cycle_monodromy", "fourier_harmonic_eval", "hecke_eigenvalue_F",
    "integer_harmonic_class", "load_curve", "oper_eigenvalues_ab", "period_matrix",
    "period_matrix_by_cycles", "reconstruction_residual", "verify_dF", "verify_hecke_relation",
]
