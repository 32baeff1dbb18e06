"""Numerical toolkit for second-order Fuchsian opers on the punctured sphere.

Monodromy of ``d^2/dz^2 + t(z)``, searches for accessory parameters with real
monodromy, the single-valued sections built from invariant Hermitian forms,
and the abelian (rank one) case on hyperelliptic curves.
"""

__version__ = "0.1.0"
