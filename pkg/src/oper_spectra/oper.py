"""Second-order Fuchsian operators ``d^2/dz^2 + t(z)`` on the punctured sphere.

    t(z) = sum_j  delta_j / (z - z_j)^2 + mu_j / (z - z_j)

The double-pole coefficients ``delta_j`` fix the local exponents, the residues
``mu_j`` are the accessory parameters.  Regularity (or a prescribed double pole)
at infinity imposes linear constraints on the ``mu_j``; a config that meets them
is *sealed*.  An :class:`OperFamily` is the affine line of sealed configs obtained
by freeing one accessory parameter.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateConfig, EvaluationAtPuncture, UnsealedConfig
from .transport import LinearSystemSpec

PARABOLIC_DELTA = 0.25
SEAL_TOL = 1e-12


def _pair(z: complex) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _unpair(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(f"complex numbers are [re, im] pairs, got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


@dataclass(frozen=True)
class OperConfig:
    """Singularity data and accessory parameters of ``d^2 + t(z)``.

    All coordinates refer to the fixed affine chart ``z`` on P^1 minus infinity.
    """

    punctures: tuple
    delta: tuple
    mu: tuple
    infinity: bool = False
    delta_inf: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "punctures", tuple(complex(z) for z in self.punctures))
        object.__setattr__(self, "delta", tuple(float(d) for d in self.delta))
        object.__setattr__(self, "mu", tuple(complex(m) for m in self.mu))
        n = len(self.punctures)
        if len(self.delta) != n or len(self.mu) != n:
            raise ConfigError("punctures, delta and mu must have equal length")
        if self.infinity and self.delta_inf is None:
            raise ConfigError("delta_inf is required when infinity is a puncture")
        if not self.infinity and self.delta_inf is not None:
            raise ConfigError("delta_inf given but infinity is not a puncture")
        for i in range(n):
            for j in range(i + 1, n):
                if abs(self.punctures[i] - self.punctures[j]) <= 1e-12 * max(1.0, abs(self.punctures[i])):
                    raise DegenerateConfig(f"punctures {i} and {j} coincide")

    @property
    def n_punctures(self) -> int:
        return len(self.punctures) + int(self.infinity)

    @property
    def free_parameter_count(self) -> int:
        return self.n_punctures - 3

    @property
    def sealed(self) -> bool:
        return float(np.max(np.abs(validate_at_infinity(self)))) < SEAL_TOL * self._scale()

    def _scale(self) -> float:
        terms = [abs(d) + abs(m) * max(1.0, abs(z)) ** 2
                 for d, m, z in zip(self.delta, self.mu, self.punctures)]
        return max(1.0, sum(terms))

    def with_mu(self, mu) -> "OperConfig":
        return replace(self, mu=tuple(mu))

    def to_dict(self) -> dict:
        d = {
            "punctures": [_pair(z) for z in self.punctures],
            "infinity": self.infinity,
            "delta": list(self.delta),
            "mu": [_pair(m) for m in self.mu],
        }
        if self.infinity:
            d["delta_inf"] = self.delta_inf
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OperConfig":
        try:
            punctures = [_unpair(v) for v in d["punctures"]]
            infinity = bool(d.get("infinity", False))
            delta = d.get("delta")
            if delta is None:
                delta = [PARABOLIC_DELTA] * len(punctures)
            delta_inf = d.get("delta_inf")
            if infinity and delta_inf is None:
                delta_inf = PARABOLIC_DELTA
            mu = d.get("mu")
            if mu is None:
                mu = [0.0] * len(punctures)
            return cls(tuple(punctures), tuple(float(x) for x in delta),
                       tuple(_unpair(v) for v in mu), infinity,
                       None if delta_inf is None else float(delta_inf))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad oper config: {exc}") from exc


def load_config(path) -> tuple[OperConfig, dict]:
    """Read ``oper.json``; returns the config and the raw dict (for extra keys)."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return OperConfig.from_dict(raw), raw


def evaluate_t(config: OperConfig, z: complex) -> complex:
    z = complex(z)
    total = 0j
    for zj, d, m in zip(config.punctures, config.delta, config.mu):
        w = z - zj
        if w == 0:
            raise EvaluationAtPuncture(f"t evaluated at puncture {zj}")
        total += d / (w * w) + m / w
    return total


def constraint_system(config: OperConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linear constraints on mu as ``(C, rhs, offset)`` with residual ``C mu + offset``."""
    z = np.asarray(config.punctures, dtype=complex)
    delta = np.asarray(config.delta, dtype=float)
    ones = np.ones_like(z)
    if config.infinity:
        C = np.vstack([ones, z])
        offset = np.array([0.0, delta.sum() - config.delta_inf], dtype=complex)
    else:
        C = np.vstack([ones, z, z * z])
        offset = np.array([0.0, delta.sum(), 2.0 * np.sum(delta * z)], dtype=complex)
    return C, -offset, offset


def validate_at_infinity(config: OperConfig) -> np.ndarray:
    """Laurent-coefficient residuals of ``t`` at infinity (zero for a sealed config)."""
    C, _, offset = constraint_system(config)
    mu = np.asarray(config.mu, dtype=complex)
    if mu.size == 0:
        return np.abs(offset)
    return np.abs(C @ mu + offset)


def indicial_exponents(delta: float) -> tuple[complex, complex]:
    """Roots of rho (rho - 1) + delta = 0, ordered by (real, imag)."""
    root = cmath.sqrt(1.0 - 4.0 * delta)
    a, b = (1.0 - root) / 2.0, (1.0 + root) / 2.0
    return tuple(sorted((complex(a), complex(b)), key=lambda w: (round(w.real, 15), round(w.imag, 15))))


def _coefficients_for(points: np.ndarray, delta: np.ndarray, mu: np.ndarray):
    """Evaluator of A(z) = [[0, 1], [-t(z), 0]]; ``mu`` may be (n,) or (batch, n)."""
    batched = mu.ndim == 2

    def coefficients(z):
        w = z - points
        t = np.sum(delta / (w * w)) + (mu @ (1.0 / w) if mu.size else 0.0)
        if batched:
            out = np.zeros((mu.shape[0], 2, 2), dtype=complex)
            out[:, 0, 1] = 1.0
            out[:, 1, 0] = -t
            return out
        return np.array([[0.0, 1.0], [-t, 0.0]], dtype=complex)

    return coefficients


def to_first_order_system(config: OperConfig) -> LinearSystemSpec:
    """Companion system for (y, y'); traceless, so transports are unimodular."""
    if not config.sealed:
        raise UnsealedConfig(f"constraint residuals {validate_at_infinity(config)}")
    points = np.asarray(config.punctures, dtype=complex)
    coeff = _coefficients_for(points, np.asarray(config.delta), np.asarray(config.mu, dtype=complex))
    return LinearSystemSpec(2, coeff, tuple(config.punctures),
                            {"infinity": config.infinity, "delta_inf": config.delta_inf})


@dataclass(frozen=True)
class OperFamily:
    """Affine line ``mu_vec(s) = particular + s * direction`` of sealed configs.

    ``s`` is the accessory parameter of puncture ``free_index`` (direction has a 1
    there, particular a 0).  For rigid data ``free_index`` is None and only the
    particular solution exists.
    """

    base: OperConfig
    particular: tuple
    direction: tuple | None
    free_index: int | None

    @property
    def rigid(self) -> bool:
        return self.free_index is None

    def mu_vector(self, s: complex) -> np.ndarray:
        p = np.asarray(self.particular, dtype=complex)
        if self.rigid:
            return p
        return p + complex(s) * np.asarray(self.direction, dtype=complex)

    def mu_vectors(self, s_values) -> np.ndarray:
        s = np.asarray(s_values, dtype=complex).reshape(-1)
        p = np.asarray(self.particular, dtype=complex)
        if self.rigid:
            return np.broadcast_to(p, (s.size, p.size)).copy()
        return p[None, :] + s[:, None] * np.asarray(self.direction, dtype=complex)[None, :]

    def config_at(self, s: complex = 0j) -> OperConfig:
        return self.base.with_mu(tuple(self.mu_vector(s)))

    def system_batch(self, s_values) -> LinearSystemSpec:
        """Companion systems for many parameter values, transported in lockstep."""
        mu = self.mu_vectors(s_values)
        points = np.asarray(self.base.punctures, dtype=complex)
        coeff = _coefficients_for(points, np.asarray(self.base.delta), mu)
        return LinearSystemSpec(2, coeff, tuple(self.base.punctures), {"batch": mu.shape[0]})

    def to_dict(self) -> dict:
        d = self.base.to_dict()
        d["free_index"] = self.free_index
        return d


def oper_family(config: OperConfig, free_index: int | None = None,
                adjustable: tuple | None = None) -> OperFamily:
    """Solve the constraints at infinity, leaving one accessory parameter free.

    Only the residues listed in ``adjustable`` (default: all) are solved for;
    the others keep their values from ``config``.  The adjustable residues
    must leave exactly one free direction (or none, the rigid case).
    """
    n = len(config.punctures)
    adjustable = tuple(range(n)) if adjustable is None else tuple(adjustable)
    C, rhs, _ = constraint_system(config)
    mu0 = np.asarray(config.mu, dtype=complex).copy()
    fixed = [j for j in range(n) if j not in adjustable]
    target = rhs - (C[:, fixed] @ mu0[fixed] if fixed else 0.0)
    Ca = C[:, list(adjustable)]
    if Ca.shape[1] == 0:
        raise DegenerateConfig("no adjustable accessory parameters")
    sol, _, rank, _ = np.linalg.lstsq(Ca, target, rcond=None)
    if np.max(np.abs(Ca @ sol - target), initial=0.0) > 1e-10 * max(1.0, np.abs(target).max(initial=0.0)):
        raise DegenerateConfig("constraints at infinity are inconsistent")
    nullity = Ca.shape[1] - rank
    particular = mu0.copy()
    particular[list(adjustable)] = sol
    if nullity == 0:
        base = config.with_mu(tuple(particular))
        return OperFamily(base, tuple(particular), None, None)
    if nullity > 1:
        raise DegenerateConfig(f"{nullity} free accessory parameters; restrict `adjustable`")
    _, _, vh = np.linalg.svd(Ca)
    null = vh[-1].conj()
    direction = np.zeros(n, dtype=complex)
    direction[list(adjustable)] = null
    if free_index is None:
        candidates = [j for j in adjustable if abs(direction[j]) > 1e-8]
        free_index = candidates[-1]
    if abs(direction[free_index]) <= 1e-8:
        raise DegenerateConfig(f"accessory parameter {free_index} is not free")
    direction = direction / direction[free_index]
    direction[free_index] = 1.0
    particular = particular - particular[free_index] * direction
    particular[free_index] = 0.0
    base = config.with_mu(tuple(particular))
    return OperFamily(base, tuple(particular), tuple(direction), int(free_index))



def rigid_three_point() -> OperConfig:
    """Parabolic oper on P^1 minus {0, 1, infinity}."""
    fam = oper_family(OperConfig((0j, 1 + 0j), (PARABOLIC_DELTA,) * 2, (0j, 0j), True, PARABOLIC_DELTA))
    return fam.base


def four_point(points=(0.0, 1.0, 2.0)) -> OperConfig:
    """Parabolic data on P^1 minus {points, infinity}; mu not yet sealed."""
    return OperConfig(tuple(complex(p) for p in points), (PARABOLIC_DELTA,) * len(points),
                      (0j,) * len(points), True, PARABOLIC_DELTA)


__all__ = [
    "OperConfig", "OperFamily", "PARABOLIC_DELTA", "constraint_system", "evaluate_t",
    "four_point", "indicial_exponents", "load_config", "oper_family", "rigid_three_point",
    "to_first_order_system", "validate_at_infinity",
]
