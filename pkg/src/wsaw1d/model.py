"""Interaction polynomial and weight density of the weakly self-avoiding walk.

The walk on Z is reweighted by exp(-g * sum_x phi(L_x)) where L_x is the
local time at site x.  Everything downstream works with the density

    p(t) = exp(-g*phi(t) - nu*t),   t >= 0,

evaluated in log space because p spans hundreds of orders of magnitude over
a truncation interval [0, s_max].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# exp() overflows just above this; used to fail loudly instead of returning inf
_MAX_EXPONENT = 709.0


@dataclass(frozen=True)
class PhiSpec:
    """Interaction polynomial phi(t) = sum_k a_k t^k, powers k >= 2.

    Coefficients must be nonnegative with a strictly positive leading
    coefficient.  This family guarantees phi(0)=0, phi convex-ish growth,
    and phi(t)/t nondecreasing, which is what the operator theory needs.
    """

    terms: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("phi needs at least one term")
        powers = [p for p, _ in self.terms]
        if len(set(powers)) != len(powers):
            raise ValueError("duplicate powers in phi spec")
        for power, coeff in self.terms:
            if not isinstance(power, int) or power < 2:
                raise ValueError(f"phi powers must be integers >= 2, got {power!r}")
            if not math.isfinite(coeff) or coeff < 0:
                raise ValueError(f"phi coefficients must be finite and >= 0, got {coeff!r}")
        leading = max(self.terms)[1]
        if leading <= 0:
            raise ValueError("leading phi coefficient must be positive")

    @property
    def degree(self) -> int:
        return max(p for p, _ in self.terms)

    @classmethod
    def quadratic(cls) -> "PhiSpec":
        """The standard choice phi(t) = t^2."""
        return cls(terms=((2, 1.0),))

    @classmethod
    def from_pairs(cls, pairs) -> "PhiSpec":
        """Build from an ordered list of (power, coefficient) pairs (config format)."""
        return cls(terms=tuple((int(p), float(c)) for p, c in pairs))

    def to_pairs(self) -> list[list[float]]:
        return [[p, c] for p, c in self.terms]


@dataclass(frozen=True)
class ModelParams:
    """Repelling strength g, Laplace parameter nu, and the interaction phi.

    g=0 is admitted as the free-walk boundary case: it sits outside the
    self-avoiding regime but the operator formulas extend continuously and
    the closed-form free-walk answers serve as test oracles.
    """

    g: float
    nu: float
    phi: PhiSpec = None

    def __post_init__(self):
        if self.phi is None:
            object.__setattr__(self, "phi", PhiSpec.quadratic())
        if not math.isfinite(self.g) or self.g < 0:
            raise ValueError(f"g must be finite and >= 0, got {self.g!r}")
        if not math.isfinite(self.nu):
            raise ValueError(f"nu must be finite, got {self.nu!r}")

    def with_nu(self, nu: float) -> "ModelParams":
        return ModelParams(g=self.g, nu=nu, phi=self.phi)

    def with_g(self, g: float) -> "ModelParams":
        return ModelParams(g=g, nu=self.nu, phi=self.phi)


def _check_domain(t):
    t = np.asarray(t, dtype=float)
    if np.any(np.isnan(t)):
        raise ValueError("t must not be NaN")
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return t


def phi_eval(phi: PhiSpec, t):
    """Evaluate phi at t (scalar or array), t >= 0."""
    t = _check_domain(t)
    out = np.zeros_like(t)
    for power, coeff in phi.terms:
        out += coeff * t**power
    return out if out.ndim else float(out)


def phi_prime(phi: PhiSpec, t):
    """Derivative phi'(t) = sum_k k a_k t^(k-1); nonnegative on t >= 0."""
    t = _check_domain(t)
    out = np.zeros_like(t)
    for power, coeff in phi.terms:
        out += power * coeff * t ** (power - 1)
    return out if out.ndim else float(out)


def log_p(params: ModelParams, t):
    """log p(t) = -(g*phi(t) + nu*t).  The single source of all exponentials."""
    t = _check_domain(t)
    out = -(params.g * phi_eval(params.phi, t) + params.nu * t)
    return out if np.ndim(out) else float(out)


def sqrt_p(params: ModelParams, t):
    """sqrt(p(t)) = exp(log_p / 2); raises on floating-range overflow."""
    ex = 0.5 * np.asarray(log_p(params, t))
    if np.any(ex > _MAX_EXPONENT):
        raise OverflowError(
            f"sqrt(p) overflows double range at g={params.g}, nu={params.nu}"
        )
    out = np.exp(ex)
    return out if out.ndim else float(out)
