"""Problem parameters and the closed-form constants that depend only on them.

The operator is written in unified form ``(-Delta)^s_high + (-Delta)^s_low``
with ``0 < s_low < s_high <= 1``.  ``s_high = 1`` is the mixed
local/nonlocal case; ``s_high < 1`` is the purely fractional pair.  Every
formula below is written once in terms of ``sigma = s_high - s_low``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass


class ParameterError(ValueError):
    """Raised when a parameter set falls outside the admissible window."""


@dataclass(frozen=True)
class ProblemParams:
    dim: int
    s_low: float
    s_high: float
    p: float

    def __post_init__(self):
        if isinstance(self.dim, bool) or int(self.dim) != self.dim or self.dim < 1:
            raise ParameterError(f"dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))
        for name in ("s_low", "s_high", "p"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if not 0.0 < self.s_low:
            raise ParameterError(f"s_low must be > 0, got {self.s_low}")
        if not self.s_low < self.s_high:
            raise ParameterError(
                f"s_low must be < s_high, got s_low={self.s_low}, s_high={self.s_high}")
        if not self.s_high <= 1.0:
            raise ParameterError(f"s_high must be <= 1, got {self.s_high}")
        lo, hi = self.p_window
        if not self.p > lo:
            raise ParameterError(
                f"p={self.p} is not above the lower critical exponent 2 + 4*s_low/dim = {lo}")
        if not self.p < hi:
            raise ParameterError(
                f"p={self.p} is not below the upper critical exponent 2 + 4*s_high/dim = {hi}")

    @property
    def sigma(self) -> float:
        return self.s_high - self.s_low

    @property
    def p_window(self) -> tuple[float, float]:
        return (2.0 + 4.0 * self.s_low / self.dim, 2.0 + 4.0 * self.s_high / self.dim)

    @property
    def is_local(self) -> bool:
        """True when the upper operator is the ordinary Laplacian."""
        return self.s_high == 1.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemParams":
        return cls(dim=d["dim"], s_low=d["s_low"], s_high=d["s_high"], p=d["p"])


@dataclass(frozen=True)
class GnExponents:
    """Powers carried by each norm in the interpolation inequality.

    ``exp_high`` and ``exp_low`` are the powers of the (unsquared)
    homogeneous seminorms of order ``s_high`` and ``s_low``; ``exp_mass`` is
    the power of the L2 norm.
    """
    exp_high: float
    exp_low: float
    exp_mass: float

    @property
    def total(self) -> float:
        return self.exp_high + self.exp_low + self.exp_mass


def gn_exponents(params: ProblemParams) -> GnExponents:
    N, p, sig = params.dim, params.p, params.sigma
    exp_high = (p * N - 2 * N - 4 * params.s_low) / (2 * sig)
    exp_low = (2 * N + 4 * params.s_high - p * N) / (2 * sig)
    return GnExponents(exp_high=exp_high, exp_low=exp_low, exp_mass=p - 2.0)


def critical_mass_from_constant(C_best: float, params: ProblemParams) -> float:
    """Critical mass ``c0`` implied by the sharp constant ``C_best``."""
    if not C_best > 0:
        raise ValueError(f"C_best must be positive, got {C_best}")
    e = gn_exponents(params)
    p = params.p
    log_c0 = (-2.0 / (p - 2) * math.log(C_best)
              - e.exp_low / (p - 2) * math.log(e.exp_low / p)
              - e.exp_high / (p - 2) * math.log(e.exp_high / p))
    return math.exp(log_c0)


def constant_from_critical_mass(c0: float, params: ProblemParams) -> float:
    """Inverse of :func:`critical_mass_from_constant`."""
    if not c0 > 0:
        raise ValueError(f"c0 must be positive, got {c0}")
    e = gn_exponents(params)
    p = params.p
    log_C = -(p - 2) / 2.0 * (math.log(c0)
                              + e.exp_low / (p - 2) * math.log(e.exp_low / p)
                              + e.exp_high / (p - 2) * math.log(e.exp_high / p))
    return math.exp(log_C)


def threshold_coefficient(params: ProblemParams) -> float:
    """Coefficient ``K`` multiplying the L^p term in the sign-of-energy test.

    ``K = (exp_high/p)^(exp_high/2) * (exp_low/p)^(exp_low/2)``; the two
    half-exponents add up to one.
    """
    e = gn_exponents(params)
    p = params.p
    return (e.exp_high / p) ** (e.exp_high / 2) * (e.exp_low / p) ** (e.exp_low / 2)


def threshold_coefficient_ratio_form(params: ProblemParams) -> float:
    """Same number as :func:`threshold_coefficient`, written as a ratio."""
    e = gn_exponents(params)
    return (e.exp_high / params.p) * (e.exp_low / e.exp_high) ** (e.exp_low / 2)


def mass_scaling_exponents(params: ProblemParams) -> tuple[float, float, float]:
    """Exponents ``(a, b, theta)`` of the mass-changing rescaling.

    Only defined for ``s_high = 1``.
    """
    if not params.is_local:
        raise ParameterError(
            "mass scaling exponents are only available for s_high = 1")
    N, p = params.dim, params.p
    den = 4.0 - N * (p - 2)
    a = 2.0 / den
    b = (p - 2) / den
    theta = 2.0 * (p - 2) / den + 1.0
    return a, b, theta


def beta_target(params: ProblemParams) -> float:
    """Expected ratio of the low to the high squared seminorm at the optimizer."""
    e = gn_exponents(params)
    return e.exp_low / e.exp_high


def gamma_target(params: ProblemParams) -> float:
    """Expected ratio of the low squared seminorm to the L^p integral."""
    return gn_exponents(params).exp_low / params.p


def high_target(params: ProblemParams) -> float:
    """Expected ratio of the high squared seminorm to the L^p integral."""
    return gn_exponents(params).exp_high / params.p
