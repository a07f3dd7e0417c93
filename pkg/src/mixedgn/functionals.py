"""Energy, Weinstein quotient, fiber map and scaling transforms."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .params import ParameterError, ProblemParams, gn_exponents, mass_scaling_exponents, threshold_coefficient
from .spectral import Field, from_spectrum, mass, power_nonlinearity, spectrum

REPORT_FIELDS = ("energy", "kinetic_high", "kinetic_low", "potential", "mass", "weinstein")


@dataclass(frozen=True)
class FunctionalReport:
    energy: float
    kinetic_high: float
    kinetic_low: float
    potential: float
    mass: float
    weinstein: float

    @property
    def kinetic_sum(self) -> float:
        return self.kinetic_high + self.kinetic_low

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "FunctionalReport":
        return cls(**{k: float(d[k]) for k in REPORT_FIELDS})


def _weinstein_from_norms(A, B, M, P, params: ProblemParams) -> float:
    if P <= 0.0:
        raise ValueError("Weinstein quotient is undefined for the zero field")
    if A <= 0.0 or B <= 0.0:
        # constant fields on the torus have vanishing seminorms
        return 0.0
    e = gn_exponents(params)
    logw = (0.5 * e.exp_high * math.log(A) + 0.5 * e.exp_low * math.log(B)
            + 0.5 * e.exp_mass * math.log(M) - math.log(P))
    return math.exp(logw)


def functional_report(u: Field, params: ProblemParams) -> FunctionalReport:
    """All six scalar functionals of ``u`` from a single transform."""
    g = u.grid
    uh = spectrum(u)
    A = g.spectral_sum(g.symbol(params.s_high), uh)
    B = g.spectral_sum(g.symbol(params.s_low), uh)
    M = mass(u)
    a = np.abs(u.values)
    P = float(np.sum(a ** params.p)) * g.cell_volume
    J = 0.5 * A + 0.5 * B - P / params.p
    W = _weinstein_from_norms(A, B, M, P, params) if P > 0 else float("nan")
    return FunctionalReport(energy=J, kinetic_high=A, kinetic_low=B, potential=P, mass=M, weinstein=W)


def energy(u: Field, params: ProblemParams) -> float:
    return functional_report(u, params).energy


def linear_symbol(grid, params: ProblemParams, omega: float = 0.0) -> np.ndarray:
    """Multiplier of ``(-Delta)^s_high + (-Delta)^s_low + omega``."""
    return grid.symbol(params.s_high) + grid.symbol(params.s_low) + omega


def energy_gradient(u: Field, params: ProblemParams) -> Field:
    """L2 gradient ``(-Delta)^s_high u + (-Delta)^s_low u - |u|^(p-2) u``."""
    lin = from_spectrum(u.grid, linear_symbol(u.grid, params) * spectrum(u))
    return lin - power_nonlinearity(u, params.p)


def weinstein(u: Field, params: ProblemParams) -> float:
    """Weinstein quotient; its infimum is ``1/C_best``.

    Raises ``ValueError`` for the zero field.  Constant nonzero fields give 0
    on a periodic box.
    """
    r = functional_report(u, params)
    return _weinstein_from_norms(r.kinetic_high, r.kinetic_low, r.mass, r.potential, params)


def log_weinstein_gradient(u: Field, params: ProblemParams) -> Field:
    """L2 gradient of ``log W`` at ``u``."""
    g = u.grid
    e = gn_exponents(params)
    uh = spectrum(u)
    A = g.spectral_sum(g.symbol(params.s_high), uh)
    B = g.spectral_sum(g.symbol(params.s_low), uh)
    M = mass(u)
    v = u.values
    nl = np.sign(v) * np.abs(v) ** (params.p - 1)
    P = float(np.sum(np.abs(v) * np.abs(nl))) * g.cell_volume
    sym = e.exp_high * g.symbol(params.s_high) / A + e.exp_low * g.symbol(params.s_low) / B
    lin = from_spectrum(g, sym * uh).values
    return Field._wrap(g, lin + e.exp_mass * v / M - params.p * nl / P)


def dilation_scaling(u: Field, t: float) -> Field:
    """Mass-preserving dilation ``t^(N/2) u(t x)``.

    Realized exactly by keeping the samples and shrinking the box by ``t``.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    g = u.grid.rescaled(t)
    return Field._wrap(g, u.values * t ** (0.5 * u.grid.dim))


def _fiber_terms(report: FunctionalReport, params: ProblemParams):
    N, p = params.dim, params.p
    return report.kinetic_high, report.kinetic_low, report.potential, 0.5 * N * (p - 2)


def h_function(u, t: float, params: ProblemParams) -> float:
    """``J(u_t) / t^(2 s_low)`` from stored norms.

    ``u`` may be a :class:`Field` or a :class:`FunctionalReport`.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    rep = u if isinstance(u, FunctionalReport) else functional_report(u, params)
    A, B, P, q = _fiber_terms(rep, params)
    J = 0.5 * t ** (2 * params.s_high) * A + 0.5 * t ** (2 * params.s_low) * B - t ** q * P / params.p
    return J / t ** (2 * params.s_low)


def h_derivative(u, t: float, params: ProblemParams) -> float:
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    rep = u if isinstance(u, FunctionalReport) else functional_report(u, params)
    A, _, P, q = _fiber_terms(rep, params)
    sig = params.sigma
    k = q - 2 * params.s_low
    return sig * t ** (2 * sig - 1) * A - k / params.p * t ** (k - 1) * P


def t_star(u, params: ProblemParams) -> float:
    """Unique critical point of :func:`h_function`."""
    rep = u if isinstance(u, FunctionalReport) else functional_report(u, params)
    if rep.potential <= 0 or rep.kinetic_high <= 0:
        raise ValueError("t_star needs nonzero potential and high seminorm")
    e = gn_exponents(params)
    base = e.exp_high / params.p * rep.potential / rep.kinetic_high
    return base ** (2.0 / (4 * params.s_high - params.dim * (params.p - 2)))


def mass_scaling(u: Field, c: float, c_prime: float, params: ProblemParams) -> Field:
    """Rescale ``u`` of mass ``c`` to mass ``c_prime`` (``s_high = 1`` only)."""
    if not (c > 0 and c_prime > 0):
        raise ValueError("masses must be positive")
    a, b, _ = mass_scaling_exponents(params)
    m = mass(u)
    if abs(m - c) > 1e-8 * c:
        raise ValueError(f"mass(u) = {m} does not match c = {c}")
    r = c_prime / c
    return Field._wrap(u.grid.rescaled(r ** b), u.values * r ** a)


def mass_scaled_report(report: FunctionalReport, c: float, c_prime: float,
                       params: ProblemParams) -> FunctionalReport:
    """Closed-form norms of the mass-rescaled field."""
    a, b, _ = mass_scaling_exponents(params)
    N, p, s = params.dim, params.p, params.s_low
    r = c_prime / c
    A = r ** (2 * a + 2 * b - b * N) * report.kinetic_high
    B = r ** (2 * a + 2 * b * s - b * N) * report.kinetic_low
    P = r ** (p * a - b * N) * report.potential
    M = r ** (2 * a - b * N) * report.mass
    return FunctionalReport(energy=0.5 * A + 0.5 * B - P / p, kinetic_high=A, kinetic_low=B,
                            potential=P, mass=M, weinstein=report.weinstein)


def threshold_lhs(report: FunctionalReport, params: ProblemParams) -> float:
    e = gn_exponents(params)
    return report.kinetic_high ** (0.5 * e.exp_high) * report.kinetic_low ** (0.5 * e.exp_low)


def threshold_inequality_holds(u, params: ProblemParams) -> tuple[bool, float]:
    """Strict test ``LHS < K * int|u|^p`` and its signed margin ``LHS - K int|u|^p``."""
    rep = u if isinstance(u, FunctionalReport) else functional_report(u, params)
    if rep.potential <= 0:
        raise ValueError("threshold inequality is undefined for the zero field")
    margin = threshold_lhs(rep, params) - threshold_coefficient(params) * rep.potential
    return bool(margin < 0), float(margin)


__all__ = [
    "FunctionalReport", "functional_report", "energy", "energy_gradient", "weinstein",
    "log_weinstein_gradient", "dilation_scaling", "h_function", "h_derivative", "t_star",
    "mass_scaling", "mass_scaled_report", "threshold_inequality_holds", "threshold_lhs",
    "linear_symbol", "ParameterError",
]
