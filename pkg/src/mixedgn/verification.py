"""Identity and inequality certification for computed ground states."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .functionals import FunctionalReport, functional_report, threshold_inequality_holds, weinstein
from .params import (ProblemParams, beta_target, critical_mass_from_constant, gamma_target,
                     gn_exponents, high_target, mass_scaling_exponents, threshold_coefficient)
from .solvers import (GroundState, RouteWResult, SolverOptions, mass_constrained_flow,
                      route_w_search)
from .spectral import Field, SpectralGrid, random_field, spectrum

CSV_COLUMNS = ("N", "s_low", "s_high", "p", "C_best", "c0_routeA", "c0_routeW", "c0_formula",
               "beta", "beta_target", "gamma", "gamma_target", "nehari", "pohozaev", "energy",
               "threshold_margin", "violations", "omega", "status")


@dataclass(frozen=True)
class Thresholds:
    equation: float = 1e-10
    nehari: float = 1e-8
    pohozaev: float = 1e-6
    virial: float = 1e-6
    seminorm: float = 1e-4
    energy: float = 1e-8
    c0_agreement: float = 1e-3
    threshold_margin: float = 1e-4
    gn_slack: float = 1e-6
    omega_slack: float = 1e-6
    inequality_slack: float = 1e-10

    def to_dict(self) -> dict:
        return asdict(self)


def _terms_residual(terms) -> float:
    den = sum(abs(t) for t in terms)
    if den == 0.0:
        raise ValueError("identity is undefined for the zero field")
    return abs(sum(terms)) / den


def nehari_residual(g: GroundState, params: ProblemParams) -> float:
    r = g.report
    return _terms_residual([r.kinetic_high, r.kinetic_low, g.omega * r.mass, -r.potential])


def pohozaev_residual(g: GroundState, params: ProblemParams) -> float:
    r = g.report
    N, p = params.dim, params.p
    return _terms_residual([0.5 * (N - 2 * params.s_high) * r.kinetic_high,
                            0.5 * (N - 2 * params.s_low) * r.kinetic_low,
                            0.5 * N * g.omega * r.mass,
                            -N / p * r.potential])


def virial_residual(g, params: ProblemParams) -> float:
    """Pohozaev minus ``N/2`` times Nehari: the multiplier-free combination."""
    r = g.report if isinstance(g, GroundState) else g
    N, p = params.dim, params.p
    return _terms_residual([params.s_high * r.kinetic_high, params.s_low * r.kinetic_low,
                            -N * (p - 2) / (2 * p) * r.potential])


@dataclass(frozen=True)
class SeminormIdentities:
    high: float
    low: float
    beta: float
    beta_target: float
    gamma: float
    gamma_target: float

    @property
    def residuals(self) -> tuple[float, float]:
        return (self.high, self.low)


def seminorm_identities(g, params: ProblemParams) -> SeminormIdentities:
    r = g.report if isinstance(g, GroundState) else g
    ht = high_target(params) * r.potential
    lt = gamma_target(params) * r.potential
    return SeminormIdentities(
        high=abs(r.kinetic_high - ht) / ht,
        low=abs(r.kinetic_low - lt) / lt,
        beta=r.kinetic_low / r.kinetic_high,
        beta_target=beta_target(params),
        gamma=r.kinetic_low / r.potential,
        gamma_target=gamma_target(params),
    )


def energy_residual(g, params: ProblemParams) -> float:
    r = g.report if isinstance(g, GroundState) else g
    return abs(r.energy) / r.kinetic_sum


def threshold_margin_relative(g, params: ProblemParams) -> float:
    r = g.report if isinstance(g, GroundState) else g
    _, margin = threshold_inequality_holds(r, params)
    return margin / (threshold_coefficient(params) * r.potential)


def omega_lower_bound(g: GroundState, params: ProblemParams) -> float:
    """``(p-2)/(p c) * int|Q|^p`` with ``c`` the mass of ``Q``."""
    r = g.report
    return (params.p - 2) / (params.p * r.mass) * r.potential


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per sample so that loops can be split freely."""
    return np.random.default_rng([int(seed), int(index)])


def gn_sampling(Q: GroundState, params: ProblemParams, n_samples: int, seed: int,
                slack: float = 1e-6) -> tuple[int, float]:
    """Count random fields whose Weinstein value undercuts ``W(Q)``.

    Returns ``(violations, min_ratio)`` with ``min_ratio = min W(u)/W(Q)``.
    """
    wq = Q.report.weinstein
    violations = 0
    lowest = math.inf
    for i in range(n_samples):
        u = random_field(Q.grid, sample_rng(seed, i))
        ratio = weinstein(u, params) / wq
        lowest = min(lowest, ratio)
        if ratio < 1.0 - slack:
            violations += 1
    return violations, lowest


@dataclass
class Certificate:
    params: ProblemParams
    c0_routeA: float
    c0_routeW: float
    c0_formula: float
    C_best: float
    beta: float
    beta_target: float
    gamma: float
    gamma_target: float
    nehari_residual: float
    pohozaev_residual: float
    virial_residual: float
    energy_residual: float
    seminorm_identity_residuals: tuple
    threshold_margin_at_c0: float
    gn_sample_violations: int
    gn_samples: int
    omega: float
    omega_lower_bound: float
    equation_residual: float
    boundary_decay: float
    W_routeA: float
    W_routeW: float
    thresholds: Thresholds = field(default_factory=Thresholds)
    failures: list = field(default_factory=list)

    @property
    def status(self) -> str:
        return "FAIL" if self.failures else "PASS"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = self.params.to_dict()
        d["seminorm_identity_residuals"] = list(self.seminorm_identity_residuals)
        d["status"] = self.status
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        d = dict(d)
        d.pop("status", None)
        d["params"] = ProblemParams.from_dict(d["params"])
        d["thresholds"] = Thresholds(**d["thresholds"])
        d["seminorm_identity_residuals"] = tuple(d["seminorm_identity_residuals"])
        return cls(**d)

    def csv_row(self) -> list:
        P = self.params
        return [P.dim, P.s_low, P.s_high, P.p, self.C_best, self.c0_routeA, self.c0_routeW,
                self.c0_formula, self.beta, self.beta_target, self.gamma, self.gamma_target,
                self.nehari_residual, self.pohozaev_residual, self.energy_residual,
                self.threshold_margin_at_c0, self.gn_sample_violations, self.omega, self.status]


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b))


def optimality_certificate(g: GroundState, params: ProblemParams, n_samples: int = 1000,
                           seed: int = 0, opts: SolverOptions | None = None,
                           route_w: RouteWResult | None = None,
                           thresholds: Thresholds | None = None) -> Certificate:
    """Assemble every identity check for a critical-mass ground state.

    ``route_w`` may be supplied from :func:`critical_mass_search`; otherwise
    the Weinstein route is run on the grid of ``g``.
    """
    th = thresholds or Thresholds()
    opts = opts or SolverOptions(seed=seed)
    if route_w is None:
        route_w = route_w_search(params, g.grid, opts)
    C_best = route_w.C_best
    c0A = g.report.mass
    c0W = route_w.c0
    c0F = critical_mass_from_constant(C_best, params)
    ids = seminorm_identities(g, params)
    viol, _ = gn_sampling(g, params, n_samples, seed, th.gn_slack)
    cert = Certificate(
        params=params, c0_routeA=c0A, c0_routeW=c0W, c0_formula=c0F, C_best=C_best,
        beta=ids.beta, beta_target=ids.beta_target, gamma=ids.gamma, gamma_target=ids.gamma_target,
        nehari_residual=nehari_residual(g, params), pohozaev_residual=pohozaev_residual(g, params),
        virial_residual=virial_residual(g, params), energy_residual=energy_residual(g, params),
        seminorm_identity_residuals=ids.residuals,
        threshold_margin_at_c0=threshold_margin_relative(g, params),
        gn_sample_violations=viol, gn_samples=n_samples, omega=g.omega,
        omega_lower_bound=omega_lower_bound(g, params), equation_residual=g.residual,
        boundary_decay=g.boundary_decay, W_routeA=g.report.weinstein, W_routeW=route_w.W_min,
        thresholds=th,
    )
    cert.failures = _collect_failures(cert, g, route_w)
    return cert


def _collect_failures(c: Certificate, g: GroundState, rw: RouteWResult) -> list:
    th = c.thresholds
    out = []

    def check(ok, msg):
        if not ok:
            out.append(msg)

    check(c.equation_residual <= th.equation, f"equation residual {c.equation_residual:.3e}")
    check(c.nehari_residual <= th.nehari, f"nehari {c.nehari_residual:.3e}")
    check(c.pohozaev_residual <= th.pohozaev, f"pohozaev {c.pohozaev_residual:.3e}")
    check(c.virial_residual <= th.virial, f"virial {c.virial_residual:.3e}")
    check(c.energy_residual <= th.energy, f"energy {c.energy_residual:.3e}")
    for name, r in zip(("high", "low"), c.seminorm_identity_residuals):
        check(r <= th.seminorm, f"seminorm identity ({name}) {r:.3e}")
    check(abs(c.beta - c.beta_target) <= th.seminorm * c.beta_target,
          f"beta {c.beta:.6g} vs {c.beta_target:.6g}")
    check(abs(c.gamma - c.gamma_target) <= th.seminorm * c.gamma_target,
          f"gamma {c.gamma:.6g} vs {c.gamma_target:.6g}")
    pairs = (("routeA", c.c0_routeA), ("routeW", c.c0_routeW), ("formula", c.c0_formula))
    for i in range(3):
        for j in range(i + 1, 3):
            d = _rel(pairs[i][1], pairs[j][1])
            check(d <= th.c0_agreement, f"c0 {pairs[i][0]}/{pairs[j][0]} differ by {d:.3e}")
    check(abs(c.threshold_margin_at_c0) <= th.threshold_margin,
          f"threshold margin {c.threshold_margin_at_c0:.3e}")
    check(c.gn_sample_violations == 0, f"{c.gn_sample_violations} GN sample violations")
    check(c.omega > 0, f"omega {c.omega:.6g} not positive")
    check(c.omega >= (1 - th.omega_slack) * c.omega_lower_bound,
          f"omega {c.omega:.6g} below bound {c.omega_lower_bound:.6g}")
    for f in g.flags:
        out.append(f"ground state flag: {f}")
    for f in rw.ground.flags:
        if f != "residual_above_tol":
            out.append(f"route W flag: {f}")
    return out


# energy-sign battery ------------------------------------------------------

@dataclass
class MassProbe:
    c: float
    m_c: float
    kinetic_scale: float
    min_margin: float
    iterations: int
    min_energy: float
    status: str


@dataclass
class BatteryReport:
    c0: float
    probes: dict
    scaling_lhs: float = float("nan")
    scaling_rhs: float = float("nan")
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        d = asdict(self)
        d["probes"] = {k: asdict(v) for k, v in self.probes.items()}
        d["ok"] = self.ok
        return d


def theorem14_battery(params: ProblemParams, c0: float, ground: GroundState,
                      opts: SolverOptions | None = None, slack: float = 1e-10,
                      zero_tol: float = 1e-6) -> BatteryReport:
    """Energy-sign checks below, at, and above the critical mass.

    Each flow starts from ``ground`` rescaled in amplitude to the probe mass.
    Above ``c0`` a strictly negative energy must be found; below, no
    negative energy and every iterate must satisfy the for-all threshold
    inequality; at ``c0`` the energy must stay at zero.  For ``s_high = 1``
    the mass-scaling bound between ``1.2 c0`` and ``1.5 c0`` is also checked.
    """
    opts = opts or SolverOptions()
    probes = {}
    failures = []
    for label, factor in (("0.8", 0.8), ("1.0", 1.0), ("1.2", 1.2), ("1.5", 1.5)):
        c = factor * c0
        fr = mass_constrained_flow(params, c, ground.field, opts)
        scale = fr.kinetic_scale
        rel_margins = fr.margins
        probes[label] = MassProbe(c=c, m_c=fr.m_c, kinetic_scale=scale,
                                  min_margin=min(rel_margins), iterations=fr.iterations,
                                  min_energy=min(fr.energies), status=fr.status)
    hi = probes["1.2"]
    if not hi.m_c < 0:
        failures.append(f"m_c at 1.2 c0 is {hi.m_c:.3e}, expected negative")
    lo = probes["0.8"]
    if lo.min_energy < -1e-8 * lo.kinetic_scale:
        failures.append(f"negative energy {lo.min_energy:.3e} found at 0.8 c0")
    if lo.min_margin < -slack:
        failures.append(f"for-all threshold inequality violated at 0.8 c0 (margin {lo.min_margin:.3e})")
    mid = probes["1.0"]
    if abs(mid.m_c) > zero_tol * mid.kinetic_scale:
        failures.append(f"|m_c0| = {abs(mid.m_c):.3e} exceeds {zero_tol:g} x kinetic scale")
    rep = BatteryReport(c0=c0, probes=probes, failures=failures)
    if params.is_local:
        _, _, theta = mass_scaling_exponents(params)
        rep.scaling_lhs = probes["1.5"].m_c
        rep.scaling_rhs = (1.5 / 1.2) ** theta * probes["1.2"].m_c + 1e-8
        if not rep.scaling_lhs <= rep.scaling_rhs:
            failures.append(f"mass scaling bound violated: {rep.scaling_lhs:.6e} > {rep.scaling_rhs:.6e}")
    return rep


# sampled inequalities -------------------------------------------------------

@dataclass
class InequalityReport:
    n_samples: int
    interpolation_violations: list
    holder_violations: list
    interpolation_worst: float
    holder_worst: float
    gn_high_constant: float
    gn_low_constant: float
    single_mode_error: float
    constant_field_ok: bool

    @property
    def ok(self) -> bool:
        return not (self.interpolation_violations or self.holder_violations) \
            and self.single_mode_error <= 1e-10 and self.constant_field_ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def holder_exponents(params: ProblemParams) -> tuple[float, float, float, float]:
    """``(q1, q2, theta1, theta2)`` with ``p = theta1 q1 + theta2 q2``."""
    N, p = params.dim, params.p
    q1 = 2 + 4 * params.s_low / N
    q2 = 2 + 4 * params.s_high / N
    t1 = (q2 - p) / (q2 - q1)
    return q1, q2, t1, 1.0 - t1


def _interp_gap(A, B, M, params):
    """``log(B) - log(A^t M^(1-t))`` with ``t = s_low/s_high`` (<= 0 in theory)."""
    t = params.s_low / params.s_high
    if B == 0.0:
        return -math.inf if A > 0 else 0.0
    return math.log(B) - (t * math.log(A) + (1 - t) * math.log(M))


def _gn_ratio(P, S, M, s, params):
    """``P / (S^(N(p-2)/(4s)) M^((p - N(p-2)/(2s))/2))``, or nan outside the range."""
    N, p = params.dim, params.p
    ks = N * (p - 2) / (4 * s)
    km = 0.5 * (p - N * (p - 2) / (2 * s))
    if km < 0 or S == 0.0:
        return float("nan")
    return P / (S ** ks * M ** km)


def sampled_inequality_suite(params: ProblemParams, grid: SpectralGrid, n_samples: int = 1000,
                             seed: int = 0, slack: float = 1e-10) -> InequalityReport:
    q1, q2, t1, t2 = holder_exponents(params)
    sh, sl = params.s_high, params.s_low
    interp_bad, holder_bad = [], []
    iw, hw = -math.inf, -math.inf
    c_hi, c_lo = 0.0, 0.0
    dV = grid.cell_volume
    for i in range(n_samples):
        u = random_field(grid, sample_rng(seed, i))
        uh = spectrum(u)
        A = grid.spectral_sum(grid.symbol(sh), uh)
        B = grid.spectral_sum(grid.symbol(sl), uh)
        a = np.abs(u.values)
        M = float(np.sum(a * a)) * dV
        gap = _interp_gap(A, B, M, params)
        iw = max(iw, gap)
        if gap > slack:
            interp_bad.append(i)
        P = float(np.sum(a ** params.p)) * dV
        I1 = float(np.sum(a ** q1)) * dV
        I2 = float(np.sum(a ** q2)) * dV
        hgap = math.log(P) - (t1 * math.log(I1) + t2 * math.log(I2))
        hw = max(hw, hgap)
        if hgap > slack:
            holder_bad.append(i)
        r_hi = _gn_ratio(P, A, M, sh, params)
        r_lo = _gn_ratio(P, B, M, sl, params)
        if not math.isnan(r_hi):
            c_hi = max(c_hi, r_hi)
        c_lo = float("nan") if math.isnan(r_lo) else max(c_lo, r_lo)
    return InequalityReport(
        n_samples=n_samples, interpolation_violations=interp_bad, holder_violations=holder_bad,
        interpolation_worst=iw, holder_worst=hw, gn_high_constant=c_hi, gn_low_constant=c_lo,
        single_mode_error=_single_mode_error(grid, params), constant_field_ok=_constant_ok(grid, params),
    )


def _single_mode_error(grid: SpectralGrid, params: ProblemParams) -> float:
    """Worst equality defect of the interpolation inequality over a few lattice modes."""
    x = grid.coords()[0]
    worst = 0.0
    for m in (1, 2, 5, grid.n // 8):
        k = math.pi * m / grid.half_length
        u = Field(grid, np.broadcast_to(np.cos(k * x), grid.shape))
        rep = functional_report(u, params)
        worst = max(worst, abs(_interp_gap(rep.kinetic_high, rep.kinetic_low, rep.mass, params)))
    return worst


def _constant_ok(grid: SpectralGrid, params: ProblemParams) -> bool:
    u = Field(grid, np.full(grid.shape, 0.7))
    rep = functional_report(u, params)
    q1, q2, t1, t2 = holder_exponents(params)
    a = np.abs(u.values)
    dV = grid.cell_volume
    I1 = float(np.sum(a ** q1)) * dV
    I2 = float(np.sum(a ** q2)) * dV
    holder_eq = abs(math.log(rep.potential) - (t1 * math.log(I1) + t2 * math.log(I2))) <= 1e-10
    return rep.kinetic_high == 0.0 and rep.kinetic_low == 0.0 and holder_eq


def nonvanishing_bound(params: ProblemParams, C_best: float, C_low: float) -> float:
    """Positive lower bound on the L^p integral of normalized minimizing iterates.

    From ``P <= C_low B^(N(p-2)/(4 s_low))`` (unit mass) and
    ``B^(exp_low/2) = W P`` one gets ``P^(1-e) >= C_low^-e / W``, with
    ``e = 2 s_low exp_low / (N (p-2))``; ``W`` is replaced by its limit
    ``1/C_best``.
    """
    e_low = gn_exponents(params).exp_low
    e = 2 * params.s_low * e_low / (params.dim * (params.p - 2))
    if not (e < 1 and C_low > 0 and math.isfinite(C_low)):
        return float("nan")
    return (C_best * C_low ** (-e)) ** (1.0 / (1.0 - e))


@dataclass(frozen=True)
class NonvanishingReport:
    min_lp: float
    bound: float
    C_low: float

    @property
    def ok(self) -> bool:
        return math.isnan(self.bound) or self.min_lp > 0.5 * self.bound


def nonvanishing_diagnostic(route_w: RouteWResult, params: ProblemParams,
                            C_low_samples: float) -> NonvanishingReport:
    """Compare the smallest normalized L^p integral along the descent with
    :func:`nonvanishing_bound`.

    The empirical constant is the larger of the random-sample value and the
    ratio attained by the final minimizer, so the chain is exact at the last
    iterate rather than relying on random fields to approach the supremum.
    """
    rep = functional_report(route_w.descent.w, params)
    own = _gn_ratio(rep.potential, rep.kinetic_low, rep.mass, params.s_low, params)
    C_low = max(C_low_samples, own) if not math.isnan(own) else float("nan")
    return NonvanishingReport(min_lp=min(route_w.descent.lp_history),
                              bound=nonvanishing_bound(params, route_w.C_best, C_low),
                              C_low=C_low)
