"""Ground-state solvers.

Route A solves the stationary equation at fixed ``omega`` by Petviashvili
iteration and root-finds ``omega`` so that the energy vanishes.  Route W
minimizes the Weinstein quotient directly and rescales the minimizer into
a solution.  ``mass_constrained_flow`` estimates the constrained energy
minimum ``m_c``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .functionals import FunctionalReport, functional_report, linear_symbol
from .params import ProblemParams, gn_exponents, threshold_coefficient
from .spectral import Field, SpectralGrid, boundary_decay, from_spectrum, gaussian, spectrum


class SolverError(RuntimeError):
    """Base class for solver failures."""


class ConvergenceError(SolverError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class DegenerateError(SolverError):
    """The iteration collapsed to the zero field."""


class BracketError(SolverError):
    def __init__(self, message, samples=()):
        super().__init__(message)
        self.samples = list(samples)


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 500
    residual_tol: float = 1e-10
    stabilization_gamma: float | None = None
    damping: float = 1.0
    seed: int = 0
    # periodic boxes cannot reach the algebraic-tail floor of 1e-10
    boundary_tol: float = 1e-2
    omega_bracket: tuple[float, float] = (1e-2, 1e2)
    bracket_points: int = 17
    energy_tol: float = 1e-8
    descent_tol: float = 1e-12
    descent_window: int = 20
    descent_max_iters: int = 3000
    box_match_tol: float = 1e-2
    box_match_passes: int = 4
    flow_max_iters: int = 3000
    flow_tol: float = 1e-12

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if not self.damping > 0:
            raise ValueError("damping must be positive")
        lo, hi = self.omega_bracket
        if not 0 < lo < hi:
            raise ValueError("omega_bracket must satisfy 0 < lo < hi")
        if self.bracket_points < 2:
            raise ValueError("bracket_points must be >= 2")
        object.__setattr__(self, "omega_bracket", (float(lo), float(hi)))

    def gamma_for(self, params: ProblemParams) -> float:
        if self.stabilization_gamma is not None:
            return float(self.stabilization_gamma)
        return (params.p - 1) / (params.p - 2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["omega_bracket"] = list(self.omega_bracket)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverOptions":
        d = dict(d)
        if "omega_bracket" in d:
            d["omega_bracket"] = tuple(d["omega_bracket"])
        return cls(**d)


@dataclass(frozen=True)
class GroundState:
    field: Field
    omega: float
    report: FunctionalReport
    residual: float
    boundary_decay: float
    params: ProblemParams
    iterations: int = 0
    stabilizer: float = 1.0
    flags: tuple[str, ...] = ()
    residual_tol: float = 1e-10

    @property
    def converged(self) -> bool:
        return self.residual <= self.residual_tol

    @property
    def reliable(self) -> bool:
        return self.converged and "box_too_small" not in self.flags

    @property
    def grid(self) -> SpectralGrid:
        return self.field.grid


def equation_residual(u: Field, params: ProblemParams, omega: float) -> float:
    """Dealiased relative residual of the stationary equation at ``omega``."""
    g = u.grid
    uh = spectrum(u)
    v = u.values
    nh = spectrum(Field._wrap(g, np.sign(v) * np.abs(v) ** (params.p - 1)))
    return _relative_residual(g, linear_symbol(g, params, omega), uh, nh)


def _relative_residual(g, sym, uh, nh) -> float:
    mask = g.dealias_mask
    r = g.spectral_sum(None, (sym * uh - nh) * mask)
    d = g.spectral_sum(None, nh * mask)
    if d == 0.0:
        return math.inf
    return math.sqrt(r / d)


def characteristic_width(params: ProblemParams, omega: float) -> float:
    """Length ``1/k`` where the linear symbol equals ``omega``."""
    f = lambda k: k ** (2 * params.s_high) + k ** (2 * params.s_low) - omega
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
    return 1.0 / brentq(f, 0.0, hi, xtol=1e-14)


def default_initial_guess(params: ProblemParams, grid: SpectralGrid, omega: float) -> Field:
    """Gaussian whose Nehari ratio ``(A + B + omega M)/P`` is one."""
    width = min(characteristic_width(params, omega), grid.half_length / 4.0)
    u = gaussian(grid, 1.0, width)
    r = functional_report(u, params)
    amp = ((r.kinetic_sum + omega * r.mass) / r.potential) ** (1.0 / (params.p - 2))
    return u * amp


def _ground_state(u: Field, params, omega, residual, opts, iterations=0, stabilizer=1.0,
                  extra_flags=()) -> GroundState:
    bd = boundary_decay(u)
    flags = list(extra_flags)
    if bd > opts.boundary_tol:
        flags.append("box_too_small")
    if residual > opts.residual_tol:
        flags.append("residual_above_tol")
    return GroundState(field=u, omega=float(omega), report=functional_report(u, params),
                       residual=float(residual), boundary_decay=bd, params=params,
                       iterations=iterations, stabilizer=float(stabilizer), flags=tuple(flags),
                       residual_tol=opts.residual_tol)


def petviashvili_solve(params: ProblemParams, omega: float, init: Field,
                       opts: SolverOptions | None = None) -> GroundState:
    """Solve ``L Q + omega Q = |Q|^(p-2) Q`` by stabilized fixed-point iteration."""
    opts = opts or SolverOptions()
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    g = init.grid
    sym = linear_symbol(g, params, omega)
    gam = opts.gamma_for(params)
    p = params.p
    u = np.array(init.values)
    if not np.any(u):
        raise DegenerateError("initial guess is the zero field")
    history = []
    for it in range(opts.max_iters + 1):
        uh = spectrum(Field._wrap(g, u))
        nl = np.sign(u) * np.abs(u) ** (p - 1)
        nh = spectrum(Field._wrap(g, nl))
        num = g.spectral_sum(sym, uh)
        den = g.spectral_sum(None, uh, nh)
        res = _relative_residual(g, sym, uh, nh)
        history.append(res)
        if not (math.isfinite(res) and math.isfinite(num) and math.isfinite(den)):
            raise ConvergenceError(f"non-finite iterate at step {it}", history)
        if den <= 0.0:
            raise DegenerateError(f"nonlinear pairing vanished at step {it}")
        stab = num / den
        if res <= opts.residual_tol:
            return _ground_state(Field._wrap(g, u), params, omega, res, opts, it, stab)
        if it == opts.max_iters:
            break
        u = from_spectrum(g, stab ** gam * nh / sym).values
        if math.sqrt(np.mean(u * u)) < 1e-14:
            raise DegenerateError(f"iterate collapsed to zero at step {it + 1}")
    raise ConvergenceError(
        f"no convergence in {opts.max_iters} iterations (last residual {history[-1]:.3e})", history)


# Route W -------------------------------------------------------------------

@dataclass
class DescentResult:
    w: Field
    W_min: float
    iterations: int
    history: list = field(default_factory=list)
    lp_history: list = field(default_factory=list)
    width_ratio: float = 0.0

    def __iter__(self):
        return iter((self.w, self.W_min))


class _WeinsteinProblem:
    """Norms, gradient and preconditioner of ``log W`` on a fixed grid."""

    def __init__(self, params: ProblemParams, grid: SpectralGrid):
        self.params = params
        self.grid = grid
        self.e = gn_exponents(params)
        self.Lh = grid.symbol(params.s_high)
        self.Ll = grid.symbol(params.s_low)
        self.dV = grid.cell_volume

    def norms(self, v):
        g = self.grid
        vh = spectrum(Field._wrap(g, v))
        A = g.spectral_sum(self.Lh, vh)
        B = g.spectral_sum(self.Ll, vh)
        M = float(np.sum(v * v)) * self.dV
        P = float(np.sum(np.abs(v) ** self.params.p)) * self.dV
        return vh, A, B, M, P

    def logw(self, A, B, M, P):
        e = self.e
        return 0.5 * e.exp_high * math.log(A) + 0.5 * e.exp_low * math.log(B) \
            + 0.5 * e.exp_mass * math.log(M) - math.log(P)

    def normalize(self, v, A, M):
        """Amplitude and box factor taking the samples to unit ``A`` and ``M``."""
        N = self.grid.dim
        tau = (M / A) ** (1.0 / (2 * self.params.s_high))
        amp = math.sqrt(tau ** N / M)
        return amp, tau


def weinstein_descent(params: ProblemParams, init: Field, opts: SolverOptions | None = None,
                      ) -> DescentResult:
    """Minimize the Weinstein quotient from ``init``.

    Scale invariance makes the quotient flat along dilations, which on a
    periodic box lets plain descent drift toward box-filling fields.  The
    iteration therefore fixes the width ratio ``log(A/M)`` of ``init``
    (a dilation gauge) and descends with a spectral preconditioner,
    projected onto that constraint, with Armijo backtracking.  The
    returned minimizer is normalized to unit high seminorm and unit mass
    by an amplitude change and an exact change of box length.
    """
    opts = opts or SolverOptions()
    g = init.grid
    prob = _WeinsteinProblem(params, g)
    e = prob.e
    dV = g.cell_volume
    v = np.array(init.values)
    vh, A, B, M, P = prob.norms(v)
    if P == 0.0:
        raise DegenerateError("initial guess is the zero field")
    if A <= 0.0 or B <= 0.0:
        raise DegenerateError("initial guess has vanishing seminorms")
    v = v / math.sqrt(M)
    vh, A, B, M, P = prob.norms(v)
    log_kappa = math.log(A / M)
    f = prob.logw(A, B, M, P)
    hist = [math.exp(f)]
    amp, tau = prob.normalize(v, A, M)
    lp_hist = [amp ** params.p * tau ** (-g.dim) * P]
    ip = lambda a, b: float(np.sum(a * b)) * dV
    p = params.p
    for it in range(1, opts.descent_max_iters + 1):
        T = e.exp_high * prob.Lh / A + e.exp_low * prob.Ll / B + e.exp_mass / M
        nl = np.sign(v) * np.abs(v) ** (p - 1)
        grad = from_spectrum(g, (e.exp_high * prob.Lh / A + e.exp_low * prob.Ll / B) * vh).values \
            + e.exp_mass * v / M - p * nl / P
        cgrad = from_spectrum(g, 2.0 * prob.Lh / A * vh).values - 2.0 * v / M
        d = from_spectrum(g, spectrum(Field._wrap(g, grad)) / T).values
        q = from_spectrum(g, spectrum(Field._wrap(g, cgrad)) / T).values
        d = d - ip(cgrad, d) / ip(cgrad, q) * q
        slope = ip(grad, d)
        if slope <= 0.0:
            break
        step = opts.damping
        accepted = False
        while step > 1e-12:
            vn = v - step * d
            ok = True
            for _ in range(4):
                vnh, An, Bn, Mn, Pn = prob.norms(vn)
                if An <= 0 or Bn <= 0 or Pn <= 0:
                    ok = False
                    break
                r = math.log(An / Mn) - log_kappa
                if abs(r) < 1e-15:
                    break
                cg = from_spectrum(g, 2.0 * prob.Lh / An * vnh).values - 2.0 * vn / Mn
                vn = vn - r / ip(cg, q) * q
            if ok:
                vn = vn / math.sqrt(Mn)
                vnh, An, Bn, Mn, Pn = prob.norms(vn)
                fn = prob.logw(An, Bn, Mn, Pn)
                if fn <= f - 1e-4 * step * slope:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        v, vh, A, B, M, P, f = vn, vnh, An, Bn, Mn, Pn, fn
        hist.append(math.exp(f))
        amp, tau = prob.normalize(v, A, M)
        lp_hist.append(amp ** p * tau ** (-g.dim) * P)
        k = opts.descent_window
        if len(hist) > k and (hist[-k - 1] - hist[-1]) <= opts.descent_tol * hist[-1]:
            return _descent_result(prob, v, A, M, hist, lp_hist, it, log_kappa)
    # a stalled line search right after a negligible decrease is the rounding floor
    if len(hist) > 1 and (hist[-2] - hist[-1]) <= opts.descent_tol * hist[-1]:
        return _descent_result(prob, v, A, M, hist, lp_hist, len(hist) - 1, log_kappa)
    raise ConvergenceError(
        f"Weinstein descent did not settle in {opts.descent_max_iters} iterations", hist)


def _descent_result(prob, v, A, M, hist, lp_hist, iters, log_kappa) -> DescentResult:
    amp, tau = prob.normalize(v, A, M)
    w = Field._wrap(prob.grid.rescaled(tau), amp * v)
    return DescentResult(w=w, W_min=hist[-1], iterations=iters, history=hist,
                         lp_history=lp_hist, width_ratio=math.exp(log_kappa))


def rescale_to_solution(w: Field, params: ProblemParams, opts: SolverOptions | None = None
                        ) -> GroundState:
    """Build ``Q = lam * w(mu x)`` with zero energy and the optimizer ratios.

    ``mu`` fixes the ratio of the two seminorms, ``lam`` the ratio of the
    high seminorm to the L^p integral, and ``omega`` then follows from the
    Nehari relation.  The dilation is an exact change of box length.
    """
    opts = opts or SolverOptions()
    e = gn_exponents(params)
    r = functional_report(w, params)
    A, B, M, P = r.kinetic_high, r.kinetic_low, r.mass, r.potential
    p, sh = params.p, params.s_high
    mu = ((e.exp_high * B) / (e.exp_low * A)) ** (1.0 / (2 * params.sigma))
    lam = (p * mu ** (2 * sh) * A / (e.exp_high * P)) ** (1.0 / (p - 2))
    omega = (p - 2) / p * lam ** (p - 2) * P / M
    Q = Field._wrap(w.grid.rescaled(mu), lam * w.values)
    res = equation_residual(Q, params, omega)
    return _ground_state(Q, params, omega, res, opts)


@dataclass
class RouteWResult:
    descent: DescentResult
    ground: GroundState
    passes: int
    target_half_length: float

    @property
    def W_min(self) -> float:
        return self.descent.W_min

    @property
    def C_best(self) -> float:
        return 1.0 / self.descent.W_min

    @property
    def c0(self) -> float:
        return self.ground.report.mass

    @property
    def box_ratio(self) -> float:
        return self.ground.grid.half_length / self.target_half_length


def route_w_search(params: ProblemParams, grid: SpectralGrid, opts: SolverOptions | None = None
                   ) -> RouteWResult:
    """Weinstein descent plus rescaling, with the dilation gauge tuned so the
    rescaled solution lives on a box of (nearly) the same size as ``grid``."""
    opts = opts or SolverOptions()
    width = grid.half_length / 8.0
    best = None
    for k in range(1, opts.box_match_passes + 1):
        try:
            d = weinstein_descent(params, gaussian(grid, 1.0, width), opts)
        except ConvergenceError:
            if best is None:
                raise
            break
        Q = rescale_to_solution(d.w, params, opts)
        ratio = Q.grid.half_length / grid.half_length
        best = RouteWResult(descent=d, ground=Q, passes=k, target_half_length=grid.half_length)
        if abs(ratio - 1.0) <= opts.box_match_tol:
            return best
        width *= ratio
    flagged = replace(best.ground, flags=best.ground.flags + ("box_mismatch",))
    return replace(best, ground=flagged)


# Route A -------------------------------------------------------------------

@dataclass
class CriticalMassResult:
    c0: float
    ground: GroundState
    samples: list
    route_w: RouteWResult | None = None

    def __iter__(self):
        return iter((self.c0, self.ground))

    @property
    def c0_routeW(self) -> float:
        return self.route_w.c0 if self.route_w is not None else float("nan")


def _energy_ratio(gs: GroundState) -> float:
    return gs.report.energy / gs.report.kinetic_sum


def critical_mass_search(params: ProblemParams, grid: SpectralGrid,
                         opts: SolverOptions | None = None, *, route_w: bool = True
                         ) -> CriticalMassResult:
    """Find ``omega*`` with ``J(Q_omega*) = 0`` and return ``c0 = mass(Q_omega*)``.

    ``J(Q_omega)`` is sampled on a geometric grid; on a finite box the
    smallest frequencies give box-filling solutions with spurious negative
    energy, so the physical root is the sign change from positive to
    negative at the largest ``omega``.  It is then refined with Brent's
    method, each evaluation a cold-started Petviashvili solve.
    """
    opts = opts or SolverOptions()
    cache: dict[float, GroundState] = {}

    def solve(om: float) -> GroundState:
        if om not in cache:
            cache[om] = petviashvili_solve(params, om, default_initial_guess(params, grid, om), opts)
        return cache[om]

    lo, hi = opts.omega_bracket
    omegas = np.geomspace(lo, hi, opts.bracket_points)
    samples = []
    for om in omegas:
        try:
            val = _energy_ratio(solve(float(om)))
        except SolverError:
            val = float("nan")
        samples.append((float(om), val))
    root_bracket = None
    for (o1, g1), (o2, g2) in zip(samples[:-1], samples[1:]):
        if g1 > 0 and g2 < 0:
            root_bracket = (o1, o2)
    if root_bracket is None:
        raise BracketError("J(Q_omega) has no positive-to-negative sign change on "
                           f"[{lo:g}, {hi:g}]", samples)
    f = lambda om: _energy_ratio(solve(float(om)))
    om_star = brentq(f, *root_bracket, xtol=1e-14, rtol=1e-14, maxiter=200)
    gs = solve(float(om_star))
    if abs(gs.report.energy) > opts.energy_tol * gs.report.kinetic_sum:
        gs = replace(gs, flags=gs.flags + ("energy_above_tol",))
    rw = route_w_search(params, grid, opts) if route_w else None
    return CriticalMassResult(c0=gs.report.mass, ground=gs, samples=samples, route_w=rw)


# mass-constrained flow ------------------------------------------------------

@dataclass
class FlowResult:
    u: Field
    m_c: float
    iterations: int
    energies: list = field(default_factory=list)
    margins: list = field(default_factory=list)
    kinetic_scale: float = 0.0
    status: str = "converged"

    def __iter__(self):
        return iter((self.u, self.m_c))


def mass_constrained_flow(params: ProblemParams, c: float, init: Field,
                          opts: SolverOptions | None = None, *, shift: float | None = None
                          ) -> FlowResult:
    """Preconditioned projected-gradient descent of the energy on ``mass = c``.

    The search direction is ``(L + shift)^-1`` applied to the energy
    gradient, projected to keep the L2 pairing with ``u`` zero; each trial
    point is renormalized to mass ``c`` and accepted by Armijo backtracking.
    ``shift`` defaults to the running multiplier estimate
    ``(int|u|^p - A - B)/c`` (floored at 1e-3).

    A trial point whose boundary layer exceeds ``opts.boundary_tol`` ends the
    flow with status ``"vanishing"``: the iterate is spreading to the box
    scale, where the periodic problem no longer models the whole space.
    Records the energy and the relative threshold margin
    ``(LHS - K P)/(K P)`` of every accepted iterate.
    """
    from .functionals import threshold_inequality_holds

    opts = opts or SolverOptions()
    if not c > 0:
        raise ValueError(f"mass must be positive, got {c}")
    g = init.grid
    p = params.p
    dV = g.cell_volume
    sym = linear_symbol(g, params)
    ip = lambda a, b: float(np.sum(a * b)) * dV
    K = threshold_coefficient(params)

    def evaluate(v):
        vh = spectrum(Field._wrap(g, v))
        A = g.spectral_sum(g.symbol(params.s_high), vh)
        B = g.spectral_sum(g.symbol(params.s_low), vh)
        P = float(np.sum(np.abs(v) ** p)) * dV
        return vh, A, B, P, 0.5 * (A + B) - P / p

    def rel_margin(A, B, P):
        rep = FunctionalReport(0.5 * (A + B) - P / p, A, B, P, c, float("nan"))
        return threshold_inequality_holds(rep, params)[1] / (K * P)

    m0 = ip(init.values, init.values)
    if m0 == 0.0:
        raise DegenerateError("initial guess is the zero field")
    v = init.values * math.sqrt(c / m0)
    vh, A, B, P, J = evaluate(v)
    energies = [J]
    margins = [rel_margin(A, B, P)]
    scale = A + B
    status = "max_iters"
    it = 0
    for it in range(1, opts.flow_max_iters + 1):
        alpha = shift if shift is not None else max((P - A - B) / c, 1e-3)
        pre = 1.0 / (sym + alpha)
        grad = from_spectrum(g, sym * vh).values - np.sign(v) * np.abs(v) ** (p - 1)
        d = from_spectrum(g, pre * spectrum(Field._wrap(g, grad))).values
        pu = from_spectrum(g, pre * vh).values
        d = d - ip(v, d) / ip(v, pu) * pu
        slope = ip(grad, d)
        if not slope > 1e-300:
            status = "stationary"
            break
        step = opts.damping
        accepted = False
        while step > 1e-12:
            vn = v - step * d
            vn = vn * math.sqrt(c / ip(vn, vn))
            vnh, An, Bn, Pn, Jn = evaluate(vn)
            if not math.isfinite(Jn):
                raise SolverError("energy became non-finite during the flow")
            if Jn <= J - 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            status = "stationary"
            break
        if boundary_decay(Field._wrap(g, vn)) > opts.boundary_tol:
            status = "vanishing"
            break
        dJ = J - Jn
        v, vh, A, B, P, J = vn, vnh, An, Bn, Pn, Jn
        energies.append(J)
        margins.append(rel_margin(A, B, P))
        scale = max(scale, A + B)
        if dJ <= opts.flow_tol * max(abs(J), A + B):
            status = "converged"
            break
    return FlowResult(u=Field._wrap(g, v), m_c=J, iterations=it, energies=energies,
                      margins=margins, kinetic_scale=scale, status=status)
