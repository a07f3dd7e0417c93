import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

import _pipeline as pipe
from mixedgn.functionals import (FunctionalReport, dilation_scaling, energy, energy_gradient,
                                 functional_report, h_derivative, h_function, mass_scaled_report,
                                 mass_scaling, t_star, threshold_inequality_holds, threshold_lhs,
                                 weinstein)
from mixedgn.params import ParameterError, ProblemParams, gn_exponents
from mixedgn.spectral import (Field, SpectralGrid, dealias, inner, mass, power_nonlinearity,
                              random_field, resample)

R1P5 = ProblemParams(1, 0.5, 1.0, 5.0)
R2 = ProblemParams(3, 0.5, 1.0, 3.0)
R3 = ProblemParams(1, 0.3, 0.7, 3.5)
GRID1 = SpectralGrid(1, 512, 32.0)
GRID3 = SpectralGrid(3, 32, 12.0)


def field(grid, seed, amp=1.0):
    u = random_field(grid, np.random.default_rng(seed))
    return u * amp


# -- energy ------------------------------------------------------------------

def test_energy_of_zero_field():
    assert energy(Field(GRID1, np.zeros(GRID1.size)), R1P5) == 0.0


def _bumps(seed):
    rng = np.random.default_rng(seed)
    amps = rng.uniform(0.3, 1.5, 3)
    centers = rng.uniform(-4, 4, 3)
    widths = rng.uniform(0.7, 2.0, 3)
    return amps, centers, widths


def test_energy_gaussian_bumps_against_direct_evaluation():
    amps, centers, widths = _bumps(11)

    def u(x):
        return sum(a * math.exp(-((x - c) / w) ** 2) for a, c, w in zip(amps, centers, widths))

    def du(x):
        return sum(-2 * a * (x - c) / w ** 2 * math.exp(-((x - c) / w) ** 2)
                   for a, c, w in zip(amps, centers, widths))

    def uhat(xi):
        return sum(a * w * math.sqrt(math.pi) * np.exp(-(w * xi) ** 2 / 4) * np.exp(-1j * xi * c)
                   for a, c, w in zip(amps, centers, widths))

    p = R1P5.p
    A = integrate.quad(lambda x: du(x) ** 2, -30, 30, limit=400, epsabs=0, epsrel=1e-13)[0]
    P = integrate.quad(lambda x: abs(u(x)) ** p, -30, 30, limit=400, epsabs=0, epsrel=1e-13)[0]
    # box seminorm = lattice sum of the continuum transform, spacing pi/L
    L = GRID1.half_length
    k = math.pi * np.arange(-2000, 2001) / L
    B = float(np.sum(np.abs(k) * np.abs(uhat(k)) ** 2)) / (2 * L)
    want = 0.5 * A + 0.5 * B - P / p

    x = GRID1.axis()
    uf = Field(GRID1, np.array([u(t) for t in x]))
    rep = functional_report(uf, R1P5)
    assert rep.kinetic_high == pytest.approx(A, rel=1e-10)
    assert rep.kinetic_low == pytest.approx(B, rel=1e-10)
    assert rep.potential == pytest.approx(P, rel=1e-10)
    assert energy(uf, R1P5) == pytest.approx(want, rel=1e-8)


@pytest.mark.parametrize("params,grid", [(R1P5, GRID1), (R3, GRID1), (R2, GRID3)])
def test_energy_gradient_central_differences(params, grid):
    eps = 1e-5
    worst = 0.0
    for i in range(50):
        u = field(grid, [1, i], amp=1.5)
        v = field(grid, [2, i])
        fd = (energy(u + v * eps, params) - energy(u - v * eps, params)) / (2 * eps)
        an = inner(energy_gradient(u, params), v)
        worst = max(worst, abs(fd - an) / abs(an))
    assert worst < 1e-6


def test_energy_gradient_of_zero_field():
    z = Field(GRID1, np.zeros(GRID1.size))
    assert np.all(energy_gradient(z, R1P5).values == 0.0)


@given(st.integers(0, 2 ** 31), st.floats(0.01, 50.0))
def test_report_energy_identity(seed, amp):
    rep = functional_report(field(GRID1, seed, amp), R3)
    J = rep.kinetic_high / 2 + rep.kinetic_low / 2 - rep.potential / R3.p
    assert rep.energy == pytest.approx(J, rel=1e-12, abs=1e-12 * rep.kinetic_sum)
    assert rep.weinstein > 0


def test_report_json_has_exactly_the_six_keys():
    rep = functional_report(field(GRID1, 3), R1P5)
    d = json.loads(rep.to_json())
    assert set(d) == {"energy", "kinetic_high", "kinetic_low", "potential", "mass", "weinstein"}
    assert FunctionalReport.from_dict(d) == rep


# -- Weinstein quotient --------------------------------------------------------

def test_weinstein_zero_field_raises():
    with pytest.raises(ValueError):
        weinstein(Field(GRID1, np.zeros(GRID1.size)), R1P5)


@pytest.mark.parametrize("lam", [0.1, 3.0, 100.0])
@pytest.mark.parametrize("params,grid", [(R1P5, GRID1), (R3, GRID1), (R2, GRID3)])
def test_weinstein_amplitude_invariance(lam, params, grid):
    u = field(grid, 4)
    assert weinstein(u * lam, params) == pytest.approx(weinstein(u, params), rel=1e-10)


@pytest.mark.parametrize("t", [0.5, 2.0, 3.7])
@pytest.mark.parametrize("params,grid", [(R1P5, GRID1), (R3, GRID1), (R2, GRID3)])
def test_weinstein_dilation_invariance(t, params, grid):
    u = field(grid, 5)
    ut = dilation_scaling(u, t)
    assert mass(ut) == pytest.approx(mass(u), rel=1e-10)
    assert weinstein(ut, params) == pytest.approx(weinstein(u, params), rel=1e-10)


def _band_limited(grid, seed):
    return dealias(dealias(field(grid, seed)))


def test_weinstein_resample_invariance():
    u = _band_limited(GRID1, 6)
    v = resample(u, 2) * 2 ** (GRID1.dim / 2)
    assert weinstein(v, R1P5) == pytest.approx(weinstein(u, R1P5), rel=1e-8)


@pytest.mark.parametrize("params,grid", [(R1P5, GRID1), (R3, GRID1), (R2, SpectralGrid(3, 32, 12.0))])
def test_weinstein_resample_ratio_on_torus(params, grid):
    # u(2x) on the same box holds 2^N periodic copies: mass and L^p are kept and
    # each seminorm gains 2^(2s), so W grows by 2^(N(p-2)/2).  The field is kept
    # positive and narrow-band so |u|^p is still resolved at every other sample.
    u = field(grid, 7)
    uh = np.fft.fftn(u.values)
    m = np.fft.fftfreq(grid.n, 1.0 / grid.n)
    keep = np.abs(m) < grid.n // 16
    mask = np.ix_(*([keep] * grid.dim))
    low = np.zeros_like(uh)
    low[mask] = uh[mask]
    v = np.fft.ifftn(low).real
    u = Field(grid, v - v.min() + 0.5 * np.abs(v).max())
    ratio = weinstein(resample(u, 2), params) / weinstein(u, params)
    assert ratio == pytest.approx(2 ** (grid.dim * (params.p - 2) / 2), rel=1e-10)


# -- fiber map -----------------------------------------------------------------

def test_t_star_equals_one_when_bracket_is_one():
    p, s, N = R1P5.p, R1P5.s_low, R1P5.dim
    P = 2 * p * (1 - s) / (N * (p - 2) - 4 * s)
    rep = FunctionalReport(energy=0.0, kinetic_high=1.0, kinetic_low=0.7, potential=P, mass=1.0,
                           weinstein=1.0)
    assert t_star(rep, R1P5) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("params,grid", [(R1P5, GRID1), (R3, GRID1), (R2, GRID3)])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_h_is_minimal_at_t_star(params, grid, seed):
    u = field(grid, [8, seed], amp=2.0)
    ts = t_star(u, params)
    h0 = h_function(u, ts, params)
    assert h_function(u, ts * 1.1, params) > h0
    assert h_function(u, ts / 1.1, params) > h0
    assert h_derivative(u, ts, params) == pytest.approx(0.0, abs=1e-10 * abs(h_derivative(u, 2 * ts, params)))
    grid_t = ts * np.geomspace(0.01, 100, 2001)
    assert min(h_function(u, t, params) for t in grid_t) >= h0 - 1e-12 * abs(h0)


@pytest.mark.parametrize("params,grid", [(R1P5, GRID1), (R3, GRID1), (R2, GRID3)])
def test_h_derivative_sign_pattern(params, grid):
    u = field(grid, 9)
    ts = t_star(u, params)
    below = ts * np.geomspace(0.05, 0.95, 10)
    above = ts * np.geomspace(1.05, 20, 10)
    assert all(h_derivative(u, t, params) < 0 for t in below)
    assert all(h_derivative(u, t, params) > 0 for t in above)


@given(st.integers(0, 2 ** 31), st.floats(0.05, 20.0))
def test_h_derivative_changes_sign_once(seed, amp):
    for params in (R1P5, R3):
        u = field(GRID1, seed, amp)
        ts = t_star(u, params)
        d = np.array([h_derivative(u, t, params) for t in ts * np.geomspace(0.01, 100, 200)])
        assert np.count_nonzero(np.diff(np.sign(d)) != 0) == 1


def test_h_function_matches_dilated_energy():
    u = field(GRID1, 10, amp=2.0)
    for t in (0.5, 1.3, 4.0):
        direct = energy(dilation_scaling(u, t), R3) / t ** (2 * R3.s_low)
        assert h_function(u, t, R3) == pytest.approx(direct, rel=1e-10)


def test_fiber_map_rejects_nonpositive_t():
    u = field(GRID1, 0)
    for fn in (h_function, h_derivative):
        with pytest.raises(ValueError):
            fn(u, 0.0, R1P5)
    with pytest.raises(ValueError):
        dilation_scaling(u, -1.0)


# -- mass scaling ----------------------------------------------------------------

def test_mass_scaling_identity():
    u = field(GRID1, 12) * 1.7
    c = mass(u)
    v = mass_scaling(u, c, c, R1P5)
    assert np.array_equal(v.values, u.values) and v.grid == u.grid


@pytest.mark.parametrize("ratio", [0.5, 0.8, 1.2, 3.0])
@pytest.mark.parametrize("params,grid", [(R1P5, GRID1), (R2, GRID3)])
def test_mass_scaling_transforms(ratio, params, grid):
    u = field(grid, 13) * 2.0
    c = mass(u)
    v = mass_scaling(u, c, ratio * c, params)
    got = functional_report(v, params)
    want = mass_scaled_report(functional_report(u, params), c, ratio * c, params)
    assert got.mass == pytest.approx(ratio * c, rel=1e-6)
    for key in ("kinetic_high", "kinetic_low", "potential", "mass"):
        assert getattr(got, key) == pytest.approx(getattr(want, key), rel=1e-6)


def test_mass_scaling_preconditions():
    u = field(GRID1, 14)
    with pytest.raises(ValueError):
        mass_scaling(u, 2.0, 1.0, R1P5)
    with pytest.raises(ParameterError):
        mass_scaling(u, 1.0, 2.0, R3)


# -- quantities at the computed optimizer -------------------------------------------

@pytest.fixture(scope="module")
def optimizer():
    return pipe.search("R1p5")


def test_energy_vanishes_at_optimizer(optimizer):
    rep = optimizer.ground.report
    assert abs(rep.energy) <= 1e-6 * rep.kinetic_sum


def test_gradient_balances_multiplier(optimizer):
    g = optimizer.ground
    r = energy_gradient(g.field, R1P5) + g.field * g.omega
    rel = math.sqrt(mass(dealias(r)) / mass(dealias(power_nonlinearity(g.field, R1P5.p))))
    assert rel <= g.residual_tol


def test_random_fields_do_not_beat_optimizer(optimizer):
    wq = optimizer.ground.report.weinstein
    worst = min(weinstein(field(GRID1, [15, i], amp=1.0), R1P5) for i in range(1000))
    assert worst >= wq * (1 - 1e-6)


def test_gn_inequality_with_computed_constant(optimizer):
    C = optimizer.route_w.C_best
    e = gn_exponents(R1P5)
    for i in range(1000):
        rep = functional_report(field(GRID1, [16, i]), R1P5)
        bound = (rep.kinetic_high ** (e.exp_high / 2) * rep.kinetic_low ** (e.exp_low / 2)
                 * rep.mass ** (e.exp_mass / 2))
        assert rep.potential <= (1 + 1e-6) * C * bound


@pytest.mark.parametrize("factor,holds", [(1.2, True), (0.8, False)])
def test_threshold_inequality_off_critical_mass(optimizer, factor, holds):
    Q = optimizer.ground.field
    c = mass(Q)
    ok, margin = threshold_inequality_holds(mass_scaling(Q, c, factor * c, R1P5), R1P5)
    assert ok is holds
    assert (margin < 0) if holds else (margin >= 0)


def test_threshold_margin_vanishes_at_optimizer(optimizer):
    rep = optimizer.ground.report
    _, margin = threshold_inequality_holds(rep, R1P5)
    assert abs(margin) <= 1e-6 * threshold_lhs(rep, R1P5)
