import math

import numpy as np
import pytest

import _pipeline as pipe
from mixedgn.functionals import functional_report, weinstein
from mixedgn.params import (ProblemParams, beta_target, critical_mass_from_constant,
                            gn_exponents)
from mixedgn.solvers import (BracketError, ConvergenceError, DegenerateError, SolverOptions,
                             critical_mass_search, default_initial_guess, mass_constrained_flow,
                             petviashvili_solve, rescale_to_solution, weinstein_descent)
from mixedgn.spectral import Field, SpectralGrid, gaussian, mass, seminorm_sq

R1P5 = pipe.make_params("R1p5")
GRID = pipe.make_grid("R1p5")


@pytest.fixture(scope="module")
def q1():
    gs, _ = pipe.solve_at_one("R1p5")
    return gs


@pytest.fixture(scope="module")
def found():
    return pipe.search("R1p5")


# -- Petviashvili ------------------------------------------------------------------

def test_petviashvili_converges_quickly(q1):
    assert q1.residual < 1e-10
    assert q1.iterations <= 200
    assert q1.converged and q1.omega == 1.0


def _dense_newton(params, grid, omega, u0, iters=40):
    n, L = grid.n, grid.half_length
    k = np.pi * np.fft.fftfreq(n, 1.0 / n) / L
    sym = np.abs(k) ** (2 * params.s_high) + np.abs(k) ** (2 * params.s_low) + omega
    F = np.fft.fft(np.eye(n), axis=0)
    Lmat = np.real(np.fft.ifft(sym[:, None] * F, axis=0))
    p = params.p
    u = np.array(u0, dtype=float)
    for _ in range(iters):
        r = Lmat @ u - np.abs(u) ** (p - 2) * u
        if np.max(np.abs(r)) < 1e-13 * np.max(np.abs(u)):
            break
        jac = Lmat - np.diag((p - 1) * np.abs(u) ** (p - 2))
        du = np.linalg.lstsq(jac, -r, rcond=1e-12)[0]
        u = u + du
    return u


def test_petviashvili_matches_dense_newton(q1):
    u0 = default_initial_guess(R1P5, GRID, 1.0).values
    newton = _dense_newton(R1P5, GRID, 1.0, u0)
    assert np.max(np.abs(newton - q1.field.values)) <= 1e-6


def test_ground_state_is_positive(q1):
    v = q1.field.values
    assert v.min() >= -1e-10 * v.max()


def test_converged_state_is_a_fixed_point(q1):
    again = petviashvili_solve(R1P5, 1.0, q1.field, SolverOptions())
    assert again.residual <= 1e-10
    assert again.stabilizer == pytest.approx(1.0, abs=1e-8)
    diff = np.linalg.norm(again.field.values - q1.field.values)
    assert diff <= 1e-10 * np.linalg.norm(q1.field.values)


def test_nonconvergence_carries_history():
    init = default_initial_guess(R1P5, GRID, 1.0)
    with pytest.raises(ConvergenceError) as info:
        petviashvili_solve(R1P5, 1.0, init, SolverOptions(max_iters=2))
    assert len(info.value.history) == 3
    assert all(r > 1e-10 for r in info.value.history)


def test_zero_init_is_degenerate():
    with pytest.raises(DegenerateError):
        petviashvili_solve(R1P5, 1.0, Field(GRID, np.zeros(GRID.size)))


@pytest.mark.parametrize("omega", [0.0, -1.0])
def test_nonpositive_omega_rejected(omega):
    with pytest.raises(ValueError):
        petviashvili_solve(R1P5, omega, gaussian(GRID, 1.0, 1.0))


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(residual_tol=0.0)
    with pytest.raises(ValueError):
        SolverOptions(max_iters=0)
    opts = SolverOptions(max_iters=17, omega_bracket=(0.1, 3.0))
    assert SolverOptions.from_dict(opts.to_dict()) == opts
    assert opts.gamma_for(R1P5) == pytest.approx(4.0 / 3.0)


# -- Weinstein descent ----------------------------------------------------------------

@pytest.fixture(scope="module")
def descent():
    return weinstein_descent(R1P5, gaussian(GRID, 1.0, 4.0), SolverOptions())


def test_descent_normalization(descent):
    w = descent.w
    assert seminorm_sq(w, 1.0) == pytest.approx(1.0, abs=1e-10)
    assert mass(w) == pytest.approx(1.0, abs=1e-10)
    assert weinstein(w, R1P5) == pytest.approx(descent.W_min, rel=1e-10)


def test_descent_is_monotone(descent):
    h = np.array(descent.history)
    assert np.all(np.diff(h) <= 1e-14 * h[:-1])


def test_descent_ignores_amplitude_prescale(descent):
    other = weinstein_descent(R1P5, gaussian(GRID, 37.0, 4.0), SolverOptions())
    assert other.W_min == pytest.approx(descent.W_min, rel=1e-9)
    assert other.w.grid.half_length == pytest.approx(descent.w.grid.half_length, rel=1e-8)
    np.testing.assert_allclose(other.w.values, descent.w.values, atol=1e-8 * descent.w.values.max())


def test_descent_zero_init_is_degenerate():
    with pytest.raises(DegenerateError):
        weinstein_descent(R1P5, Field(GRID, np.zeros(GRID.size)))


def test_route_w_matches_route_a_quotient(found):
    assert found.route_w.W_min == pytest.approx(found.ground.report.weinstein, rel=1e-6)


def test_rescaled_minimizer_solves_equation(found):
    q = found.route_w.ground
    rep = q.report
    assert q.omega > 0
    assert rep.kinetic_low / rep.kinetic_high == pytest.approx(beta_target(R1P5), rel=1e-10)
    assert abs(rep.energy) <= 1e-10 * rep.kinetic_sum


def test_rescale_of_descent_output(descent):
    q = rescale_to_solution(descent.w, R1P5)
    rep = functional_report(q.field, R1P5)
    assert q.omega > 0
    assert rep.kinetic_low / rep.kinetic_high == pytest.approx(beta_target(R1P5), rel=1e-4)


def test_beta_target_three_dimensional():
    assert beta_target(ProblemParams(3, 0.5, 1.0, 3.0)) == pytest.approx(1.0, rel=1e-15)


# -- critical mass ---------------------------------------------------------------------

def test_search_energy_vanishes(found):
    rep = found.ground.report
    assert abs(rep.energy) <= 1e-8 * rep.kinetic_sum
    assert "energy_above_tol" not in found.ground.flags
    assert found.c0 == rep.mass


def test_search_against_closed_form(found):
    want = critical_mass_from_constant(found.route_w.C_best, R1P5)
    assert found.c0 == pytest.approx(want, rel=1e-4)


def test_route_agreement(found):
    assert found.c0_routeW == pytest.approx(found.c0, rel=1e-4)


def test_search_refinement_in_resolution(found):
    fine = critical_mass_search(R1P5, SpectralGrid(1, 2 * GRID.n, GRID.half_length),
                                SolverOptions(), route_w=False)
    assert fine.c0 == pytest.approx(found.c0, rel=1e-4)


def test_multiplier_lower_bound(found):
    g = found.ground
    p = R1P5.p
    assert g.omega >= (p - 2) / (p * found.c0) * g.report.potential * (1 - 1e-6)


def test_bracket_failure_reports_samples():
    with pytest.raises(BracketError) as info:
        critical_mass_search(pipe.make_params("R3"), pipe.make_grid("R3"), route_w=False)
    samples = info.value.samples
    assert len(samples) == SolverOptions().bracket_points
    assert all(len(s) == 2 for s in samples)


def test_search_without_sign_change_on_narrow_bracket():
    opts = SolverOptions(omega_bracket=(5.0, 10.0), bracket_points=3)
    with pytest.raises(BracketError):
        critical_mass_search(R1P5, GRID, opts, route_w=False)


# -- mass-constrained flow -----------------------------------------------------------------

def test_flow_negative_above_critical_mass(found):
    r = mass_constrained_flow(R1P5, 1.2 * found.c0, found.ground.field, SolverOptions())
    assert r.m_c < 0
    assert mass(r.u) == pytest.approx(1.2 * found.c0, rel=1e-12)


def test_flow_at_critical_mass_stays_at_zero(found):
    r = mass_constrained_flow(R1P5, found.c0, found.ground.field, SolverOptions())
    assert r.m_c >= -1e-8 * r.kinetic_scale
    assert abs(r.energies[0]) <= 1e-8 * r.kinetic_scale


def test_flow_energy_is_monotone(found):
    r = mass_constrained_flow(R1P5, 1.5 * found.c0, found.ground.field, SolverOptions())
    e = np.array(r.energies)
    assert np.all(np.diff(e) <= 0)


def test_flow_monotone_scaling(found):
    c0 = found.c0
    lo = mass_constrained_flow(R1P5, 1.2 * c0, found.ground.field, SolverOptions())
    hi = mass_constrained_flow(R1P5, 1.5 * c0, found.ground.field, SolverOptions())
    N, p = R1P5.dim, R1P5.p
    theta = 2 * (p - 2) / (4 - N * (p - 2)) + 1
    assert hi.m_c <= (1.5 / 1.2) ** theta * lo.m_c + 1e-8


def test_flow_rejects_bad_mass():
    with pytest.raises(ValueError):
        mass_constrained_flow(R1P5, 0.0, gaussian(GRID, 1.0, 1.0))
    with pytest.raises(DegenerateError):
        mass_constrained_flow(R1P5, 1.0, Field(GRID, np.zeros(GRID.size)))


def test_gn_exponents_feed_route_w(found):
    e = gn_exponents(R1P5)
    assert e.exp_high + e.exp_low == pytest.approx(2.0)
    assert found.route_w.descent.width_ratio > 0
