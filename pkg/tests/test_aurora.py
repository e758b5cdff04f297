import numpy as np
import pytest

from aurora_nmrd import (
    CorrelationGrid,
    DegenerateSolutionError,
    InvalidInputError,
    LinearBlock,
    NmrdProfile,
    QuadBounds,
    QuadParams,
    SolverConfig,
    aurora_solve,
    bp_update,
    build_kernel,
    canonical_order,
    eval_quad,
    gs_solve,
    init_quad_params,
    objective,
)

from conftest import random_psi


# randomized instances can put the quadrupolar amplitude in a flat valley
# where the inner solver crawls; cap its work so the tests stay quick
FAST = dict(max_gs=300, max_inner_bcnls=30)


def random_instance(rng, n=40, m=24, noise=0.02):
    """Small synthetic problem: sparse distribution, offset, in-window peaks."""
    grid = CorrelationGrid.logspace(1e-2, 1e2, n)
    omega = 2 * np.pi * np.geomspace(0.05, 20, m)
    bounds = QuadBounds.from_mhz(1.5, 3.5)
    kern = build_kernel(grid, omega)
    f = np.zeros(n)
    f[rng.choice(n, 3, replace=False)] = rng.uniform(0.5, 5, 3)
    psi = random_psi(rng, bounds)
    psi[0] = rng.uniform(1, 30)
    psi[3] = rng.uniform(0.3, 3)
    y = kern.k @ f + rng.uniform(1, 5) + eval_quad(psi, omega)
    y = y * (1 + noise * rng.uniform(-1, 1, m))
    return y, kern, bounds, grid


def test_gs_stationary_at_exact_solution():
    rng = np.random.default_rng(0)
    grid = CorrelationGrid.logspace(1e-2, 1e2, 40)
    omega = 2 * np.pi * np.geomspace(0.05, 20, 24)
    bounds = QuadBounds.from_mhz(1.5, 3.5)
    kern = build_kernel(grid, omega)
    x1 = np.append(rng.uniform(size=40), 2.0)
    psi = random_psi(rng, bounds)
    y = kern.k_ext @ x1 + eval_quad(psi, omega)
    state, trace = gs_solve(y, kern, bounds, x1, psi, 0.0, SolverConfig(eta=0.0))
    assert state.g_value == 0.0
    assert state.converged and state.iteration == 1
    assert np.array_equal(state.x1.as_vector(), x1)
    assert np.array_equal(state.psi.as_vector(), psi)


def test_gs_descent_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        y, kern, bounds, _ = random_instance(rng)
        x0 = np.zeros(kern.k_ext.shape[1])
        state, trace = gs_solve(y, kern, bounds, x0, init_quad_params(bounds),
                                10 ** rng.uniform(-6, -1), SolverConfig(**FAST))
        g = np.array(trace.half_steps)
        assert np.all(np.diff(g) <= 1e-12 * np.abs(g[1:]))
        assert bounds.contains(state.psi)
        assert np.all(state.x1.as_vector() >= 0)


def test_gs_descent_with_anderson_mixing():
    rng = np.random.default_rng(5)
    cfg = SolverConfig(anderson_depth=3, **FAST)
    for _ in range(5):
        y, kern, bounds, _ = random_instance(rng)
        state, trace = gs_solve(y, kern, bounds, np.zeros(kern.k_ext.shape[1]),
                                init_quad_params(bounds), 1e-4, cfg)
        g = np.array(trace.half_steps)
        assert np.all(np.diff(g) <= 1e-12 * np.abs(g[1:]))
        assert bounds.contains(state.psi)


def test_gs_warm_start_from_own_output(clean_fit, clean_profile, bounds, kernel):
    lam = clean_fit.lambda_star
    again, trace = gs_solve(clean_profile.rates, kernel, bounds, clean_fit.x1,
                            clean_fit.psi, lam, SolverConfig())
    g0 = objective(clean_fit.x1, clean_fit.psi, clean_profile.rates, kernel, lam, 1e-10)
    assert again.converged
    assert again.iteration <= 2
    assert again.g_value <= g0
    assert again.g_value == pytest.approx(g0, rel=1e-5)


def test_gs_criticality_at_exit():
    rng = np.random.default_rng(4)
    y, kern, bounds, _ = random_instance(rng)
    state, _ = gs_solve(y, kern, bounds, np.zeros(kern.k_ext.shape[1]),
                        init_quad_params(bounds), 1e-3, SolverConfig(tol_gs=1e-12))
    scale = float(y @ y)
    assert state.l1_kkt <= 1e-6 * scale
    assert state.bcnls_pg <= 1e-6 * scale


def test_gs_rejects_infeasible_start():
    rng = np.random.default_rng(1)
    y, kern, bounds, _ = random_instance(rng)
    x0 = np.zeros(kern.k_ext.shape[1])
    with pytest.raises(InvalidInputError):
        gs_solve(y, kern, bounds, x0, np.zeros(6), 1e-3)
    with pytest.raises(InvalidInputError):
        gs_solve(y, kern, bounds, x0 - 1, init_quad_params(bounds), 1e-3)
    with pytest.raises(InvalidInputError):
        gs_solve(y, kern, bounds, x0, init_quad_params(bounds), -1.0)


def test_bp_update_hand_example():
    grid = CorrelationGrid(np.array([1.0]))
    kern = build_kernel(grid, [1.0, 2.0])
    # k = (1.3, tau/(1+4) + 4/(1+16)); x1 = (1, 2) -> K_e x1 = k + 2
    x1 = np.array([1.0, 2.0])
    psi = np.array([0.0, 0.5, 0.5, 1.0, 1.0, 2.0])  # zero amplitude
    model = kern.k[:, 0] + 2.0
    y = model + np.array([0.3, -0.4])
    lam = bp_update(y, kern, x1, psi, eta=0.1)
    assert lam == pytest.approx((0.09 + 0.16 + 0.1 * 5.0) / 3.0, rel=1e-14)


def test_bp_update_degenerate():
    kern = build_kernel(CorrelationGrid(np.array([1.0])), [1.0, 2.0])
    with pytest.raises(DegenerateSolutionError):
        bp_update(np.ones(2), kern, np.zeros(2), np.zeros(6), 1e-10)


def test_init_quad_params_window():
    b = QuadBounds.from_mhz(2.0, 3.0)
    p = init_quad_params(b)
    assert (p.c_hn, p.sin2_theta, p.sin2_phi, p.tau_q) == (0.18, 0.5, 0.5, 1.0)
    assert p.nu_minus == pytest.approx(2.25)
    assert p.nu_plus == pytest.approx(2.75)
    assert b.contains(p)


def test_canonical_order_preserves_model(window_bounds, rng):
    omega = np.linspace(1, 30, 50)
    for v in random_psi(rng, window_bounds, 30):
        p = QuadParams.from_vector(v)
        c = canonical_order(p)
        assert c.omega_minus <= c.omega_plus
        assert np.allclose(eval_quad(c, omega), eval_quad(p, omega), rtol=1e-13)
        assert canonical_order(c) == c


def test_aurora_clean_fit_recovers_reference(clean_fit, scenario):
    ref = scenario.reference_values
    rep = clean_fit.report
    assert clean_fit.converged
    assert rep["nu_minus"] == pytest.approx(ref["nu_minus"], rel=1e-4)
    assert rep["nu_plus"] == pytest.approx(ref["nu_plus"], rel=1e-4)
    assert rep["r0"] == pytest.approx(ref["r0"], rel=1e-3)
    assert rep["tau_q"] == pytest.approx(ref["tau_q"], rel=1e-3)
    h = clean_fit.history
    assert len(h.lambdas) == clean_fit.outer_iterations + 1
    assert h.lambdas[-2] == clean_fit.lambda_star


def test_aurora_balancing_fixed_point(clean_fit, clean_profile, kernel):
    lam_new = bp_update(clean_profile.rates, kernel, clean_fit.x1, clean_fit.psi, 1e-10)
    assert abs(lam_new - clean_fit.lambda_star) <= 1e-2 * clean_fit.lambda_star


def test_aurora_is_deterministic(scenario, clean_profile, bounds, kernel, clean_fit):
    again = aurora_solve(clean_profile, scenario.grid, bounds, SolverConfig(), kernel=kernel)
    assert np.array_equal(again.x1.as_vector(), clean_fit.x1.as_vector())
    assert np.array_equal(again.psi.as_vector(), clean_fit.psi.as_vector())
    assert again.history.lambdas == clean_fit.history.lambdas


def test_aurora_degenerate_profile_is_flagged():
    grid = CorrelationGrid.logspace(1e-2, 1e2, 40)
    prof = NmrdProfile.from_mhz(np.geomspace(0.05, 20, 24), np.zeros(24))
    res = aurora_solve(prof, grid, QuadBounds.from_mhz(1.5, 3.5))
    assert not res.converged
    assert "zero" in res.message
    assert np.all(res.x1.as_vector() == 0)


def test_aurora_max_outer_is_flagged(scenario, clean_profile, bounds, kernel):
    res = aurora_solve(clean_profile, scenario.grid, bounds, SolverConfig(max_outer=1),
                       kernel=kernel)
    assert not res.converged
    assert res.outer_iterations == 1
    assert "outer" in res.message


def test_aurora_accepts_initial_blocks(scenario, clean_profile, bounds, kernel, clean_fit):
    res = aurora_solve(clean_profile, scenario.grid, bounds,
                       SolverConfig(lambda0=clean_fit.lambda_star), kernel=kernel,
                       x1_init=clean_fit.x1, psi_init=clean_fit.psi)
    assert res.converged
    assert res.outer_iterations <= 2
    assert res.lambda_star == pytest.approx(clean_fit.lambda_star, rel=2e-2)


def test_solver_config_validation():
    with pytest.raises(InvalidInputError):
        SolverConfig(gamma=2.0)
    with pytest.raises(InvalidInputError):
        SolverConfig(lambda0=0.0)
    with pytest.raises(InvalidInputError):
        SolverConfig(max_gs=0)
    with pytest.raises(InvalidInputError):
        SolverConfig(tol_gs=-1.0)


def test_objective_matches_state(clean_fit, clean_profile, kernel):
    g = objective(clean_fit.x1, clean_fit.psi, clean_profile.rates, kernel,
                  clean_fit.lambda_star, 1e-10)
    assert g == pytest.approx(clean_fit.history.objectives[-1], rel=1e-10)
