import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctmc_lumper.chain import ProbabilityVector, StateSpace, stationary_measure, validate_generator
from ctmc_lumper.coarse import CoarseGrainingMap, effective_generator, push_forward
from ctmc_lumper.dynamics import TimeGrid, Trajectory, solve_coarse_grained, solve_constant
from ctmc_lumper.errors import GridMismatch, LengthMismatch, MissingFit, NonPositiveAlpha, NonPositiveMarginal
from ctmc_lumper.bounds import (
    compute_g,
    compute_g_series,
    entropy_identity_residual,
    eps_bound_report,
    fast_block_alpha,
    g_l2_cumulative,
    g_l2_norm,
    general_bound_report,
    level_set_alpha,
    long_time_envelope,
)
from ctmc_lumper.multiscale import averaged_model, build_l_eps, scenario, slow_projection

from oracles import random_generator


def _run(name, eps, grid, n=10):
    spec, mu0 = scenario(name, n)
    L = build_l_eps(spec, eps)
    xi = slow_projection(n)
    rho = stationary_measure(L)
    N = effective_generator(L, rho, xi)
    full, cg = solve_coarse_grained(L, xi, mu0, grid)
    eff = solve_constant(N, push_forward(mu0, xi), grid)
    return spec, L, xi, rho, N, full, cg, eff


def test_g_examples():
    sp = StateSpace.range(2)
    L = validate_generator([[-1, 1], [1, -1]])
    xi = CoarseGrainingMap.identity(sp)
    assert compute_g(L, xi, [0.6, 0.4], [0.5, 0.5]) == pytest.approx(0.4054651081081644, rel=1e-14)
    assert compute_g(L, xi, [0.3, 0.7], [0.3, 0.7]) == 0.0
    with pytest.raises(NonPositiveMarginal):
        compute_g(L, xi, [1.0, 0.0], [0.5, 0.5])
    with pytest.raises(GridMismatch):
        compute_g_series(L, xi, np.full((3, 2), 0.5), np.full((2, 2), 0.5))


def test_g_is_eps_independent_for_multiscale_family(rng):
    spec, _ = scenario("S2", 10)
    xi = slow_projection(10)
    cg = rng.dirichlet(np.ones(2), size=20)
    eta = rng.dirichlet(np.ones(2), size=20)
    a = compute_g_series(build_l_eps(spec, 1.0), xi, cg, eta)
    b = compute_g_series(build_l_eps(spec, 1e-3), xi, cg, eta)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@given(st.integers(0, 10_000))
def test_g_working_bound(seed):
    rng = np.random.default_rng(seed)
    n = 6
    L = validate_generator(random_generator(rng, n, density=0.5))
    xi = CoarseGrainingMap.from_indices(L.space, StateSpace.range(3), [0, 0, 1, 1, 2, 2])
    cg, eta = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    norm = np.abs(L.rates).sum(axis=1).max()
    assert compute_g(L, xi, cg, eta) <= 2 * norm * np.max(np.abs(np.log(cg / eta))) + 1e-12


def test_g_l2_norm_examples():
    grid = TimeGrid.uniform(4.0, n=40)
    assert g_l2_norm(np.zeros(41), grid) == 0.0
    assert g_l2_norm(np.ones(41), grid) == pytest.approx(2.0, rel=1e-14)
    G = g_l2_cumulative(np.linspace(0, 1, 41), grid)
    assert np.all(np.diff(G) >= 0)
    with pytest.raises(LengthMismatch):
        g_l2_norm(np.ones(3), grid)


def test_g_l2_matches_quadrature():
    grid = TimeGrid.refined(5.0, n_uniform=500)
    _, L, xi, rho, N, full, cg, eff = _run("S1", 0.1, grid)
    rep = general_bound_report(L, xi, full, cg, eff, rho, 1.0)
    t = grid.points
    q = np.sum(0.5 * (rep.g_values[1:] ** 2 + rep.g_values[:-1] ** 2) * np.diff(t))
    assert rep.g_l2 == pytest.approx(math.sqrt(q), rel=1e-10)


def test_g_l2_plateaus():
    T = 20.0
    _, L, xi, rho, N, full, cg, eff = _run("S1", 0.1, TimeGrid.refined(2 * T))
    g = compute_g_series(L, xi, cg.values, eff.values)
    G = g_l2_cumulative(g, cg.grid)
    k = int(np.searchsorted(cg.times, T))
    assert G[-1] / G[k] - 1 < 0.01


def test_general_report_stationary_everything():
    spec, _ = scenario("S1", 4)
    L = build_l_eps(spec, 0.5)
    xi = slow_projection(4)
    rho = stationary_measure(L)
    N = effective_generator(L, rho, xi)
    grid = TimeGrid.uniform(2.0, n=20)
    full, cg = solve_coarse_grained(L, xi, rho, grid)
    eff = solve_constant(N, push_forward(rho, xi), grid)
    rep = general_bound_report(L, xi, full, cg, eff, rho, 1.0)
    assert np.max(rep.lhs) <= 1e-14 and np.max(rep.rhs) <= 1e-6
    assert rep.verdict


def test_general_report_s1_and_alpha_scaling():
    grid = TimeGrid.refined(20.0)
    _, L, xi, rho, N, full, cg, eff = _run("S1", 0.1, grid)
    alpha = level_set_alpha(L, xi, rho).alpha
    rep = general_bound_report(L, xi, full, cg, eff, rho, alpha)
    assert rep.verdict
    assert rep.sup_lhs == pytest.approx(4.3490060818e-4, rel=1e-6)
    rep2 = general_bound_report(L, xi, full, cg, eff, rho, 2 * alpha)
    H0 = rep.lhs[0]
    assert np.allclose(rep2.rhs - H0, (rep.rhs - H0) / math.sqrt(2), rtol=1e-12, atol=1e-18)
    with pytest.raises(NonPositiveAlpha):
        general_bound_report(L, xi, full, cg, eff, rho, 0.0)


def test_grid_mismatch():
    _, L, xi, rho, N, full, cg, eff = _run("S1", 1.0, TimeGrid.uniform(1.0, n=10))
    other = solve_constant(N, eff.values[0], TimeGrid.uniform(1.0, n=11))
    with pytest.raises(GridMismatch):
        general_bound_report(L, xi, full, cg, other, rho, 1.0)


def test_eps_report_matched_data_structure():
    grid = TimeGrid.refined(20.0)
    spec, L, xi, rho, N, full, cg, eff = _run("S1", 1e-2, grid)
    aq = fast_block_alpha(spec).alpha
    rep = eps_bound_report(L, xi, full, cg, eff, rho, aq, 1e-2)
    assert rep.lhs[0] == 0.0 and rep.mode == "eps"
    assert rep.verdict
    assert rep.c_empirical == pytest.approx(2 * math.sqrt(2) * rep.g_l2 / math.sqrt(20.0), rel=1e-14)
    assert rep.alpha_effective == pytest.approx(aq / 1e-2)


def test_eps_report_delta_mode_s3():
    grid = TimeGrid.refined(20.0)
    spec, L, xi, rho, N, full, cg, eff = _run("S3", 1e-1, grid)
    aq = fast_block_alpha(spec).alpha
    rep = eps_bound_report(L, xi, full, cg, eff, rho, aq, 1e-1, delta=0.1)
    assert rep.mode == "delta" and rep.t_start >= 0.1
    k = int(np.searchsorted(grid.points, 0.1 - 1e-15))
    assert rep.t_start == grid.points[k]
    assert np.all(np.isnan(rep.rhs[:k]))
    assert rep.verdict
    d = rep.to_dict()
    assert d["rhs"][0] is None and d["verdict"] is True


def test_envelope_s1_eps_one():
    grid = TimeGrid.refined(20.0)
    spec, L, xi, rho, N, full, cg, eff = _run("S1", 1.0, grid)
    rep = eps_bound_report(L, xi, full, cg, eff, rho, fast_block_alpha(spec).alpha, 1.0)
    env = long_time_envelope(rep, full, cg, eff, rho, xi)
    assert env.c == min(env.rates)
    assert np.all(env.verdict)
    assert env.crossover_time is not None


def test_envelope_needs_decay():
    spec, _ = scenario("S1", 4)
    L = build_l_eps(spec, 0.5)
    xi = slow_projection(4)
    rho = stationary_measure(L)
    N = effective_generator(L, rho, xi)
    grid = TimeGrid.uniform(2.0, n=20)
    full, cg = solve_coarse_grained(L, xi, rho, grid)
    eff = solve_constant(N, push_forward(rho, xi), grid)
    rep = general_bound_report(L, xi, full, cg, eff, rho, 1.0)
    with pytest.raises(MissingFit):
        long_time_envelope(rep, full, cg, eff, rho, xi)


def test_identity_residual_trivial_case():
    N = validate_generator([[-1, 1], [2, -2]])
    grid = TimeGrid.uniform(2.0, n=200)
    eta = solve_constant(N, [0.9, 0.1], grid)
    assert entropy_identity_residual(N, CoarseGrainingMap.identity(N.space), None, eta, eta, N) <= 1e-12


def test_identity_residual_s1_order_two():
    res = []
    for h in (1e-2, 5e-3):
        grid = TimeGrid.uniform(20.0, h=h)
        _, L, xi, rho, N, full, cg, eff = _run("S1", 1.0, grid)
        res.append(entropy_identity_residual(L, xi, full, cg, eff, N))
    assert res[0] <= 1e-4
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.15)


def test_level_set_alpha_notes():
    spec, _ = scenario("S1", 10)
    L = build_l_eps(spec, 0.1)
    out = level_set_alpha(L, slow_projection(10), stationary_measure(L))
    assert any("closest generator" in s for s in out.notes)
    # closest generator of the restriction is Q_y / eps
    assert out.alpha == pytest.approx(fast_block_alpha(spec).alpha / 0.1, rel=1e-6)
    single = CoarseGrainingMap.identity(StateSpace.range(3))
    with pytest.raises(NonPositiveAlpha):
        level_set_alpha(validate_generator(random_generator(np.random.default_rng(0), 3)), single,
                        np.full(3, 1 / 3))


def test_uniform_versus_pointwise_decay():
    grid = TimeGrid.refined(20.0)
    argmax, sups, ends = [], [], []
    eps = [1.0, 1e-1, 1e-2, 1e-3]
    for e in eps:
        spec, L, xi, rho, N, full, cg, eff = _run("S1", e, grid)
        rep = general_bound_report(L, xi, full, cg, eff, rho, 1.0)
        argmax.append(rep.t_argmax)
        sups.append(rep.sup_lhs)
        ends.append(rep.lhs[-1])
    assert all(a >= b for a, b in zip(argmax, argmax[1:]))
    slope = lambda y: np.polyfit(np.log(eps), np.log(y), 1)[0]
    assert slope(ends) > slope(sups)
