import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctmc_lumper.chain import ProbabilityVector, spectral_gap, stationary_measure, validate_generator
from ctmc_lumper.coarse import CoarseGrainingMap, push_forward
from ctmc_lumper.dynamics import (
    TimeGrid,
    Trajectory,
    asymptotic_tv_rate,
    fit_short_time_lower_bound,
    solve_cg_ode,
    solve_coarse_grained,
    solve_constant,
    tv_decay_rate,
    tv_series,
)
from ctmc_lumper.errors import DimensionMismatch, InsufficientDecay, InsufficientPoints, ValidationError
from ctmc_lumper.multiscale import build_l_eps, scenario, slow_projection

from oracles import ode_solution, pointwise_expm, random_generator, two_state_solution


def test_time_grid_validation():
    with pytest.raises(ValidationError):
        TimeGrid([0.1, 0.2])
    with pytest.raises(ValidationError):
        TimeGrid([0.0, 0.2, 0.2])
    with pytest.raises(ValidationError):
        TimeGrid.uniform(-1.0, n=3)
    with pytest.raises(ValidationError):
        TimeGrid.uniform(1.0)
    g = TimeGrid.uniform(1.0, h=0.3)
    assert g.T == 1.0 and g.size == 5


def test_refined_grid_shape():
    g = TimeGrid.refined(20.0)
    h = g.steps()
    assert g.points[1] == pytest.approx(2e-5)
    assert g.T == pytest.approx(20.0, rel=1e-15)
    assert h.max() <= 20.0 / 2000 * (1 + 1e-9)
    assert np.all(np.diff(h[:20]) > 0)


def test_trajectory_csv_round_trip(tmp_path):
    L = validate_generator([[-1, 1], [2, -2]])
    traj = solve_constant(L, [1.0, 0.0], TimeGrid.uniform(1.0, n=10))
    p = tmp_path / "t.csv"
    traj.to_csv(p)
    back = Trajectory.from_csv(p)
    assert np.array_equal(back.values, traj.values) and np.array_equal(back.times, traj.times)
    buf = io.StringIO()
    traj.to_csv(buf)
    assert buf.getvalue() == p.read_text()


def test_solve_constant_stationary_start():
    L = validate_generator(random_generator(np.random.default_rng(4), 5))
    rho = stationary_measure(L)
    traj = solve_constant(L, rho, TimeGrid.refined(10.0, n_uniform=200))
    assert np.abs(traj.values - rho.mass).sum(axis=1).max() <= 1e-12


def test_solve_constant_two_state_closed_form():
    grid = TimeGrid.refined(5.0, n_uniform=500)
    traj = solve_constant(validate_generator([[-1, 1], [2, -2]]), [1.0, 0.0], grid)
    oracle = two_state_solution(1.0, 2.0, 1.0, grid.points)
    assert np.max(np.abs(traj.values - oracle)) <= 1e-13


def test_solve_constant_matches_adaptive_oracle_on_multiscale():
    spec, mu0 = scenario("S1", 10)
    L = build_l_eps(spec, 1.0)
    grid = TimeGrid.uniform(20.0, n=400)
    traj = solve_constant(L, mu0, grid)
    oracle = ode_solution(L.rates, mu0.mass, grid.points)
    assert np.abs(traj.values - oracle).sum(axis=1).max() <= 1e-8


def test_dimension_mismatch():
    L = validate_generator([[-1, 1], [2, -2]])
    with pytest.raises(DimensionMismatch):
        solve_constant(L, [1 / 3] * 3, TimeGrid.uniform(1.0, n=2))


@given(st.integers(0, 10_000))
def test_mass_positivity_and_conservation(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    A = random_generator(rng, n, density=0.3)
    L = validate_generator(A)
    mu0 = np.zeros(n)
    mu0[int(rng.integers(n))] = 1.0
    traj = solve_constant(L, mu0, TimeGrid.refined(2.0, first=1e-3, n_uniform=50))
    assert np.all(traj.values[1:] > 0)
    assert np.max(np.abs(traj.values.sum(axis=1) - 1)) <= 1e-12
    assert np.max(np.abs(traj.values - pointwise_expm(A, mu0, traj.times))) <= 1e-10


@given(st.integers(0, 10_000))
def test_full_support_short_time_bound(seed):
    rng = np.random.default_rng(seed)
    n = 4
    A = random_generator(rng, n)
    mu0 = rng.dirichlet(np.ones(n)) * 0.9 + 0.1 / n
    c = (A - np.diag(np.diag(A))).sum(axis=1).max()
    grid = TimeGrid.uniform(0.05, n=20)
    traj = solve_constant(validate_generator(A), mu0, grid)
    assert np.all(traj.values.min(axis=1) >= mu0.min() - c * grid.points - 1e-14)


def test_coarse_grained_identity_and_stationary():
    L = validate_generator(random_generator(np.random.default_rng(6), 4))
    xi = CoarseGrainingMap.identity(L.space)
    full, cg = solve_coarse_grained(L, xi, [0.1, 0.2, 0.3, 0.4], TimeGrid.uniform(1.0, n=20))
    assert np.array_equal(full.values, cg.values)
    rho = stationary_measure(L)
    xi2 = CoarseGrainingMap.from_indices(L.space, ProbabilityVector.uniform(
        validate_generator([[-1, 1], [1, -1]]).space).space, [0, 0, 1, 1])
    _, cg = solve_coarse_grained(L, xi2, rho, TimeGrid.uniform(1.0, n=20))
    assert np.abs(cg.values - push_forward(rho, xi2).mass).max() <= 1e-12


def test_cg_ode_identity_reduces_to_constant_solver():
    A = random_generator(np.random.default_rng(8), 4)
    L = validate_generator(A)
    grid = TimeGrid.uniform(2.0, n=40)
    mu0 = [0.4, 0.3, 0.2, 0.1]
    ode = solve_cg_ode(L, CoarseGrainingMap.identity(L.space), mu0, grid)
    assert np.abs(ode.values - solve_constant(L, mu0, grid).values).sum(axis=1).max() <= 1e-7


@pytest.mark.parametrize("name", ["S1", "S2"])
def test_cg_ode_agrees_with_projection(name):
    spec, mu0 = scenario(name, 10)
    L = build_l_eps(spec, 0.1)
    xi = slow_projection(10)
    grid = TimeGrid.refined(5.0, n_uniform=500)
    _, cg = solve_coarse_grained(L, xi, mu0, grid)
    ode = solve_cg_ode(L, xi, mu0, grid)
    assert np.abs(ode.values - cg.values).sum(axis=1).max() <= 1e-6


def test_cg_ode_with_constant_coarse_generator_matches_expm():
    # strongly lumpable chain: every state of block y leaves to block y' at the same total rate,
    # so the coarse generator does not depend on the conditionals
    A = np.array([[0.0, 2.0, 0.3, 0.2],
                  [1.0, 0.0, 0.1, 0.4],
                  [0.6, 0.1, 0.0, 3.0],
                  [0.2, 0.5, 0.5, 0.0]])
    np.fill_diagonal(A, -A.sum(axis=1))
    L = validate_generator(A)
    xi = CoarseGrainingMap.from_indices(L.space, slow_projection(1).coarse, [0, 0, 1, 1])
    grid = TimeGrid.uniform(5.0, n=100)
    ode = solve_cg_ode(L, xi, [0.1, 0.6, 0.3, 0.0], grid)
    Lhat = np.array([[-0.5, 0.5], [0.7, -0.7]])
    oracle = pointwise_expm(Lhat, np.array([0.7, 0.3]), grid.points)
    assert np.abs(ode.values - oracle).sum(axis=1).max() <= 1e-7


@pytest.mark.parametrize("rates,expected", [([[-1, 1], [1, -1]], 2.0), ([[-1, 1], [2, -2]], 3.0)])
def test_tv_decay_rate_two_state(rates, expected):
    L = validate_generator(rates)
    traj = solve_constant(L, [1.0, 0.0], TimeGrid.uniform(8.0, n=800))
    assert tv_decay_rate(traj, stationary_measure(L)) == pytest.approx(expected, rel=0.01)


def test_tv_decay_rate_errors():
    L = validate_generator([[-1, 1], [1, -1]])
    traj = solve_constant(L, [0.5, 0.5], TimeGrid.uniform(1.0, n=10))
    with pytest.raises(InsufficientDecay):
        tv_decay_rate(traj, [0.5, 0.5])
    with pytest.raises(DimensionMismatch):
        tv_series(traj, [1.0])


def test_tv_rate_matches_gap_on_random_generator():
    A = random_generator(np.random.default_rng(2024), 5, ring=False)
    L = validate_generator(A)
    gap = spectral_gap(L)
    traj = solve_constant(L, np.eye(5)[0], TimeGrid.uniform(25.0 / gap, n=2000))
    assert tv_decay_rate(traj, stationary_measure(L)) == pytest.approx(gap, rel=0.05)


def test_asymptotic_rate_resolves_close_modes():
    # the two slowest rates differ by about 6%, which a windowed trajectory fit cannot separate
    rng = np.random.default_rng(0)
    for _ in range(5):
        A = random_generator(rng, 5, density=0.5)
    L = validate_generator(A)
    gap = spectral_gap(L)
    traj = solve_constant(L, np.eye(5)[0], TimeGrid.uniform(25.0 / gap, n=2000))
    assert abs(tv_decay_rate(traj, stationary_measure(L)) / gap - 1) > 0.05
    assert asymptotic_tv_rate(L, np.eye(5)[0]) == pytest.approx(gap, rel=0.01)


@given(st.integers(0, 10_000))
def test_asymptotic_rate_two_state(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0.1, 3, 2)
    L = validate_generator([[-a, a], [b, -b]])
    assert asymptotic_tv_rate(L, [1.0, 0.0]) == pytest.approx(a + b, rel=1e-9)


def test_asymptotic_rate_errors():
    L = validate_generator([[-1, 1], [1, -1]])
    with pytest.raises(InsufficientDecay):
        asymptotic_tv_rate(L, [0.5, 0.5])
    with pytest.raises(InsufficientDecay):
        asymptotic_tv_rate(validate_generator([[0.0]]), [1.0])


def test_short_time_fit_dirac_start():
    A = random_generator(np.random.default_rng(3), 5, density=0.35)
    L = validate_generator(A)
    traj = solve_constant(L, np.eye(5)[0], TimeGrid.refined(0.1, first=1e-4, ratio=1.05, n_uniform=100))
    fit = fit_short_time_lower_bound(traj)
    assert fit.validated and fit.C > 0 and fit.N >= 1
    assert fit.fit_points + fit.validation_points == np.count_nonzero(traj.times > 0)


def test_short_time_fit_needs_points():
    L = validate_generator([[-1, 1], [1, -1]])
    traj = solve_constant(L, [1.0, 0.0], TimeGrid.uniform(1.0, n=5))
    with pytest.raises(InsufficientPoints):
        fit_short_time_lower_bound(traj)
