"""Relative-entropy error certificates between coarse-grained and effective dynamics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import kernels
from .chain import Generator, ProbabilityVector
from .coarse import CoarseGrainingMap, cg_generator_matrix, disintegrate, push_forward, restrict
from .dynamics import TimeGrid, Trajectory, tv_decay_rate, tv_series
from .errors import (
    GridMismatch,
    InsufficientDecay,
    LengthMismatch,
    MissingFit,
    NonPositiveAlpha,
    NonPositiveMarginal,
)
from .functionals import centered_derivative, estimate_lsi_constant, fisher_information, relative_entropy

VERDICT_ATOL = 1e-15


def _marg_array(p):
    return p.mass if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)


def compute_g_series(L: Generator, xi: CoarseGrainingMap, cg_values, eff_values) -> np.ndarray:
    """``g_t`` at every row of the ``(K, |coarse|)`` marginal arrays."""
    cg = np.atleast_2d(np.asarray(cg_values, dtype=float))
    eta = np.atleast_2d(np.asarray(eff_values, dtype=float))
    if cg.shape != eta.shape or cg.shape[1] != xi.coarse.size:
        raise GridMismatch(f"marginal arrays of shapes {cg.shape} and {eta.shape} do not match the map")
    if cg.min() <= 0 or eta.min() <= 0:
        raise NonPositiveMarginal("g_t needs strictly positive coarse-grained and effective marginals")
    return np.asarray(kernels.g_series(np.ascontiguousarray(L.rates), xi.index,
                                       np.ascontiguousarray(cg), np.ascontiguousarray(eta)))


def compute_g(L: Generator, xi: CoarseGrainingMap, cg_t, eff_t) -> float:
    """``max_x sum_x' L(x, x') [phi(xi x) - phi(xi x')]`` with ``phi = log(cg / eff)``."""
    return float(compute_g_series(L, xi, _marg_array(cg_t)[None, :], _marg_array(eff_t)[None, :])[0])


def _grid_points(grid):
    return grid.points if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)


def g_l2_cumulative(g_series, grid) -> np.ndarray:
    """``||g||_{L^2(0, t_k)}`` for every grid point (trapezoid rule)."""
    t = _grid_points(grid)
    g = np.asarray(g_series, dtype=float)
    if g.shape != t.shape:
        raise LengthMismatch(f"{g.size} values for {t.size} grid points")
    return np.sqrt(cumulative_trapezoid(g * g, t, initial=0.0))


def g_l2_norm(g_series, grid) -> float:
    return float(g_l2_cumulative(g_series, grid)[-1])


def _json_list(a):
    return [None if (x is None or not np.isfinite(x)) else float(x) for x in a]


@dataclass(frozen=True, eq=False)
class Envelope:
    C1: np.ndarray
    C2: float
    c: float
    rates: tuple
    crossover_time: float | None
    crossover_on_grid: bool
    verdict: np.ndarray

    def to_dict(self) -> dict:
        return {"C1": _json_list(self.C1), "C2": self.C2, "c": self.c, "rates": list(self.rates),
                "crossover_time": self.crossover_time, "crossover_on_grid": self.crossover_on_grid,
                "verdict": bool(np.all(self.verdict))}


@dataclass(frozen=True, eq=False)
class BoundReport:
    """Observed error ``lhs = H(cg_t | eff_t)`` against its certified upper bound.

    Points before ``t_start`` (delta-offset mode) carry no bound; their
    ``rhs`` entries are NaN and they are excluded from the verdict.
    """

    grid: TimeGrid
    lhs: np.ndarray
    rhs_general: np.ndarray
    g_values: np.ndarray
    g_l2: float
    alpha_used: float
    verdict_points: np.ndarray
    rhs_eps: np.ndarray | None = None
    envelope: Envelope | None = None
    eps: float | None = None
    mode: str = "general"
    t_start: float = 0.0
    c_empirical: float | None = None
    notes: tuple = field(default_factory=tuple)

    @property
    def rhs(self) -> np.ndarray:
        return self.rhs_eps if self.rhs_eps is not None else self.rhs_general

    @property
    def verdict(self) -> bool:
        return bool(np.all(self.verdict_points))

    @property
    def alpha_effective(self) -> float:
        """Constant entering ``sqrt(2/alpha)``; ``alpha_used / eps`` in the eps modes."""
        return self.alpha_used / self.eps if self.mode in ("eps", "delta") else self.alpha_used

    @property
    def sup_lhs(self) -> float:
        return float(np.max(self.lhs))

    @property
    def t_argmax(self) -> float:
        return float(self.grid.points[int(np.argmax(self.lhs))])

    def to_dict(self) -> dict:
        d = {"eps": self.eps, "mode": self.mode, "grid": self.grid.points.tolist(),
             "lhs": _json_list(self.lhs), "rhs": _json_list(self.rhs),
             "rhs_general": _json_list(self.rhs_general), "g": _json_list(self.g_values),
             "g_l2": self.g_l2, "alpha": self.alpha_used, "sup_lhs": self.sup_lhs,
             "t_argmax": self.t_argmax, "t_start": self.t_start,
             "verdict": self.verdict, "notes": list(self.notes)}
        if self.c_empirical is not None:
            d["c_empirical"] = self.c_empirical
        if self.envelope is not None:
            d["envelope"] = self.envelope.to_dict()
        return d


def _check_grids(*trajs):
    base = trajs[0].times
    for tr in trajs[1:]:
        if tr.times.shape != base.shape or np.any(tr.times != base):
            raise GridMismatch("trajectories are not on the same time grid")


def _entropy_series(a, b):
    return np.array([relative_entropy(x, y) for x, y in zip(a, b)])


def _verdict(lhs, rhs, start):
    ok = np.ones(lhs.shape, dtype=bool)
    ok[start:] = lhs[start:] <= rhs[start:] + VERDICT_ATOL
    return ok


def general_bound_report(L: Generator, xi: CoarseGrainingMap, mu_traj: Trajectory,
                         cg_traj: Trajectory, eff_traj: Trajectory, rho, alpha: float,
                         eps: float | None = None, notes=()) -> BoundReport:
    """``H(cg_0|eff_0) + 2 ||g||_{L^2(0,t)} sqrt(2/alpha) sqrt(H(mu_0|rho) - H(mu_t|rho))``."""
    if not alpha > 0:
        raise NonPositiveAlpha(f"alpha must be positive, got {alpha!r}")
    _check_grids(mu_traj, cg_traj, eff_traj)
    r = _marg_array(rho)
    lhs = _entropy_series(cg_traj.values, eff_traj.values)
    g = compute_g_series(L, xi, cg_traj.values, eff_traj.values)
    G = g_l2_cumulative(g, cg_traj.grid)
    Hmu = _entropy_series(mu_traj.values, np.broadcast_to(r, mu_traj.values.shape))
    dH = np.clip(Hmu[0] - Hmu, 0.0, None)
    rhs = lhs[0] + 2.0 * G * math.sqrt(2.0 / alpha) * np.sqrt(dH)
    return BoundReport(cg_traj.grid, lhs, rhs, g, float(G[-1]), float(alpha),
                       _verdict(lhs, rhs, 0), eps=eps, notes=tuple(notes))


def eps_bound_report(L: Generator, xi: CoarseGrainingMap, mu_traj: Trajectory,
                     cg_traj: Trajectory, eff_traj: Trajectory, rho, alpha_q: float,
                     eps: float, delta: float | None = None, notes=()) -> BoundReport:
    """Bound with the scale-separation factor made explicit.

    ``alpha_q`` is the log-Sobolev constant of the fast blocks ``Q_y``
    (without the ``1/eps`` factor).  The bound reads
    ``H_0 + c sqrt(eps T / alpha_q) sqrt(H(mu_0|rho) - H(mu_t|rho))`` with
    ``c = 2 sqrt(2) ||g||_{L^2(0,T)} / sqrt(T)``.  With ``delta`` set, the
    certificate starts at the first grid point ``t >= delta``: ``H_0`` is
    replaced by the error there and ``g`` is integrated from there on.
    """
    if not alpha_q > 0:
        raise NonPositiveAlpha(f"alpha must be positive, got {alpha_q!r}")
    base = general_bound_report(L, xi, mu_traj, cg_traj, eff_traj, rho, alpha_q / eps, eps=eps)
    t = base.grid.points
    T = float(t[-1])
    r = _marg_array(rho)
    Hmu = _entropy_series(mu_traj.values, np.broadcast_to(r, mu_traj.values.shape))
    dH = np.clip(Hmu[0] - Hmu, 0.0, None)
    notes = list(notes)
    if delta is None:
        start = 0
        g_T = base.g_l2
        rhs_general = base.rhs_general
        mode = "eps"
    else:
        start = int(np.searchsorted(t, delta - 1e-15))
        if start >= t.size:
            raise GridMismatch(f"delta={delta!r} lies beyond the time horizon")
        G = np.full(t.size, np.nan)
        G[start:] = g_l2_cumulative(base.g_values[start:], t[start:])
        g_T = float(G[-1])
        rhs_general = np.full(t.size, np.nan)
        rhs_general[start:] = (base.lhs[start] + 2.0 * G[start:] * math.sqrt(2.0 * eps / alpha_q)
                               * np.sqrt(dH[start:]))
        mode = "delta"
        notes.append(f"certificate starts at t={t[start]!r} (first grid point >= delta={delta!r})")
    c = 2.0 * math.sqrt(2.0) * g_T / math.sqrt(T)
    rhs_eps = np.full(t.size, np.nan)
    rhs_eps[start:] = base.lhs[start] + c * math.sqrt(eps * T / alpha_q) * np.sqrt(dH[start:])
    verdict = _verdict(base.lhs, rhs_eps, start) & _verdict(base.lhs, rhs_general, start)
    return BoundReport(base.grid, base.lhs, rhs_general, base.g_values, g_T, float(alpha_q),
                       verdict, rhs_eps=rhs_eps, eps=eps, mode=mode, t_start=float(t[start]),
                       c_empirical=c, notes=tuple(notes))


def _tv_prefactor(tv, t, rate):
    return float(np.max(tv * np.exp(rate * t)))


def long_time_envelope(report: BoundReport, mu_traj: Trajectory, cg_traj: Trajectory,
                       eff_traj: Trajectory, rho, xi: CoarseGrainingMap) -> Envelope:
    """``TV(cg_t, eff_t) <= min(C1(t), C2 exp(-c t))``.

    ``C1(t) = sqrt(2 H_0 + 2 ||g|| sqrt(8/alpha) sqrt(H(mu_0|rho) - H(mu_t|rho)))``
    with ``||g||`` over the whole horizon.  ``c`` is the smaller of the fitted
    decay rates of ``cg`` and ``eff`` towards the marginal of ``rho`` and
    ``C2`` the sum of the smallest prefactors dominating both decays on the grid.
    """
    _check_grids(mu_traj, cg_traj, eff_traj)
    t = report.grid.points
    target = push_forward(rho, xi)
    try:
        rates = (tv_decay_rate(cg_traj, target), tv_decay_rate(eff_traj, target))
    except InsufficientDecay as exc:
        raise MissingFit(f"exponential fit unavailable: {exc}") from exc
    c = min(rates)
    C2 = (_tv_prefactor(tv_series(cg_traj, target), t, c)
          + _tv_prefactor(tv_series(eff_traj, target), t, c))
    r = _marg_array(rho)
    Hmu = _entropy_series(mu_traj.values, np.broadcast_to(r, mu_traj.values.shape))
    dH = np.clip(Hmu[0] - Hmu, 0.0, None)
    alpha = report.alpha_effective
    H0 = float(report.lhs[0])
    C1 = np.sqrt(2.0 * H0 + 2.0 * report.g_l2 * math.sqrt(8.0 / alpha) * np.sqrt(dH))
    tail = C2 * np.exp(-c * t)
    observed = np.abs(cg_traj.values - eff_traj.values).sum(axis=1)
    verdict = observed <= np.minimum(C1, tail) + VERDICT_ATOL
    # crossover: from here on the exponential branch is the smaller one
    above = np.flatnonzero(tail >= C1)
    if above.size == 0:
        cross, on_grid = float(t[0]), True
    elif above[-1] + 1 < t.size:
        cross, on_grid = float(t[above[-1] + 1]), True
    elif C1[-1] > 0:
        cross, on_grid = float(math.log(C2 / C1[-1]) / c), False
    else:
        cross, on_grid = None, False
    return Envelope(C1, float(C2), float(c), tuple(float(x) for x in rates), cross, on_grid, verdict)


def entropy_identity_residual(L, xi, mu_traj: Trajectory, cg_traj: Trajectory,
                              eff_traj: Trajectory, N: Generator) -> float:
    """Largest defect of the entropy balance between ``cg`` and ``eff`` under ``N``.

    Checks ``H(cg_t|eff_t) - H(cg_0|eff_0) + int R_N(cg|eff) - int sum log(cg/eff) (d_t cg - N^T cg)``
    with trapezoid quadrature.  ``d_t cg`` is ``L_hat_t^T cg_t`` built from the
    conditionals of ``mu_traj``; without ``mu_traj`` centered differences are used.
    """
    trajs = [tr for tr in (mu_traj, cg_traj, eff_traj) if tr is not None]
    _check_grids(*trajs)
    t = cg_traj.times
    c, e = cg_traj.values, eff_traj.values
    if c.min() <= 0 or e.min() <= 0:
        raise NonPositiveMarginal("entropy balance needs strictly positive marginals")
    H = _entropy_series(c, e)
    R = np.array([fisher_information(ci, ei, N) for ci, ei in zip(c, e)])
    if mu_traj is None:
        dc = centered_derivative(c, t)
    else:
        dc = np.array([cg_generator_matrix(L, m, xi).T @ ci for m, ci in zip(mu_traj.values, c)])
    source = np.sum(np.log(c / e) * (dc - c @ N.rates), axis=1)
    res = H - H[0] + cumulative_trapezoid(R - source, t, initial=0.0)
    return float(np.max(np.abs(res)))


# -- log-Sobolev constants on level sets ----------------------------------------

@dataclass(frozen=True)
class LevelSetAlpha:
    alpha: float
    per_label: tuple
    notes: tuple


def level_set_alpha(L: Generator, xi: CoarseGrainingMap, rho, seed: int = 0) -> LevelSetAlpha:
    """Minimum over level sets of the estimated constant for ``(L^y, rho(.|y))``.

    ``L^y`` is replaced by its closest generator (off-diagonal part with
    zero row sums); only off-diagonal rates enter the Fisher information.
    """
    d = disintegrate(rho, xi)
    per, notes = [], []
    for y in xi.coarse.labels:
        res = restrict(L, xi, y)
        if res.matrix.shape[0] < 2:
            notes.append(f"level set {y!r} is a single state; no constraint")
            continue
        if not res.generator_like:
            notes.append(f"level set {y!r}: restriction replaced by its closest generator")
        est = estimate_lsi_constant(res.closest_generator(), d.conditionals[y], seed=seed)
        per.append((y, est.alpha))
    if not per:
        raise NonPositiveAlpha("no level set with two or more states")
    return LevelSetAlpha(min(a for _, a in per), tuple(per), tuple(notes))


def fast_block_alpha(spec, epsilon: float | None = None, seed: int = 0) -> LevelSetAlpha:
    """Minimum over ``y`` of the estimated constant for ``(Q_y, rho^eps(.|y))``."""
    from .multiscale import averaged_model, stationary_conditionals

    if epsilon is None:
        conds = tuple(r.mass for r in averaged_model(spec).block_stationaries)
        notes = ("reference measures: stationary measures of the fast blocks",)
    else:
        conds = stationary_conditionals(spec, epsilon)
        notes = (f"reference measures: stationary conditionals at eps={epsilon!r}",)
    per = tuple((str(y), estimate_lsi_constant(spec.q(y), conds[y], seed=seed).alpha) for y in (0, 1))
    return LevelSetAlpha(min(a for _, a in per), per, notes)
