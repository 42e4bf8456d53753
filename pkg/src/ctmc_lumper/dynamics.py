"""Forward Kolmogorov solvers and trajectory containers."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .chain import Generator, ProbabilityVector, StateSpace
from .coarse import CoarseGrainingMap, cg_generator_matrix, push_forward_many
from .errors import (
    DimensionMismatch,
    ExpmFailure,
    InsufficientDecay,
    InsufficientPoints,
    UndefinedConditional,
    ValidationError,
)

TOL_RENORMALIZE = 1e-9
RK_SAFETY = 0.1


@dataclass(frozen=True, eq=False)
class TimeGrid:
    points: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValidationError("time grid must be a nonempty 1-D sequence")
        if p[0] != 0.0:
            raise ValidationError(f"time grid must start at 0, got {p[0]!r}")
        if not np.all(np.isfinite(p)):
            raise ValidationError("time grid has non-finite points")
        if np.any(np.diff(p) <= 0):
            raise ValidationError("time grid must be strictly increasing")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @classmethod
    def uniform(cls, T: float, h: float | None = None, n: int | None = None) -> "TimeGrid":
        """``n`` equal steps on ``[0, T]``; ``h`` is rounded to fit ``T`` exactly."""
        if T <= 0:
            raise ValidationError("horizon must be positive")
        if n is None:
            if h is None or h <= 0:
                raise ValidationError("give a positive step h or a step count n")
            n = max(1, int(math.ceil(T / h - 1e-9)))
        return cls(np.linspace(0.0, T, n + 1), "uniform")

    @classmethod
    def refined(cls, T: float, first: float | None = None, ratio: float = 1.2,
                n_uniform: int = 2000) -> "TimeGrid":
        """Geometric steps from ``first`` (default ``1e-6 T``) growing by
        ``ratio`` until they reach ``T / n_uniform``; uniform afterwards."""
        if T <= 0:
            raise ValidationError("horizon must be positive")
        if ratio <= 1:
            raise ValidationError("geometric ratio must exceed 1")
        h_max = T / n_uniform
        h = first if first is not None else 1e-6 * T
        pts = [0.0]
        t = 0.0
        while h < h_max and t + h < T:
            t += h
            pts.append(t)
            h *= ratio
        m = max(1, int(math.ceil((T - t) / h_max - 1e-9)))
        pts.extend(np.linspace(t, T, m + 1)[1:].tolist())
        return cls(np.array(pts), "geometric")

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def T(self) -> float:
        return float(self.points[-1])

    def __len__(self):
        return self.points.size

    def steps(self) -> np.ndarray:
        return np.diff(self.points)


def _as_grid(grid) -> TimeGrid:
    return grid if isinstance(grid, TimeGrid) else TimeGrid(np.asarray(grid, dtype=float))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Distribution history; ``values[k]`` is the measure at ``grid.points[k]``."""

    grid: TimeGrid
    states: StateSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.size, self.states.size):
            raise DimensionMismatch(
                f"values have shape {v.shape}, expected {(self.grid.size, self.states.size)}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.grid.points

    def __len__(self):
        return self.grid.size

    def __getitem__(self, k) -> ProbabilityVector:
        return ProbabilityVector(self.states, self.values[k])

    def to_csv(self, target) -> None:
        """Write ``t,<labels>`` rows to a path or an open text stream."""
        if hasattr(target, "write"):
            self._write_rows(target)
        else:
            with open(target, "w", newline="") as fh:
                self._write_rows(fh)

    def _write_rows(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *self.states.labels])
        for t, row in zip(self.times, self.values):
            w.writerow([format(t, ".17g"), *(format(x, ".17g") for x in row)])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "t":
            raise ValidationError("trajectory CSV must start with a 't' column")
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(rows[0]))
        return cls(TimeGrid(data[:, 0]), StateSpace(tuple(rows[0][1:])), data[:, 1:])


class _PropagatorCache:
    """``expm(h L^T)`` per distinct step, keyed on ``h`` to 13 significant digits."""

    def __init__(self, LT):
        self.LT = LT
        self._cache = {}

    def __call__(self, h):
        key = float(f"{h:.13g}")
        P = self._cache.get(key)
        if P is None:
            try:
                P = expm(h * self.LT)
            except Exception as exc:  # scipy raises assorted LinAlg/Value errors
                raise ExpmFailure(f"matrix exponential failed for step {h!r}: {exc}") from exc
            if not np.all(np.isfinite(P)):
                raise ExpmFailure(f"matrix exponential is not finite for step {h!r}")
            self._cache[key] = P
        return P


def _renormalize(v, where):
    s = v.sum()
    if abs(s - 1.0) > TOL_RENORMALIZE:
        raise ExpmFailure(f"mass drifted to {s!r} at {where}")
    v = np.where(v < 0, 0.0, v)
    return v / v.sum()


def _check_inputs(L, mu0):
    m = mu0.mass if isinstance(mu0, ProbabilityVector) else np.asarray(mu0, dtype=float)
    if m.shape != (L.size,):
        raise DimensionMismatch(f"initial measure on {m.shape} states, generator has {L.size}")
    return np.array(m, dtype=float)


def solve_constant(L: Generator, mu0, grid) -> Trajectory:
    """``mu_t = exp(t L^T) mu_0`` on the grid, one cached propagator per step size."""
    grid = _as_grid(grid)
    m = _check_inputs(L, mu0)
    prop = _PropagatorCache(L.rates.T)
    out = np.empty((grid.size, L.size))
    out[0] = m
    for k, h in enumerate(grid.steps(), start=1):
        out[k] = _renormalize(prop(h) @ out[k - 1], f"t={grid.points[k]!r}")
    return Trajectory(grid, L.space, out)


def solve_coarse_grained(L: Generator, xi: CoarseGrainingMap, mu0, grid):
    """Full solution together with its pointwise push-forward."""
    full = solve_constant(L, mu0, grid)
    cg = push_forward_many(full.values, xi)
    return full, Trajectory(full.grid, xi.coarse, cg)


def solve_cg_ode(L: Generator, xi: CoarseGrainingMap, mu0, grid) -> Trajectory:
    """Integrate the coarse-grained equation with classical RK4.

    The time-dependent coarse generator is rebuilt at each stage time from
    the full solution, which is propagated exactly alongside.  Steps are
    subdivided so that ``h <= 0.1 / ||L_hat||_inf``.
    """
    grid = _as_grid(grid)
    m = _check_inputs(L, mu0)
    prop = _PropagatorCache(L.rates.T)

    def lhat(mu, t):
        try:
            return cg_generator_matrix(L, mu, xi)
        except UndefinedConditional as exc:
            raise UndefinedConditional(exc.label,
                                       f"zero marginal at {exc.label!r} for t={t!r}") from None

    c = push_forward_many(m, xi)
    out = np.empty((grid.size, xi.coarse.size))
    out[0] = c
    mu = m
    for k, dt in enumerate(grid.steps(), start=1):
        t0 = grid.points[k - 1]
        A0 = lhat(mu, t0)
        norm = float(np.abs(A0).sum(axis=1).max())
        sub = 1 if norm == 0 else max(1, int(math.ceil(dt * norm / RK_SAFETY - 1e-12)))
        h = dt / sub
        P_half = prop(h / 2)
        for s in range(sub):
            t = t0 + s * h
            A1 = A0 if s == 0 else lhat(mu, t)
            mu_mid = P_half @ mu
            mu_end = P_half @ mu_mid
            A2 = lhat(mu_mid, t + h / 2)
            A3 = lhat(mu_end, t + h)
            k1 = A1.T @ c
            k2 = A2.T @ (c + 0.5 * h * k1)
            k3 = A2.T @ (c + 0.5 * h * k2)
            k4 = A3.T @ (c + h * k3)
            c = c + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            mu = mu_end
        mu = _renormalize(mu, f"t={grid.points[k]!r}")
        c = _renormalize(c, f"t={grid.points[k]!r}")
        out[k] = c
    return Trajectory(grid, xi.coarse, out)


def tv_series(traj: Trajectory, target) -> np.ndarray:
    t = target.mass if isinstance(target, ProbabilityVector) else np.asarray(target, dtype=float)
    if t.shape != (traj.states.size,):
        raise DimensionMismatch("target lives on a different space")
    return np.abs(traj.values - t[None, :]).sum(axis=1)


def tv_decay_rate(traj: Trajectory, target, window=(1e-9, 1e-2), min_points: int = 5) -> float:
    """Minus the least-squares slope of ``log TV`` against ``t`` inside ``window``."""
    tv = tv_series(traj, target)
    lo, hi = window
    sel = (tv >= lo) & (tv <= hi)
    if sel.sum() < min_points:
        raise InsufficientDecay(f"only {int(sel.sum())} points with TV in [{lo}, {hi}]")
    slope = np.polyfit(traj.times[sel], np.log(tv[sel]), 1)[0]
    return float(-slope)


def asymptotic_tv_rate(L: Generator, mu0, rho=None, decades: float = 30.0,
                       tail: float = 0.5, max_steps: int = 200_000) -> float:
    """Exponential rate of ``TV(mu_t, rho)`` fitted deep in the tail.

    The deviation ``mu_t - rho`` is propagated directly and its component
    along ``rho`` (which rounding would otherwise feed) is removed after each
    step, so relative accuracy survives far below machine epsilon.  Steps are
    ``1 / ||L||_inf``; propagation stops once TV has fallen by ``decades``
    orders of magnitude, and the log-linear fit uses the last ``tail``
    fraction of that range, where the slowest mode dominates.
    """
    from .chain import stationary_measure

    m = _check_inputs(L, mu0)
    r = stationary_measure(L).mass if rho is None else (
        rho.mass if isinstance(rho, ProbabilityVector) else np.asarray(rho, dtype=float))
    A = L.rates
    norm = float(np.abs(A).sum(axis=1).max())
    if norm == 0:
        raise InsufficientDecay("generator has no transitions")
    h = 1.0 / norm
    P = _PropagatorCache(A.T)(h)
    d = m - r
    tv0 = float(np.abs(d).sum())
    if tv0 == 0:
        raise InsufficientDecay("initial measure is already stationary")
    stop = tv0 * 10.0 ** (-decades)
    times, tvs = [0.0], [tv0]
    while tvs[-1] > stop and len(times) <= max_steps:
        d = P @ d
        d -= r * d.sum()
        times.append(times[-1] + h)
        tvs.append(float(np.abs(d).sum()))
    logs = np.log(np.array(tvs) / tv0)
    sel = logs <= -tail * decades * math.log(10.0)
    if sel.sum() < 5:
        raise InsufficientDecay(f"TV fell by less than {tail * decades:g} decades in {max_steps} steps")
    return float(-np.polyfit(np.array(times)[sel], logs[sel], 1)[0])


@dataclass(frozen=True)
class ShortTimeFit:
    """``min_x mu_t(x) >= C t^N`` fitted on one half of the grid, checked on the other."""

    C: float
    N: float
    validated: bool
    worst_margin: float   # min over validation points of log(min mu) - log(C t^N)
    fit_points: int
    validation_points: int


def fit_short_time_lower_bound(traj: Trajectory, t_max: float = 0.1,
                               tol: float = 1e-12) -> ShortTimeFit:
    """Fit ``log min mu_t >= N log t + log C`` on ``(0, t_max]``.

    Even-indexed points (and the last point) carry the fit: ``N`` is the
    least-squares slope and ``log C`` the smallest offset that keeps every fit
    point on or above the line.  The remaining points validate it.
    """
    t = traj.times
    sel = np.flatnonzero((t > 0) & (t <= t_max))
    if sel.size < 4:
        raise InsufficientPoints(f"need at least 4 grid points in (0, {t_max}], got {sel.size}")
    low = traj.values[sel].min(axis=1)
    if np.any(low <= 0):
        raise ValidationError("trajectory has non-positive mass at some t > 0")
    x, y = np.log(t[sel]), np.log(low)
    fit = np.zeros(sel.size, dtype=bool)
    fit[::2] = True
    fit[-1] = True
    N = float(np.polyfit(x[fit], y[fit], 1)[0])
    logC = float(np.min(y[fit] - N * x[fit]))
    margin = y[~fit] - (N * x[~fit] + logC)
    worst = float(margin.min()) if margin.size else 0.0
    return ShortTimeFit(float(np.exp(logC)), N, bool(worst >= -tol), worst,
                        int(fit.sum()), int((~fit).sum()))
