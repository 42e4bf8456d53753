"""Epsilon sweeps over the slow-fast family: errors, certificates, rate fits, files."""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bounds import BoundReport, eps_bound_report, fast_block_alpha, long_time_envelope
from .chain import ProbabilityVector, check_detailed_balance, stationary_measure
from .coarse import effective_generator, push_forward
from .dynamics import TimeGrid, Trajectory, solve_cg_ode, solve_coarse_grained, solve_constant
from .errors import (
    ConfigError,
    InsufficientPoints,
    LumperError,
    MissingFit,
    NonPositiveValue,
    ValidationError,
)
from .functionals import relative_entropy
from .multiscale import (
    DEFAULT_EPSILONS,
    DEFAULT_N,
    DEFAULT_T,
    SCENARIO_NOTES,
    SCENARIOS,
    MultiscaleSpec,
    averaged_model,
    build_l_eps,
    full_space,
    scenario,
    slow_projection,
)

DEFAULT_FIT_WINDOW = (1.0, 1e-1, 1e-2, 1e-3)
DEFAULT_DELTA = 0.1
THREADS_ENV = "CTMC_LUMPER_THREADS"


# -- output formatting ------------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        return _fmt(x)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating, bool)) or v is None for v in seq):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent: int = 1) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


# -- configuration ----------------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    scenario: str = "S1"
    n: int = DEFAULT_N
    epsilons: tuple = DEFAULT_EPSILONS
    T: float = DEFAULT_T
    grid: str = "refined"
    steps: int = 2000
    alpha_mode: str | float = "estimate"
    out: str | None = None
    seed: int = 0
    delta: float | None = None
    fit_window: tuple = DEFAULT_FIT_WINDOW
    matched: bool = True
    eta0: tuple | None = None
    check_cg_ode: bool = True
    threads: int | None = None

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps:
            raise ConfigError("at least one epsilon is required")
        if any(not (e > 0 and math.isfinite(e)) for e in eps):
            raise ConfigError("epsilons must be positive and finite")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilons must be strictly decreasing")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigError("horizon T must be positive")
        if self.grid not in ("refined", "uniform"):
            raise ConfigError(f"unknown grid policy {self.grid!r}")
        if int(self.steps) < 1:
            raise ConfigError("steps must be positive")
        if isinstance(self.alpha_mode, str):
            if self.alpha_mode != "estimate":
                try:
                    object.__setattr__(self, "alpha_mode", float(self.alpha_mode))
                except ValueError:
                    raise ConfigError(f"alpha mode must be 'estimate' or a number, got {self.alpha_mode!r}") from None
        if not isinstance(self.alpha_mode, str) and not self.alpha_mode > 0:
            raise ConfigError("a fixed alpha must be positive")
        if self.delta is not None and not self.delta > 0:
            raise ConfigError("delta must be positive")
        if self.scenario not in SCENARIOS and not os.path.exists(self.scenario):
            raise ConfigError(f"scenario {self.scenario!r} is neither a preset nor an existing file")
        if int(self.n) < 2:
            raise ConfigError("n must be at least 2")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "fit_window", tuple(float(e) for e in self.fit_window))

    def make_grid(self) -> TimeGrid:
        if self.grid == "uniform":
            return TimeGrid.uniform(self.T, n=int(self.steps))
        return TimeGrid.refined(self.T, n_uniform=int(self.steps))

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "n": int(self.n), "epsilons": list(self.epsilons),
                "T": self.T, "grid": self.grid, "steps": int(self.steps),
                "alpha_mode": self.alpha_mode, "seed": self.seed, "delta": self.delta,
                "fit_window": list(self.fit_window), "matched": self.matched,
                "eta0": None if self.eta0 is None else list(self.eta0)}


def load_problem(config: StudyConfig):
    """``(spec, mu0, notes)`` for a preset name or a spec file carrying ``mu0``."""
    if config.scenario in SCENARIOS:
        spec, mu0 = scenario(config.scenario, int(config.n))
        return spec, mu0, list(SCENARIO_NOTES[config.scenario])
    try:
        with open(config.scenario) as fh:
            data = json.load(fh)
        spec = MultiscaleSpec.from_dict(data)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from exc
    if "mu0" not in data:
        raise ConfigError("scenario file needs a 'mu0' entry with the initial datum")
    mu0 = ProbabilityVector(full_space(spec.n), data["mu0"])
    return spec, mu0, [f"custom scenario from {os.path.basename(config.scenario)}"]


def thread_count(requested: int | None = None) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


# -- per-epsilon pipeline -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EpsRun:
    eps: float
    full: Trajectory | None = None
    cg: Trajectory | None = None
    eff: Trajectory | None = None
    profile: np.ndarray | None = None
    report: BoundReport | None = None
    delta_report: BoundReport | None = None
    cg_ode_tv: float | None = None
    error: str | None = None
    notes: tuple = ()

    def record(self) -> dict:
        if self.error is not None:
            return {"eps": self.eps, "error": self.error}
        t = self.full.times
        k = int(np.argmax(self.profile))
        rec = {"eps": self.eps, "sup_H": float(self.profile[k]), "t_argmax": float(t[k]),
               "H_T": float(self.profile[-1]), "verdict": self.report.verdict,
               "alpha": self.report.alpha_used}
        if self.delta_report is not None:
            rec["verdict_delta"] = self.delta_report.verdict
        if self.cg_ode_tv is not None:
            rec["cg_ode_max_tv"] = self.cg_ode_tv
        if self.notes:
            rec["notes"] = list(self.notes)
        return rec


def _run_one(spec, mu0, eps, config, grid, alpha_cache):
    xi = slow_projection(spec.n)
    notes = []
    L = build_l_eps(spec, eps)
    rho = stationary_measure(L)
    if check_detailed_balance(L, rho):
        N = averaged_model(spec).generator
        notes.append("reversible: effective generator taken equal to the averaged generator")
    else:
        N = effective_generator(L, rho, xi)
    full, cg = solve_coarse_grained(L, xi, mu0, grid)
    eta0 = push_forward(mu0, xi) if config.matched or config.eta0 is None else \
        ProbabilityVector(xi.coarse, config.eta0)
    eff = solve_constant(N, eta0, grid)
    profile = np.array([relative_entropy(a, b) for a, b in zip(cg.values, eff.values)])

    if config.alpha_mode == "estimate":
        alpha_q = alpha_cache(eps, notes)
    else:
        alpha_q = float(config.alpha_mode)
        notes.append("alpha fixed by configuration")

    report = eps_bound_report(L, xi, full, cg, eff, rho, alpha_q, eps)
    try:
        env = long_time_envelope(report, full, cg, eff, rho, xi)
        report = _with(report, envelope=env)
    except MissingFit as exc:
        notes.append(f"long-time envelope skipped: {exc}")
    delta_report = None
    delta = config.delta
    if delta is None and not mu0.is_positive():
        delta = DEFAULT_DELTA
    if delta is not None:
        delta_report = eps_bound_report(L, xi, full, cg, eff, rho, alpha_q, eps, delta=delta)
    if not mu0.is_positive():
        report = _with(report, notes=report.notes + (
            "initial datum is not strictly positive; full-interval certificate reported without the positivity assumption",))
    cg_tv = None
    if config.check_cg_ode:
        ode = solve_cg_ode(L, xi, mu0, grid)
        cg_tv = float(np.abs(ode.values - cg.values).sum(axis=1).max())
    return EpsRun(eps, full, cg, eff, profile, report, delta_report, cg_tv, None, tuple(notes))


def _with(report, **changes):
    return replace(report, **changes)


class _AlphaCache:
    """One estimate per distinct set of stationary conditionals."""

    def __init__(self, spec, seed):
        self.spec, self.seed = spec, seed
        self._base = None

    def __call__(self, eps, notes):
        from .multiscale import stationary_conditionals
        av = averaged_model(self.spec)
        conds = stationary_conditionals(self.spec, eps)
        same = all(np.abs(conds[y] - av.block_stationaries[y].mass).max() <= 1e-12 for y in (0, 1))
        if same:
            if self._base is None:
                self._base = fast_block_alpha(self.spec, None, seed=self.seed).alpha
            notes.append("alpha estimated for the fast blocks against their stationary measures")
            return self._base
        notes.append("alpha estimated for the fast blocks against the stationary conditionals")
        return fast_block_alpha(self.spec, eps, seed=self.seed).alpha


# -- rate fits and reports -----------------------------------------------------------

def fit_rate(points, window=None) -> float:
    """Least-squares slope of ``log value`` against ``log eps`` over ``window``."""
    pts = [(float(e), float(v)) for e, v in points]
    if window is not None:
        w = np.log(np.asarray(list(window), dtype=float))
        pts = [(e, v) for e, v in pts if np.any(np.abs(np.log(e) - w) <= 1e-9)]
    if len(pts) < 2:
        raise InsufficientPoints(f"need at least 2 points in the fit window, got {len(pts)}")
    e, v = np.array(pts).T
    if np.any(v <= 0):
        raise NonPositiveValue("rate fit needs strictly positive values")
    if np.unique(e).size < 2:
        raise InsufficientPoints("need at least 2 distinct epsilons")
    return float(np.polyfit(np.log(e), np.log(v), 1)[0])


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    records: tuple
    slope: float | None
    slope_defined: bool
    fit_window: tuple
    slope_at_T: float | None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "fit_window": list(self.fit_window),
                "slope": self.slope, "slope_defined": self.slope_defined,
                "slope_at_T": self.slope_at_T, "records": list(self.records)}


@dataclass(frozen=True, eq=False)
class StudyResult:
    config: StudyConfig
    report: ConvergenceReport
    runs: tuple

    def sup_values(self) -> dict:
        return {r.eps: float(np.max(r.profile)) for r in self.runs if r.error is None}


def _slope_or_none(points, window):
    try:
        return fit_rate(points, window), True
    except (InsufficientPoints, NonPositiveValue):
        return None, False


def run_study(config: StudyConfig) -> StudyResult:
    spec, mu0, notes = load_problem(config)
    grid = config.make_grid()
    alpha_cache = _AlphaCache(spec, config.seed)

    def work(eps):
        try:
            return _run_one(spec, mu0, eps, config, grid, alpha_cache)
        except LumperError as exc:
            return EpsRun(eps, error=f"{type(exc).__name__}: {exc}")

    # one shared estimate; computing it up front keeps the workers read-only
    if config.alpha_mode == "estimate":
        try:
            alpha_cache(config.epsilons[0], [])
        except LumperError:
            pass
    workers = min(thread_count(config.threads), len(config.epsilons))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = tuple(pool.map(work, config.epsilons))
    else:
        runs = tuple(work(e) for e in config.epsilons)

    ok = [r for r in runs if r.error is None]
    slope, defined = _slope_or_none([(r.eps, float(np.max(r.profile))) for r in ok], config.fit_window)
    slope_T, _ = _slope_or_none([(r.eps, float(r.profile[-1])) for r in ok], config.fit_window)
    meta = {"scenario": config.scenario, "n": int(spec.n), "T": config.T, "grid": config.grid,
            "grid_points": grid.size, "alpha_mode": config.alpha_mode, "seed": config.seed,
            "matched_initial_data": config.matched, "notes": notes}
    if not defined:
        meta["notes"] = notes + ["slope undefined: fewer than two usable points in the fit window"]
    report = ConvergenceReport(tuple(r.record() for r in runs), slope, defined,
                               config.fit_window, slope_T, meta)
    result = StudyResult(config, report, runs)
    if config.out:
        emit(result, config.out)
    return result


def _eps_tag(eps: float) -> str:
    return f"eps_{eps:.3e}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


def emit(result: StudyResult, out_dir) -> list:
    """Write every artefact of a study; returns the written paths in order."""
    out = Path(out_dir)
    (out / "bounds").mkdir(parents=True, exist_ok=True)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)
    written = []
    rep = result.report
    p = out / "convergence.json"
    write_json(p, {"config": result.config.to_dict(), **rep.to_dict()})
    written.append(p)
    p = out / "convergence.csv"
    _write_csv(p, ["eps", "sup_H", "t_argmax"],
               [(float(r["eps"]), float(r["sup_H"]), float(r["t_argmax"]))
                for r in rep.records if "sup_H" in r])
    written.append(p)
    for run in result.runs:
        if run.error is not None:
            continue
        tag = _eps_tag(run.eps)
        p = out / f"profile_{tag}.csv"
        _write_csv(p, ["t", "H"], zip(run.full.times.astype(float), run.profile.astype(float)))
        written.append(p)
        p = out / "bounds" / f"bounds_{tag}.json"
        write_json(p, run.report.to_dict())
        written.append(p)
        if run.delta_report is not None:
            p = out / "bounds" / f"bounds_delta_{tag}.json"
            write_json(p, run.delta_report.to_dict())
            written.append(p)
        for name, tr in (("full", run.full), ("cg", run.cg), ("eff", run.eff)):
            p = out / "trajectories" / f"{name}_{tag}.csv"
            tr.to_csv(p)
            written.append(p)
    return written


# -- re-checking emitted certificates --------------------------------------------------

@dataclass(frozen=True)
class VerifyResult:
    files: tuple
    failures: tuple

    @property
    def ok(self) -> bool:
        return not self.failures


def verify_bounds(study_dir) -> VerifyResult:
    """Re-check ``lhs <= rhs`` in every emitted certificate file."""
    d = Path(study_dir) / "bounds"
    if not d.is_dir():
        raise ConfigError(f"{study_dir} has no bounds/ directory")
    files, failures = [], []
    for p in sorted(d.glob("*.json")):
        try:
            data = json.loads(p.read_text())
            lhs, rhs = data["lhs"], data["rhs"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"malformed certificate {p.name}: {exc}") from exc
        if len(lhs) != len(rhs):
            raise ValidationError(f"{p.name}: lhs and rhs lengths differ")
        bad = [i for i, (a, b) in enumerate(zip(lhs, rhs)) if b is not None and a > b + 1e-15]
        files.append(p.name)
        if bad or not data.get("verdict", False):
            failures.append((p.name, len(bad)))
    return VerifyResult(tuple(files), tuple(failures))
