"""Two-macro-state slow-fast family, its averaged limit and the preset scenarios.

States of the full space are pairs ``(y, z)`` with ``y in {0, 1}`` and
``z in {0, ..., n-1}``, labelled ``"y:z"`` and stored at index ``y * n + z``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .chain import (
    Generator,
    ProbabilityVector,
    StateSpace,
    is_irreducible,
    stationary_measure,
    validate_generator,
)
from .coarse import CoarseGrainingMap, disintegrate, effective_generator
from .errors import InvalidSize, NotIrreducible, ValidationError

DEFAULT_EPSILONS = (1.0, 1e-1, 1e-2, 1e-3, 1e-4)
DEFAULT_T = 20.0
DEFAULT_N = 10
SCENARIOS = ("S1", "S2", "S3")


def fast_space(n: int) -> StateSpace:
    return StateSpace.range(n)


def full_space(n: int) -> StateSpace:
    return StateSpace(tuple(f"{y}:{z}" for y in (0, 1) for z in range(n)))


SLOW_SPACE = StateSpace(("0", "1"))


def slow_projection(n: int) -> CoarseGrainingMap:
    """The map ``(y, z) -> y``."""
    return CoarseGrainingMap.from_indices(full_space(n), SLOW_SPACE, np.repeat([0, 1], n))


@dataclass(frozen=True, eq=False)
class MultiscaleSpec:
    n: int
    q0: Generator
    q1: Generator
    g01: np.ndarray
    g10: np.ndarray
    epsilon: float | None = None

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise InvalidSize(f"fast space size must be positive, got {n}")
        z = fast_space(n)
        qs = []
        for name in ("q0", "q1"):
            q = getattr(self, name)
            q = q if isinstance(q, Generator) else validate_generator(q, z)
            if q.size != n:
                raise InvalidSize(f"{name} has size {q.size}, expected {n}")
            if not is_irreducible(q):
                raise NotIrreducible(f"fast block {name} is not irreducible")
            qs.append(q)
        gs = []
        for name in ("g01", "g10"):
            g = np.array(getattr(self, name), dtype=float)
            if g.shape != (n, n):
                raise InvalidSize(f"{name} has shape {g.shape}, expected {(n, n)}")
            if not np.all(np.isfinite(g)) or g.min() < 0:
                raise ValidationError(f"{name} must be finite and entrywise nonnegative")
            g.setflags(write=False)
            gs.append(g)
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon!r}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "q0", qs[0])
        object.__setattr__(self, "q1", qs[1])
        object.__setattr__(self, "g01", gs[0])
        object.__setattr__(self, "g10", gs[1])

    def q(self, y: int) -> Generator:
        return self.q0 if y == 0 else self.q1

    def g(self, y: int) -> np.ndarray:
        """Coupling out of slow state ``y`` into ``1 - y``."""
        return self.g01 if y == 0 else self.g10

    def with_epsilon(self, epsilon: float) -> "MultiscaleSpec":
        return MultiscaleSpec(self.n, self.q0, self.q1, self.g01, self.g10, float(epsilon))

    def to_dict(self) -> dict:
        d = {"n": self.n, "q0": self.q0.rates.tolist(), "q1": self.q1.rates.tolist(),
             "g01": self.g01.tolist(), "g10": self.g10.tolist()}
        if self.epsilon is not None:
            d["epsilon"] = self.epsilon
        return d

    @classmethod
    def from_dict(cls, data) -> "MultiscaleSpec":
        if not isinstance(data, dict):
            with open(data) as fh:
                data = json.load(fh)
        try:
            return cls(int(data["n"]), data["q0"], data["q1"], data["g01"], data["g10"],
                       data.get("epsilon"))
        except KeyError as exc:
            raise ValidationError(f"multiscale JSON missing key {exc}") from None


def _eps(spec, epsilon):
    e = spec.epsilon if epsilon is None else float(epsilon)
    if e is None or not e > 0:
        raise ValidationError("a positive epsilon is required")
    return e


def build_l_eps(spec: MultiscaleSpec, epsilon: float | None = None) -> Generator:
    """``eps^-1 blockdiag(Q0, Q1) + [[D0, G01], [G10, D1]]``."""
    e = _eps(spec, epsilon)
    n = spec.n
    L = np.zeros((2 * n, 2 * n))
    for y in (0, 1):
        s = slice(y * n, (y + 1) * n)
        o = slice((1 - y) * n, (2 - y) * n)
        L[s, s] = spec.q(y).rates / e - np.diag(spec.g(y).sum(axis=1))
        L[s, o] = spec.g(y)
    return validate_generator(L, full_space(n))


def fast_part(spec: MultiscaleSpec, epsilon: float | None = None) -> np.ndarray:
    e = _eps(spec, epsilon)
    n = spec.n
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = spec.q0.rates / e
    out[n:, n:] = spec.q1.rates / e
    return out


def coupling_part(spec: MultiscaleSpec) -> np.ndarray:
    n = spec.n
    out = np.zeros((2 * n, 2 * n))
    out[:n, n:] = spec.g01
    out[n:, :n] = spec.g10
    out[:n, :n] = -np.diag(spec.g01.sum(axis=1))
    out[n:, n:] = -np.diag(spec.g10.sum(axis=1))
    return out


@dataclass(frozen=True, eq=False)
class AveragedModel:
    lambda0: float
    lambda1: float
    generator: Generator
    block_stationaries: tuple = field(default_factory=tuple)


def averaged_model(spec: MultiscaleSpec) -> AveragedModel:
    rhos = tuple(stationary_measure(spec.q(y)) for y in (0, 1))
    lam = [float(rhos[y].mass @ spec.g(y).sum(axis=1)) for y in (0, 1)]
    Lav = validate_generator([[-lam[0], lam[0]], [lam[1], -lam[1]]], SLOW_SPACE)
    return AveragedModel(lam[0], lam[1], Lav, rhos)


def effective_generator_eps(spec: MultiscaleSpec, epsilon: float | None = None) -> Generator:
    """Effective generator of ``L^eps`` under the slow projection."""
    L = build_l_eps(spec, epsilon)
    rho = stationary_measure(L)
    return effective_generator(L, rho, slow_projection(spec.n))


def effective_generator_eps_direct(spec: MultiscaleSpec, epsilon: float | None = None) -> Generator:
    """Same generator from the coupling blocks and the conditionals of ``rho^eps`` only."""
    conds = stationary_conditionals(spec, epsilon)
    lam = [float(conds[y] @ spec.g(y).sum(axis=1)) for y in (0, 1)]
    return validate_generator([[-lam[0], lam[0]], [lam[1], -lam[1]]], SLOW_SPACE)


def stationary_conditionals(spec: MultiscaleSpec, epsilon: float | None = None):
    rho = stationary_measure(build_l_eps(spec, epsilon))
    d = disintegrate(rho, slow_projection(spec.n))
    return tuple(np.array(d.conditionals[y].mass) for y in SLOW_SPACE.labels)


def conditional_stationary_gap(spec: MultiscaleSpec, epsilon: float | None = None) -> tuple:
    """Total variation between ``rho^eps(.|y)`` and the block stationary ``rho_y``."""
    conds = stationary_conditionals(spec, epsilon)
    av = averaged_model(spec)
    return tuple(float(np.abs(conds[y] - av.block_stationaries[y].mass).sum()) for y in (0, 1))


def birth_death_ring(n: int, r_plus: float, r_minus: float) -> Generator:
    """Circulant nearest-neighbour generator on ``n`` sites."""
    if int(n) != n or n < 2:
        raise InvalidSize(f"ring needs at least 2 sites, got {n!r}")
    if not (r_plus > 0 and r_minus > 0):
        raise ValidationError("ring rates must be positive")
    n = int(n)
    Q = np.zeros((n, n))
    for i in range(n):
        Q[i, (i + 1) % n] += r_plus
        Q[i, (i - 1) % n] += r_minus
        Q[i, i] -= r_plus + r_minus
    return validate_generator(Q, fast_space(n))


def _section5_coupling(n):
    G = np.zeros((n, n))
    G[n - 1, 0] = 1.0
    G[0, n - 1] = 1.0
    return G


SCENARIO_NOTES = {
    "S1": ["initial datum: 0.1 added to every state, plus 1 at (0,0) and 0.3 at (1,0), normalised"],
    "S2": ["initial datum: 0.1 added to every state, plus 1 at (0,0) and 0.3 at (1,0), normalised"],
    "S3": ["initial datum normalised to mass 10/13 at (0,0) and 3/13 at (1,0)",
           "initial datum is not strictly positive"],
}


def scenario(name: str, n: int = DEFAULT_N):
    """Preset ``(spec, mu0)`` for scenario ``S1``, ``S2`` or ``S3``."""
    if name not in SCENARIOS:
        raise ValidationError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    if int(n) != n or n < 2:
        raise InvalidSize(f"scenario needs n >= 2, got {n!r}")
    n = int(n)
    r_plus, r_minus = (1.0, 0.1) if name == "S2" else (1.0, 1.0)
    Q = birth_death_ring(n, r_plus, r_minus)
    G = _section5_coupling(n)
    spec = MultiscaleSpec(n, Q, Q, G, G)
    m = np.zeros(2 * n)
    if name == "S3":
        m[0] = 10.0 / 13.0
        m[n] = 3.0 / 13.0
    else:
        m += 0.1
        m[0] += 1.0
        m[n] += 0.3
        m /= 1.3 + n / 5.0
    return spec, ProbabilityVector(full_space(n), m)


def nonreversible_variant(n: int = DEFAULT_N, r_plus: float = 1.0, r_minus: float = 0.5) -> MultiscaleSpec:
    """Ring blocks with ``r_plus != r_minus`` and mismatched coupling entries."""
    if n < 3:
        raise InvalidSize("non-reversible variant needs n >= 3")
    Q = birth_death_ring(n, r_plus, r_minus)
    g01 = np.zeros((n, n))
    g10 = np.zeros((n, n))
    g01[n - 1, 0] = 1.0
    g10[n // 2, 0] = 1.0
    return MultiscaleSpec(n, Q, Q, g01, g10)
