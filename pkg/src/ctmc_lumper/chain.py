"""Generators, probability vectors and structural checks for finite CTMCs.

Everything here is an immutable value: arrays held by :class:`Generator` and
:class:`ProbabilityVector` are copied on construction and flagged read-only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    DimensionMismatch,
    EigenFailure,
    InvalidProbability,
    NegativeOffDiagonal,
    NotIrreducible,
    RowSumViolation,
    SolveFailure,
    ValidationError,
)

TOL_ROW = 1e-10
TOL_PROB = 1e-12
TOL_BALANCE = 1e-10
TOL_STATIONARY = 1e-10


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class StateSpace:
    labels: tuple

    def __post_init__(self):
        labels = tuple(str(s) for s in self.labels)
        if not labels:
            raise ValidationError("state space needs at least one label")
        if len(set(labels)) != len(labels):
            raise ValidationError("state labels must be unique")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(labels)})

    @classmethod
    def range(cls, n: int, prefix: str = "") -> "StateSpace":
        return cls(tuple(f"{prefix}{i}" for i in range(n)))

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def index(self, label) -> int:
        try:
            return self._index[str(label)]
        except KeyError:
            from .errors import UnknownLabel
            raise UnknownLabel(label) from None


@dataclass(frozen=True, eq=False)
class Generator:
    """Rate matrix ``rates[x, x']`` over ``space``; rows sum to zero."""

    space: StateSpace
    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rates", _frozen(self.rates))

    @property
    def matrix(self) -> np.ndarray:
        return self.rates

    @property
    def size(self) -> int:
        return self.space.size

    def __repr__(self):
        return f"Generator(size={self.size}, rates={self.rates.tolist()!r})"


@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    space: StateSpace
    mass: np.ndarray

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != (self.space.size,):
            raise DimensionMismatch(
                f"mass has shape {mass.shape}, state space has {self.space.size} states")
        if not np.all(np.isfinite(mass)):
            raise InvalidProbability("probability vector has non-finite entries")
        if mass.min() < -TOL_PROB:
            raise InvalidProbability(f"negative mass {mass.min()!r}")
        if abs(mass.sum() - 1.0) > TOL_PROB:
            raise InvalidProbability(f"mass sums to {mass.sum()!r}")
        object.__setattr__(self, "mass", _frozen(np.clip(mass, 0.0, None)))

    @classmethod
    def uniform(cls, space: StateSpace) -> "ProbabilityVector":
        return cls(space, np.full(space.size, 1.0 / space.size))

    @classmethod
    def dirac(cls, space: StateSpace, label) -> "ProbabilityVector":
        m = np.zeros(space.size)
        m[space.index(label)] = 1.0
        return cls(space, m)

    @property
    def size(self) -> int:
        return self.space.size

    def is_positive(self) -> bool:
        return bool(np.all(self.mass > 0))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.mass, dtype=dtype)

    def __repr__(self):
        return f"ProbabilityVector({self.mass.tolist()!r})"


def _as_space(space, n):
    if space is None:
        return StateSpace.range(n)
    if not isinstance(space, StateSpace):
        space = StateSpace(tuple(space))
    return space


def validate_generator(rates, space: StateSpace | Sequence[str] | None = None,
                       tol_row: float = TOL_ROW) -> Generator:
    """Check a rate matrix and return it as a :class:`Generator`.

    Off-diagonal entries must be nonnegative and every row must sum to zero
    within ``tol_row``; the diagonal is then reset to minus the off-diagonal
    row sum so that rows sum to zero exactly.
    """
    L = np.array(rates, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DimensionMismatch(f"rate matrix must be square, got shape {L.shape}")
    space = _as_space(space, L.shape[0])
    if space.size != L.shape[0]:
        raise DimensionMismatch(f"{L.shape[0]} rows but {space.size} state labels")
    if not np.all(np.isfinite(L)):
        raise ValidationError("rate matrix has non-finite entries")
    off = L.copy()
    np.fill_diagonal(off, 0.0)
    neg = np.argwhere(off < 0)
    if len(neg):
        i, j = (int(v) for v in neg[0])
        raise NegativeOffDiagonal(i, j, float(L[i, j]))
    residual = L.sum(axis=1)
    bad = np.flatnonzero(np.abs(residual) > tol_row)
    if len(bad):
        raise RowSumViolation(int(bad[0]), float(residual[bad[0]]))
    np.fill_diagonal(off, -off.sum(axis=1))
    return Generator(space, off)


def generator_from_offdiagonal(rates, space=None) -> Generator:
    """Build a generator from off-diagonal rates, ignoring the given diagonal."""
    off = np.array(rates, dtype=float)
    np.fill_diagonal(off, 0.0)
    np.fill_diagonal(off, -off.sum(axis=1))
    return validate_generator(off, space)


def probability_vector(mass, space=None) -> ProbabilityVector:
    mass = np.asarray(mass, dtype=float)
    return ProbabilityVector(_as_space(space, mass.shape[0]), mass)


def _check_same_space(a, b):
    if a.space.size != b.space.size:
        raise DimensionMismatch(f"state spaces differ in size: {a.space.size} vs {b.space.size}")


def is_irreducible(L: Generator) -> bool:
    """Strong connectivity of the digraph with an edge wherever the rate is > 0."""
    adj = np.array(L.rates > 0, dtype=np.int8)
    np.fill_diagonal(adj, 0)
    if L.size == 1:
        return True
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    return n_comp == 1


def stationary_measure(L: Generator) -> ProbabilityVector:
    if not is_irreducible(L):
        raise NotIrreducible("stationary measure requires an irreducible generator")
    n = L.size
    A = np.vstack([L.rates.T, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    rho, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < n:
        raise SolveFailure(f"augmented stationary system has rank {rank} < {n}")
    if rho.min() <= 0:
        raise SolveFailure(f"stationary solve produced non-positive entry {rho.min()!r}")
    rho = rho / rho.sum()
    residual = np.abs(L.rates.T @ rho).max()
    scale = max(1.0, np.abs(L.rates).max())
    if residual > TOL_STATIONARY * scale:
        raise SolveFailure(f"stationary residual {residual:.3e} too large")
    return ProbabilityVector(L.space, rho)


def check_detailed_balance(L: Generator, rho: ProbabilityVector, tol: float = TOL_BALANCE) -> bool:
    _check_same_space(L, rho)
    flux = rho.mass[:, None] * L.rates
    return bool(np.all(np.abs(flux - flux.T) <= tol))


def spectral_gap(L: Generator) -> float:
    """Minus the largest real part among the nonzero eigenvalues of ``L``."""
    if L.size < 2:
        raise EigenFailure("spectral gap undefined on a single state")
    try:
        ev = np.linalg.eigvals(L.rates)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    order = np.argsort(np.abs(ev))
    rest = ev[order[1:]]
    gap = -float(np.max(rest.real))
    if not gap > 0:
        raise EigenFailure(f"no positive spectral gap (got {gap!r}); is L irreducible?")
    return gap


# -- JSON ---------------------------------------------------------------------

def _reject_constant(name):
    raise ValidationError(f"non-finite number {name} not allowed")


def _load_json(path_or_obj):
    if isinstance(path_or_obj, dict):
        return path_or_obj
    with open(path_or_obj) as fh:
        return json.load(fh, parse_constant=_reject_constant)


def generator_to_dict(L: Generator) -> dict:
    return {"states": list(L.space.labels), "rates": L.rates.tolist()}


def generator_from_dict(data) -> Generator:
    data = _load_json(data)
    try:
        return validate_generator(data["rates"], StateSpace(tuple(data["states"])))
    except KeyError as exc:
        raise ValidationError(f"generator JSON missing key {exc}") from None


def probability_to_dict(p: ProbabilityVector) -> dict:
    return {"states": list(p.space.labels), "mass": p.mass.tolist()}


def probability_from_dict(data) -> ProbabilityVector:
    data = _load_json(data)
    try:
        return ProbabilityVector(StateSpace(tuple(data["states"])), data["mass"])
    except KeyError as exc:
        raise ValidationError(f"probability JSON missing key {exc}") from None


load_generator = generator_from_dict
load_probability_vector = probability_from_dict
