"""Coarse-graining maps, disintegration, coarse-grained and effective generators."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .chain import Generator, ProbabilityVector, StateSpace, validate_generator
from .errors import (
    NotStationary,
    SpaceMismatch,
    UndefinedConditional,
    UnknownLabel,
    ValidationError,
)

TOL_EFFECTIVE_STATIONARY = 1e-8


@dataclass(frozen=True, eq=False)
class CoarseGrainingMap:
    """Surjection from ``fine`` onto ``coarse``.

    ``assignment`` maps fine labels to coarse labels; ``level_sets`` is the
    inverse image partition, each block listed in fine-space order.
    """

    fine: StateSpace
    coarse: StateSpace
    assignment: dict

    def __post_init__(self):
        fine, coarse = self.fine, self.coarse
        if not isinstance(fine, StateSpace):
            fine = StateSpace(tuple(fine))
        if not isinstance(coarse, StateSpace):
            coarse = StateSpace(tuple(coarse))
        assignment = {str(k): str(v) for k, v in dict(self.assignment).items()}
        missing = [x for x in fine.labels if x not in assignment]
        if missing:
            raise ValidationError(f"assignment is not total; missing {missing[:5]}")
        extra = [x for x in assignment if x not in set(fine.labels)]
        if extra:
            raise UnknownLabel(extra[0])
        index = np.empty(fine.size, dtype=np.intp)
        for i, x in enumerate(fine.labels):
            index[i] = coarse.index(assignment[x])
        counts = np.bincount(index, minlength=coarse.size)
        if np.any(counts == 0):
            empty = coarse.labels[int(np.flatnonzero(counts == 0)[0])]
            raise ValidationError(f"assignment is not surjective; level set of {empty!r} is empty")
        index.setflags(write=False)
        blocks = tuple(np.flatnonzero(index == k) for k in range(coarse.size))
        for b in blocks:
            b.setflags(write=False)
        object.__setattr__(self, "fine", fine)
        object.__setattr__(self, "coarse", coarse)
        object.__setattr__(self, "assignment", assignment)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "blocks", blocks)

    @property
    def level_sets(self) -> dict:
        return {y: [self.fine.labels[i] for i in b] for y, b in zip(self.coarse.labels, self.blocks)}

    @classmethod
    def identity(cls, space: StateSpace) -> "CoarseGrainingMap":
        return cls(space, space, {x: x for x in space.labels})

    @classmethod
    def from_indices(cls, fine: StateSpace, coarse: StateSpace, index) -> "CoarseGrainingMap":
        return cls(fine, coarse, {x: coarse.labels[int(k)] for x, k in zip(fine.labels, index)})

    def aggregation_matrix(self) -> np.ndarray:
        """0/1 matrix ``P`` with ``P[x, y] = 1`` iff ``x`` lies in the level set of ``y``."""
        P = np.zeros((self.fine.size, self.coarse.size))
        P[np.arange(self.fine.size), self.index] = 1.0
        return P

    def to_dict(self) -> dict:
        return {"fine": list(self.fine.labels), "coarse": list(self.coarse.labels),
                "assignment": dict(self.assignment)}

    @classmethod
    def from_dict(cls, data) -> "CoarseGrainingMap":
        if not isinstance(data, dict):
            with open(data) as fh:
                data = json.load(fh)
        try:
            return cls(StateSpace(tuple(data["fine"])), StateSpace(tuple(data["coarse"])),
                       data["assignment"])
        except KeyError as exc:
            raise ValidationError(f"map JSON missing key {exc}") from None


load_map = CoarseGrainingMap.from_dict


@dataclass(frozen=True, eq=False)
class Disintegration:
    marginal: ProbabilityVector
    conditionals: dict  # coarse label -> ProbabilityVector on the level set, or None

    def reconstruct(self, xi: CoarseGrainingMap) -> np.ndarray:
        out = np.zeros(xi.fine.size)
        for y, block in zip(xi.coarse.labels, xi.blocks):
            c = self.conditionals[y]
            if c is not None:
                out[block] = c.mass * self.marginal.mass[xi.coarse.index(y)]
        return out


def _check_fine(nu, xi):
    m = nu.mass if isinstance(nu, ProbabilityVector) else np.asarray(nu, dtype=float)
    if m.shape[-1] != xi.fine.size:
        raise SpaceMismatch(f"measure on {m.shape[-1]} states, map expects {xi.fine.size}")
    return m


def push_forward(nu, xi: CoarseGrainingMap) -> ProbabilityVector:
    m = _check_fine(nu, xi)
    return ProbabilityVector(xi.coarse, np.bincount(xi.index, weights=m, minlength=xi.coarse.size))


def push_forward_many(values, xi: CoarseGrainingMap) -> np.ndarray:
    """Marginals of a stack of fine measures, shape ``(K, |coarse|)``."""
    v = _check_fine(values, xi)
    return v @ xi.aggregation_matrix()


def disintegrate(nu, xi: CoarseGrainingMap) -> Disintegration:
    m = _check_fine(nu, xi)
    marg = np.bincount(xi.index, weights=m, minlength=xi.coarse.size)
    conds = {}
    for k, (y, block) in enumerate(zip(xi.coarse.labels, xi.blocks)):
        if marg[k] > 0:
            sub = StateSpace(tuple(xi.fine.labels[i] for i in block))
            c = m[block] / marg[k]
            conds[y] = ProbabilityVector(sub, c / c.sum())
        else:
            conds[y] = None
    return Disintegration(ProbabilityVector(xi.coarse, marg), conds)


def _lumped(rates, weights, xi):
    """``sum_{x1 in y1, x2 in y2} L(x1, x2) w(x1|y1)`` for all ``(y1, y2)``."""
    marg = np.bincount(xi.index, weights=weights, minlength=xi.coarse.size)
    bad = np.flatnonzero(marg <= 0)
    if len(bad):
        raise UndefinedConditional(xi.coarse.labels[int(bad[0])])
    cond = weights / marg[xi.index]
    P = xi.aggregation_matrix()
    out = P.T @ (cond[:, None] * rates) @ P
    np.fill_diagonal(out, 0.0)
    np.fill_diagonal(out, -out.sum(axis=1))
    return out


def cg_generator(L: Generator, mu_t, xi: CoarseGrainingMap) -> Generator:
    m = _check_fine(mu_t, xi)
    return validate_generator(_lumped(L.rates, m, xi), xi.coarse)


def cg_generator_matrix(L: Generator, mu_t, xi: CoarseGrainingMap) -> np.ndarray:
    """Like :func:`cg_generator` but returns the bare matrix (no validation)."""
    return _lumped(L.rates, _check_fine(mu_t, xi), xi)


def effective_generator(L: Generator, rho, xi: CoarseGrainingMap) -> Generator:
    r = _check_fine(rho, xi)
    residual = float(np.abs(L.rates.T @ r).max())
    if residual > TOL_EFFECTIVE_STATIONARY:
        raise NotStationary(f"supplied measure has stationarity residual {residual:.3e}")
    return validate_generator(_lumped(L.rates, r, xi), xi.coarse)


@dataclass(frozen=True, eq=False)
class Restriction:
    """``L`` restricted to one level set; not a generator in general."""

    label: str
    states: StateSpace
    matrix: np.ndarray
    generator_like: bool
    row_sums: np.ndarray

    def closest_generator(self) -> np.ndarray:
        """Off-diagonal part with the diagonal reset to zero row sums."""
        A = np.array(self.matrix, dtype=float)
        np.fill_diagonal(A, 0.0)
        np.fill_diagonal(A, -A.sum(axis=1))
        return A

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def restrict(L: Generator, xi: CoarseGrainingMap, y, tol: float = 1e-10) -> Restriction:
    k = xi.coarse.index(y)
    block = xi.blocks[k]
    sub = np.array(L.rates[np.ix_(block, block)])
    sub.setflags(write=False)
    sums = sub.sum(axis=1)
    sums.setflags(write=False)
    return Restriction(xi.coarse.labels[k], StateSpace(tuple(xi.fine.labels[i] for i in block)),
                       sub, bool(np.all(np.abs(sums) <= tol)), sums)
