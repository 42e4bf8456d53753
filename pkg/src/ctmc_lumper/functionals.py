"""Relative entropy, total variation, Fisher information and log-Sobolev estimates."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import kernels
from .chain import Generator, ProbabilityVector, StateSpace
from .errors import (
    DegenerateRatio,
    DimensionMismatch,
    NonPositiveMeasure,
    TrajectoryTooShort,
    ValidationError,
)

H_MIN = 1e-10
N_STARTS = 50
GRID_RESOLUTION = 1e-5


def _vec(p):
    if isinstance(p, ProbabilityVector):
        return p.mass
    return np.asarray(p, dtype=float)


def _pair(nu, zeta):
    a, b = _vec(nu), _vec(zeta)
    if a.shape != b.shape:
        raise DimensionMismatch(f"measures live on spaces of size {a.shape} and {b.shape}")
    return a, b


def _rates(M):
    return M.rates if isinstance(M, Generator) else np.asarray(M, dtype=float)


def relative_entropy(nu, zeta) -> float:
    """``sum nu log(nu/zeta)``; ``+inf`` when ``nu`` charges a zero of ``zeta``."""
    a, b = _pair(nu, zeta)
    return float(kernels.relative_entropy(a, b))


def total_variation(nu, zeta) -> float:
    a, b = _pair(nu, zeta)
    return float(np.abs(a - b).sum())


def total_variation_half(nu, zeta) -> float:
    """Half of :func:`total_variation`, i.e. the sup over events."""
    return 0.5 * total_variation(nu, zeta)


def ckp_gap(nu, zeta) -> float:
    """``sqrt(2 H(nu|zeta)) - TV(nu, zeta)``; nonnegative by the CKP inequality."""
    return float(np.sqrt(2.0 * relative_entropy(nu, zeta)) - total_variation(nu, zeta))


def _positive_pair(nu, zeta, M):
    a, b = _pair(nu, zeta)
    R = _rates(M)
    if R.shape != (a.size, a.size):
        raise DimensionMismatch(f"matrix of shape {R.shape} does not act on {a.size} states")
    if a.min() <= 0 or b.min() <= 0:
        raise NonPositiveMeasure("Fisher information needs strictly positive measures")
    return a, b, R


def fisher_information(nu, zeta, M) -> float:
    """Fisher information of ``nu`` relative to ``zeta`` under ``M``.

    ``M`` may be a :class:`Generator` or any square matrix with nonnegative
    off-diagonal entries (for instance a level-set restriction); only the
    off-diagonal part enters.
    """
    a, b, R = _positive_pair(nu, zeta, M)
    return float(kernels.fisher_information(np.ascontiguousarray(R), b, a))


def fisher_information_direct(nu, zeta, M) -> float:
    """The same quantity through ``-(M log l) + (M l)/l`` weighted by ``nu``.

    Agrees with :func:`fisher_information` whenever ``M`` has zero row sums.
    """
    a, b, R = _positive_pair(nu, zeta, M)
    ell = a / b
    return float(np.sum((-(R @ np.log(ell)) + (R @ ell) / ell) * a))


def entropy_dissipation_residual(L, mu_traj, rho, method: str = "integral") -> float:
    """Discrepancy in the entropy-dissipation identity along a trajectory.

    ``method="integral"`` checks ``H(mu_t) - H(mu_0) + int_0^t R(mu_s) ds``
    with trapezoid quadrature; ``method="centered"`` checks
    ``dH/dt + R`` with centered differences at interior grid points.  Both
    are second order in the grid step.
    """
    t, values = _traj_arrays(mu_traj)
    if t.size < 3:
        raise TrajectoryTooShort(f"need at least 3 time points, got {t.size}")
    r = _vec(rho)
    Hs = np.array([relative_entropy(v, r) for v in values])
    Rs = np.array([fisher_information(v, r, L) for v in values])
    if method == "integral":
        res = Hs - Hs[0] + cumulative_trapezoid(Rs, t, initial=0.0)
        return float(np.max(np.abs(res)))
    if method == "centered":
        dH = centered_derivative(Hs, t)
        return float(np.max(np.abs(dH[1:-1] + Rs[1:-1])))
    raise ValidationError(f"unknown method {method!r}")


def centered_derivative(values, t):
    """Second-order centered differences on a possibly nonuniform grid."""
    return np.gradient(np.asarray(values, dtype=float), np.asarray(t, dtype=float), axis=0, edge_order=2)


def _traj_arrays(traj):
    if hasattr(traj, "values") and hasattr(traj, "times"):
        return np.asarray(traj.times, dtype=float), np.asarray(traj.values, dtype=float)
    t, v = traj
    return np.asarray(t, dtype=float), np.asarray(v, dtype=float)


# -- log-Sobolev ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LsiEstimate:
    alpha: float
    witness: ProbabilityVector
    method: str
    samples: int

    @property
    def argmin_witness(self) -> ProbabilityVector:
        return self.witness

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "witness": self.witness.mass.tolist(),
                "method": self.method, "samples": self.samples}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _ratio_2state(A, zeta, p):
    """R/H on the segment ``nu = (p, 1-p)``, vectorised over ``p``."""
    nu = np.stack([p, 1.0 - p], axis=1)
    ell = nu / zeta
    logl = np.log(ell)
    H = np.sum(zeta * (ell * logl - ell + 1.0), axis=1)
    d = logl[:, 1] - logl[:, 0]
    R = nu[:, 0] * A[0, 1] * (np.expm1(d) - d) + nu[:, 1] * A[1, 0] * (np.expm1(-d) + d)
    return R, H


def _grid_estimate(A, zeta, h_min):
    p = np.arange(1, int(round(1.0 / GRID_RESOLUTION))) * GRID_RESOLUTION
    R, H = _ratio_2state(A, zeta, p)
    keep = H >= h_min
    ratio = np.where(keep, R / np.where(keep, H, 1.0), np.inf)
    k = int(np.argmin(ratio))
    return float(ratio[k]), np.array([p[k], 1.0 - p[k]]), int(keep.sum())


def _spectral_starts(A, zeta):
    """Softmax coordinates of small perturbations of ``zeta`` along the
    slowest mode of the symmetrised Dirichlet form, in both directions and
    at a few amplitudes."""
    W = zeta[:, None] * A
    S = 0.5 * (W + W.T)
    K = np.diag(S.sum(axis=1)) - S
    s = np.sqrt(zeta)
    _, vecs = np.linalg.eigh(K / s[:, None] / s[None, :])
    f = vecs[:, 1] / s
    f = f / np.max(np.abs(f))
    starts = []
    for amp in (1e-3, 1e-2, 1e-1, 0.5):
        for sign in (1.0, -1.0):
            nu = zeta * (1.0 + sign * amp * f)
            if nu.min() > 0:
                starts.append(np.log(nu / nu.sum()))
    return starts


def estimate_lsi_constant(M, zeta, seed: int = 0, n_starts: int = N_STARTS,
                          h_min: float = H_MIN, method: str = "auto") -> LsiEstimate:
    """Numerical infimum of ``R_M(nu|zeta) / H(nu|zeta)`` over positive ``nu``.

    Measures with ``H(nu|zeta) < h_min`` are excluded.  On two states the
    default is an exhaustive grid; otherwise (or with
    ``method="multistart_descent"``) gradient descent runs from
    ``n_starts`` Dirichlet(1) samples plus a few deterministic perturbations
    of ``zeta`` along its slowest mode, and the smallest ratio wins.
    """
    z = _vec(zeta)
    A = np.array(_rates(M), dtype=float)
    if A.shape != (z.size, z.size):
        raise DimensionMismatch(f"matrix of shape {A.shape} does not act on {z.size} states")
    if z.min() <= 0:
        raise NonPositiveMeasure("reference measure must be strictly positive")
    if z.size < 2:
        raise ValidationError("log-Sobolev constant needs at least two states")
    np.fill_diagonal(A, 0.0)
    if A.min() < 0:
        raise ValidationError("off-diagonal rates must be nonnegative")
    space = zeta.space if isinstance(zeta, ProbabilityVector) else StateSpace.range(z.size)

    if method == "auto":
        method = "grid" if z.size == 2 else "multistart_descent"
    if method == "grid":
        if z.size != 2:
            raise ValidationError("grid estimation is only available on two states")
        alpha, nu, samples = _grid_estimate(A, z, h_min)
    elif method == "multistart_descent":
        rng = np.random.default_rng(seed)
        starts = [np.log(rng.dirichlet(np.ones(z.size))) for _ in range(n_starts)]
        starts += _spectral_starts(A, z)
        best = (np.inf, None)
        for theta in starts:
            F, nu_k, _ = kernels.lsi_descent(A, z, theta, h_min)
            # strict comparison keeps the earliest start on ties
            if F < best[0]:
                best = (float(F), np.asarray(nu_k))
        alpha, nu = best
        samples = len(starts)
        if nu is None:
            raise DegenerateRatio("no start produced a finite ratio")
    else:
        raise ValidationError(f"unknown method {method!r}")

    if not alpha > 0:
        raise DegenerateRatio(f"estimated log-Sobolev ratio {alpha!r} is not positive")
    nu = nu / nu.sum()
    # report the ratio at the returned witness itself
    alpha = fisher_information(nu, z, A) / relative_entropy(nu, z)
    return LsiEstimate(float(alpha), ProbabilityVector(space, nu), method, int(samples))
