"""Pure numpy implementations of the hot kernels.

Mirrors ``_kernels.pyx`` function for function; ``kernels.py`` picks one at
import time.  Inputs are assumed validated by the callers.
"""
import numpy as np


def relative_entropy(nu, zeta):
    nu = np.asarray(nu, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    total = 0.0
    support = nu > 0
    if np.any(zeta[support] <= 0):
        return np.inf
    total = float(np.sum(nu[support] * np.log(nu[support] / zeta[support])))
    return max(total, 0.0)


def fisher_information(M, zeta, nu):
    """Fisher information in the ``l'/l - 1 - log(l'/l)`` form.

    Diagonal terms vanish identically, so only off-diagonal rates matter; the
    bracket is evaluated as ``expm1(d) - d`` with ``d = log l' - log l``.
    """
    M = np.asarray(M, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    nu = np.asarray(nu, dtype=float)
    logl = np.log(nu) - np.log(zeta)
    d = logl[None, :] - logl[:, None]
    bracket = np.expm1(d) - d
    np.fill_diagonal(bracket, 0.0)
    return float(np.sum(M * nu[:, None] * bracket))


def _objective(A, zeta, theta):
    t = theta - theta.max()
    w = np.exp(t)
    nu = w / w.sum()
    logl = np.log(nu) - np.log(zeta)
    ell = nu / zeta
    # entropy as sum of zeta * (l log l - l + 1); nonnegative termwise
    H = float(np.sum(zeta * (ell * logl - ell + 1.0)))
    d = logl[None, :] - logl[:, None]
    R = float(np.sum(A * nu[:, None] * (np.expm1(d) - d)))
    return nu, logl, H, R


def lsi_descent(A, zeta, theta0, h_min, max_iter=500, tol=1e-10):
    """Minimise R/H over the open simplex from one start.

    ``A`` holds off-diagonal rates (zero diagonal).  The iterate lives in
    softmax coordinates; steps landing inside the entropy ball ``H < h_min``
    are rejected.  Returns ``(ratio, nu, iterations)``.
    """
    A = np.asarray(A, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    q = A.sum(axis=1)
    colz = (A.T @ zeta) / zeta
    theta = np.array(theta0, dtype=float)

    nu, logl, H, R = _objective(A, zeta, theta)
    if H < h_min:
        return np.inf, nu, 0
    F = R / H
    grad = _gradient(A, q, colz, nu, logl, H, R, F)
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        gnorm2 = float(grad @ grad)
        if gnorm2 < tol * tol:
            break
        accepted = False
        while step > 1e-14:
            trial = theta - step * grad
            nu_t, logl_t, H_t, R_t = _objective(A, zeta, trial)
            if H_t >= h_min:
                F_t = R_t / H_t
                if F_t <= F - 1e-4 * step * gnorm2:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        improvement = F - F_t
        theta, nu, logl, H, R, F = trial, nu_t, logl_t, H_t, R_t, F_t
        grad = _gradient(A, q, colz, nu, logl, H, R, F)
        step *= 2.0
        if improvement <= 1e-14 * max(1.0, abs(F)):
            break
    return F, nu, it


def _gradient(A, q, colz, nu, logl, H, R, F):
    dR = colz - (A.T @ nu) / nu - A @ logl + q * logl
    dH = logl
    g = (dR - F * dH) / H
    return nu * (g - nu @ g)


def g_series(L, assign, cg, eta):
    """``g_t = max_x sum_x' L(x,x') [phi(xi x) - phi(xi x')]``, ``phi = log(cg/eta)``.

    ``cg`` and ``eta`` are (K, m) arrays over the coarse space, ``assign`` maps
    fine indices to coarse indices.
    """
    L = np.asarray(L, dtype=float)
    phi = np.log(np.asarray(cg, dtype=float)) - np.log(np.asarray(eta, dtype=float))
    lifted = phi[:, assign]                      # (K, n)
    rowsum = L.sum(axis=1)
    f = lifted * rowsum[None, :] - lifted @ L.T  # (K, n)
    return f.max(axis=1)
