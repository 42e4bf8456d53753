# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; see ``_kernels_py.py`` for the reference."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, expm1, INFINITY, isfinite

cnp.import_array()


def relative_entropy(nu_in, zeta_in):
    cdef const double[::1] nu = np.ascontiguousarray(nu_in, dtype=np.float64)
    cdef const double[::1] zeta = np.ascontiguousarray(zeta_in, dtype=np.float64)
    cdef Py_ssize_t i, n = nu.shape[0]
    cdef double total = 0.0
    for i in range(n):
        if nu[i] > 0:
            if zeta[i] <= 0:
                return INFINITY
            total += nu[i] * log(nu[i] / zeta[i])
    return total if total > 0 else 0.0


def fisher_information(M_in, zeta_in, nu_in):
    cdef const double[:, ::1] M = np.ascontiguousarray(M_in, dtype=np.float64)
    cdef const double[::1] zeta = np.ascontiguousarray(zeta_in, dtype=np.float64)
    cdef const double[::1] nu = np.ascontiguousarray(nu_in, dtype=np.float64)
    cdef Py_ssize_t n = nu.shape[0]
    cdef double[::1] logl = np.empty(n)
    cdef Py_ssize_t i, j
    cdef double d, row, total = 0.0
    for i in range(n):
        logl[i] = log(nu[i]) - log(zeta[i])
    for i in range(n):
        row = 0.0
        for j in range(n):
            if j != i and M[i, j] != 0.0:
                d = logl[j] - logl[i]
                row += M[i, j] * (expm1(d) - d)
        total += nu[i] * row
    return total


cdef double _objective(const double[:, ::1] A, const double[::1] zeta, double[::1] theta,
                       double[::1] nu, double[::1] logl, double* H_out) nogil:
    cdef Py_ssize_t i, j, n = theta.shape[0]
    cdef double tmax = theta[0], s = 0.0, H = 0.0, R = 0.0, row, d, ell
    for i in range(1, n):
        if theta[i] > tmax:
            tmax = theta[i]
    for i in range(n):
        nu[i] = exp(theta[i] - tmax)
        s += nu[i]
    for i in range(n):
        nu[i] /= s
        logl[i] = log(nu[i]) - log(zeta[i])
        ell = nu[i] / zeta[i]
        H += zeta[i] * (ell * logl[i] - ell + 1.0)
    for i in range(n):
        row = 0.0
        for j in range(n):
            if A[i, j] != 0.0:
                d = logl[j] - logl[i]
                row += A[i, j] * (expm1(d) - d)
        R += nu[i] * row
    H_out[0] = H
    return R


cdef void _gradient(const double[:, ::1] A, double[::1] q, double[::1] colz,
                    double[::1] nu, double[::1] logl, double H, double F,
                    double[::1] grad) nogil:
    cdef Py_ssize_t i, j, n = nu.shape[0]
    cdef double atnu, alog, mean = 0.0
    for i in range(n):
        atnu = 0.0
        alog = 0.0
        for j in range(n):
            atnu += A[j, i] * nu[j]
            alog += A[i, j] * logl[j]
        grad[i] = (colz[i] - atnu / nu[i] - alog + q[i] * logl[i] - F * logl[i]) / H
        mean += nu[i] * grad[i]
    for i in range(n):
        grad[i] = nu[i] * (grad[i] - mean)


def lsi_descent(A_in, zeta_in, theta0, double h_min, int max_iter=500, double tol=1e-10):
    cdef const double[:, ::1] A = np.ascontiguousarray(A_in, dtype=np.float64)
    cdef const double[::1] zeta = np.ascontiguousarray(zeta_in, dtype=np.float64)
    cdef Py_ssize_t n = zeta.shape[0], i, j
    cdef double[::1] theta = np.array(theta0, dtype=np.float64)
    cdef double[::1] trial = np.empty(n)
    cdef double[::1] nu = np.empty(n)
    cdef double[::1] logl = np.empty(n)
    cdef double[::1] nu_t = np.empty(n)
    cdef double[::1] logl_t = np.empty(n)
    cdef double[::1] grad = np.empty(n)
    cdef double[::1] q = np.zeros(n)
    cdef double[::1] colz = np.zeros(n)
    cdef double H = 0.0, H_t = 0.0, R, R_t, F, F_t = 0.0, gnorm2, step, improvement
    cdef int it = 0
    cdef bint accepted

    for i in range(n):
        for j in range(n):
            q[i] += A[i, j]
            colz[i] += A[j, i] * zeta[j]
        colz[i] /= zeta[i]

    R = _objective(A, zeta, theta, nu, logl, &H)
    if not (H >= h_min):
        return np.inf, np.asarray(nu).copy(), 0
    F = R / H
    _gradient(A, q, colz, nu, logl, H, F, grad)
    step = 1.0
    with nogil:
        while it < max_iter:
            it += 1
            gnorm2 = 0.0
            for i in range(n):
                gnorm2 += grad[i] * grad[i]
            if gnorm2 < tol * tol:
                break
            accepted = False
            while step > 1e-14:
                for i in range(n):
                    trial[i] = theta[i] - step * grad[i]
                R_t = _objective(A, zeta, trial, nu_t, logl_t, &H_t)
                if H_t >= h_min:
                    F_t = R_t / H_t
                    if isfinite(F_t) and F_t <= F - 1e-4 * step * gnorm2:
                        accepted = True
                        break
                step *= 0.5
            if not accepted:
                break
            improvement = F - F_t
            for i in range(n):
                theta[i] = trial[i]
                nu[i] = nu_t[i]
                logl[i] = logl_t[i]
            H = H_t
            F = F_t
            _gradient(A, q, colz, nu, logl, H, F, grad)
            step *= 2.0
            if improvement <= 1e-14 * (F if F > 1.0 else 1.0):
                break
    return F, np.asarray(nu).copy(), it


def g_series(L_in, assign_in, cg_in, eta_in):
    cdef const double[:, ::1] L = np.ascontiguousarray(L_in, dtype=np.float64)
    cdef const cnp.intp_t[::1] assign = np.ascontiguousarray(assign_in, dtype=np.intp)
    cdef const double[:, ::1] cg = np.ascontiguousarray(cg_in, dtype=np.float64)
    cdef const double[:, ::1] eta = np.ascontiguousarray(eta_in, dtype=np.float64)
    cdef Py_ssize_t K = cg.shape[0], m = cg.shape[1], n = L.shape[0], k, i, j, y
    cdef double[::1] phi = np.empty(m)
    # rates from each fine state into each coarse block
    cdef double[:, ::1] W = np.zeros((n, m))
    out = np.empty(K)
    cdef double[::1] g = out
    cdef double f, best, p
    with nogil:
        for i in range(n):
            for j in range(n):
                W[i, assign[j]] += L[i, j]
        for k in range(K):
            for y in range(m):
                phi[y] = log(cg[k, y]) - log(eta[k, y])
            best = -INFINITY
            for i in range(n):
                p = phi[assign[i]]
                f = 0.0
                for y in range(m):
                    f += W[i, y] * (p - phi[y])
                if f > best:
                    best = f
            g[k] = best
    return out
