# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ADMM iterations for the weighted l1 / l2-ball problem.

Mirrors ``_admm_py`` line for line; the matrix-vector products go through
BLAS ``dgemv`` on a Fortran view of the C-ordered ``V``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()

cdef enum:
    SECULAR_MAXIT = 100
    ADAPT_EVERY = 10


cdef double _project(double[:, ::1] V, const double[::1] sig, const double[::1] b1,
                     double rho2, double[::1] v, double[::1] c0, double[::1] dc,
                     double[::1] out) nogil:
    """out <- projection of v; returns the multiplier."""
    cdef int q = <int>V.shape[0]
    cdef int k = <int>V.shape[1]
    cdef int one = 1
    cdef double alpha = 1.0, beta = 0.0
    cdef char trans_n = b'N', trans_t = b'T'
    cdef Py_ssize_t i
    cdef double lam = 0.0, ti, nrm2, inv_rho, nr2, nr, phi, dphi, den, r, step, s2
    cdef int it

    # c0 = V^T v  (V is q x k C-order == k x q Fortran)
    dgemv(&trans_n, &k, &q, &alpha, &V[0, 0], &k, &v[0], &one, &beta, &c0[0], &one)

    if rho2 <= 0.0:
        for i in range(k):
            dc[i] = b1[i] / sig[i] - c0[i]
        lam = INFINITY
    else:
        nrm2 = 0.0
        for i in range(k):
            ti = sig[i] * c0[i] - b1[i]
            nrm2 += ti * ti
        if nrm2 <= rho2:
            for i in range(q):
                out[i] = v[i]
            return 0.0
        inv_rho = 1.0 / sqrt(rho2)
        for it in range(SECULAR_MAXIT):
            nr2 = 0.0
            dphi = 0.0
            for i in range(k):
                s2 = sig[i] * sig[i]
                den = 1.0 + lam * s2
                r = (sig[i] * c0[i] - b1[i]) / den
                nr2 += r * r
                dphi += r * r * s2 / den
            nr = sqrt(nr2)
            phi = 1.0 / nr - inv_rho
            dphi = dphi / (nr2 * nr)
            step = phi / dphi
            lam -= step
            if lam < 0.0:
                lam = 0.0
            if fabs(step) <= 1e-15 * (lam if lam > 1e-300 else 1e-300) or fabs(phi) <= 1e-15 * inv_rho:
                break
        for i in range(k):
            s2 = sig[i] * sig[i]
            dc[i] = (c0[i] + lam * sig[i] * b1[i]) / (1.0 + lam * s2) - c0[i]

    for i in range(q):
        out[i] = v[i]
    # out += V dc
    dgemv(&trans_t, &k, &q, &alpha, &V[0, 0], &k, &dc[0], &one, &alpha, &out[0], &one)
    return lam


def project_ball(double[:, ::1] V, const double[::1] sig, const double[::1] b1,
                 double rho2, v):
    cdef Py_ssize_t q = V.shape[0], k = V.shape[1]
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64).copy()
    out = np.empty(q)
    c0 = np.empty(max(k, 1))
    dc = np.empty(max(k, 1))
    cdef double lam
    if k == 0:
        return np.asarray(vv).copy(), 0.0
    lam = _project(V, sig, b1, rho2, vv, c0, dc, out)
    return out, lam


def admm_chunk(double[:, ::1] V, const double[::1] sig, const double[::1] b1,
               double rho2, const double[::1] w, double[::1] z, double[::1] u,
               double rho, int max_iter, double tol_abs, double tol_rel):
    cdef Py_ssize_t q = V.shape[0], k = V.shape[1]
    cdef Py_ssize_t i
    cdef double[::1] v = np.empty(q)
    cdef double[::1] s = np.empty(q)
    cdef double[::1] z_old = np.empty(q)
    cdef double[::1] c0 = np.empty(max(k, 1))
    cdef double[::1] dc = np.empty(max(k, 1))
    cdef double sq = sqrt(<double>q)
    cdef double a, thr, r, d, ns, nz, nu, eps_pri, eps_dual, diff
    cdef int it = 0
    cdef bint converged = False

    with nogil:
        while it < max_iter:
            it += 1
            for i in range(q):
                v[i] = z[i] - u[i]
            if k > 0:
                _project(V, sig, b1, rho2, v, c0, dc, s)
            else:
                for i in range(q):
                    s[i] = v[i]
            r = 0.0
            d = 0.0
            ns = 0.0
            nz = 0.0
            nu = 0.0
            for i in range(q):
                z_old[i] = z[i]
                a = s[i] + u[i]
                thr = w[i] / rho
                if a > thr:
                    z[i] = a - thr
                elif a < -thr:
                    z[i] = a + thr
                else:
                    z[i] = 0.0
                diff = s[i] - z[i]
                u[i] += diff
                r += diff * diff
                diff = z[i] - z_old[i]
                d += diff * diff
                ns += s[i] * s[i]
                nz += z[i] * z[i]
                nu += u[i] * u[i]
            r = sqrt(r)
            d = rho * sqrt(d)
            eps_pri = sq * tol_abs + tol_rel * sqrt(ns if ns > nz else nz)
            eps_dual = sq * tol_abs + tol_rel * rho * sqrt(nu)
            if r <= eps_pri and d <= eps_dual:
                converged = True
                break
            if it % ADAPT_EVERY == 0:
                if r > 10.0 * d:
                    rho *= 2.0
                    for i in range(q):
                        u[i] *= 0.5
                elif d > 10.0 * r:
                    rho *= 0.5
                    for i in range(q):
                        u[i] *= 2.0

    return np.asarray(s), rho, it, converged
