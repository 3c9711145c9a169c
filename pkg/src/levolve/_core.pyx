# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: diffusion stepping and the batched curve machinery.

Semantics match ``levolve._kernels_py`` (the pure-numpy twin); the backend
module picks whichever is available.  Keep the two in lockstep when editing.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


cdef inline void _law(int code, double p0, double p1, double tau,
                      double* a, double* s) nogil:
    if code == 0:
        a[0] = p0
        s[0] = 0.0
    elif code == 1:
        a[0] = p0 + 2.0 * tau
        s[0] = 2.0 / a[0]
    else:
        a[0] = p0 - p1 * tau
        s[0] = -(0.5 * p1) / a[0]


cdef void _rate(double[::1] v, double tau, double[::1] kappa, double[::1] inv_w,
                int code, double p0, double p1, double[::1] out) nogil:
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t i
    cdef double a, s, flux_left, flux_right
    _law(code, p0, p1, tau, &a, &s)
    for i in range(n):
        flux_right = kappa[i] * (v[(i + 1) % n] - v[i])
        flux_left = kappa[(i - 1 + n) % n] * (v[i] - v[(i - 1 + n) % n])
        out[i] = (flux_right - flux_left) * inv_w[i] / a - s * v[i]


def rk2_diffusion(u, double tau0, double dtau, long n_steps,
                  kappa_hat, w_hat, int code, double p0, double p1):
    """Midpoint RK2 for du/dtau = (1/a(tau)) * Lhat(u) - s(tau) * u."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uu = np.array(u, dtype=np.float64)
    # np.array copies, so read-only stencil views are accepted
    cdef cnp.ndarray[cnp.float64_t, ndim=1] kk = np.array(kappa_hat, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ww = np.array(w_hat, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] inv_w = 1.0 / ww
    cdef Py_ssize_t n = uu.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] k1 = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mid = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] k2 = np.empty(n)
    cdef double[::1] uv = uu, kv = kk, iwv = inv_w, k1v = k1, midv = mid, k2v = k2
    cdef double tau = tau0
    cdef long step
    cdef Py_ssize_t i
    with nogil:
        for step in range(n_steps):
            _rate(uv, tau, kv, iwv, code, p0, p1, k1v)
            for i in range(n):
                midv[i] = uv[i] + 0.5 * dtau * k1v[i]
            _rate(midv, tau + 0.5 * dtau, kv, iwv, code, p0, p1, k2v)
            for i in range(n):
                uv[i] = uv[i] + dtau * k2v[i]
            tau = tau + dtau
    return uu, tau


def kinetic_action_grad(theta, gbar, double inv_ds):
    """Batched kinetic action and its interior gradient."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gb = np.ascontiguousarray(gbar, dtype=np.float64)
    cdef Py_ssize_t b = th.shape[0], m = th.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] action = np.zeros(b)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad = np.empty((b, m - 2))
    cdef double[:, ::1] thv = th, gradv = grad
    cdef double[::1] gbv = gb, actv = action
    cdef Py_ssize_t ib, k
    cdef double d, p_prev, p_cur, acc
    with nogil:
        for ib in range(b):
            acc = 0.0
            d = thv[ib, 1] - thv[ib, 0]
            p_prev = gbv[0] * inv_ds * d
            acc += 0.5 * d * p_prev
            for k in range(1, m - 1):
                d = thv[ib, k + 1] - thv[ib, k]
                p_cur = gbv[k] * inv_ds * d
                acc += 0.5 * d * p_cur
                gradv[ib, k - 1] = p_prev - p_cur
                p_prev = p_cur
            actv[ib] = acc
    return action, grad


def thomas_factor(gbar, double inv_ds):
    """LU data for the symmetric tridiagonal kinetic Hessian (interior nodes)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gb = np.ascontiguousarray(gbar, dtype=np.float64)
    cdef Py_ssize_t m = gb.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] diag = np.empty(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] off = np.empty(max(m - 1, 0))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] denom = np.empty(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cprime = np.empty(max(m - 1, 0))
    cdef Py_ssize_t k
    for k in range(m):
        diag[k] = (gb[k] + gb[k + 1]) * inv_ds
    for k in range(m - 1):
        off[k] = -gb[k + 1] * inv_ds
    denom[0] = diag[0]
    for k in range(m - 1):
        cprime[k] = off[k] / denom[k]
        denom[k + 1] = diag[k + 1] - off[k] * cprime[k]
    return off, denom, cprime


def thomas_solve(factors, rhs):
    """Solve T x = rhs for a batch of right-hand sides (B, M-2)."""
    off_a, denom_a, cprime_a = factors
    cdef cnp.ndarray[cnp.float64_t, ndim=1] off = np.ascontiguousarray(off_a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] denom = np.ascontiguousarray(denom_a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cprime = np.ascontiguousarray(cprime_a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] r = np.array(rhs, dtype=np.float64)
    cdef Py_ssize_t b = r.shape[0], m = r.shape[1]
    cdef double[:, ::1] rv = r
    cdef double[::1] offv = off, denomv = denom, cprimev = cprime
    cdef Py_ssize_t ib, k
    with nogil:
        for ib in range(b):
            rv[ib, 0] = rv[ib, 0] / denomv[0]
            for k in range(1, m):
                rv[ib, k] = (rv[ib, k] - offv[k - 1] * rv[ib, k - 1]) / denomv[k]
            for k in range(m - 2, -1, -1):
                rv[ib, k] = rv[ib, k] - cprimev[k] * rv[ib, k + 1]
    return r
