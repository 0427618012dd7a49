# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, M_PI

cnp.import_array()

cdef double LOG_2PI = log(2.0 * M_PI)


def mixture_velocity(const double[:, ::1] states, const double[::1] t,
                     const double[::1] weights, const double[:, ::1] means,
                     const double[::1] stds):
    cdef Py_ssize_t n = states.shape[0]
    cdef Py_ssize_t d = states.shape[1]
    cdef Py_ssize_t K = weights.shape[0]
    cdef Py_ssize_t i, k, j
    cdef double ti, one_m_t, r, sq, mx, total, w, var_k, coef_k
    out = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] out_v = out
    cdef double[::1] logw = np.log(np.asarray(weights))
    cdef double[::1] logit = np.empty(K)

    with nogil:
        for i in range(n):
            ti = t[i]
            one_m_t = 1.0 - ti
            mx = -1e308
            for k in range(K):
                var_k = ti * ti + one_m_t * one_m_t * stds[k] * stds[k]
                sq = 0.0
                for j in range(d):
                    r = states[i, j] - one_m_t * means[k, j]
                    sq = sq + r * r
                logit[k] = logw[k] - 0.5 * d * (LOG_2PI + log(var_k)) - 0.5 * sq / var_k
                if logit[k] > mx:
                    mx = logit[k]
            total = 0.0
            for k in range(K):
                logit[k] = exp(logit[k] - mx)
                total = total + logit[k]
            for k in range(K):
                w = logit[k] / total
                var_k = ti * ti + one_m_t * one_m_t * stds[k] * stds[k]
                coef_k = (ti - one_m_t * stds[k] * stds[k]) / var_k
                for j in range(d):
                    r = states[i, j] - one_m_t * means[k, j]
                    out_v[i, j] += w * (coef_k * r - means[k, j])
    return out


def mixture_responsibilities(const double[:, ::1] states, const double[::1] t,
                             const double[::1] weights, const double[:, ::1] means,
                             const double[::1] stds):
    cdef Py_ssize_t n = states.shape[0]
    cdef Py_ssize_t d = states.shape[1]
    cdef Py_ssize_t K = weights.shape[0]
    cdef Py_ssize_t i, k, j
    cdef double ti, one_m_t, r, sq, mx, total, var_k
    out = np.empty((n, K), dtype=np.float64)
    cdef double[:, ::1] out_v = out
    cdef double[::1] logw = np.log(np.asarray(weights))
    with nogil:
        for i in range(n):
            ti = t[i]
            one_m_t = 1.0 - ti
            mx = -1e308
            for k in range(K):
                var_k = ti * ti + one_m_t * one_m_t * stds[k] * stds[k]
                sq = 0.0
                for j in range(d):
                    r = states[i, j] - one_m_t * means[k, j]
                    sq = sq + r * r
                out_v[i, k] = logw[k] - 0.5 * d * (LOG_2PI + log(var_k)) - 0.5 * sq / var_k
                if out_v[i, k] > mx:
                    mx = out_v[i, k]
            total = 0.0
            for k in range(K):
                out_v[i, k] = exp(out_v[i, k] - mx)
                total = total + out_v[i, k]
            for k in range(K):
                out_v[i, k] = out_v[i, k] / total
    return out


cdef inline double _gamma(double x) nogil:
    if x <= 0.0:
        return exp(x)
    return x + 1.0


def gamma_clamp(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    cdef const double[::1] xv = flat
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = _gamma(xv[i])
    return out.reshape(arr.shape)


def bypass_trapezoid(const double[::1] times, const double[:, ::1] q,
                     const double[:, ::1] p, Py_ssize_t start):
    cdef Py_ssize_t n_nodes = q.shape[0]
    cdef Py_ssize_t d = q.shape[1]
    cdef Py_ssize_t last = n_nodes - 1
    cdef Py_ssize_t u, j
    cdef double dt, e_next
    exponents = np.zeros((n_nodes - start, d), dtype=np.float64)
    acc = np.zeros(d, dtype=np.float64)
    cdef double[:, ::1] ex = exponents
    cdef double[::1] acc_v = acc
    cdef double[::1] expo = np.zeros(d)
    cdef double[::1] e_cur = np.ones(d)
    with nogil:
        for u in range(start, last):
            dt = times[u + 1] - times[u]
            for j in range(d):
                expo[j] = expo[j] - 0.5 * dt * (p[u, j] + p[u + 1, j])
                ex[u + 1 - start, j] = expo[j]
                e_next = _gamma(expo[j])
                acc_v[j] = acc_v[j] + dt * (q[u, j] * e_cur[j] + q[u + 1, j] * e_next)
                e_cur[j] = e_next
        for j in range(d):
            acc_v[j] = -0.5 * acc_v[j]
    return acc, exponents


def linear_backward_euler(const double[::1] times, const double[:, ::1] q,
                          const double[:, ::1] p):
    cdef Py_ssize_t n_nodes = q.shape[0]
    cdef Py_ssize_t d = q.shape[1]
    cdef Py_ssize_t k, j
    cdef double h
    b = np.zeros(d, dtype=np.float64)
    cdef double[::1] bv = b
    with nogil:
        for k in range(n_nodes - 1, 0, -1):
            h = times[k - 1] - times[k]
            for j in range(d):
                bv[j] = bv[j] + h * (q[k, j] + p[k, j] * bv[j])
    return b
