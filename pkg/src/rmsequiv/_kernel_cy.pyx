# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-loop kernels: per-draw root solving and conditional tails.

Must stay arithmetic-identical to _kernel_py (same accumulation order, same
bisection branches, same libm erfc) so that both backends agree bitwise.
"""
from libc.math cimport erfc, sqrt

import numpy as np

BACKEND_NAME = "cython"

cdef double SQRT1_2 = sqrt(0.5)
cdef double HI_CAP = 1e300
cdef double REL_TOL = 1e-10


cdef double _ssr(const double* ybar, const double* m, Py_ssize_t n,
                 double qw, double sigma_b2) noexcept nogil:
    cdef double sw = 0.0, sy = 0.0, w, yt, d, out = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        w = 1.0 / (sigma_b2 + qw / m[i])
        sw += w
        sy += w * ybar[i]
    yt = sy / sw
    for i in range(n):
        w = 1.0 / (sigma_b2 + qw / m[i])
        d = ybar[i] - yt
        out += w * d * d
    return out


cdef double _ssr_pre(const double* ybar, const double* qwm, Py_ssize_t n,
                     double sigma_b2) noexcept nogil:
    # qwm[i] = qw / m[i], hoisted out of the bisection; values match _ssr bitwise
    cdef double sw = 0.0, sy = 0.0, w, yt, d, out = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        w = 1.0 / (sigma_b2 + qwm[i])
        sw += w
        sy += w * ybar[i]
    yt = sy / sw
    for i in range(n):
        w = 1.0 / (sigma_b2 + qwm[i])
        d = ybar[i] - yt
        out += w * d * d
    return out


cdef double _solve_qb(const double* ybar, const double* qwm, Py_ssize_t n,
                      double target) noexcept nogil:
    cdef double f0 = _ssr_pre(ybar, qwm, n, 0.0)
    if target >= f0:
        return 0.0
    cdef double lo = 0.0, hi = 1.0, mid, f
    while True:
        if _ssr_pre(ybar, qwm, n, hi) <= target:
            break
        hi *= 2.0
        if hi > HI_CAP:
            break
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f = _ssr_pre(ybar, qwm, n, mid)
        if f > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= REL_TOL * hi:
            break
    return 0.5 * (lo + hi)


def ssr_batch(const double[::1] ybar, const double[::1] m,
              const double[::1] qw, const double[::1] sigma_b2):
    cdef Py_ssize_t B = qw.shape[0], n = m.shape[0], k
    out_arr = np.empty(B)
    cdef double[::1] out = out_arr
    with nogil:
        for k in range(B):
            out[k] = _ssr(&ybar[0], &m[0], n, qw[k], sigma_b2[k])
    return out_arr


def solve_qb_batch(const double[::1] ybar, const double[::1] m,
                   const double[::1] qw, const double[::1] target):
    cdef Py_ssize_t B = qw.shape[0], n = m.shape[0], k, i
    out_arr = np.empty(B)
    cdef double[::1] out = out_arr
    cdef double[::1] qwm = np.empty(n)
    with nogil:
        for k in range(B):
            for i in range(n):
                qwm[i] = qw[k] / m[i]
            out[k] = _solve_qb(&ybar[0], &qwm[0], n, target[k])
    return out_arr


def wtilde_batch(const double[::1] ybar, const double[::1] m,
                 const double[::1] qw, const double[::1] qb):
    cdef Py_ssize_t B = qw.shape[0], n = m.shape[0], k, i
    sw_arr = np.empty(B)
    yt_arr = np.empty(B)
    cdef double[::1] sw = sw_arr
    cdef double[::1] yt = yt_arr
    cdef double acc_w, acc_y, w
    with nogil:
        for k in range(B):
            acc_w = 0.0
            acc_y = 0.0
            for i in range(n):
                w = 1.0 / (qb[k] + qw[k] / m[i])
                acc_w += w
                acc_y += w * ybar[i]
            sw[k] = acc_w
            yt[k] = acc_y / acc_w
    return sw_arr, yt_arr


def exceed_batch(const double[::1] s, const double[::1] sum_wt,
                 const double[::1] ytilde, double q):
    cdef Py_ssize_t B = s.shape[0], k
    out_arr = np.empty(B)
    cdef double[::1] out = out_arr
    cdef double arg, sq, sl, v
    with nogil:
        for k in range(B):
            arg = sum_wt[k] * (q - s[k])
            if arg <= 0.0:
                out[k] = 1.0
            else:
                sq = sqrt(arg)
                sl = sqrt(ytilde[k] * ytilde[k] * sum_wt[k])
                v = 0.5 * erfc((sq - sl) * SQRT1_2) + 0.5 * erfc((sq + sl) * SQRT1_2)
                out[k] = v if v < 1.0 else 1.0
    return out_arr
