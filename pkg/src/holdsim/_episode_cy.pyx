# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled episode-attempt kernel.

Consumes a block of pre-drawn uniforms (5 per attempt: horizon, start day,
coin, buy price, sell price) and runs the validate/price/return loop,
tracking the consecutive-failure stop rule.  The pure-Python kernel in
``episode_py`` consumes the same layout and must produce the same output.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

STOP_NONE = 0
STOP_TARGET = 1
STOP_FAILURES = 2


def process_block(double[:, ::1] u,
                  double[:, ::1] high,
                  double[:, ::1] low,
                  double[::1] gamma,
                  int lo, int hi, double fee,
                  long needed, long fail_streak, long fail_limit):
    """Run up to one block of attempts; see episode_py.process_block."""
    cdef Py_ssize_t n_attempts = u.shape[0]
    cdef Py_ssize_t T = high.shape[0]
    cdef Py_ssize_t C = high.shape[1]
    cdef Py_ssize_t i, k = 0
    cdef long streak = fail_streak
    cdef long n_discarded = 0, n_rejected = 0
    cdef long tau, s, e, c, span
    cdef double ls, hs, le, he, p_buy, p_sell, g, r_rf, x
    cdef double one_minus_fee = 1.0 - fee
    cdef int stop_code = STOP_NONE
    cdef Py_ssize_t used = n_attempts

    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_c = np.empty(n_attempts, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_s = np.empty(n_attempts, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_tau = np.empty(n_attempts, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_pb = np.empty(n_attempts, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_ps = np.empty(n_attempts, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_g = np.empty(n_attempts, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_rf = np.empty(n_attempts, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_x = np.empty(n_attempts, dtype=np.float64)

    for i in range(n_attempts):
        tau = lo + <long>(u[i, 0] * (hi - lo + 1))
        if tau > hi:
            tau = hi
        span = T - tau
        if span <= 0:
            n_discarded += 1
            streak += 1
            if streak >= fail_limit:
                stop_code = STOP_FAILURES
                used = i + 1
                break
            continue
        s = <long>(u[i, 1] * span)
        if s > span - 1:
            s = span - 1
        c = <long>(u[i, 2] * C)
        if c > C - 1:
            c = C - 1
        e = s + tau
        ls = low[s, c]
        hs = high[s, c]
        le = low[e, c]
        he = high[e, c]
        # NaN comparisons are false, so missing data fails the filter.
        if not (ls > 0.0 and hs >= ls and le > 0.0 and he >= le):
            n_rejected += 1
            streak += 1
            if streak >= fail_limit:
                stop_code = STOP_FAILURES
                used = i + 1
                break
            continue
        streak = 0
        p_buy = ls + u[i, 3] * (hs - ls)
        p_sell = le + u[i, 4] * (he - le)
        r_rf = exp(gamma[e] - gamma[s]) - 1.0
        g = one_minus_fee * (p_sell / p_buy) * one_minus_fee - 1.0
        x = g - r_rf
        out_c[k] = c
        out_s[k] = s
        out_tau[k] = tau
        out_pb[k] = p_buy
        out_ps[k] = p_sell
        out_g[k] = g
        out_rf[k] = r_rf
        out_x[k] = x
        k += 1
        if k == needed:
            stop_code = STOP_TARGET
            used = i + 1
            break

    episodes = dict(
        coin=out_c[:k].copy(),
        s=out_s[:k].copy(),
        tau=out_tau[:k].copy(),
        p_buy=out_pb[:k].copy(),
        p_sell=out_ps[:k].copy(),
        g=out_g[:k].copy(),
        r_rf=out_rf[:k].copy(),
        x=out_x[:k].copy(),
    )
    return episodes, streak, stop_code, used, n_discarded, n_rejected
