"""Pure-numpy episode-attempt kernel (fallback for the compiled version).

Vectorizes the same attempt sequence as ``_episode_cy.process_block``:
given one block of uniforms it reproduces, attempt by attempt, the
validate/price/return loop including the consecutive-failure stop rule,
so both kernels yield identical episodes from identical draws.
"""

from __future__ import annotations

import math

import numpy as np

STOP_NONE = 0
STOP_TARGET = 1
STOP_FAILURES = 2


def process_block(u, high, low, gamma, lo, hi, fee, needed, fail_streak, fail_limit):
    """Process one block of attempts.

    Parameters
    ----------
    u : (B, 5) float64
        Uniform draws per attempt: horizon, start day, coin, buy-price
        fraction, sell-price fraction.
    high, low : (T, C) float64
        Daily price bands on the common calendar, NaN where unobserved.
    gamma : (T,) float64
        Cumulative log risk-free return per day.
    lo, hi : int
        Inclusive holding-horizon bounds in days.
    needed : int
        Episodes still required; processing stops once collected.
    fail_streak : int
        Consecutive failures carried in from the previous block.
    fail_limit : int
        Consecutive-failure stop threshold.

    Returns
    -------
    (episodes, fail_streak, stop_code, attempts_used, n_discarded, n_rejected)
    """
    n_attempts = u.shape[0]
    T, C = high.shape

    tau = lo + np.minimum((u[:, 0] * (hi - lo + 1)).astype(np.int64), hi - lo)
    span = T - tau
    in_range = span > 0
    s = np.zeros(n_attempts, dtype=np.int64)
    s[in_range] = np.minimum(
        (u[in_range, 1] * span[in_range]).astype(np.int64), span[in_range] - 1
    )
    c = np.minimum((u[:, 2] * C).astype(np.int64), C - 1)
    e = np.where(in_range, s + tau, 0)

    ls = low[s, c]
    hs = high[s, c]
    le = low[e, c]
    he = high[e, c]
    with np.errstate(invalid="ignore"):
        valid = in_range & (ls > 0.0) & (hs >= ls) & (le > 0.0) & (he >= le)

    idx = np.arange(n_attempts)
    last_success = np.maximum.accumulate(np.where(valid, idx, -1))
    # Run of consecutive failures ending at each attempt (inclusive).
    run = np.where(last_success >= 0, idx - last_success, idx + fail_streak + 1)

    fail_hits = np.flatnonzero(~valid & (run >= fail_limit))
    success_pos = np.flatnonzero(valid)
    stop_fail = int(fail_hits[0]) if fail_hits.size else None
    stop_succ = int(success_pos[needed - 1]) if success_pos.size >= needed else None

    if stop_fail is not None and (stop_succ is None or stop_fail < stop_succ):
        used = stop_fail + 1
        take = success_pos[success_pos < stop_fail]
        stop_code = STOP_FAILURES
        new_streak = fail_limit
    elif stop_succ is not None:
        used = stop_succ + 1
        take = success_pos[:needed]
        stop_code = STOP_TARGET
        new_streak = 0
    else:
        used = n_attempts
        take = success_pos
        stop_code = STOP_NONE
        new_streak = int(run[-1]) if not valid[-1] else 0
        if n_attempts == 0:
            new_streak = fail_streak

    consumed = idx < used
    n_discarded = int(np.sum(~in_range & consumed))
    n_rejected = int(np.sum(in_range & ~valid & consumed))

    st, et, ct = s[take], e[take], c[take]
    p_buy = low[st, ct] + u[take, 3] * (high[st, ct] - low[st, ct])
    p_sell = low[et, ct] + u[take, 4] * (high[et, ct] - low[et, ct])
    # Scalar libm exp keeps this kernel bit-identical to the compiled one,
    # whose exp also comes from libm (vectorized np.exp can differ by ulps).
    r_rf = np.array([math.exp(d) for d in gamma[et] - gamma[st]]) - 1.0
    g = (1.0 - fee) * (p_sell / p_buy) * (1.0 - fee) - 1.0
    x = g - r_rf

    episodes = dict(
        coin=ct.copy(),
        s=st.copy(),
        tau=tau[take].copy(),
        p_buy=p_buy,
        p_sell=p_sell,
        g=g,
        r_rf=r_rf,
        x=x,
    )
    return episodes, new_streak, stop_code, used, n_discarded, n_rejected
