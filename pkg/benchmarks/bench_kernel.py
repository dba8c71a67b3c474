"""Benchmark the compiled episode and elastic-net kernels against the
pure-Python fallbacks.

Run from the repository root:

    python3 benchmarks/bench_kernel.py
"""

from __future__ import annotations

import time

import numpy as np

from holdsim import enet, episode_py
from holdsim.rng import make_stream

try:
    from holdsim import _episode_cy
except ImportError:
    _episode_cy = None


def synthetic_market(T=2000, C=3, seed=0):
    rng = np.random.default_rng(seed)
    logp = np.cumsum(rng.normal(0.0005, 0.03, (T, C)), axis=0)
    close = 100.0 * np.exp(logp)
    spread = np.abs(rng.normal(0.01, 0.005, (T, C)))
    high = close * (1 + spread)
    low = close * (1 - spread)
    gamma = np.cumsum(np.full(T, 0.04 / 365.0))
    return np.ascontiguousarray(high), np.ascontiguousarray(low), gamma


def bench_episode_kernel(n_blocks=20):
    high, low, gamma = synthetic_market()
    results = {}
    impls = {"python": episode_py}
    if _episode_cy is not None:
        impls["cython"] = _episode_cy
    for name, impl in impls.items():
        gen = make_stream(0, "bench")
        total = 0
        t0 = time.perf_counter()
        for _ in range(n_blocks):
            u = gen.random((16384, 5))
            eps, _, _, _, _, _ = impl.process_block(
                u, high, low, gamma, 1, 30, 0.001, 10**9, 0, 50
            )
            total += len(eps["x"])
        dt = time.perf_counter() - t0
        results[name] = (dt, total / dt)
    return results


def bench_enet_kernel(n_fits=20):
    rng = np.random.default_rng(1)
    X = rng.normal(0, 1, (300, 40))
    B_true = rng.normal(0, 1, (40, 4)) * (rng.random((40, 1)) < 0.2)
    Y = X @ B_true + rng.normal(0, 0.5, (300, 4))
    alpha = enet.alpha_max(X, Y) * 0.05
    results = {}
    saved = enet._bcd_solve_cy
    modes = {"python": None}
    if saved is not None:
        modes["cython"] = saved
    for name, impl in modes.items():
        enet._bcd_solve_cy = impl
        t0 = time.perf_counter()
        for _ in range(n_fits):
            enet.fit_multitask_enet(X, Y, alpha)
        dt = time.perf_counter() - t0
        results[name] = (dt, n_fits / dt)
    enet._bcd_solve_cy = saved
    return results


def report(title, results, unit):
    print(f"\n{title}")
    base = results.get("python", (None, None))[0]
    for name, (dt, rate) in results.items():
        speedup = f"  ({base / dt:.1f}x vs python)" if name != "python" and base else ""
        print(f"  {name:8s} {dt:8.3f} s  {rate:12,.0f} {unit}{speedup}")


if __name__ == "__main__":
    report("episode kernel (16384-attempt blocks)", bench_episode_kernel(), "episodes/s")
    report("elastic-net BCD (300x40, 4 targets)", bench_enet_kernel(), "fits/s")
