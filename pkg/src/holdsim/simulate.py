"""Monte Carlo buy-hold-sell episode simulator.

Each episode draws a holding horizon, buy/sell days and a coin, filters on
price-band validity, then draws intra-day buy/sell prices and computes the
net post-fee return, the rolled risk-free return over the same days, and
their difference (the excess return).

Episodes are generated in fixed-size shards, each with its own
counter-based random stream keyed by (seed, basket, interval, shard), so
results are bit-identical regardless of worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from holdsim import kernel
from holdsim.ingest import PanelSet
from holdsim.rng import make_stream

HORIZON_INTERVALS: list[tuple[int, int]] = [
    (1, 30),
    (31, 90),
    (91, 180),
    (181, 365),
    (366, 730),
    (731, 1095),
]

BLOCK_ATTEMPTS = 16384


@dataclass
class SimConfig:
    basket: str
    interval: tuple[int, int]
    n: int
    fee: float = 0.001
    seed: int = 0
    max_consecutive_failures: int = 50
    shard_size: int = 65536

    def __post_init__(self):
        lo, hi = self.interval
        if not (1 <= lo <= hi):
            raise ValueError(f"invalid horizon interval {self.interval}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not (0.0 <= self.fee < 1.0):
            raise ValueError("fee must be in [0, 1)")


@dataclass
class EpisodeBatch:
    """Columnar record of simulated episodes for one (basket, interval)."""

    coin: np.ndarray
    s: np.ndarray
    e: np.ndarray
    tau: np.ndarray
    p_buy: np.ndarray
    p_sell: np.ndarray
    g: np.ndarray
    r_rf: np.ndarray
    x: np.ndarray
    complete: bool
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.x)

    def to_frame(self, calendar: pd.DatetimeIndex | None = None,
                 symbols: list[str] | None = None) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "coin": self.coin,
                "buy_day": self.s,
                "sell_day": self.e,
                "holding_days": self.tau,
                "p_buy": self.p_buy,
                "p_sell": self.p_sell,
                "net_return": self.g,
                "riskfree_return": self.r_rf,
                "excess_return": self.x,
            }
        )
        if symbols is not None:
            frame.insert(1, "symbol", [symbols[c] for c in self.coin])
        if calendar is not None:
            frame.insert(2, "buy_date", calendar[self.s])
            frame.insert(3, "sell_date", calendar[self.e])
        return frame


def build_price_arrays(
    panel_set: PanelSet, symbols: list[str] | None = None
) -> tuple[pd.DatetimeIndex, np.ndarray, np.ndarray]:
    """Stack token panels onto a common daily calendar.

    Returns (calendar, high, low) with high/low of shape (T, C) and NaN
    outside each token's observed span.  Column order follows ``symbols``
    (default: sorted panel symbols).
    """
    symbols = symbols if symbols is not None else panel_set.symbols
    if not symbols:
        raise ValueError("empty basket")
    frames = [panel_set.panels[sym].frame for sym in symbols]
    start = min(f.index[0] for f in frames)
    end = max(f.index[-1] for f in frames)
    calendar = pd.date_range(start, end, freq="D")
    T, C = len(calendar), len(symbols)
    high = np.full((T, C), np.nan)
    low = np.full((T, C), np.nan)
    for j, frame in enumerate(frames):
        aligned = frame.reindex(calendar)
        high[:, j] = aligned["high"].to_numpy()
        low[:, j] = aligned["low"].to_numpy()
    return calendar, high, low


def build_riskfree_curve(calendar: pd.DatetimeIndex, annual_yield_pct: pd.Series) -> np.ndarray:
    """Cumulative log risk-free return per calendar day.

    ``annual_yield_pct`` is an annualized percent yield series (business-day
    quotes); the daily simple rate is y / (100 * 365) with the last quote
    carried forward across non-quoted days.
    """
    y = annual_yield_pct.dropna().sort_index().reindex(calendar).ffill().bfill()
    if y.isna().all():
        return np.zeros(len(calendar))
    r_daily = y.to_numpy() / (100.0 * 365.0)
    return np.cumsum(np.log1p(r_daily))


# --- Scalar reference operations (the kernel vectorizes the same steps) ---


def draw_horizon(interval: tuple[int, int], rng: np.random.Generator) -> int:
    """tau ~ DiscreteUniform{lo..hi}, inclusive."""
    lo, hi = interval
    return lo + min(int(rng.random() * (hi - lo + 1)), hi - lo)


def draw_dates(T: int, tau: int, rng: np.random.Generator) -> tuple[int, int] | None:
    """Uniform buy day leaving room for the horizon; None when impossible."""
    span = T - tau
    if span <= 0:
        return None
    s = min(int(rng.random() * span), span - 1)
    return s, s + tau


def sample_valid_episode(
    high: np.ndarray,
    low: np.ndarray,
    interval: tuple[int, int],
    rng: np.random.Generator,
) -> dict | None:
    """One attempt: draw (tau, s, e, c) and apply the validity filter."""
    T, C = high.shape
    tau = draw_horizon(interval, rng)
    u_s, u_c = rng.random(), rng.random()
    span = T - tau
    c = min(int(u_c * C), C - 1)
    if span <= 0:
        return None
    s = min(int(u_s * span), span - 1)
    e = s + tau
    ls, hs, le, he = low[s, c], high[s, c], low[e, c], high[e, c]
    if not (ls > 0 and hs >= ls and le > 0 and he >= le):
        return None
    return dict(coin=c, s=s, e=e, tau=tau)


def price_and_return(
    skeleton: dict,
    high: np.ndarray,
    low: np.ndarray,
    gamma: np.ndarray,
    fee: float,
    rng: np.random.Generator,
) -> dict:
    """Draw intra-day prices and compute net, risk-free and excess returns."""
    s, e, c = skeleton["s"], skeleton["e"], skeleton["coin"]
    u1, u2 = rng.random(), rng.random()
    p_buy = low[s, c] + u1 * (high[s, c] - low[s, c])
    p_sell = low[e, c] + u2 * (high[e, c] - low[e, c])
    r_rf = np.exp(gamma[e] - gamma[s]) - 1.0
    g = (1.0 - fee) * (p_sell / p_buy) * (1.0 - fee) - 1.0
    return dict(**skeleton, p_buy=p_buy, p_sell=p_sell, g=g, r_rf=r_rf, x=g - r_rf)


# --- Sharded batch generation ---


def _run_shard(args) -> tuple[dict, bool, dict]:
    config, high, low, gamma, shard_idx, shard_n = args
    lo, hi = config.interval
    gen = make_stream(config.seed, "episodes", config.basket, lo, hi, shard_idx)
    parts: list[dict] = []
    needed = shard_n
    streak = 0
    stats = dict(attempts=0, discarded=0, rejected=0)
    complete = True
    while needed > 0:
        u = gen.random((BLOCK_ATTEMPTS, 5))
        eps, streak, code, used, n_disc, n_rej = kernel.process_block(
            u, high, low, gamma, lo, hi, config.fee,
            needed, streak, config.max_consecutive_failures,
        )
        parts.append(eps)
        needed -= len(eps["x"])
        stats["attempts"] += used
        stats["discarded"] += n_disc
        stats["rejected"] += n_rej
        if code == kernel.STOP_FAILURES:
            complete = False
            break
    merged = {
        k: np.concatenate([p[k] for p in parts]) if parts else np.empty(0)
        for k in ("coin", "s", "tau", "p_buy", "p_sell", "g", "r_rf", "x")
    }
    return merged, complete, stats


def simulate_batch(
    config: SimConfig,
    high: np.ndarray,
    low: np.ndarray,
    gamma: np.ndarray,
    n_workers: int = 1,
) -> EpisodeBatch:
    """Collect up to ``config.n`` valid episodes.

    The consecutive-failure stop rule applies within each shard's attempt
    stream; any shard stopping early marks the batch incomplete.  Shards are
    reduced in index order, so worker count never changes the output.
    """
    high = np.ascontiguousarray(high, dtype=np.float64)
    low = np.ascontiguousarray(low, dtype=np.float64)
    gamma = np.ascontiguousarray(gamma, dtype=np.float64)
    n_shards = (config.n + config.shard_size - 1) // config.shard_size
    tasks = []
    for i in range(n_shards):
        shard_n = min(config.shard_size, config.n - i * config.shard_size)
        tasks.append((config, high, low, gamma, i, shard_n))

    if n_workers > 1 and n_shards > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_run_shard, tasks))
    else:
        results = [_run_shard(t) for t in tasks]

    merged = {
        k: np.concatenate([r[0][k] for r in results])
        for k in ("coin", "s", "tau", "p_buy", "p_sell", "g", "r_rf", "x")
    }
    complete = all(r[1] for r in results)
    stats = dict(
        collected=int(len(merged["x"])),
        attempts=sum(r[2]["attempts"] for r in results),
        discarded=sum(r[2]["discarded"] for r in results),
        rejected=sum(r[2]["rejected"] for r in results),
        n_shards=n_shards,
    )
    return EpisodeBatch(
        coin=merged["coin"].astype(np.int64),
        s=merged["s"].astype(np.int64),
        e=(merged["s"] + merged["tau"]).astype(np.int64),
        tau=merged["tau"].astype(np.int64),
        p_buy=merged["p_buy"],
        p_sell=merged["p_sell"],
        g=merged["g"],
        r_rf=merged["r_rf"],
        x=merged["x"],
        complete=complete,
        stats=stats,
    )
