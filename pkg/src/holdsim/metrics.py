"""Excess-return statistics in overall (alpha=1%) and weekly (alpha=10%) flavors.

Quantiles use linear interpolation on order statistics at positions
(n-1)p (the numpy default), documented here for reproducibility.  Undefined
statistics are None, serialized as empty CSV cells / JSON nulls.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from holdsim.ingest import week_monday

OVERALL_ALPHA = 0.01
WEEKLY_ALPHA = 0.10

METRIC_COLUMNS = [
    "n", "mean", "median", "std", "iqr", "sharpe", "sortino",
    "var", "cvar", "p_profit", "p_sig_loss", "q75", "top25_mean",
    "top25_prop", "skew_g1", "kurt_g2", "alpha", "flavor",
]


@dataclass
class MetricSet:
    n: int
    mean: float
    median: float
    std: float | None
    iqr: float
    sharpe: float | None
    sortino: float | None
    var: float
    cvar: float
    p_profit: float
    p_sig_loss: float
    q75: float
    top25_mean: float
    top25_prop: float
    skew_g1: float | None
    kurt_g2: float | None
    alpha: float
    flavor: str

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(sample: np.ndarray, alpha: float, flavor: str = "overall") -> MetricSet:
    """Full statistic suite for one sample of excess returns."""
    x = np.asarray(sample, dtype=float)
    n = x.size
    if n < 1:
        raise ValueError("empty sample")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must be in (0, 1)")
    if flavor not in ("overall", "weekly"):
        raise ValueError(f"unknown flavor {flavor!r}")

    mu = float(np.mean(x))
    median = float(np.quantile(x, 0.5))
    q25 = float(np.quantile(x, 0.25))
    q75 = float(np.quantile(x, 0.75))
    q_alpha = float(np.quantile(x, alpha))

    std = float(np.std(x, ddof=1)) if n >= 2 else None
    sharpe = mu / std if std not in (None, 0.0) else None

    neg = x[x < 0]
    sortino = None
    if neg.size >= 2:
        sigma_neg = float(np.std(neg, ddof=1))
        if sigma_neg > 0:
            sortino = mu / sigma_neg

    tail = x[x <= q_alpha]
    var = max(0.0, -q_alpha)
    cvar = max(0.0, -float(np.mean(tail)))

    top = x[x >= q75]
    skew_g1 = kurt_g2 = None
    if flavor == "overall" and n >= 4:
        dev = x - mu
        s2 = float(np.sum(dev**2))
        if s2 > 0:
            skew_g1 = n * np.sqrt(n - 1.0) / (n - 2.0) * float(np.sum(dev**3)) / s2**1.5
            kurt_g2 = (
                n * (n + 1.0) * (n - 1.0) * float(np.sum(dev**4)) / ((n - 2.0) * (n - 3.0) * s2**2)
                - 3.0 * (n - 1.0) ** 2 / ((n - 2.0) * (n - 3.0))
            )

    return MetricSet(
        n=n,
        mean=mu,
        median=median,
        std=std,
        iqr=q75 - q25,
        sharpe=sharpe,
        sortino=sortino,
        var=var,
        cvar=cvar,
        p_profit=float(np.sum(x > 0)) / n,
        p_sig_loss=float(np.sum(x < -0.10)) / n,
        q75=q75,
        top25_mean=float(np.mean(top)),
        top25_prop=float(top.size) / n,
        skew_g1=skew_g1,
        kurt_g2=kurt_g2,
        alpha=alpha,
        flavor=flavor,
    )


def aggregate_overall(samples: dict[tuple[str, str], np.ndarray]) -> pd.DataFrame:
    """Metric rows per (basket, interval) plus per-basket pooled rows.

    ``samples`` maps (basket, interval label) to excess-return arrays.
    Pooled rows concatenate all intervals' episodes under label "all".
    """
    rows = []
    baskets: dict[str, list[np.ndarray]] = {}
    for (basket, interval), x in samples.items():
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            continue
        ms = compute_metrics(x, OVERALL_ALPHA, "overall")
        rows.append({"basket": basket, "interval": interval, **ms.to_dict()})
        baskets.setdefault(basket, []).append(x)
    for basket in sorted(baskets):
        pooled = np.concatenate(baskets[basket])
        ms = compute_metrics(pooled, OVERALL_ALPHA, "overall")
        rows.append({"basket": basket, "interval": "all", **ms.to_dict()})
    return pd.DataFrame(rows, columns=["basket", "interval"] + METRIC_COLUMNS)


def aggregate_weekly(x: np.ndarray, sell_dates: pd.DatetimeIndex) -> pd.DataFrame:
    """Per-sell-week metrics at alpha=10%, keyed by the week's Monday."""
    x = np.asarray(x, dtype=float)
    if x.size != len(sell_dates):
        raise ValueError("sample and sell dates length mismatch")
    mondays = week_monday(sell_dates)
    frame = pd.DataFrame({"x": x, "week": mondays})
    rows = []
    for monday, group in frame.groupby("week"):
        ms = compute_metrics(group["x"].to_numpy(), WEEKLY_ALPHA, "weekly")
        rows.append({"week_monday": monday, **ms.to_dict()})
    out = pd.DataFrame(rows, columns=["week_monday"] + METRIC_COLUMNS)
    return out.sort_values("week_monday").reset_index(drop=True)
