"""Causal feature engineering: stationarity tagging, transforms, tensor assembly.

Turns weekly endogenous metric panels (one per horizon) and weekly macro
series into aligned, strictly causal, standardized predictor/target
tensors with reference scales for converting standardized coefficients
back to native units.

Unit-root test p-values (DF-GLS, KPSS, Zivot-Andrews under c and ct
specifications) are inputs; the tests themselves are external.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

HORIZON_DAYS = [30, 90, 180, 365, 730, 1095]
TARGET_NAMES = ["median_er", "cvar10", "top25_mean", "sharpe"]
EMA_VOL_WINDOWS = [4, 8, 12, 24]
ZSCORE_EPS = 1e-2

STATIONARY = "STATIONARY"
UNIT_ROOT = "UNIT_ROOT"
AMBIGUOUS = "AMBIGUOUS"

LEVEL = "LEVEL"
TREND = "TREND"
RW = "RW"

_TIE_ORDER = {RW: 2, TREND: 1, LEVEL: 0}


def gap_weeks(h: int) -> int:
    """Training gap for horizon h days: ceil(h/7) + 1 weeks."""
    return math.ceil(h / 7) + 1


def decide_stationarity(dfgls_p: float, kpss_p: float, za_p: float) -> str:
    """Three-test decision at the 5% level."""
    for name, p in (("dfgls_p", dfgls_p), ("kpss_p", kpss_p), ("za_p", za_p)):
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"{name} out of range: {p}")
    if dfgls_p < 0.05 and za_p < 0.05 and kpss_p > 0.05:
        return STATIONARY
    if dfgls_p >= 0.05 and za_p >= 0.05 and kpss_p <= 0.05:
        return UNIT_ROOT
    return AMBIGUOUS


def tag_from_decisions(outcome_c: str, outcome_ct: str) -> str:
    """Map (c, ct) stationarity outcomes to a transform tag."""
    if outcome_c == STATIONARY:
        return LEVEL
    if outcome_ct == STATIONARY:
        return TREND
    return RW


def resolve_global_tag(per_horizon_tags: list[str]) -> str:
    """Majority tag across horizons; ties resolved RW > TREND > LEVEL."""
    if not per_horizon_tags:
        raise ValueError("no tags to resolve")
    counts = Counter(per_horizon_tags)
    best = max(counts.items(), key=lambda kv: (kv[1], _TIE_ORDER[kv[0]]))
    return best[0]


# --- Stationarity transforms ---


def frac_diff_weights(d: float = 0.5, K: int = 200, tol: float = 1e-10) -> np.ndarray:
    """Binomial fractional-differencing weights w_k = (-1)^k C(d, k).

    Computed by the stable recurrence w_k = w_{k-1} * (-(d - (k-1)) / k),
    truncated early once |w_k| < tol.
    """
    weights = [1.0]
    for k in range(1, K + 1):
        w = weights[-1] * (-(d - (k - 1)) / k)
        if abs(w) < tol:
            break
        weights.append(w)
    return np.array(weights)


def frac_diff(series: pd.Series, d: float = 0.5, K: int = 200) -> pd.Series:
    """Strictly causal fractional differencing, truncated at K lags.

    Early outputs use however many lags exist (partial convolution);
    tensor alignment later drops unusable leading rows.
    """
    x = series.to_numpy(dtype=float)
    w = frac_diff_weights(d, K)
    out = np.zeros_like(x)
    for k in range(min(len(w), len(x))):
        out[k:] += w[k] * x[: len(x) - k]
    return pd.Series(out, index=series.index)


def first_diff(series: pd.Series) -> pd.Series:
    return series.diff().dropna()


def rolling_detrend(series: pd.Series, L: int = 52) -> pd.Series:
    """Residual at the end of a trailing length-L OLS line fit.

    Falls back to first differences when the whole series is shorter than L.
    """
    x = series.to_numpy(dtype=float)
    n = len(x)
    if n < L:
        return first_diff(series)
    j = np.arange(L, dtype=float)
    j_mean = j.mean()
    j_var = float(np.sum((j - j_mean) ** 2))
    out = np.empty(n - L + 1)
    for t in range(L - 1, n):
        window = x[t - L + 1 : t + 1]
        beta = float(np.sum((j - j_mean) * (window - window.mean()))) / j_var
        alpha = window.mean() - beta * j_mean
        out[t - L + 1] = x[t] - (alpha + beta * (L - 1))
    return pd.Series(out, index=series.index[L - 1 :])


def ema(series: pd.Series, w: int) -> pd.Series:
    """Exponential moving average with alpha = 2/(w+1).

    Seeded with the mean of the first w observations; defined from the
    w-th observation onward.  Fewer than w observations yields empty output.
    """
    x = series.to_numpy(dtype=float)
    if len(x) < w:
        return pd.Series(dtype=float)
    alpha = 2.0 / (w + 1)
    out = np.empty(len(x) - w + 1)
    out[0] = x[:w].mean()
    for i in range(1, len(out)):
        out[i] = alpha * x[w - 1 + i] + (1 - alpha) * out[i - 1]
    return pd.Series(out, index=series.index[w - 1 :])


def rolling_vol(series: pd.Series, w: int) -> pd.Series:
    """Trailing w-window sample standard deviation ((w-1) divisor)."""
    if w < 2:
        raise ValueError("w must be >= 2")
    out = series.rolling(w).std(ddof=1)
    return out.dropna()


_ENDOG_TRANSFORMS = {LEVEL: lambda s: s, TREND: rolling_detrend, RW: first_diff}
_MACRO_TRANSFORMS = {LEVEL: lambda s: s, TREND: rolling_detrend, RW: frac_diff}


def transform_endogenous(series: pd.Series, tag: str) -> pd.Series:
    return _ENDOG_TRANSFORMS[tag](series)


def transform_macro(series: pd.Series, tag: str) -> pd.Series:
    return _MACRO_TRANSFORMS[tag](series)


def macro_feature_block(macro: pd.DataFrame, tags: dict[str, str]) -> pd.DataFrame:
    """EMA/VOL features of tag-transformed macro series, in registry order.

    Columns are named ``{base}_EMA{w}`` / ``{base}_VOL{w}`` and ordered by
    (base series, family, window); raw transformed series are not features.
    """
    cols = {}
    for base in sorted(macro.columns):
        transformed = transform_macro(macro[base].dropna(), tags[base])
        for family, fn in (("EMA", ema), ("VOL", rolling_vol)):
            for w in EMA_VOL_WINDOWS:
                cols[f"{base}_{family}{w}"] = fn(transformed, w)
    return pd.DataFrame(cols)


def causal_zscore(x: np.ndarray, eps: float = ZSCORE_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Expanding-window z-score with population (1/t) sigma, clipped at eps.

    Returns (z, s) where s is the clipped expanding standard deviation used
    in the denominator at each step.
    """
    x = np.asarray(x, dtype=float)
    t = np.arange(1, len(x) + 1, dtype=float)
    csum = np.cumsum(x)
    csum2 = np.cumsum(x**2)
    mu = csum / t
    var = np.maximum(csum2 / t - mu**2, 0.0)
    s = np.maximum(np.sqrt(var), eps)
    return (x - mu) / s, s


@dataclass
class FeatureTensor:
    """Aligned standardized targets/features on a common weekly grid."""

    grid: pd.DatetimeIndex
    horizons: list[int]
    target_names: list[str]
    feature_names: list[str]
    y_current: np.ndarray  # (T, H, n_y)
    x_macro: np.ndarray  # (T, H, n_x)
    y_future: np.ndarray  # (t_star, H, n_y)
    t_star: int
    ref_scale_y: np.ndarray  # (H, n_y)
    ref_scale_x: np.ndarray  # (H, n_x)

    @property
    def gap_max(self) -> int:
        return max(gap_weeks(h) for h in self.horizons)


def align_tensors(
    endogenous: dict[int, pd.DataFrame],
    macro_features: pd.DataFrame,
    horizons: list[int] | None = None,
) -> tuple[pd.DatetimeIndex, dict[int, pd.DataFrame]]:
    """Join per-horizon target panels with macro features on a common grid.

    The grid is the intersection of fully observed dates across all
    horizons after transforms; an empty intersection is fatal and the
    diagnostic names the limiting series.
    """
    horizons = horizons or sorted(endogenous)
    joined: dict[int, pd.DataFrame] = {}
    grid: pd.DatetimeIndex | None = None
    for h in horizons:
        frame = endogenous[h].join(macro_features, how="outer").sort_index()
        joined[h] = frame
        ok = frame.dropna().index
        grid = ok if grid is None else grid.intersection(ok)
    if grid is None or len(grid) == 0:
        starts = {
            f"{col}@h{h}": str(frame[col].first_valid_index())
            for h, frame in joined.items()
            for col in frame.columns
        }
        limiting = sorted(starts, key=lambda k: starts[k], reverse=True)[:5]
        raise ValueError(
            "empty common time grid; latest-starting series: "
            + ", ".join(f"{k} (from {starts[k]})" for k in limiting)
        )
    return grid, {h: joined[h].loc[grid] for h in horizons}


def build_future_targets(
    y_current: np.ndarray, horizons: list[int]
) -> tuple[np.ndarray, int]:
    """Shift standardized targets forward by the per-horizon gap.

    y_future[t, h] = y_current[t + g(h), h] for t < t_star = T - g_max.
    """
    T = y_current.shape[0]
    gaps = [gap_weeks(h) for h in horizons]
    g_max = max(gaps)
    t_star = T - g_max
    if t_star < 1:
        raise ValueError(f"insufficient history: T={T} <= g_max={g_max}")
    y_future = np.empty((t_star, len(horizons), y_current.shape[2]))
    for j, g in enumerate(gaps):
        y_future[:, j, :] = y_current[g : g + t_star, j, :]
    return y_future, t_star


def build_feature_tensor(
    endogenous_raw: dict[int, pd.DataFrame],
    macro_raw: pd.DataFrame,
    endog_decisions: dict[tuple[str, int], tuple[str, str]],
    macro_decisions: dict[str, tuple[str, str]],
    horizons: list[int] | None = None,
) -> FeatureTensor:
    """Full pipeline: tag -> transform -> EMA/VOL -> align -> z-score -> shift.

    ``endogenous_raw`` maps horizon (days) to a weekly panel of raw target
    metrics; ``*_decisions`` carry (c, ct) stationarity outcomes.
    """
    horizons = horizons or sorted(endogenous_raw)
    target_names = list(endogenous_raw[horizons[0]].columns)

    endog_tags = {}
    for name in target_names:
        per_h = [
            tag_from_decisions(*endog_decisions[(name, h)]) for h in horizons
        ]
        endog_tags[name] = resolve_global_tag(per_h)
    macro_tags = {
        base: tag_from_decisions(*macro_decisions[base]) for base in macro_raw.columns
    }

    transformed_endog = {
        h: pd.DataFrame(
            {
                name: transform_endogenous(endogenous_raw[h][name].dropna(), endog_tags[name])
                for name in target_names
            }
        )
        for h in horizons
    }
    features = macro_feature_block(macro_raw, macro_tags)
    grid, aligned = align_tensors(transformed_endog, features, horizons)

    feature_names = list(features.columns)
    T, H = len(grid), len(horizons)
    n_y, n_x = len(target_names), len(feature_names)
    y_current = np.empty((T, H, n_y))
    x_macro = np.empty((T, H, n_x))
    s_y = np.empty((T, H, n_y))
    s_x = np.empty((T, H, n_x))
    for j, h in enumerate(horizons):
        frame = aligned[h]
        for k, name in enumerate(target_names):
            y_current[:, j, k], s_y[:, j, k] = causal_zscore(frame[name].to_numpy())
        for k, name in enumerate(feature_names):
            x_macro[:, j, k], s_x[:, j, k] = causal_zscore(frame[name].to_numpy())

    y_future, t_star = build_future_targets(y_current, horizons)
    return FeatureTensor(
        grid=grid,
        horizons=list(horizons),
        target_names=target_names,
        feature_names=feature_names,
        y_current=y_current,
        x_macro=x_macro,
        y_future=y_future,
        t_star=t_star,
        ref_scale_y=s_y[t_star - 1, :, :].copy(),
        ref_scale_x=s_x[t_star - 1, :, :].copy(),
    )


# --- Stationarity file I/O (p-values are computed externally) ---


def load_stationarity(path: str | Path) -> dict[tuple[str, str], tuple[float, float, float]]:
    """Read stationarity.csv: series, spec (c|ct), dfgls_p, kpss_p, za_p."""
    frame = pd.read_csv(path)
    out = {}
    for _, row in frame.iterrows():
        out[(str(row["series"]), str(row["spec"]))] = (
            float(row["dfgls_p"]),
            float(row["kpss_p"]),
            float(row["za_p"]),
        )
    return out


def decisions_from_table(
    table: dict[tuple[str, str], tuple[float, float, float]], series: str
) -> tuple[str, str]:
    """(c, ct) outcomes for one series; missing entries default to AMBIGUOUS."""
    outcomes = []
    for spec in ("c", "ct"):
        key = (series, spec)
        outcomes.append(decide_stationarity(*table[key]) if key in table else AMBIGUOUS)
    return outcomes[0], outcomes[1]


def save_tensor(tensor: FeatureTensor, out_dir: str | Path) -> None:
    """Write per-horizon matrices (CSV) plus tensor_meta.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for j, h in enumerate(tensor.horizons):
        cols = {}
        for k, name in enumerate(tensor.target_names):
            cols[f"y::{name}"] = tensor.y_current[:, j, k]
        for k, name in enumerate(tensor.feature_names):
            cols[f"x::{name}"] = tensor.x_macro[:, j, k]
        frame = pd.DataFrame(cols, index=tensor.grid)
        frame.index.name = "week_monday"
        frame.to_csv(out_dir / f"horizon_{h}.csv")
        fut = pd.DataFrame(
            {name: tensor.y_future[:, j, k] for k, name in enumerate(tensor.target_names)},
            index=tensor.grid[: tensor.t_star],
        )
        fut.index.name = "week_monday"
        fut.to_csv(out_dir / f"future_{h}.csv")
    meta = {
        "grid": [str(d.date()) for d in tensor.grid],
        "horizons": tensor.horizons,
        "targets": tensor.target_names,
        "features": tensor.feature_names,
        "gaps": {str(h): gap_weeks(h) for h in tensor.horizons},
        "t_star": tensor.t_star,
        "ref_scale_y": tensor.ref_scale_y.tolist(),
        "ref_scale_x": tensor.ref_scale_x.tolist(),
    }
    with open(out_dir / "tensor_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)


def load_tensor(in_dir: str | Path) -> FeatureTensor:
    in_dir = Path(in_dir)
    with open(in_dir / "tensor_meta.json") as fh:
        meta = json.load(fh)
    grid = pd.DatetimeIndex(pd.to_datetime(meta["grid"]))
    horizons = [int(h) for h in meta["horizons"]]
    targets, feats = meta["targets"], meta["features"]
    T, H = len(grid), len(horizons)
    t_star = int(meta["t_star"])
    y_current = np.empty((T, H, len(targets)))
    x_macro = np.empty((T, H, len(feats)))
    y_future = np.empty((t_star, H, len(targets)))
    for j, h in enumerate(horizons):
        frame = pd.read_csv(in_dir / f"horizon_{h}.csv", index_col=0)
        for k, name in enumerate(targets):
            y_current[:, j, k] = frame[f"y::{name}"].to_numpy()
        for k, name in enumerate(feats):
            x_macro[:, j, k] = frame[f"x::{name}"].to_numpy()
        fut = pd.read_csv(in_dir / f"future_{h}.csv", index_col=0)
        for k, name in enumerate(targets):
            y_future[:, j, k] = fut[name].to_numpy()
    return FeatureTensor(
        grid=grid,
        horizons=horizons,
        target_names=targets,
        feature_names=feats,
        y_current=y_current,
        x_macro=x_macro,
        y_future=y_future,
        t_star=t_star,
        ref_scale_y=np.array(meta["ref_scale_y"]),
        ref_scale_x=np.array(meta["ref_scale_x"]),
    )
