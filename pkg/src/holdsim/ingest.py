"""Loading and cleaning of daily OHLCV token panels and weekly macro series.

Input layout is one CSV per token (``Date,High,Low,Close,Volume``) plus
daily macro CSVs (``Date,Value``).  Cleaning applies a fixed rule order and
records, per excluded token, the first rule that removed it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

OHLCV_COLUMNS = ["high", "low", "close", "volume"]


@dataclass
class TokenPanel:
    """Daily High/Low/Close/Volume history for one token.

    ``frame`` is indexed by calendar day at daily frequency; gaps inside the
    covered span appear as NaN rows until cleaning trims/drops them.
    """

    symbol: str
    frame: pd.DataFrame  # columns: high, low, close, volume

    @property
    def n_days(self) -> int:
        return len(self.frame)

    def copy(self) -> "TokenPanel":
        return TokenPanel(self.symbol, self.frame.copy())


@dataclass
class PanelSet:
    panels: dict[str, TokenPanel] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.panels)

    @property
    def symbols(self) -> list[str]:
        return sorted(self.panels)


@dataclass
class CleaningRules:
    min_first_date_cutoff: pd.Timestamp = pd.Timestamp("2024-01-01")
    stablecoin_close_band: tuple[float, float] = (0.97, 1.03)
    stablecoin_close_std_max: float = 0.03
    min_avg_volume_usd: float = 100_000.0
    volume_lookback_days: int = 365
    min_latest_date: pd.Timestamp = pd.Timestamp("2025-04-26")
    quality_zero_days_max: int = 10
    quality_tiny_volume_usd: float = 500.0


def _read_token_csv(path: Path, warnings: list[str]) -> pd.DataFrame:
    raw = pd.read_csv(path)
    raw.columns = [c.strip().lower() for c in raw.columns]
    if "date" not in raw.columns:
        raise ValueError(f"{path.name}: missing Date column")
    dates = pd.to_datetime(raw["date"], errors="coerce").dt.normalize()
    bad_dates = dates.isna()
    if bad_dates.any():
        for idx in np.flatnonzero(bad_dates.to_numpy()):
            warnings.append(f"{path.stem}: unparseable date at row {idx}")
    frame = pd.DataFrame(index=dates[~bad_dates])
    for col in OHLCV_COLUMNS:
        if col not in raw.columns:
            raise ValueError(f"{path.name}: missing column {col}")
        vals = pd.to_numeric(raw.loc[~bad_dates, col], errors="coerce")
        flagged = vals.isna() & raw.loc[~bad_dates, col].notna()
        for idx in np.flatnonzero(flagged.to_numpy()):
            warnings.append(f"{path.stem}: non-numeric {col} at row {idx}")
        frame[col] = vals.to_numpy()
    frame = frame[~frame.index.duplicated(keep="first")].sort_index()
    # Daily axis across the observed span; interior gaps become NaN rows.
    full = pd.date_range(frame.index[0], frame.index[-1], freq="D")
    return frame.reindex(full)


def load_panel_set(directory: str | Path) -> PanelSet:
    """Load every ``*.csv`` in ``directory`` as a token panel.

    Per-token parse failures are collected as warnings; an unreadable
    directory is fatal.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a readable directory: {directory}")
    out = PanelSet()
    paths = sorted(directory.glob("*.csv"))
    if not paths:
        out.warnings.append(f"no CSV files found in {directory}")
    for path in paths:
        symbol = path.stem.upper()
        try:
            frame = _read_token_csv(path, out.warnings)
        except Exception as exc:  # noqa: BLE001 - per-token failures are non-fatal
            out.warnings.append(f"{symbol}: failed to load ({exc})")
            continue
        if frame.empty:
            out.warnings.append(f"{symbol}: empty after parsing")
            continue
        out.panels[symbol] = TokenPanel(symbol, frame)
    return out


def detect_stablecoin(panel: TokenPanel, rules: CleaningRules | None = None) -> bool:
    """True iff mean close sits in the stablecoin band with tiny dispersion."""
    rules = rules or CleaningRules()
    close = panel.frame["close"].dropna()
    if len(close) < 2:
        log.warning("%s: <2 close observations, not classifiable as stablecoin", panel.symbol)
        return False
    lo, hi = rules.stablecoin_close_band
    return bool(lo <= close.mean() <= hi and close.std(ddof=1) <= rules.stablecoin_close_std_max)


def _first_fully_observed(frame: pd.DataFrame) -> pd.Timestamp | None:
    ok = frame[OHLCV_COLUMNS].notna().all(axis=1)
    if not ok.any():
        return None
    return ok.idxmax()


def apply_cleaning_rules(
    panel_set: PanelSet, rules: CleaningRules | None = None
) -> tuple[PanelSet, dict[str, str]]:
    """Apply the cleaning rules in fixed order.

    Returns the surviving panels (trimmed to their first fully observed day)
    and an exclusion report mapping each removed symbol to the first rule
    that caught it.
    """
    rules = rules or CleaningRules()
    kept = PanelSet(warnings=list(panel_set.warnings))
    report: dict[str, str] = {}
    for symbol in panel_set.symbols:
        panel = panel_set.panels[symbol]
        frame = panel.frame
        observed = frame[frame[OHLCV_COLUMNS].notna().any(axis=1)]
        if observed.empty:
            report[symbol] = "missing_values"
            continue
        if observed.index[0] >= rules.min_first_date_cutoff:
            report[symbol] = "first_date_cutoff"
            continue
        if detect_stablecoin(panel, rules):
            report[symbol] = "stablecoin"
            continue
        tail_start = frame.index[-1] - pd.Timedelta(days=rules.volume_lookback_days - 1)
        tail_vol = frame.loc[frame.index >= tail_start, "volume"]
        if tail_vol.dropna().empty or tail_vol.mean() < rules.min_avg_volume_usd:
            report[symbol] = "volume_floor"
            continue
        if observed.index[-1] < rules.min_latest_date:
            report[symbol] = "latest_date_cutoff"
            continue
        start = _first_fully_observed(frame)
        if start is None:
            report[symbol] = "missing_values"
            continue
        trimmed = frame.loc[start:]
        if trimmed[OHLCV_COLUMNS].isna().any().any():
            report[symbol] = "missing_values"
            continue
        zero_days = int(((trimmed["high"] == 0) | (trimmed["volume"] == 0)).sum())
        tiny_days = int((trimmed["volume"] < rules.quality_tiny_volume_usd).sum())
        if zero_days >= rules.quality_zero_days_max or tiny_days >= rules.quality_zero_days_max:
            report[symbol] = "quality_screen"
            continue
        kept.panels[symbol] = TokenPanel(symbol, trimmed)
    return kept, report


def write_clean_panels(panel_set: PanelSet, report: dict[str, str], out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for symbol in panel_set.symbols:
        frame = panel_set.panels[symbol].frame.copy()
        frame.index.name = "Date"
        frame.columns = ["High", "Low", "Close", "Volume"]
        frame.to_csv(out_dir / f"{symbol}.csv")
    with open(out_dir / "exclusions.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)


def week_monday(dates: pd.DatetimeIndex | pd.Series) -> pd.DatetimeIndex:
    """Monday of the ISO Monday-Sunday week containing each date."""
    idx = pd.DatetimeIndex(dates)
    return idx - pd.to_timedelta(idx.weekday, unit="D")


def weekly_align_macro(daily: pd.Series) -> pd.Series:
    """Weekly value = Friday's observation, else Thursday's; stamped on Monday.

    Weeks with neither a Friday nor a Thursday value are omitted.
    """
    daily = daily.dropna().sort_index()
    if daily.empty:
        return pd.Series(dtype=float)
    mondays = week_monday(daily.index)
    out: dict[pd.Timestamp, float] = {}
    for monday, group in daily.groupby(mondays):
        weekdays = group.index.weekday
        for pick in (4, 3):  # Friday, then Thursday
            hit = group[weekdays == pick]
            if not hit.empty:
                out[monday] = float(hit.iloc[0])
                break
    return pd.Series(out, dtype=float).sort_index()


def weekly_fgi_mean(daily: pd.Series) -> pd.Series:
    """Monday-Sunday arithmetic mean of a daily 0-100 index, stamped on Monday."""
    daily = daily.dropna().sort_index()
    if daily.empty:
        return pd.Series(dtype=float)
    return daily.groupby(week_monday(daily.index)).mean().sort_index()


def btc_weekly_log_return(panel: TokenPanel) -> pd.Series:
    """Weekly log return from the last available close of each week.

    Uses Sunday's close, or the last trading day with a close that week,
    reindexed to the Monday starting the week.
    """
    close = panel.frame["close"].dropna().sort_index()
    if (close <= 0).any():
        raise ValueError(f"{panel.symbol}: nonpositive close price")
    week_end_close = close.groupby(week_monday(close.index)).last().sort_index()
    rets = np.log(week_end_close / week_end_close.shift(1))
    return rets.dropna()
