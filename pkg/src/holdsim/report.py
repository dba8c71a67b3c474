"""Risk-return bubble charts as plain SVG, with sibling CSVs.

Bubble area follows A = min(max(400 * (1 + 1.5 z), 400), 2800), where z
standardizes the sizing metric within each basket across its horizons.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pandas as pd

AREA_FLOOR = 400.0
AREA_CEIL = 2800.0

CHART_MODES = {
    # mode: (x column, y column, sizing column, axis labels)
    "risk_sharpe": ("cvar", "sharpe", "p_sig_loss", ("CVaR 1%", "Sharpe")),
    "median_top": ("median", "top25_mean", "iqr", ("Median excess return", "Top-25% mean")),
}


def bubble_area(z: float | None) -> float:
    """Clamped area for a within-basket z-score; undefined z gets the floor."""
    if z is None or not np.isfinite(z):
        return AREA_FLOOR
    return float(min(max(400.0 * (1.0 + 1.5 * z), AREA_FLOOR), AREA_CEIL))


def bubble_zscores(values: np.ndarray) -> list[float | None]:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return [None] * len(values)
    mu = values.mean()
    sd = values.std(ddof=1)
    if sd == 0:
        return [None] * len(values)
    return [(v - mu) / sd for v in values]


def _scale(vals, lo_px, hi_px):
    vmin, vmax = float(np.min(vals)), float(np.max(vals))
    if vmax == vmin:
        vmin, vmax = vmin - 1.0, vmax + 1.0
    pad = 0.08 * (vmax - vmin)
    vmin, vmax = vmin - pad, vmax + pad
    return lambda v: lo_px + (v - vmin) / (vmax - vmin) * (hi_px - lo_px)


def emit_bubble_chart(metric_rows: pd.DataFrame, basket: str, mode: str) -> tuple[str, pd.DataFrame]:
    """Render one basket's horizon rows; returns (svg, underlying data)."""
    if mode not in CHART_MODES:
        raise ValueError(f"unknown chart mode {mode!r}")
    xcol, ycol, zcol, (xlabel, ylabel) = CHART_MODES[mode]
    rows = metric_rows[(metric_rows["basket"] == basket) & (metric_rows["interval"] != "all")]
    if rows.empty:
        raise ValueError(f"no horizon rows for basket {basket}")
    zs = bubble_zscores(rows[zcol].to_numpy())
    areas = [bubble_area(z) for z in zs]
    data = pd.DataFrame(
        {
            "basket": basket,
            "interval": rows["interval"].to_numpy(),
            "x": rows[xcol].to_numpy(),
            "y": rows[ycol].to_numpy(),
            "size_metric": rows[zcol].to_numpy(),
            "z": [z if z is not None else float("nan") for z in zs],
            "area": areas,
        }
    )

    width, height = 640, 480
    m = 60
    sx = _scale(data["x"].to_numpy(), m, width - m)
    sy = _scale(data["y"].to_numpy(), height - m, m)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{m}" y1="{height-m}" x2="{width-m}" y2="{height-m}" stroke="black"/>',
        f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height-m}" stroke="black"/>',
        f'<text x="{width/2:.0f}" y="{height-15}" text-anchor="middle" font-size="13">{xlabel}</text>',
        f'<text x="18" y="{height/2:.0f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {height/2:.0f})">{ylabel}</text>',
        f'<text x="{width/2:.0f}" y="24" text-anchor="middle" font-size="15">{basket}</text>',
    ]
    for _, row in data.iterrows():
        r = math.sqrt(row["area"] / math.pi)
        cx, cy = sx(row["x"]), sy(row["y"])
        parts.append(
            f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{r:.1f}" '
            'fill="steelblue" fill-opacity="0.5" stroke="navy"/>'
        )
        parts.append(
            f'<text x="{cx:.1f}" y="{cy:.1f}" text-anchor="middle" '
            f'font-size="10">{row["interval"]}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts), data


def write_report(metrics_overall: pd.DataFrame, out_dir: str | Path) -> list[Path]:
    """One chart per (basket, mode), each with a sibling CSV of its data."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for basket in sorted(metrics_overall["basket"].unique()):
        for mode in CHART_MODES:
            svg, data = emit_bubble_chart(metrics_overall, basket, mode)
            svg_path = out_dir / f"bubble_{mode}_{basket}.svg"
            svg_path.write_text(svg)
            data.to_csv(out_dir / f"bubble_{mode}_{basket}.csv", index=False)
            written.append(svg_path)
    return written
