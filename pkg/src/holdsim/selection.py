"""Stability-selected macro features via purged CV and block bootstrap.

Per horizon: pick a shrinkage level by purged time-series cross-validation,
refit the multitask elastic net on non-overlapping block bootstrap (NBB)
resamples, and retain base variables / transforms by selection frequency.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from holdsim.enet import alpha_grid, alpha_max, fit_multitask_enet
from holdsim.features import FeatureTensor, gap_weeks
from holdsim.rng import make_stream

log = logging.getLogger(__name__)

SELECT_NORM_TOL = 1e-12
TAU_GLOBAL = 0.55
TAU_COND = 0.50
_FAMILY_ORDER = {"EMA": 0, "VOL": 1}
_NAME_RE = re.compile(r"^(?P<base>.+)_(?P<family>EMA|VOL)(?P<window>\d+)$")


def parse_feature_name(name: str) -> tuple[str, str, int]:
    """Split '{base}_{EMA|VOL}{w}' into (base, family, window)."""
    m = _NAME_RE.match(name)
    if not m:
        raise ValueError(f"unparseable feature name: {name}")
    return m.group("base"), m.group("family"), int(m.group("window"))


# --- Purged time-series splits ---


def purged_splits(T: int, K: int, h: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """K chronological tail validation blocks with gap-purged expanding train.

    Test blocks are the final K equal-size segments (TimeSeriesSplit
    layout); training indices are truncated at tau_k - g(h) - 1.  Splits
    whose purged training set is empty are dropped.
    """
    if T < K + 1:
        return []
    g = gap_weeks(h)
    test_size = T // (K + 1)
    if test_size < 1:
        return []
    splits = []
    for k in range(K):
        tau = T - (K - k) * test_size
        test = np.arange(tau, tau + test_size)
        train_end = tau - g - 1  # inclusive
        if train_end < 0:
            continue
        train = np.arange(0, train_end + 1)
        splits.append((train, test))
    return splits


def make_purged_splits(
    T: int, horizons: list[int], K: int = 3
) -> tuple[dict[int, list], int, list[int]]:
    """Per-horizon splits with the K=3 -> K=2 downgrade rule.

    Returns (splits per horizon, K used, horizons flagged skip-CV).
    """
    for k_try in (K, 2) if K > 2 else (2,):
        per_h = {h: purged_splits(T, k_try, h) for h in horizons}
        if all(len(s) >= 2 for s in per_h.values()):
            return per_h, k_try, []
        if k_try == 2:
            skip = [h for h in horizons if len(per_h[h]) < 2]
            return per_h, k_try, skip
    raise AssertionError("unreachable")


# --- Shrinkage level selection ---


def select_alpha(
    X: np.ndarray,
    Y: np.ndarray,
    splits: list[tuple[np.ndarray, np.ndarray]],
    grid: np.ndarray | None = None,
) -> float:
    """Candidate with the smallest mean per-observation validation loss.

    Ties go to the larger penalty.  Requires at least two valid folds.
    """
    if len(splits) < 2:
        raise ValueError("need >= 2 valid folds for CV")
    if grid is None:
        grid = alpha_grid(alpha_max(X, Y))
    losses = np.zeros(len(grid))
    for train, test in splits:
        # Walk the path from strongest penalty down, warm-starting each fit.
        B = None
        for i, alpha in enumerate(grid):
            fit = fit_multitask_enet(X[train], Y[train], float(alpha), B0=B)
            B = fit.B
            resid = Y[test] - X[test] @ fit.B
            losses[i] += float(np.sum(resid**2)) / len(test)
    losses /= len(splits)
    best = losses.min()
    winners = grid[losses <= best]
    return float(winners.max())


def shared_alpha(per_horizon_alphas: list[float]) -> float:
    """Median of available per-horizon levels; 0.1 when none exist."""
    if not per_horizon_alphas:
        return 0.1
    return float(np.median(per_horizon_alphas))


# --- Non-overlapping block bootstrap ---


def nbb_block_size(n: int) -> int:
    """n^(1/3) rule clipped to the weekly range [4, 20]."""
    return int(min(20, max(4, round(n ** (1.0 / 3.0)))))


def nbb_indices(n: int, b: int, rng: np.random.Generator) -> np.ndarray:
    """Length-n index sequence from sorted non-overlapping blocks.

    Candidate starts are multiples of b not exceeding n - b, drawn i.i.d.
    with replacement, sorted ascending, concatenated as length-b runs and
    truncated at n.
    """
    if b > n:
        raise ValueError("block size exceeds sample size")
    starts = np.arange(0, n - b + 1, b)
    n_blocks = -(-n // b)
    drawn = np.sort(starts[rng.integers(0, len(starts), size=n_blocks)])
    idx = (drawn[:, None] + np.arange(b)[None, :]).ravel()
    return idx[:n]


# --- Stability probabilities and thresholds ---


@dataclass
class StabilityReport:
    feature_names: list[str]
    pi_base: dict[str, float]
    pi_cond: dict[str, float]  # keyed by full feature name
    r_valid: int


@dataclass
class SelectionResult:
    per_horizon: dict[int, StabilityReport] = field(default_factory=dict)
    alphas: dict[int, float] = field(default_factory=dict)
    selected: dict[int, list[str]] = field(default_factory=dict)
    union: list[str] = field(default_factory=list)
    skip_cv: list[int] = field(default_factory=list)
    k_folds: int = 3


def stability_probabilities(
    selection_matrix: np.ndarray, feature_names: list[str]
) -> StabilityReport:
    """Base and conditional selection frequencies.

    ``selection_matrix`` is (R_valid, p) boolean: transform j selected in
    draw r.  A base never selected gets conditional stability 0 for all
    its transforms.
    """
    r_valid = selection_matrix.shape[0]
    if r_valid < 1:
        raise ValueError("no valid bootstrap fits")
    groups: dict[str, list[int]] = {}
    for j, name in enumerate(feature_names):
        base, _, _ = parse_feature_name(name)
        groups.setdefault(base, []).append(j)
    pi_base = {}
    pi_cond = {}
    for base, cols in groups.items():
        any_sel = selection_matrix[:, cols].any(axis=1)
        pb = float(any_sel.sum()) / r_valid
        pi_base[base] = pb
        for j in cols:
            count = float(selection_matrix[:, j].sum())
            pi_cond[feature_names[j]] = count / (r_valid * pb) if pb > 0 else 0.0
    return StabilityReport(list(feature_names), pi_base, pi_cond, r_valid)


def apply_thresholds(
    report: StabilityReport, tau_g: float = TAU_GLOBAL, tau_c: float = TAU_COND
) -> list[str]:
    """Gate bases at tau_g, transforms at tau_c, then keep the top-1 per family.

    Family tie-breaks prefer the shorter window.
    """
    selected: list[str] = []
    by_base: dict[str, dict[str, list[tuple[float, int, str]]]] = {}
    for name in report.feature_names:
        base, family, window = parse_feature_name(name)
        if report.pi_base.get(base, 0.0) < tau_g:
            continue
        if report.pi_cond.get(name, 0.0) < tau_c:
            continue
        by_base.setdefault(base, {}).setdefault(family, []).append(
            (report.pi_cond[name], window, name)
        )
    for base in sorted(by_base):
        for family in sorted(by_base[base], key=lambda f: _FAMILY_ORDER[f]):
            cands = by_base[base][family]
            cands.sort(key=lambda t: (-t[0], t[1]))
            selected.append(cands[0][2])
    return selected


def bootstrap_selection(
    X: np.ndarray,
    Y: np.ndarray,
    alpha: float,
    n_draws: int,
    seed: int,
    context: tuple = (),
) -> tuple[np.ndarray, int]:
    """NBB refits; returns the (R_valid, p) selection matrix and failure count."""
    n = X.shape[0]
    b = nbb_block_size(n)
    rows = []
    failures = 0
    for r in range(n_draws):
        rng = make_stream(seed, "nbb", *context, r)
        idx = nbb_indices(n, b, rng)
        try:
            fit = fit_multitask_enet(X[idx], Y[idx], alpha)
        except (ValueError, np.linalg.LinAlgError):
            failures += 1
            continue
        if not np.isfinite(fit.B).all():
            failures += 1
            continue
        rows.append(np.linalg.norm(fit.B, axis=1) > SELECT_NORM_TOL)
    if not rows:
        raise RuntimeError("all bootstrap refits failed")
    return np.array(rows, dtype=bool), failures


def run_stability_selection(
    tensor: FeatureTensor,
    n_draws: int = 1000,
    seed: int = 7,
    tau_g: float = TAU_GLOBAL,
    tau_c: float = TAU_COND,
) -> SelectionResult:
    """Full selection pass over all horizons of a feature tensor."""
    result = SelectionResult()
    horizons = tensor.horizons
    T = tensor.y_current.shape[0]
    per_h_splits, k_used, skip = make_purged_splits(T, horizons)
    result.skip_cv = skip
    result.k_folds = k_used

    cv_alphas = {}
    for j, h in enumerate(horizons):
        X = tensor.x_macro[:, j, :]
        Y = tensor.y_current[:, j, :]
        if h in skip or len(per_h_splits[h]) < 2:
            continue
        cv_alphas[h] = select_alpha(X, Y, per_h_splits[h])
    fallback = shared_alpha(list(cv_alphas.values()))

    union: set[str] = set()
    for j, h in enumerate(horizons):
        X = tensor.x_macro[:, j, :]
        Y = tensor.y_current[:, j, :]
        alpha = cv_alphas.get(h, fallback)
        result.alphas[h] = alpha
        sel_matrix, failures = bootstrap_selection(
            X, Y, alpha, n_draws, seed, context=("h", h)
        )
        if failures:
            log.warning("horizon %d: %d bootstrap refits failed", h, failures)
        report = stability_probabilities(sel_matrix, tensor.feature_names)
        result.per_horizon[h] = report
        picked = apply_thresholds(report, tau_g, tau_c)
        result.selected[h] = picked
        union.update(picked)
    result.union = sorted(union)
    return result


def save_selection(result: SelectionResult, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        str(h): {
            "pi_base": rep.pi_base,
            "pi_cond": rep.pi_cond,
            "r_valid": rep.r_valid,
            "alpha": result.alphas[h],
        }
        for h, rep in result.per_horizon.items()
    }
    with open(out_dir / "stability_report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    with open(out_dir / "selected_features.json", "w") as fh:
        json.dump(
            {
                "per_horizon": {str(h): v for h, v in result.selected.items()},
                "union": result.union,
                "k_folds": result.k_folds,
                "skip_cv": result.skip_cv,
            },
            fh,
            indent=2,
        )
