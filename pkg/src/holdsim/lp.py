"""Classical local projections with RW1 smoothing and simultaneous bands.

Per horizon and target: OLS of the realized future outcome on the current
standardized targets plus stability-selected macro features, with HC1
standard errors.  Coefficient paths are smoothed across horizons by a
first-order random-walk quadratic penalty solved in closed form, and
uncertainty comes from a stationary bootstrap with studentized k-max
simultaneous bands.  Effects are reported in native units via the
expanding reference scales recorded at the training cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from holdsim.features import FeatureTensor
from holdsim.rng import make_stream

SE_FLOOR = 1e-8
RIDGE = 1e-8


def ols_hc1(Z: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """OLS with intercept and HC1 sandwich standard errors.

    Returns (beta, se, ridged) with the intercept in position 0.  Rank
    deficient designs get a small ridge on Z'Z and are flagged.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n = Z.shape[0]
    Z1 = np.column_stack([np.ones(n), Z])
    P1 = Z1.shape[1]
    if n <= P1:
        raise ValueError(f"too few observations: n={n}, params={P1}")
    A = Z1.T @ Z1
    ridged = np.linalg.matrix_rank(A) < P1
    if ridged:
        A = A + RIDGE * np.eye(P1)
    Ainv = np.linalg.inv(A)
    beta = Ainv @ (Z1.T @ y)
    resid = y - Z1 @ beta
    meat = (Z1 * resid[:, None] ** 2).T @ Z1
    cov = (n / (n - P1)) * Ainv @ meat @ Ainv
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return beta, se, ridged


def _fit_horizon(Z: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """OLS+HC1 for all targets sharing one design; returns (P+1, K) arrays."""
    n = Z.shape[0]
    Z1 = np.column_stack([np.ones(n), Z])
    P1 = Z1.shape[1]
    if n <= P1:
        raise ValueError(f"too few observations: n={n}, params={P1}")
    A = Z1.T @ Z1
    ridged = np.linalg.matrix_rank(A) < P1
    if ridged:
        A = A + RIDGE * np.eye(P1)
    Ainv = np.linalg.inv(A)
    beta = Ainv @ (Z1.T @ Y)
    resid = Y - Z1 @ beta
    factor = n / (n - P1)
    se = np.empty_like(beta)
    for k in range(Y.shape[1]):
        meat = (Z1 * resid[:, k][:, None] ** 2).T @ Z1
        cov = factor * Ainv @ meat @ Ainv
        se[:, k] = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return beta, se, ridged


def rw1_smooth(
    beta: np.ndarray,
    se: np.ndarray,
    delta: np.ndarray,
    lam: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Precision-weighted RW1 smoothing of one coefficient path.

    Minimizes sum_j (b_j - beta_j)^2 / se_j^2
            + lam * sum_j (b_{j+1} - b_j)^2 / delta_j
    via its tridiagonal normal equations.  Smoothed standard errors follow
    from the linear smoother matrix S: var = diag(S diag(se^2) S').
    """
    beta = np.asarray(beta, dtype=float)
    se = np.maximum(np.asarray(se, dtype=float), SE_FLOOR)
    H = len(beta)
    D = np.diag(1.0 / se**2)
    A = D.copy()
    for j in range(H - 1):
        w = lam / delta[j]
        A[j, j] += w
        A[j + 1, j + 1] += w
        A[j, j + 1] -= w
        A[j + 1, j] -= w
    S = np.linalg.solve(A, D)
    b = S @ beta
    var = np.einsum("ij,j,ij->i", S, se**2, S)
    return b, np.sqrt(np.maximum(var, 0.0))


def median_horizon_weeks(horizons: list[int]) -> float:
    """Median of ceil(h/7); midpoint of the two central values when even."""
    weeks = sorted(math.ceil(h / 7) for h in horizons)
    return float(np.median(weeks))


def mean_block_length(T: int, horizons: list[int]) -> float:
    l_med = median_horizon_weeks(horizons)
    return max(2.0, min(T - 1.0, max(1.75 * T ** (1.0 / 3.0), l_med)))


def stationary_bootstrap_indices(
    T: int, mean_len: float, rng: np.random.Generator
) -> np.ndarray:
    """Stationary bootstrap index sequence with circular wrapping.

    Blocks start uniformly and continue with probability 1 - 1/mean_len.
    """
    if mean_len < 2:
        raise ValueError("mean block length must be >= 2")
    p_restart = 1.0 / mean_len
    restarts = rng.random(T) < p_restart
    starts = rng.integers(0, T, size=T)
    idx = np.empty(T, dtype=np.int64)
    idx[0] = starts[0]
    for t in range(1, T):
        idx[t] = starts[t] if restarts[t] else (idx[t - 1] + 1) % T
    return idx


@dataclass
class IrfSurface:
    horizons: list[int]
    predictor_names: list[str]  # current targets first, then selected features
    target_names: list[str]
    beta_raw: np.ndarray  # (H, P, K)
    se_raw: np.ndarray
    beta_rw1: np.ndarray
    se_rw1: np.ndarray
    crit: np.ndarray  # (P, K)
    estimate_native: np.ndarray  # (H, P, K)
    lo_native: np.ndarray
    hi_native: np.ndarray
    significant: np.ndarray  # bool (H, P, K)
    dropped_replicates: int = 0

    def to_frame(self, basket: str = "") -> pd.DataFrame:
        rows = []
        for j, h in enumerate(self.horizons):
            for p, pname in enumerate(self.predictor_names):
                for k, tname in enumerate(self.target_names):
                    rows.append(
                        {
                            "basket": basket,
                            "predictor": pname,
                            "target": tname,
                            "horizon": h,
                            "estimate": self.estimate_native[j, p, k],
                            "lo": self.lo_native[j, p, k],
                            "hi": self.hi_native[j, p, k],
                            "significant": bool(self.significant[j, p, k]),
                        }
                    )
        return pd.DataFrame(rows)


def simultaneous_critical_values(
    t_stats: np.ndarray, k_max: int, level: float = 0.95
) -> tuple[np.ndarray, int]:
    """k-max studentized critical values per (p, k).

    ``t_stats`` is (B, H, P, K); replicates with non-finite statistics for
    a pair are dropped from that pair's quantile.
    """
    B, H = t_stats.shape[0], t_stats.shape[1]
    abs_sorted = np.sort(np.abs(t_stats), axis=1)
    M = abs_sorted[:, H - k_max, :, :]  # (B, P, K)
    finite = np.isfinite(M)
    dropped = int(np.sum(~finite))
    crit = np.empty(M.shape[1:])
    for p in range(M.shape[1]):
        for k in range(M.shape[2]):
            vals = M[finite[:, p, k], p, k]
            if len(vals) == 0:
                crit[p, k] = np.nan
            else:
                crit[p, k] = np.quantile(vals, level)
    return crit, dropped


def estimate_surface(
    tensor: FeatureTensor,
    selected_features: list[str],
    lam: float = 1.0,
    n_boot: int = 1000,
    seed: int = 9,
    level: float = 0.95,
) -> IrfSurface:
    """Full LP pipeline for one basket's tensor."""
    if not selected_features:
        raise ValueError("empty selected feature set")
    horizons = tensor.horizons
    H = len(horizons)
    t_star = tensor.t_star
    feat_idx = [tensor.feature_names.index(f) for f in selected_features]
    n_y = len(tensor.target_names)
    predictor_names = list(tensor.target_names) + list(selected_features)
    P = len(predictor_names)
    K = n_y

    designs = []
    for j in range(H):
        Z = np.concatenate(
            [tensor.y_current[:t_star, j, :], tensor.x_macro[:t_star, j, :][:, feat_idx]],
            axis=1,
        )
        designs.append(Z)
    targets = [tensor.y_future[:, j, :] for j in range(H)]

    def fit_all(row_idx: np.ndarray | None):
        beta = np.empty((H, P, K))
        se = np.empty((H, P, K))
        for j in range(H):
            Z, Y = designs[j], targets[j]
            if row_idx is not None:
                Z, Y = Z[row_idx], Y[row_idx]
            b, s, _ = _fit_horizon(Z, Y)
            beta[j] = b[1:]  # intercepts are never smoothed or reported
            se[j] = s[1:]
        return beta, se

    beta_raw, se_raw = fit_all(None)

    omega = np.array([math.ceil(h / 7) for h in horizons], dtype=float)
    delta = np.diff(omega)
    beta_rw1 = np.empty_like(beta_raw)
    se_rw1 = np.empty_like(se_raw)
    for p in range(P):
        for k in range(K):
            beta_rw1[:, p, k], se_rw1[:, p, k] = rw1_smooth(
                beta_raw[:, p, k], se_raw[:, p, k], delta, lam
            )

    mean_len = mean_block_length(t_star, horizons)
    t_stats = np.empty((n_boot, H, P, K))
    for b_i in range(n_boot):
        rng = make_stream(seed, "stationary-bootstrap", b_i)
        idx = stationary_bootstrap_indices(t_star, mean_len, rng)
        try:
            beta_b, se_b = fit_all(idx)
        except (ValueError, np.linalg.LinAlgError):
            t_stats[b_i] = np.nan
            continue
        brw = np.empty_like(beta_b)
        srw = np.empty_like(se_b)
        for p in range(P):
            for k in range(K):
                brw[:, p, k], srw[:, p, k] = rw1_smooth(
                    beta_b[:, p, k], se_b[:, p, k], delta, lam
                )
        with np.errstate(divide="ignore", invalid="ignore"):
            t_stats[b_i] = (brw - beta_rw1) / np.maximum(srw, SE_FLOOR)

    k_max = min(2, H)
    crit, dropped = simultaneous_critical_values(t_stats, k_max, level)

    lo_std = beta_rw1 - crit[None, :, :] * se_rw1
    hi_std = beta_rw1 + crit[None, :, :] * se_rw1
    scale = tensor.ref_scale_y[:, None, :]  # (H, 1, K)
    return IrfSurface(
        horizons=list(horizons),
        predictor_names=predictor_names,
        target_names=list(tensor.target_names),
        beta_raw=beta_raw,
        se_raw=se_raw,
        beta_rw1=beta_rw1,
        se_rw1=se_rw1,
        crit=crit,
        estimate_native=beta_rw1 * scale,
        lo_native=lo_std * scale,
        hi_native=hi_std * scale,
        significant=(lo_std > 0) | (hi_std < 0),
        dropped_replicates=dropped,
    )


# --- Ranking and surface comparison ---


def rank_effects(
    surfaces: dict[str, pd.DataFrame], top_n: int = 8, top_baskets: int = 4
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Per-horizon top effects and cross-basket stability rankings.

    (1) per horizon: significant (predictor, target) rows ranked by
    absolute native effect, top ``top_n``.
    (2) per (horizon, target): predictors ranked by the number of baskets
    with a significant effect; ties break by mean then max absolute effect.
    """
    allrows = pd.concat(surfaces.values(), ignore_index=True)
    sig = allrows[allrows["significant"]].copy()
    sig["abs_effect"] = sig["estimate"].abs()

    top_rows = []
    for h, group in sig.groupby("horizon"):
        ranked = group.sort_values("abs_effect", ascending=False).head(top_n)
        for rank, (_, row) in enumerate(ranked.iterrows(), start=1):
            top_rows.append(
                {
                    "horizon": h,
                    "rank": rank,
                    "basket": row["basket"],
                    "predictor": row["predictor"],
                    "target": row["target"],
                    "effect": row["estimate"],
                }
            )
    per_horizon = pd.DataFrame(
        top_rows, columns=["horizon", "rank", "basket", "predictor", "target", "effect"]
    )

    allrows["abs_effect"] = allrows["estimate"].abs()
    stab_rows = []
    for (h, target), group in allrows.groupby(["horizon", "target"]):
        agg = (
            group.groupby("predictor")
            .agg(
                n_sig=("significant", "sum"),
                mean_abs=("abs_effect", "mean"),
                max_abs=("abs_effect", "max"),
            )
            .reset_index()
        )
        agg = agg.sort_values(
            ["n_sig", "mean_abs", "max_abs"], ascending=[False, False, False]
        ).head(top_baskets)
        for rank, (_, row) in enumerate(agg.iterrows(), start=1):
            stab_rows.append(
                {
                    "horizon": h,
                    "target": target,
                    "rank": rank,
                    "predictor": row["predictor"],
                    "n_baskets_significant": int(row["n_sig"]),
                    "mean_abs_effect": row["mean_abs"],
                    "max_abs_effect": row["max_abs"],
                }
            )
    stability = pd.DataFrame(
        stab_rows,
        columns=[
            "horizon", "target", "rank", "predictor",
            "n_baskets_significant", "mean_abs_effect", "max_abs_effect",
        ],
    )
    return per_horizon, stability


def compare_surfaces(a: pd.DataFrame, b: pd.DataFrame) -> dict:
    """Agreement metrics between two IRF surfaces on identical keys.

    Sign match excludes exact-zero estimates from its denominator; interval
    overlap counts nonempty band intersections.
    """
    keys = ["predictor", "target", "horizon"]
    a = a.set_index(keys).sort_index()
    b = b.set_index(keys).sort_index()
    if not a.index.equals(b.index):
        raise ValueError("surface keys do not match")

    est_a = a["estimate"].to_numpy()
    est_b = b["estimate"].to_numpy()
    sig_a = a["significant"].to_numpy(dtype=bool)
    sig_b = b["significant"].to_numpy(dtype=bool)

    nonzero = (est_a != 0) & (est_b != 0)
    same_sign = np.sign(est_a) == np.sign(est_b)
    overlap = (a["lo"].to_numpy() <= b["hi"].to_numpy()) & (
        b["lo"].to_numpy() <= a["hi"].to_numpy()
    )

    def rate(mask, denom):
        d = int(denom.sum())
        return float(mask[denom].sum()) / d if d else None

    both = sig_a & sig_b
    return {
        "n": int(len(est_a)),
        "sign_match_rate": rate(same_sign, nonzero),
        "overlap_rate": float(overlap.mean()),
        "sig_rate_a": float(sig_a.mean()),
        "sig_rate_b": float(sig_b.mean()),
        "sign_match_both_sig": rate(same_sign, both & nonzero),
        "sign_match_a_sig": rate(same_sign, sig_a & nonzero),
    }
