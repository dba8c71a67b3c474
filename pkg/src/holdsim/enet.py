"""Multitask elastic net via block coordinate descent.

Objective, for X (T x p), Y (T x m), coefficient matrix B (p x m):

    (1 / 2T) ||Y - X B||_F^2 + alpha * (1/4 ||B||_F^2 + 1/2 sum_j ||B_j.||_2)

i.e. an l1_ratio of 1/2 split between ridge and row-wise group lasso.
Inputs are standardized, so no intercept is fitted.  Rows update by group
soft-thresholding on precomputed Gram matrices, which keeps repeated
bootstrap refits cheap.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

try:
    if os.environ.get("HOLDSIM_FORCE_PY") == "1":
        raise ImportError
    from holdsim._enet_cy import bcd_solve as _bcd_solve_cy
except ImportError:  # pragma: no cover - depends on build environment
    _bcd_solve_cy = None


@dataclass
class EnetFit:
    B: np.ndarray  # (p, m)
    alpha: float
    objective: float
    n_sweeps: int
    converged: bool


def objective_value(X: np.ndarray, Y: np.ndarray, B: np.ndarray, alpha: float) -> float:
    T = X.shape[0]
    resid = Y - X @ B
    row_norms = np.linalg.norm(B, axis=1)
    return (
        0.5 / T * float(np.sum(resid**2))
        + alpha * (0.25 * float(np.sum(B**2)) + 0.5 * float(np.sum(row_norms)))
    )


def alpha_max(X: np.ndarray, Y: np.ndarray) -> float:
    """Smallest penalty that zeroes every coefficient row."""
    T = X.shape[0]
    return 2.0 * float(np.max(np.linalg.norm(X.T @ Y, axis=1))) / T


def alpha_grid(a_max: float, n_alphas: int = 100, ratio: float = 1e-3) -> np.ndarray:
    """Log-spaced candidate path from alpha_max down to ratio * alpha_max."""
    return np.geomspace(a_max, a_max * ratio, n_alphas)


def fit_multitask_enet(
    X: np.ndarray,
    Y: np.ndarray,
    alpha: float,
    tol: float = 1e-8,
    max_sweeps: int = 10000,
    B0: np.ndarray | None = None,
) -> EnetFit:
    """Solve the multitask elastic net by cyclic block coordinate descent.

    Converges when the largest coefficient update in a full sweep drops
    below ``tol``.  ``B0`` warm-starts the iteration (e.g. from a nearby
    penalty on the same data).  With alpha = 0 the problem is plain least
    squares and the minimum-norm solution is returned directly.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if not (np.isfinite(X).all() and np.isfinite(Y).all()):
        raise ValueError("non-finite values in X or Y")
    T, p = X.shape

    if alpha == 0.0:
        B = np.linalg.lstsq(X, Y, rcond=None)[0]
        return EnetFit(B, 0.0, objective_value(X, Y, B, 0.0), 0, True)

    G = X.T @ X / T  # (p, p)
    C = X.T @ Y / T  # (p, m)
    diag = np.diag(G).copy()
    lam = alpha / 2.0
    B = np.zeros((p, Y.shape[1])) if B0 is None else np.array(B0, dtype=float, copy=True)
    if _bcd_solve_cy is not None:
        B = np.ascontiguousarray(B)
        sweeps, converged = _bcd_solve_cy(
            np.ascontiguousarray(G), np.ascontiguousarray(C), diag, B, lam, tol, max_sweeps
        )
        return EnetFit(B, alpha, objective_value(X, Y, B, alpha), sweeps, converged)
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in range(p):
            # Partial residual correlation with column j, excluding its own term.
            c_j = C[j] - G[j] @ B + diag[j] * B[j]
            norm_c = np.linalg.norm(c_j)
            # Tiny relative slack so the boundary case alpha == alpha_max
            # zeroes exactly despite summation-order rounding.
            if norm_c <= lam * (1.0 + 1e-12) or diag[j] + lam <= 0:
                new = np.zeros_like(B[j])
            else:
                new = (1.0 - lam / norm_c) * c_j / (diag[j] + lam)
            delta = np.max(np.abs(new - B[j]))
            if delta > max_delta:
                max_delta = delta
            B[j] = new
        if max_delta < tol:
            converged = True
            break
    return EnetFit(B, alpha, objective_value(X, Y, B, alpha), sweeps, converged)


def kkt_residuals(X: np.ndarray, Y: np.ndarray, B: np.ndarray, alpha: float) -> np.ndarray:
    """Per-row KKT residuals at B.

    For nonzero rows: norm of the stationarity equation.  For zero rows:
    excess of the subgradient correlation over the threshold alpha/2
    (clipped at zero), so feasible rows report 0.
    """
    T = X.shape[0]
    grad_loss = -X.T @ (Y - X @ B) / T  # (p, m)
    lam = alpha / 2.0
    out = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        nrm = np.linalg.norm(B[j])
        if nrm > 0:
            out[j] = np.linalg.norm(grad_loss[j] + lam * B[j] + lam * B[j] / nrm)
        else:
            out[j] = max(0.0, np.linalg.norm(grad_loss[j]) - lam)
    return out
