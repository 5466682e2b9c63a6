"""
Least-squares fitting shared by the normal-return models and the regressions
"""
from dataclasses import dataclass

import numpy as np
import statsmodels.api as sm

from src.errors import InsufficientDataError, RankDeficiencyError

RANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class LeastSquaresSolution:
    coefficients: np.ndarray
    residuals: np.ndarray
    singular_values: np.ndarray


def _as_system(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("design matrix must be 2-dimensional")
    n, k = X.shape
    if y.shape != (n,):
        raise ValueError(f"response has shape {y.shape}, expected ({n},)")
    if n < k:
        raise InsufficientDataError(f"{n} observations for {k} columns")
    return X, y


def check_full_rank(X: np.ndarray, tolerance: float = RANK_TOLERANCE) -> np.ndarray:
    """
    Singular values of X, largest first.

    Raises RankDeficiencyError when the smallest singular value is at or below
    `tolerance` times the largest.
    """
    s = np.linalg.svd(X, compute_uv=False)
    if s.size == 0 or s[0] == 0.0 or s[-1] <= tolerance * s[0]:
        smallest = s[-1] if s.size else 0.0
        largest = s[0] if s.size else 0.0
        raise RankDeficiencyError(
            f"design matrix is rank deficient (singular values {smallest:.3g} / {largest:.3g})"
        )
    return s


def solve_least_squares(X: np.ndarray, y: np.ndarray, tolerance: float = RANK_TOLERANCE) -> LeastSquaresSolution:
    """Minimise ||y - Xb|| for a full-rank X. Coefficients only, for the bootstrap and ridge loops."""
    X, y = _as_system(X, y)
    s = check_full_rank(X, tolerance)
    coefficients, *_ = np.linalg.lstsq(X, y, rcond=None)
    return LeastSquaresSolution(coefficients, y - X @ coefficients, s)


def fit_linear_model(X: np.ndarray, y: np.ndarray, tolerance: float = RANK_TOLERANCE):
    """statsmodels OLS (QR) fit of y on X after the rank check"""
    X, y = _as_system(X, y)
    check_full_rank(X, tolerance)
    return sm.OLS(y, X).fit(method="qr")
