"""Ordinary least squares via singular value decomposition.

This is the single fitting engine behind the uncorrected analysis, the
calibration-model residual variance, and every inner refit of the
simulation-extrapolation and bootstrap loops.  SVD is used instead of the
normal equations so that near-collinear designs degrade gracefully into an
explicit rank error rather than silently unstable coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InsufficientDataError, SingularDesignError

# Relative singular-value cutoff below which a design counts as rank deficient.
RANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class FitResult:
    """Coefficients and classical OLS uncertainty summaries.

    ``coefficients`` follow the design-matrix column order (intercept first).
    ``residual_variance`` uses the n - p convention, p counting the intercept,
    so an intercept-only fit reproduces the unbiased sample variance.
    """

    coefficients: np.ndarray
    standard_errors: np.ndarray
    residual_variance: float
    r_squared: float
    n: int
    p: int

    def __post_init__(self):
        for name in ("coefficients", "standard_errors"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.flags.writeable:
                arr = arr.copy()
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.coefficients.shape != self.standard_errors.shape:
            raise ValueError("coefficients and standard_errors must align")


def ols_fit(X: np.ndarray, y: np.ndarray) -> FitResult:
    """Least-squares fit of ``y`` on the columns of ``X``.

    Parameters
    ----------
    X : (n, p) design matrix, full column rank, n > p.
    y : (n,) response vector.

    Raises
    ------
    SingularDesignError
        If the smallest singular value is below ``RANK_TOLERANCE`` times the
        largest.
    InsufficientDataError
        If there are no residual degrees of freedom (n <= p).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D design matrix")
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, expected ({n},)")
    if n <= p:
        raise InsufficientDataError(f"n={n} rows cannot identify p={p} parameters")

    u, s, vt = np.linalg.svd(X, full_matrices=False)
    if s[0] <= 0.0 or s[-1] < RANK_TOLERANCE * s[0]:
        raise SingularDesignError(
            f"design matrix is rank deficient (singular value ratio "
            f"{s[-1] / s[0] if s[0] > 0 else 0:.3e} < {RANK_TOLERANCE:g})"
        )
    coef = vt.T @ ((u.T @ y) / s)
    residuals = y - X @ coef
    rss = float(residuals @ residuals)
    residual_variance = rss / (n - p)

    centered = y - y.mean()
    tss = float(centered @ centered)
    if tss > 0.0:
        r_squared = 1.0 - rss / tss
    else:
        r_squared = 1.0 if rss <= 1e-30 else 0.0  # constant response

    # diag((X'X)^-1) = sum_k V[j,k]^2 / s[k]^2, from X = U S V'.
    xtx_inv_diag = np.einsum("kj,kj->j", vt / s[:, None], vt / s[:, None])
    standard_errors = np.sqrt(residual_variance * xtx_inv_diag)

    return FitResult(
        coefficients=coef,
        standard_errors=standard_errors,
        residual_variance=residual_variance,
        r_squared=r_squared,
        n=n,
        p=p,
    )


def residual_variance_of(X: np.ndarray, v: np.ndarray) -> float:
    """Residual variance of ``v`` regressed on the columns of ``X``.

    With an intercept-only X this is the unbiased sample variance of ``v``;
    with covariates it is the conditional variance of ``v`` given them.
    """
    return ols_fit(X, v).residual_variance


def wald_interval(fit: FitResult, index: int = 1, level: float = 0.95):
    """Normal-theory t interval for one coefficient of an OLS fit."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    half = stats.t.ppf(0.5 + level / 2.0, fit.n - fit.p) * fit.standard_errors[index]
    estimate = fit.coefficients[index]
    return float(estimate - half), float(estimate + half)
