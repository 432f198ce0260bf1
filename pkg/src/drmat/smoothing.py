"""Nadaraya-Watson mean fits, squared residuals and bandwidth rules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from drmat.errors import DomainError
from drmat.kernels import kernel_matrix

DEFAULT_H_MULTIPLIER = 1.25
DEFAULT_H1_CONSTANT = 1.0
# (0.5 + 0.25 i), i = 0..5
SWEEP_MULTIPLIERS = tuple(0.5 + 0.25 * i for i in range(6))


@dataclass
class FitArtifacts:
    """Everything the U-statistics need from the mean fit."""

    reduced: np.ndarray
    ghat: np.ndarray
    resid2: np.ndarray
    sigma2: float
    h1: float


def _as_2d(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    return Z[:, None] if Z.ndim == 1 else Z


def nw_regress(reduced, y, h1: float, *, leave_one_out: bool = False) -> np.ndarray:
    """Nadaraya-Watson fit at the sample points.

    Parameters
    ----------
    reduced : array of shape (n, d)
        Predictors the mean is smoothed over (typically B^T x_i).
    y : array of shape (n,)
    h1 : float
        Bandwidth of the product quartic kernel.
    leave_one_out : bool
        Drop observation i from its own fit. A point with no other
        observation inside the kernel support falls back to its own response.

    Returns
    -------
    ndarray of shape (n,)
        Fitted means. With the own observation included, the self-weight
        Q_{h1}(0) > 0 keeps every denominator positive.
    """
    Z = _as_2d(reduced)
    y = np.asarray(y, dtype=float)
    n = Z.shape[0]
    if n < 2:
        raise DomainError("need at least two observations")
    if y.shape != (n,):
        raise DomainError(f"y has shape {y.shape}, expected ({n},)")
    if not h1 > 0:
        raise DomainError("h1 must be positive")
    if not np.all(np.isfinite(Z)):
        raise DomainError("reduced predictors must be finite")
    # the h^{-d} factor cancels in the ratio
    W = kernel_matrix(Z, h1, scaled=False)
    if leave_one_out:
        own = W.diagonal().copy()
        np.fill_diagonal(W, 0.0)
        isolated = np.flatnonzero(W.sum(axis=1) == 0.0)
        W[isolated, isolated] = own[isolated]
    return (W * y[None, :]).sum(axis=1) / W.sum(axis=1)


def residuals_sigma2(y, ghat) -> tuple[np.ndarray, float]:
    y = np.asarray(y, dtype=float)
    ghat = np.asarray(ghat, dtype=float)
    if y.shape != ghat.shape:
        raise DomainError(f"length mismatch: {y.shape} vs {ghat.shape}")
    resid2 = (y - ghat) ** 2
    return resid2, float(resid2.mean())


def _check_rule_args(n, qhat, factor, name):
    if n < 2:
        raise DomainError("n must be >= 2")
    if qhat < 1:
        raise DomainError("dimension must be >= 1")
    if not factor > 0:
        raise DomainError(f"{name} must be positive")


def bandwidth_h(n: int, qhat: int, multiplier: float = DEFAULT_H_MULTIPLIER) -> float:
    """Test bandwidth ``multiplier * n^{-1/(4+qhat)}``."""
    _check_rule_args(n, qhat, multiplier, "multiplier")
    return multiplier * n ** (-1.0 / (4 + qhat))


def bandwidth_h1(n: int, qhat: int, c: float = DEFAULT_H1_CONSTANT) -> float:
    """Mean-estimation bandwidth ``c * n^{-1/(4+qhat)}``."""
    _check_rule_args(n, qhat, c, "c")
    return c * n ** (-1.0 / (4 + qhat))


def fit_mean(reduced, y, h1: float, *, leave_one_out: bool = False) -> FitArtifacts:
    Z = _as_2d(reduced)
    ghat = nw_regress(Z, y, h1, leave_one_out=leave_one_out)
    resid2, sigma2 = residuals_sigma2(y, ghat)
    return FitArtifacts(reduced=Z, ghat=ghat, resid2=resid2, sigma2=sigma2, h1=h1)
