"""SIR-based discretization-expectation estimation of the central subspace.

Each observed response value t = y_i defines a binary slice I(y <= t). The
slice-wise SIR matrix is Sigma^{-1} m_n(t) m_n(t)^T with
m_n(t) = n^{-1} sum_i (x_i - xbar) I(y_i <= t); averaging over all t = y_i
gives the DEE target. Its structural dimension is picked by the ridge-type
eigenvalue ratio.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from drmat.errors import DomainError, IllConditionedCovarianceError
from drmat.smoothing import DEFAULT_H_MULTIPLIER

logger = logging.getLogger(__name__)

COND_TOL = 1e-10


@dataclass
class DeeDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sigma_hat: np.ndarray
    # symmetric whitened matrix Sigma^{-1/2} Lbar Sigma^{-1/2}
    whitened: np.ndarray
    lbar: np.ndarray


@dataclass
class BasisEstimate:
    basis: np.ndarray
    qhat: int
    eigenvalues: np.ndarray
    c_n: float

    def project(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.basis


def sir_moment_vector(X, xbar, y, t: float) -> np.ndarray:
    """m_n(t) = n^{-1} sum_i (x_i - xbar) I(y_i <= t)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise DomainError("need at least two observations")
    ind = (y <= t).astype(float)
    return ((X - np.asarray(xbar, dtype=float)) * ind[:, None]).sum(axis=0) / n


def slice_moments(X, y) -> np.ndarray:
    """Rows are m_n(y_i) for i = 1..n."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    Xc = X - X.mean(axis=0)
    # ind[i, j] = I(y_j <= y_i)
    ind = (y[None, :] <= y[:, None]).astype(float)
    return ind @ Xc / n


def _inv_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    if w[0] <= COND_TOL * w[-1] or w[-1] <= 0:
        raise IllConditionedCovarianceError(float(w[0]), float(w[-1]))
    return (V / np.sqrt(w)) @ V.T


def _fix_signs(B: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive
    idx = np.argmax(np.abs(B), axis=0)
    signs = np.sign(B[idx, np.arange(B.shape[1])])
    signs[signs == 0] = 1.0
    return B * signs


def dee_matrix(X, y) -> DeeDecomposition:
    """Eigen-decomposition of the DEE matrix Sigma^{-1} Lbar.

    The non-symmetric product is replaced by the similar symmetric matrix
    A = Sigma^{-1/2} Lbar Sigma^{-1/2}; directions are mapped back with
    Sigma^{-1/2} and then orthonormalised in eigenvalue order.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise DomainError(f"y has shape {y.shape}, expected ({n},)")
    if n <= p:
        raise DomainError(f"need n > p, got n={n}, p={p}")
    Xc = X - X.mean(axis=0)
    sigma_hat = Xc.T @ Xc / n
    sigma_hat = (sigma_hat + sigma_hat.T) / 2
    root_inv = _inv_sqrt(sigma_hat)

    m = slice_moments(X, y)
    lbar = m.T @ m / n
    A = root_inv @ lbar @ root_inv
    A = (A + A.T) / 2
    w, V = np.linalg.eigh(A)
    order = np.argsort(w)[::-1]
    w = np.clip(w[order], 0.0, None)
    V = V[:, order]

    Q, R = np.linalg.qr(root_inv @ V)
    # qr may flip signs; only the span of each leading block matters
    vectors = _fix_signs(Q)
    return DeeDecomposition(w, vectors, sigma_hat, A, lbar)


def rere(eigenvalues, c_n: float) -> int:
    """argmin_j (lam_{j+1}^2 + c_n) / (lam_j^2 + c_n), j = 1..p-1; smallest j wins ties."""
    lam = np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None)
    if lam.size < 2:
        return 1
    if not c_n > 0:
        raise DomainError("c_n must be positive")
    sq = lam**2
    ratios = (sq[1:] + c_n) / (sq[:-1] + c_n)
    return int(np.argmin(ratios)) + 1


def ridge_constant(n: int, q_pilot: int = 1, h_multiplier: float = DEFAULT_H_MULTIPLIER) -> float:
    """c_n = log(n) / (n h^{q/2}) with pilot bandwidth h = 1.25 n^{-1/(4+q)}."""
    if n < 2:
        raise DomainError("n must be >= 2")
    h = h_multiplier * n ** (-1.0 / (4 + q_pilot))
    return math.log(n) / (n * h ** (q_pilot / 2))


def estimate_basis(X, y, c_n: float | None = None, *, q_pilot: int = 1,
                   refine: bool = False) -> BasisEstimate:
    """DEE directions with RERE-selected dimension.

    If ``c_n`` is None it is set by :func:`ridge_constant` with the pilot
    dimension; ``refine=True`` recomputes it once with the selected dimension
    and reselects.
    """
    dec = dee_matrix(X, y)
    n, p = np.shape(X) if np.ndim(X) == 2 else (len(X), 1)
    if c_n is None:
        c_n = ridge_constant(n, q_pilot)
        qhat = rere(dec.eigenvalues, c_n)
        if refine and qhat != q_pilot:
            c_n = ridge_constant(n, qhat)
            qhat = rere(dec.eigenvalues, c_n)
    else:
        qhat = rere(dec.eigenvalues, c_n)
    if qhat == p and p > 1:
        logger.info("selected dimension equals p=%d", p)
    return BasisEstimate(
        basis=dec.eigenvectors[:, :qhat].copy(),
        qhat=qhat,
        eigenvalues=dec.eigenvalues.copy(),
        c_n=float(c_n),
    )
