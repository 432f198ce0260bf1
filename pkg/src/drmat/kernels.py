"""Quartic (biweight) kernel and its product form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from drmat.errors import DomainError

QUARTIC_AT_ZERO = 15.0 / 16.0
# int K(u)^2 du for the quartic kernel
QUARTIC_ROUGHNESS = 5.0 / 7.0


@dataclass(frozen=True)
class KernelSpec:
    """A d-dimensional product quartic kernel with bandwidth ``h``."""

    dimension: int
    bandwidth: float
    family: str = "quartic"

    def __post_init__(self):
        if self.family != "quartic":
            raise DomainError(f"unsupported kernel family {self.family!r}")
        if self.dimension < 1:
            raise DomainError("kernel dimension must be >= 1")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise DomainError("bandwidth must be positive")

    def __call__(self, v) -> float:
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != self.dimension:
            raise DomainError(f"expected a {self.dimension}-vector, got {v.size}")
        return product_kernel(v, self.bandwidth)


def quartic(u):
    """(15/16)(1 - u^2)^2 on |u| <= 1, zero outside. Works elementwise on arrays."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise DomainError("quartic kernel needs finite input")
    w = 1.0 - u * u
    out = np.where(np.abs(u) <= 1.0, QUARTIC_AT_ZERO * w * w, 0.0)
    return float(out) if out.ndim == 0 else out


def product_kernel(v, h: float) -> float:
    """h^{-d} prod_k quartic(v_k / h) for a single d-vector ``v``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 0:
        raise DomainError("product kernel needs a non-empty vector")
    if not h > 0:
        raise DomainError("bandwidth must be positive")
    return float(np.prod(quartic(v / h))) / h**v.size


def kernel_matrix(Z, h: float, *, scaled: bool = True) -> np.ndarray:
    """Pairwise product-kernel weights K_h(z_i - z_j) for the rows of ``Z``.

    With ``scaled=False`` the h^{-d} factor is left out, i.e. the entries are
    prod_k quartic((z_ik - z_jk)/h). The diagonal is kept.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if not h > 0:
        raise DomainError("bandwidth must be positive")
    n, d = Z.shape
    K = np.ones((n, n))
    for k in range(d):
        u = (Z[:, k][:, None] - Z[:, k][None, :]) / h
        w = np.maximum(1.0 - u * u, 0.0)
        K *= QUARTIC_AT_ZERO * w * w
    if scaled:
        K /= h**d
    return K
