"""Simulation designs: covariances, error laws and the three example models."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Callable, Optional

import numpy as np

from drmat.errors import DomainError
from drmat.smoothing import DEFAULT_H_MULTIPLIER, bandwidth_h

EXAMPLES = ("ex1", "ex2", "ex3", "local")
COVARIANCES = ("sigma1", "sigma2")
ERRORS = ("std_normal", "student_t6")
# error law and mean-index count q1 each example uses when a ScenarioSpec leaves them unset
_DEFAULT_ERROR = {"ex1": "std_normal", "ex2": "student_t6", "ex3": "std_normal", "local": "std_normal"}


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise DomainError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DomainError("dataset entries must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation design.

    ``base`` and ``local_f`` only matter for ``example="local"``: the local
    alternative is built on top of the ``base`` example with variance drift
    ``C_n * f(index)``, ``local_f`` naming f (``"zero"`` or ``"square"``).
    """

    example: str = "ex1"
    n: int = 400
    p: int = 2
    a: float = 0.0
    covariance: str = "sigma1"
    error: Optional[str] = None
    seed: int = 0
    base: str = "ex1"
    local_f: str = "square"

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise DomainError(f"unknown example {self.example!r}")
        if self.covariance not in COVARIANCES:
            raise DomainError(f"unknown covariance {self.covariance!r}")
        if self.error is not None and self.error not in ERRORS:
            raise DomainError(f"unknown error law {self.error!r}")
        if self.a < 0:
            raise DomainError("a must be >= 0")
        if self.n < 2 or self.p < 1:
            raise DomainError("need n >= 2 and p >= 1")

    @property
    def error_law(self) -> str:
        ex = self.base if self.example == "local" else self.example
        return self.error or _DEFAULT_ERROR[ex]

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return replace(self, seed=int(seed))

    def to_config(self) -> dict[str, str]:
        """Flat string key-value form."""
        return {k: "" if v is None else str(v) for k, v in asdict(self).items()}

    @classmethod
    def from_config(cls, cfg: dict) -> "ScenarioSpec":
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in cfg.items():
            if key not in kinds:
                raise DomainError(f"unknown scenario key {key!r}")
            if raw is None or raw == "":
                out[key] = None
            elif key in ("n", "p", "seed"):
                out[key] = int(raw)
            elif key == "a":
                out[key] = float(raw)
            else:
                out[key] = str(raw)
        return cls(**{k: v for k, v in out.items() if v is not None or k == "error"})


def covariance_matrix(kind: str, p: int) -> np.ndarray:
    """sigma1: 0.5^{|i-j|} off the diagonal; sigma2: 0.3 off the diagonal."""
    if p < 1:
        raise DomainError("p must be >= 1")
    idx = np.arange(p)
    if kind == "sigma1":
        S = 0.5 ** np.abs(idx[:, None] - idx[None, :]).astype(float)
    elif kind == "sigma2":
        S = np.full((p, p), 0.3)
    else:
        raise DomainError(f"unknown covariance {kind!r}")
    np.fill_diagonal(S, 1.0)
    return S


def mvn_sample(rng: np.random.Generator, mean, cov, size: Optional[int] = None) -> np.ndarray:
    """Draw N(mean, cov) via the lower Cholesky factor.

    Returns a p-vector when ``size`` is None, else a (size, p) array.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    L = np.linalg.cholesky(cov)  # raises LinAlgError unless positive definite
    if size is None:
        return mean + L @ rng.standard_normal(mean.size)
    return mean + rng.standard_normal((size, mean.size)) @ L.T


def student_t6(rng_normal: np.random.Generator, rng_chi2: np.random.Generator, size: int) -> np.ndarray:
    z = rng_normal.standard_normal(size)
    v = rng_chi2.chisquare(6, size)
    return z / np.sqrt(v / 6.0)


def _streams(seed: int):
    """Independent generators for covariates, errors and the t(6) chi-square part."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def _errors(spec: ScenarioSpec, rng_e, rng_c) -> np.ndarray:
    if spec.error_law == "std_normal":
        return rng_e.standard_normal(spec.n)
    return student_t6(rng_e, rng_c, spec.n)


def example1_beta(p: int) -> np.ndarray:
    if p % 2:
        raise DomainError(f"example 1 needs an even p, got {p}")
    beta = np.zeros(p)
    beta[: p // 2] = 1.0
    return beta / np.sqrt(p / 2)


BETA1 = np.array([1.0, 1.0, 0.0, 0.0]) / np.sqrt(2)
BETA2 = np.array([0.0, 0.0, 1.0, 1.0]) / np.sqrt(2)


def _draw(spec: ScenarioSpec):
    rng_x, rng_e, rng_c = _streams(spec.seed)
    X = mvn_sample(rng_x, np.zeros(spec.p), covariance_matrix(spec.covariance, spec.p), size=spec.n)
    return X, _errors(spec, rng_e, rng_c)


def ex1_mean(X) -> np.ndarray:
    z = X @ example1_beta(X.shape[1])
    return z + np.exp(-z * z)


def ex2_mean(X) -> np.ndarray:
    return X @ BETA1


def ex3_mean(X) -> np.ndarray:
    return X @ BETA1 + 2 * np.sin(X @ BETA2 / 2)


def gen_example1(spec: ScenarioSpec) -> Dataset:
    """Y = b'X + exp(-(b'X)^2) + 0.5 (1 + a |b'X|) e."""
    beta = example1_beta(spec.p)
    X, e = _draw(spec)
    z = X @ beta
    y = z + np.exp(-z * z) + 0.5 * (1 + spec.a * np.abs(z)) * e
    return Dataset(X, y)


def _check_p4(spec, name):
    if spec.p != 4:
        raise DomainError(f"{name} is defined for p = 4, got p = {spec.p}")


def gen_example2(spec: ScenarioSpec) -> Dataset:
    """Y = b1'X + 0.5 [a {(b1'X)^2 + (b2'X)^2} + 1] e, e ~ t(6) by default."""
    _check_p4(spec, "example 2")
    X, e = _draw(spec)
    z1, z2 = X @ BETA1, X @ BETA2
    y = z1 + 0.5 * (spec.a * (z1**2 + z2**2) + 1) * e
    return Dataset(X, y)


def gen_example3(spec: ScenarioSpec) -> Dataset:
    _check_p4(spec, "example 3")
    X, e = _draw(spec)
    z1, z2 = X @ BETA1, X @ BETA2
    y = z1 + 2 * np.sin(z2 / 2) + 0.5 * np.sqrt(spec.a * (z1**2 + z2**2) + 1) * e
    return Dataset(X, y)


# Null-model pieces of each base example: mean, index matrix B, q1, error scale sigma.
def _base_parts(base: str, p: int):
    if base == "ex1":
        return ex1_mean, example1_beta(p)[:, None], 1, 0.5
    if base == "ex2":
        return ex2_mean, BETA1[:, None], 1, 0.5
    if base == "ex3":
        return ex3_mean, np.column_stack([BETA1, BETA2]), 2, 0.5
    raise DomainError(f"unknown base example {base!r}")


LOCAL_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "zero": lambda z: np.zeros(z.shape[0]),
    "square": lambda z: np.sum(z * z, axis=1),
}


def local_drift(n: int, q1: int, h_multiplier: float = DEFAULT_H_MULTIPLIER) -> float:
    """C_n = n^{-1/2} h^{-q1/4} with h = h_multiplier n^{-1/(4+q1)}."""
    h = bandwidth_h(n, q1, h_multiplier)
    return n**-0.5 * h ** (-q1 / 4)


def gen_local_alternative(spec: ScenarioSpec, f=None, *, form: str = "variance") -> Dataset:
    """Local alternative with Var(eta | X) drifting to sigma^2 at rate C_n.

    ``form="variance"`` draws eta = e * sqrt(sigma^2 + C_n f(B'X)) so the
    conditional variance is exactly sigma^2 + C_n f. ``form="multiplicative"``
    draws eta = eps (1 + C_n f(B'X) / 2), eps the base-model error, whose
    variance is sigma^2 (1 + C_n f / 2)^2.

    ``f`` maps the (n, q) index matrix B'X to an n-vector; by default it is
    looked up from ``spec.local_f``.
    """
    mean, B, q1, sigma = _base_parts(spec.base, spec.p)
    if f is None:
        try:
            f = LOCAL_FUNCTIONS[spec.local_f]
        except KeyError:
            raise DomainError(f"unknown local function {spec.local_f!r}") from None
    X, e = _draw(spec)
    c_n = local_drift(spec.n, q1)
    drift = c_n * np.asarray(f(X @ B), dtype=float).reshape(-1)
    if form == "variance":
        var = sigma**2 + drift
        bad = np.flatnonzero(~(var > 0))
        if bad.size:
            raise DomainError(f"nonpositive conditional variance at draw {int(bad[0])}")
        eta = np.sqrt(var) * e
    elif form == "multiplicative":
        scale = 1 + drift / 2
        bad = np.flatnonzero(~(scale > 0))
        if bad.size:
            raise DomainError(f"nonpositive error scale at draw {int(bad[0])}")
        eta = sigma * e * scale
    else:
        raise DomainError(f"unknown local alternative form {form!r}")
    return Dataset(X, mean(X) + eta)


def generate(spec: ScenarioSpec) -> Dataset:
    if spec.example == "ex1":
        return gen_example1(spec)
    if spec.example == "ex2":
        return gen_example2(spec)
    if spec.example == "ex3":
        return gen_example3(spec)
    return gen_local_alternative(spec)


def true_mean(spec: ScenarioSpec, X) -> np.ndarray:
    ex = spec.base if spec.example == "local" else spec.example
    return {"ex1": ex1_mean, "ex2": ex2_mean, "ex3": ex3_mean}[ex](np.asarray(X, dtype=float))


def replication_seed(master_seed: int, rep: int) -> int:
    """Stable 64-bit seed for replication ``rep`` under ``master_seed``."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(rep)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
