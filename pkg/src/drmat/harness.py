"""Monte Carlo size/power experiments."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from drmat.errors import DegenerateDataError, DomainError, IllConditionedCovarianceError
from drmat.het_tests import TestConfig, run_method
from drmat.scenarios import ScenarioSpec, generate, replication_seed
from drmat.smoothing import SWEEP_MULTIPLIERS

DEFAULT_A_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_P_GRID = (2, 4, 6, 8, 10, 12)

# replication failures that are tallied rather than raised
_COUNTED_ERRORS = (DegenerateDataError, IllConditionedCovarianceError, np.linalg.LinAlgError)


@dataclass
class ReportRow:
    example: str
    n: int
    p: int
    a: float
    covariance: str
    error: str
    method: str
    h_multiplier: float
    alpha: float
    reps: int
    rejections: int
    errors: int

    @property
    def rate(self) -> float:
        return self.rejections / self.reps

    @property
    def mc_stderr(self) -> float:
        r = self.rate
        return math.sqrt(r * (1 - r) / self.reps)

    @property
    def error_fraction(self) -> float:
        return self.errors / self.reps

    def as_record(self) -> dict:
        d = asdict(self)
        d["rate"] = self.rate
        d["mc_stderr"] = self.mc_stderr
        return d


CSV_FIELDS = [
    "example", "n", "p", "a", "covariance", "error", "method", "h_multiplier",
    "alpha", "reps", "rejections", "errors", "rate", "mc_stderr",
]


@dataclass
class ExperimentReport:
    rows: list[ReportRow]
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            rec = row.as_record()
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ExperimentReport":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            rows.append(ReportRow(
                example=rec["example"], n=int(rec["n"]), p=int(rec["p"]), a=float(rec["a"]),
                covariance=rec["covariance"], error=rec["error"], method=rec["method"],
                h_multiplier=float(rec["h_multiplier"]), alpha=float(rec["alpha"]),
                reps=int(rec["reps"]), rejections=int(rec["rejections"]), errors=int(rec["errors"]),
            ))
        return cls(rows)

    def to_json_obj(self) -> dict:
        return {"rows": [r.as_record() for r in self.rows], "metadata": self.metadata}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2, sort_keys=True)

    def curve(self, key: str, method: Optional[str] = None, alpha: Optional[float] = None):
        """(x, rate) pairs along scenario attribute ``key`` for plotting."""
        out = []
        for r in self.rows:
            if (method is None or r.method == method) and (alpha is None or r.alpha == alpha):
                out.append((getattr(r, key), r.rate))
        return out

    def is_monotone(self, method: str, alpha: float = 0.05, slack: float = 2.0) -> bool:
        """Rate nondecreasing in ``a`` up to ``slack`` Monte Carlo standard errors."""
        rows = sorted((r for r in self.rows if r.method == method and r.alpha == alpha), key=lambda r: r.a)
        for prev, cur in zip(rows, rows[1:]):
            tol = slack * math.sqrt(prev.mc_stderr**2 + cur.mc_stderr**2)
            if cur.rate < prev.rate - tol:
                return False
        return True


@dataclass
class ReplicationOutcome:
    p_values: np.ndarray
    # NaN p-value marks a replication that errored
    errored: np.ndarray
    qhat: np.ndarray


def _one(args):
    spec, method, config, master_seed, rep = args
    seed = replication_seed(master_seed, rep)
    ds = generate(spec.with_seed(seed))
    # bootstrap tests get a fresh multiplier stream per replication
    cfg = replace(config, seed=seed)
    try:
        res = method(ds, cfg) if callable(method) else run_method(method, ds, cfg)
    except _COUNTED_ERRORS:
        return math.nan, -1
    return res.p_value, res.qhat if res.qhat is not None else -1


def _workers(n_jobs: Optional[int]) -> int:
    if n_jobs is None:
        env = os.environ.get("DRMAT_JOBS")
        n_jobs = int(env) if env else 1
    if n_jobs <= 0:
        n_jobs = os.cpu_count() or 1
    return n_jobs


def run_replications(spec: ScenarioSpec, method: str, reps: int, master_seed: int,
                     config: Optional[TestConfig] = None, *, start: int = 0,
                     n_jobs: Optional[int] = None) -> ReplicationOutcome:
    """Run replications ``start .. start+reps-1``; each gets its own derived seed.

    ``method`` is a registered method name or a callable ``(dataset, config) -> TestResult``
    (callables must be picklable when ``n_jobs > 1``).
    """
    if reps < 1:
        raise DomainError("reps must be >= 1")
    config = config or TestConfig()
    jobs = [(spec, method, config, master_seed, r) for r in range(start, start + reps)]
    workers = _workers(n_jobs)
    if workers == 1:
        out = [_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_one, jobs, chunksize=max(1, reps // (4 * workers))))
    pv = np.array([o[0] for o in out], dtype=float)
    return ReplicationOutcome(p_values=pv, errored=np.isnan(pv), qhat=np.array([o[1] for o in out]))


def method_name(method) -> str:
    return method if isinstance(method, str) else getattr(method, "__name__", repr(method))


def _rows_from(spec, method, config, alphas, outcome) -> list[ReportRow]:
    rows = []
    reps = outcome.p_values.size
    for alpha in alphas:
        if not 0 < alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        # errored replications have NaN p-values and never count as rejections
        k = int(np.sum(outcome.p_values <= alpha))
        rows.append(ReportRow(
            example=spec.example, n=spec.n, p=spec.p, a=spec.a, covariance=spec.covariance,
            error=spec.error_law, method=method_name(method), h_multiplier=config.h_multiplier, alpha=alpha,
            reps=reps, rejections=k, errors=int(outcome.errored.sum()),
        ))
    return rows


def rejection_rate(spec: ScenarioSpec, method: str = "drmat", alpha: float | Sequence[float] = 0.05,
                   reps: int = 500, master_seed: int = 0, config: Optional[TestConfig] = None, *,
                   start: int = 0, n_jobs: Optional[int] = None) -> list[ReportRow]:
    """Empirical rejection frequency of ``method`` on data from ``spec``.

    One row per alpha; all alphas share the same replications.
    """
    config = config or TestConfig()
    alphas = [alpha] if np.isscalar(alpha) else list(alpha)
    outcome = run_replications(spec, method, reps, master_seed, config, start=start, n_jobs=n_jobs)
    return _rows_from(spec, method, config, alphas, outcome)


def merge_rows(a: Iterable[ReportRow], b: Iterable[ReportRow]) -> list[ReportRow]:
    """Combine two runs of the same design over disjoint replication ranges."""
    merged = []
    for x, y in zip(a, b, strict=True):
        key_x = (x.example, x.n, x.p, x.a, x.covariance, x.error, x.method, x.h_multiplier, x.alpha)
        key_y = (y.example, y.n, y.p, y.a, y.covariance, y.error, y.method, y.h_multiplier, y.alpha)
        if key_x != key_y:
            raise DomainError("rows describe different designs")
        merged.append(replace(x, reps=x.reps + y.reps, rejections=x.rejections + y.rejections,
                              errors=x.errors + y.errors))
    return merged


def _report(rows, master_seed, config, started, **extra) -> ExperimentReport:
    meta = {
        "master_seed": master_seed,
        "config": asdict(config),
        "wall_time": time.perf_counter() - started,
        **extra,
    }
    return ExperimentReport(rows, meta)


def power_curve_a(spec: ScenarioSpec, a_grid: Sequence[float] = DEFAULT_A_GRID, method: str = "drmat",
                  reps: int = 200, master_seed: int = 0, config: Optional[TestConfig] = None,
                  alphas: Sequence[float] = (0.05,), n_jobs: Optional[int] = None) -> ExperimentReport:
    config = config or TestConfig()
    t0 = time.perf_counter()
    rows = []
    for a in a_grid:
        rows += rejection_rate(replace(spec, a=float(a)), method, alphas, reps, master_seed, config, n_jobs=n_jobs)
    report = _report(rows, master_seed, config, t0, sweep="a")
    report.metadata["monotone"] = report.is_monotone(method_name(method), alphas[0])
    return report


def dimension_sweep(n: int = 400, a: float = 1.0, p_grid: Sequence[int] = DEFAULT_P_GRID,
                    methods: Sequence[str] = ("drmat", "zheng"), reps: int = 200, master_seed: int = 0,
                    config: Optional[TestConfig] = None, alphas: Sequence[float] = (0.05,),
                    base: Optional[ScenarioSpec] = None, n_jobs: Optional[int] = None) -> ExperimentReport:
    """Rejection rates against the covariate dimension (Example 1 by default)."""
    config = config or TestConfig()
    base = base or ScenarioSpec(example="ex1")
    t0 = time.perf_counter()
    rows = []
    for p in p_grid:
        spec = replace(base, n=n, a=a, p=int(p))
        for m in methods:
            rows += rejection_rate(spec, m, alphas, reps, master_seed, config, n_jobs=n_jobs)
    return _report(rows, master_seed, config, t0, sweep="p")


def bandwidth_sweep(spec: ScenarioSpec, multipliers: Sequence[float] = SWEEP_MULTIPLIERS,
                    method: str = "drmat", reps: int = 500, master_seed: int = 0,
                    config: Optional[TestConfig] = None, alphas: Sequence[float] = (0.05,),
                    n_jobs: Optional[int] = None) -> ExperimentReport:
    config = config or TestConfig()
    t0 = time.perf_counter()
    rows = []
    for m in multipliers:
        rows += rejection_rate(spec, method, alphas, reps, master_seed,
                               replace(config, h_multiplier=float(m)), n_jobs=n_jobs)
    return _report(rows, master_seed, config, t0, sweep="h_multiplier")
