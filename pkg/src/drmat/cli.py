"""Command-line interface: real-data testing, simulations and sweeps.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from drmat import __version__
from drmat.errors import DataError, DegenerateDataError, DomainError, IllConditionedCovarianceError
from drmat.harness import (
    DEFAULT_A_GRID,
    DEFAULT_P_GRID,
    ExperimentReport,
    bandwidth_sweep,
    dimension_sweep,
    power_curve_a,
    rejection_rate,
)
from drmat.het_tests import TestConfig, run_method
from drmat.scenarios import Dataset, ScenarioSpec
from drmat.smoothing import DEFAULT_H1_CONSTANT, DEFAULT_H_MULTIPLIER, SWEEP_MULTIPLIERS

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
COMMANDS = ("test", "simulate", "power-curve", "dim-sweep", "bw-sweep")
CLI_METHODS = ("drmat", "zheng", "zfn", "zfn-low")
MISSING = {"", "na", "nan", "null", "none", "n/a", "."}
SUPPORTED_DISTANCES = (100, 200, 400, 800, 1500, 5000, 10000, 42195)
_TO_SECONDS = {"s": 1.0, "min": 60.0, "h": 3600.0}


@dataclass
class RunConfig:
    command: str
    input: Optional[str] = None
    response: Optional[str] = None
    covariates: Optional[list[str]] = None
    h_multipliers: list[float] = field(default_factory=lambda: [DEFAULT_H_MULTIPLIER])
    h1_constant: float = DEFAULT_H1_CONSTANT
    alpha: list[float] = field(default_factory=lambda: [0.05])
    reps: Optional[int] = None
    seed: int = 0
    methods: list[str] = field(default_factory=lambda: ["drmat"])
    out: Optional[str] = None
    format: str = "json"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise DomainError(f"unknown command {self.command!r}")
        for a in self.alpha:
            if not 0 < a < 1:
                raise DomainError(f"alpha must lie in (0, 1), got {a}")
        if self.format not in ("csv", "json"):
            raise DomainError(f"unknown format {self.format!r}")


def _resolve_column(header: list[str], ref) -> int:
    ref = str(ref).strip()
    if ref in header:
        return header.index(ref)
    try:
        idx = int(ref)
    except ValueError:
        raise DataError(f"column not found: {ref!r}") from None
    if not 0 <= idx < len(header):
        raise DataError(f"column not found: index {idx} outside 0..{len(header) - 1}")
    return idx


def read_header(path) -> list[str]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        row = next(csv.reader(fh), None)
    if row is None:
        raise DataError("input file is empty; a header row is required")
    return [h.strip() for h in row]


def read_table(path, columns: Sequence) -> tuple[list[str], np.ndarray]:
    """Read selected numeric columns of a headed CSV; row numbers in errors count data rows from 1."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("input file is empty; a header row is required") from None
        idx = [_resolve_column(header, c) for c in columns]
        names = [header[i] for i in idx]
        rows = []
        for r, line in enumerate(reader, start=1):
            if not line or all(not c.strip() for c in line):
                continue
            if len(line) < len(header):
                raise DataError(f"row {r}: expected {len(header)} fields, found {len(line)}")
            vals = []
            for i, name in zip(idx, names):
                cell = line[i].strip()
                if cell.lower() in MISSING:
                    raise DataError(f"row {r}, column {name!r}: missing value")
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"row {r}, column {name!r}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"row {r}, column {name!r}: non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
    return names, np.array(rows, dtype=float).reshape(len(rows), len(idx))


def load_csv(path, response, covariates: Optional[Sequence] = None) -> Dataset:
    """Load a Dataset; ``covariates=None`` takes every column except the response."""
    if covariates is None:
        header = read_header(path)
        r = header[_resolve_column(header, response)]
        covariates = [h for h in header if h != r]
    if not covariates:
        raise DataError("no covariate columns selected")
    _, table = read_table(path, [response, *covariates])
    p = len(covariates)
    if table.shape[0] < p + 2:
        raise DataError(f"need at least p + 2 = {p + 2} rows, found {table.shape[0]}")
    return Dataset(X=table[:, 1:], y=table[:, 0])


def default_time_unit(distance_m: float) -> str:
    return "s" if distance_m <= 400 else "min"


def to_speeds(times, distances_m, units: Optional[Sequence[str]] = None) -> np.ndarray:
    """Convert winning times to speeds in metres per second.

    ``units`` gives the time unit of each column (``"s"``, ``"min"`` or ``"h"``);
    by default seconds up to 400 m and minutes beyond.
    """
    T = np.asarray(times, dtype=float)
    squeeze = T.ndim == 1
    T = np.atleast_2d(T)
    if squeeze and T.shape[0] == 1 and np.ndim(distances_m) == 0:
        T = T.T
    d = np.atleast_1d(np.asarray(distances_m, dtype=float))
    if T.shape[1] != d.size:
        raise DomainError(f"{T.shape[1]} time columns but {d.size} distances")
    if np.any(d <= 0):
        raise DomainError("distances must be positive")
    if units is None:
        units = [default_time_unit(x) for x in d]
    if len(units) != d.size:
        raise DomainError("one time unit per column is required")
    try:
        scale = np.array([_TO_SECONDS[u] for u in units])
    except KeyError as e:
        raise DomainError(f"unknown time unit {e.args[0]!r}") from None
    bad = np.argwhere(~(T > 0))
    if bad.size:
        i, j = bad[0]
        raise DataError(f"row {i + 1}, column {j + 1}: time must be positive, got {T[i, j]}")
    out = d / (T * scale)
    return out.ravel() if squeeze else out


def _config(rc: RunConfig, **extra) -> TestConfig:
    return TestConfig(h_multiplier=rc.h_multipliers[0], h1_constant=rc.h1_constant, seed=rc.seed, **extra)


def _method_key(m: str) -> str:
    return m.replace("-", "_")


def run_test_command(rc: RunConfig, dataset: Optional[Dataset] = None, *,
                     residuals_out: Optional[str] = None) -> dict:
    """Run each method at each h multiplier on one dataset and build the report."""
    if dataset is None:
        dataset = load_csv(rc.input, rc.response, rc.covariates)
    results = []
    for m in rc.methods:
        for hm in rc.h_multipliers:
            res = run_method(_method_key(m), dataset, replace(_config(rc), h_multiplier=hm))
            rec = res.to_dict()
            rec["h_multiplier"] = hm
            rec["reject"] = {repr(a): bool(res.p_value <= a) for a in rc.alpha}
            results.append((res, rec))
    report = {
        "command": "test",
        "input": {"path": rc.input, "response": rc.response, "covariates": rc.covariates,
                  "n": dataset.n, "p": dataset.p},
        "config": {"h_multipliers": rc.h_multipliers, "h1_constant": rc.h1_constant,
                   "alpha": rc.alpha, "seed": rc.seed, "methods": rc.methods},
        "results": [rec for _, rec in results],
    }
    if residuals_out:
        with_basis = [r for r, _ in results if r.basis is not None and r.residuals is not None]
        if with_basis:
            write_residual_csv(residuals_out, with_basis[0], dataset)
    return report


def write_residual_csv(path, result, dataset: Dataset) -> None:
    """Pairs of (first index value, residual) for residual-versus-index plots."""
    index = dataset.X @ result.basis[:, 0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "index_value", "residual"])
        for i, (z, e) in enumerate(zip(index, result.residuals), start=1):
            w.writerow([i, repr(float(z)), repr(float(e))])


def _spec(args, rc: RunConfig) -> ScenarioSpec:
    return ScenarioSpec(example=args.example, n=args.n, p=args.p, a=args.a, covariance=args.cov,
                        error=args.error, seed=rc.seed)


def _run_sim(args, rc: RunConfig) -> ExperimentReport:
    cfg = _config(rc)
    methods = [_method_key(m) for m in rc.methods]
    spec = _spec(args, rc)
    if rc.command == "simulate":
        reps = rc.reps or 500
        rows = []
        for m in methods:
            for hm in rc.h_multipliers:
                rows += rejection_rate(spec, m, rc.alpha, reps, rc.seed, replace(cfg, h_multiplier=hm),
                                       n_jobs=args.jobs)
        return ExperimentReport(rows, {"master_seed": rc.seed})
    if rc.command == "power-curve":
        reps = rc.reps or 200
        rows = []
        meta = {}
        for m in methods:
            rep = power_curve_a(spec, args.a_grid or DEFAULT_A_GRID, m, reps, rc.seed, cfg, rc.alpha,
                                n_jobs=args.jobs)
            rows += rep.rows
            meta[f"monotone_{m}"] = rep.metadata["monotone"]
        return ExperimentReport(rows, {"master_seed": rc.seed, **meta})
    if rc.command == "dim-sweep":
        return dimension_sweep(args.n, args.a, args.p_grid or DEFAULT_P_GRID, methods, rc.reps or 200,
                               rc.seed, cfg, rc.alpha, base=spec, n_jobs=args.jobs)
    mults = args.h_mult or SWEEP_MULTIPLIERS
    rows = []
    for m in methods:
        rows += bandwidth_sweep(spec, mults, m, rc.reps or 500, rc.seed, cfg, rc.alpha, n_jobs=args.jobs).rows
    return ExperimentReport(rows, {"master_seed": rc.seed})


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drmat", description="Heteroscedasticity tests with dimension reduction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--method", action="append", choices=CLI_METHODS, help="repeatable; default drmat")
    common.add_argument("--h-mult", action="append", type=float, help="bandwidth multiplier; repeatable")
    common.add_argument("--h1-const", type=float, default=DEFAULT_H1_CONSTANT, help="mean-fit bandwidth constant")
    common.add_argument("--alpha", action="append", type=float, help="nominal level; repeatable, default 0.05")
    common.add_argument("--seed", type=int, default=None, help="master seed (fallback: HET_SEED, then 0)")
    common.add_argument("--out", help="output path; stdout when omitted")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    t = sub.add_parser("test", parents=[common], help="test a CSV dataset")
    t.add_argument("--input", required=True)
    t.add_argument("--response", required=True, help="column name or 0-based index")
    t.add_argument("--covariates", type=_csv_list(str), help="comma-separated names or indices; default all others")
    t.add_argument("--speed-distances", type=_csv_list(float),
                   help="distances in metres for response then covariates; converts times to speeds")
    t.add_argument("--time-units", type=_csv_list(str), help="per-column time units (s, min, h)")
    t.add_argument("--residuals-out", help="write (index value, residual) CSV here")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--example", choices=("ex1", "ex2", "ex3"), default="ex1")
    sim.add_argument("--n", type=int, default=400)
    sim.add_argument("--p", type=int, default=2)
    sim.add_argument("--a", type=float, default=0.0)
    sim.add_argument("--cov", choices=("sigma1", "sigma2"), default="sigma1")
    sim.add_argument("--error", choices=("std_normal", "student_t6"), default=None)
    sim.add_argument("--reps", type=int, default=None)
    sim.add_argument("--jobs", type=int, default=1, help="worker processes; 0 uses all cores")

    sub.add_parser("simulate", parents=[common, sim], help="rejection rate of one design")
    pc = sub.add_parser("power-curve", parents=[common, sim], help="rejection rate over a grid of a")
    pc.add_argument("--a-grid", type=_csv_list(float))
    ds = sub.add_parser("dim-sweep", parents=[common, sim], help="rejection rate over covariate dimension")
    ds.add_argument("--p-grid", type=_csv_list(int))
    sub.add_parser("bw-sweep", parents=[common, sim], help="rejection rate over bandwidth multipliers")
    return parser


def _seed(value) -> int:
    if value is not None:
        return value
    env = os.environ.get("HET_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise DomainError(f"HET_SEED must be an integer, got {env!r}") from None
    return 0


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": {"type": kind, "message": message, "exit_code": code}}) + "\n")
    return code


def _test_csv(report: dict) -> str:
    keys = ["method", "h_multiplier", "statistic", "raw_stat", "variance_est", "p_value", "qhat", "n", "p", "h", "h1"]
    lines = [",".join(keys)]
    for rec in report["results"]:
        lines.append(",".join("" if rec.get(k) is None else repr(rec[k]) if isinstance(rec[k], float) else str(rec[k])
                              for k in keys))
    return "\n".join(lines) + "\n"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        rc = RunConfig(
            command=args.command,
            input=getattr(args, "input", None),
            response=getattr(args, "response", None),
            covariates=getattr(args, "covariates", None),
            h_multipliers=args.h_mult or [DEFAULT_H_MULTIPLIER],
            h1_constant=args.h1_const,
            alpha=args.alpha or [0.05],
            reps=getattr(args, "reps", None),
            seed=_seed(args.seed),
            methods=args.method or ["drmat"],
            out=args.out,
            format=args.format,
        )
        if rc.reps is not None and rc.reps < 1:
            raise DomainError("--reps must be >= 1")
    except DomainError as e:
        return _fail(EXIT_USAGE, "usage", str(e))

    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        if rc.command == "test":
            dataset = load_csv(rc.input, rc.response, rc.covariates)
            if args.speed_distances:
                cols = np.column_stack([dataset.y, dataset.X])
                speeds = to_speeds(cols, args.speed_distances, args.time_units)
                dataset = Dataset(X=speeds[:, 1:], y=speeds[:, 0])
            report = run_test_command(rc, dataset, residuals_out=args.residuals_out)
            report["metadata"] = {"version": __version__, "started": started}
            text = json.dumps(report, indent=2, sort_keys=True) if rc.format == "json" else _test_csv(report)
        else:
            rep = _run_sim(args, rc)
            rep.metadata.update({"version": __version__, "started": started, "command": rc.command})
            text = rep.to_json() if rc.format == "json" else rep.to_csv()
        _emit(text, rc.out)
    except (DataError, FileNotFoundError, UnicodeDecodeError) as e:
        return _fail(EXIT_DATA, "data", str(e))
    except (IllConditionedCovarianceError, DegenerateDataError, np.linalg.LinAlgError, FloatingPointError) as e:
        return _fail(EXIT_NUMERIC, "numerical", str(e))
    except DomainError as e:
        return _fail(EXIT_DATA, "domain", str(e))
    except OSError as e:
        return _fail(EXIT_DATA, "io", str(e))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
