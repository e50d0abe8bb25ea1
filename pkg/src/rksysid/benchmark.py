"""Benchmark suites: the reference experiment grid at desk scale.

Each suite is a named list of run configurations with expected-result
bands, executed over five seeds that share one missing-data
realization.  Absolute error levels depend on training noise and on the
exact data realization, so the bands are deliberately loose and marked
soft; the robust findings are encoded as ordering checks:

* hard: the non-stationary (unit-root) GRU is at least twice as bad as
  the stationary Euler GRU on the reactor data;
* hard: fourth order beats first order on the reactor data with
  constant interpolation;
* hard: on the winding data, linear input interpolation beats constant
  for every multi-stage scheme, and fourth order with linear
  interpolation beats first order.
* soft: feeding the step size as an extra input is not worse than
  ignoring it by more than one percentage point (reactor data).

Soft band or soft ordering failures flag the row/check; hard ordering
failures fail the suite.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, read_canonical_csv, split_normalize
from .evaluation import RunAggregate, aggregate, evaluate_split
from .training import (
    TrainConfig,
    TrainingDiverged,
    config_digest,
    step_spec_for,
    train,
)

__all__ = [
    "RowSpec",
    "OrderingCheck",
    "SuiteSpec",
    "RowResult",
    "SuiteResult",
    "SUITES",
    "DATASET_FILES",
    "run_suite",
    "write_suite_csv",
    "DEFAULT_SEEDS",
]

DEFAULT_SEEDS = (0, 1, 2, 3, 4)

# Canonical file names the benchmark expects inside --data-dir.  The
# *_p50 files are the 50% missing-data preparations; one subsampling
# realization is shared by every seed (see the prepare command).
DATASET_FILES = {
    "cstr_full": "cstr_full.csv",
    "cstr_p50": "cstr_p50.csv",
    "winding_full": "winding_full.csv",
    "winding_p50": "winding_p50.csv",
}

# Tuned hyperparameters per (process, cell): batch size, state size,
# learning rate.
_HYPER = {
    ("cstr", "gru"): (512, 20, 0.001),
    ("cstr", "asrnn"): (512, 100, 0.001),
    ("winding", "gru"): (512, 10, 0.003),
    ("winding", "asrnn"): (64, 10, 0.01),
}

# Training budget for benchmark rows, sized so one run takes around a
# minute; early stopping usually fires first.
_BENCH_MAX_EPOCHS = 300
_BENCH_PATIENCE = 40


@dataclass(frozen=True)
class RowSpec:
    name: str
    data: str  # key into DATASET_FILES
    cell: str = "gru"
    scheme: str = "euler"
    formulation: str = "stationary"
    interpolation: str = "constant"
    delta_channel: bool = False
    band: tuple | None = None  # soft (lo, hi) on mean test RRSE, percent

    def to_config(self, seed: int, dataset_path: str) -> TrainConfig:
        process = self.data.split("_")[0]
        batch, k, lr = _HYPER[(process, self.cell)]
        return TrainConfig(
            dataset=dataset_path,
            cell=self.cell,
            scheme=self.scheme,
            formulation=self.formulation,
            interpolation=self.interpolation,
            k=k,
            batch_size=batch,
            lr=lr,
            seed=seed,
            max_epochs=_BENCH_MAX_EPOCHS,
            patience=_BENCH_PATIENCE,
            delta_channel=self.delta_channel,
            p_missing=0.5 if self.data.endswith("_p50") else 0.0,
        ).validate()


@dataclass(frozen=True)
class OrderingCheck:
    """Relation between two rows' mean RRSE values."""

    name: str
    kind: str  # "lt" | "ratio_ge" | "le_plus"
    left: str
    right: str
    param: float = 0.0
    hard: bool = True

    def evaluate(self, means: dict) -> bool:
        lhs, rhs = means[self.left], means[self.right]
        if self.kind == "lt":
            return lhs < rhs
        if self.kind == "ratio_ge":
            return lhs >= self.param * rhs
        if self.kind == "le_plus":
            return lhs <= rhs + self.param
        raise ValueError(f"unknown ordering kind {self.kind!r}")

    def describe(self, means: dict) -> str:
        lhs, rhs = means.get(self.left), means.get(self.right)
        rel = {"lt": "<", "ratio_ge": f">= {self.param} *", "le_plus": f"<= {self.param} +"}
        return (
            f"{self.left} ({lhs:.2f}%) {rel[self.kind]} {self.right} ({rhs:.2f}%)"
            if lhs is not None and rhs is not None
            else self.name
        )


@dataclass(frozen=True)
class SuiteSpec:
    name: str
    rows: tuple
    orderings: tuple = ()


def _table3(process: str) -> tuple:
    full, p50 = f"{process}_full", f"{process}_p50"
    band_full = (0.0, 6.0) if process == "cstr" else (0.0, 30.0)
    band_ignore = (6.0, 20.0) if process == "cstr" else None
    return (
        RowSpec(name="gru-standard-full", data=full, band=band_full),
        RowSpec(name="asrnn-stationary-full", data=full, cell="asrnn"),
        RowSpec(name="gru-ignore-missing", data=p50, formulation="ignore-time",
                band=band_ignore),
        RowSpec(name="gru-extra-delta", data=p50, formulation="ignore-time",
                delta_channel=True),
        RowSpec(name="gru-nonstationary", data=p50, formulation="non-stationary"),
        RowSpec(name="asrnn-nonstationary", data=p50, cell="asrnn",
                formulation="non-stationary"),
    )


def _table4(process: str, interpolations) -> tuple:
    rows = []
    for interp in interpolations:
        for scheme in ("euler", "midpoint", "kutta3", "rk4"):
            rows.append(RowSpec(
                name=f"{scheme}-{interp}",
                data=f"{process}_p50",
                scheme=scheme,
                interpolation=interp,
            ))
    return tuple(rows)


SUITES = {
    "table3-cstr": SuiteSpec(
        name="table3-cstr",
        rows=_table3("cstr"),
        orderings=(
            OrderingCheck(
                name="extra delta input within 1pp of ignore-missing",
                kind="le_plus", left="gru-extra-delta",
                right="gru-ignore-missing", param=1.0, hard=False,
            ),
        ),
    ),
    "table3-winding": SuiteSpec(
        name="table3-winding",
        rows=_table3("winding"),
        orderings=(
            OrderingCheck(
                name="extra delta input within 1pp of ignore-missing",
                kind="le_plus", left="gru-extra-delta",
                right="gru-ignore-missing", param=1.0, hard=False,
            ),
        ),
    ),
    "table4-cstr": SuiteSpec(
        name="table4-cstr",
        rows=_table4("cstr", ("constant",)),
        orderings=(
            OrderingCheck(name="higher order helps (rk4 < euler)",
                          kind="lt", left="rk4-constant", right="euler-constant"),
        ),
    ),
    "table4-winding": SuiteSpec(
        name="table4-winding",
        rows=_table4("winding", ("constant", "linear")),
        orderings=(
            OrderingCheck(name="linear interp helps midpoint", kind="lt",
                          left="midpoint-linear", right="midpoint-constant"),
            OrderingCheck(name="linear interp helps kutta3", kind="lt",
                          left="kutta3-linear", right="kutta3-constant"),
            OrderingCheck(name="linear interp helps rk4", kind="lt",
                          left="rk4-linear", right="rk4-constant"),
            OrderingCheck(name="rk4 linear beats euler", kind="lt",
                          left="rk4-linear", right="euler-constant"),
        ),
    ),
}

# The meta-suite runs everything and adds the one cross-table gate.
SUITES["all"] = SuiteSpec(
    name="all",
    rows=tuple(
        replace(row, name=f"{suite_name}/{row.name}")
        for suite_name, suite in SUITES.items()
        for row in suite.rows
    ),
    orderings=tuple(
        replace(check, name=f"{suite_name}: {check.name}",
                left=f"{suite_name}/{check.left}",
                right=f"{suite_name}/{check.right}")
        for suite_name, suite in SUITES.items()
        for check in suite.orderings
    ) + (
        OrderingCheck(
            name="unit root failure (non-stationary >= 2x stationary euler)",
            kind="ratio_ge",
            left="table3-cstr/gru-nonstationary",
            right="table4-cstr/euler-constant",
            param=2.0,
        ),
    ),
)


@dataclass
class RowResult:
    spec: RowSpec
    agg: RunAggregate
    per_seed: dict  # seed -> mean test RRSE (completed runs only)
    band_ok: bool | None  # None when the row has no band

    @property
    def flagged(self) -> bool:
        return self.band_ok is False


@dataclass
class SuiteResult:
    suite: SuiteSpec
    rows: list
    ordering_results: list  # (OrderingCheck, bool, description)

    @property
    def hard_failures(self) -> list:
        return [c for c, ok, _ in self.ordering_results if c.hard and not ok]


def _load_dataset(path) -> Dataset:
    return split_normalize(read_canonical_csv(path))


def run_single(row: RowSpec, seed: int, dataset_path: str):
    """Train and test one (row, seed); returns (rrse or None, detail)."""
    config = row.to_config(seed, dataset_path)
    dataset = _load_dataset(dataset_path)
    try:
        model, history = train(dataset, config)
    except TrainingDiverged as exc:
        return None, str(exc)
    from .data import augment_delta_channel

    if config.delta_channel and not dataset.delta_channel:
        dataset = augment_delta_channel(dataset)
    spec = step_spec_for(config, dataset)
    report = evaluate_split(model, dataset, spec, split="test")
    return float(report.mean), f"epochs={history.epochs_run}"


def _cache_key(row: RowSpec, seed: int, dataset_path: str) -> str:
    config = row.to_config(seed, dataset_path)
    with open(dataset_path, "rb") as fh:
        data_hash = hashlib.sha256(fh.read()).hexdigest()[:16]
    cfg = replace(config, dataset="")  # path-independent
    from .training import config_to_text

    return hashlib.sha256(
        (config_to_text(cfg) + data_hash).encode()
    ).hexdigest()[:24]


def _run_task(args):
    row, seed, dataset_path, cache_dir = args
    if cache_dir:
        key = _cache_key(row, seed, dataset_path)
        path = os.path.join(cache_dir, key + ".json")
        if os.path.exists(path):
            with open(path) as fh:
                doc = json.load(fh)
            return row.name, seed, doc["rrse"], doc["detail"]
    rrse_value, detail = run_single(row, seed, dataset_path)
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        with open(path, "w") as fh:
            json.dump({"rrse": rrse_value, "detail": detail}, fh)
    return row.name, seed, rrse_value, detail


def _limit_threads():
    # Replicas run in parallel processes; keep BLAS single-threaded.
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except ImportError:
        pass


def run_suite(suite: SuiteSpec, data_dir: str, seeds=DEFAULT_SEEDS,
              jobs: int = 1, cache_dir: str | None = None,
              log=None) -> SuiteResult:
    """Run every row of a suite over the seed list.

    Raises FileNotFoundError up front, listing every missing data file.
    """
    paths = {}
    missing = []
    for row in suite.rows:
        path = os.path.join(data_dir, DATASET_FILES[row.data])
        paths[row.name] = path
        if not os.path.exists(path):
            missing.append(path)
    if missing:
        raise FileNotFoundError(
            "missing prepared datasets: " + ", ".join(sorted(set(missing)))
        )

    tasks = [(row, seed, paths[row.name], cache_dir)
             for row in suite.rows for seed in seeds]
    results = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_limit_threads) as pool:
            for name, seed, value, detail in pool.map(_run_task, tasks):
                results[(name, seed)] = (value, detail)
                if log:
                    log(f"  {name} seed={seed}: "
                        f"{'diverged' if value is None else f'{value:.2f}%'} ({detail})")
    else:
        _limit_threads()
        for task in tasks:
            name, seed, value, detail = _run_task(task)
            results[(name, seed)] = (value, detail)
            if log:
                log(f"  {name} seed={seed}: "
                    f"{'diverged' if value is None else f'{value:.2f}%'} ({detail})")

    rows = []
    for row in suite.rows:
        per_seed = {}
        failures = 0
        for seed in seeds:
            value, _ = results[(row.name, seed)]
            if value is None:
                failures += 1
            else:
                per_seed[seed] = value
        agg = aggregate(per_seed.values(), seeds=tuple(per_seed), failures=failures)
        band_ok = None
        if row.band is not None:
            lo, hi = row.band
            band_ok = bool(lo <= agg.mean <= hi)
        rows.append(RowResult(spec=row, agg=agg, per_seed=per_seed, band_ok=band_ok))

    means = {r.spec.name: r.agg.mean for r in rows}
    ordering_results = []
    for check in suite.orderings:
        ok = check.evaluate(means)
        ordering_results.append((check, ok, check.describe(means)))
    return SuiteResult(suite=suite, rows=rows, ordering_results=ordering_results)


def write_suite_csv(result: SuiteResult, path) -> None:
    """Append suite rows; identical inputs reproduce identical rows."""
    header = "config,cell,scheme,formulation,interp,mean_rrse,std_rrse,failures,band,pass\n"
    need_header = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a") as fh:
        if need_header:
            fh.write(header)
        for r in result.rows:
            band = "" if r.spec.band is None else f"{r.spec.band[0]}..{r.spec.band[1]}"
            state = "" if r.band_ok is None else ("pass" if r.band_ok else "soft-fail")
            std = "" if r.agg.std is None else f"{r.agg.std:.4f}"
            fh.write(
                f"{r.spec.name},{r.spec.cell},{r.spec.scheme},"
                f"{r.spec.formulation},{r.spec.interpolation},"
                f"{r.agg.mean:.4f},{std},{r.agg.failures},{band},{state}\n"
            )
