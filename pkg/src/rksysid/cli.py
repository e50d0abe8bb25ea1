"""Command line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training
divergence, 4 acceptance-band failure in benchmark mode.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .benchmark import DEFAULT_SEEDS, SUITES, run_suite, write_suite_csv
from .cells import load_model, save_model
from .data import (
    ColumnSpec,
    DAISY_PRESETS,
    DataError,
    augment_delta_channel,
    load_daisy,
    read_canonical_csv,
    split_normalize,
    subsample_missing,
    write_canonical_csv,
)
from .evaluation import dump_predictions, evaluate_split, format_metrics, rollout
from .surrogate import SYNTH_KINDS, synthesize_cstr, synthesize_winding, write_daisy_file
from .training import (
    ConfigError,
    TrainingDiverged,
    config_digest,
    history_to_text,
    parse_config,
    step_spec_for,
    train,
)
from .verify import gradcheck_suite, ordercheck_suite

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3
EXIT_BAND = 4


def _int_list(text: str):
    return tuple(int(tok) for tok in text.split(",") if tok.strip() != "")


def cmd_prepare(args) -> int:
    if args.preset:
        preset = DAISY_PRESETS[args.preset]
        columns = preset.columns
        period = preset.sample_period
    else:
        if not args.input_cols or not args.output_cols:
            print("prepare: need --preset or --input-cols/--output-cols", file=sys.stderr)
            return EXIT_USAGE
        columns = ColumnSpec(
            time_col=args.time_col,
            input_cols=_int_list(args.input_cols),
            output_cols=_int_list(args.output_cols),
        )
        period = args.period
        preset = None
    try:
        series = load_daisy(args.input, columns, sample_period=period)
        if preset and len(series) != preset.expected_rows:
            print(
                f"warning: preset {preset.name!r} expects {preset.expected_rows} rows, "
                f"file has {len(series)}", file=sys.stderr,
            )
        retained = subsample_missing(series, args.p_missing, args.seed)
        write_canonical_csv(retained, args.out)
    except (DataError, OSError) as exc:
        print(f"prepare: {exc}", file=sys.stderr)
        return EXIT_DATA
    deltas = np.diff(retained.t)
    print(f"retained {len(retained)} of {len(series)} rows -> {args.out}")
    print(f"mu_delta = {deltas.mean():.6g}, "
          f"delta range = [{deltas.min():.6g}, {deltas.max():.6g}]")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.kind == "cstr":
        series = synthesize_cstr(seed=args.seed, n_samples=args.samples or 7500)
    else:
        series = synthesize_winding(seed=args.seed, n_samples=args.samples or 2500)
    write_daisy_file(args.kind, series, args.out)
    print(f"wrote surrogate {args.kind} ({len(series)} rows) -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        with open(args.config) as fh:
            config = parse_config(fh.read())
    except FileNotFoundError:
        print(f"train: config file not found: {args.config}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"train: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        dataset = split_normalize(read_canonical_csv(config.dataset))
    except FileNotFoundError:
        print(f"train: dataset file not found: {config.dataset}", file=sys.stderr)
        return EXIT_DATA
    except DataError as exc:
        print(f"train: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        model, history = train(dataset, config)
    except TrainingDiverged as exc:
        print(f"train: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    save_model(model, args.out)
    if args.history:
        with open(args.history, "w") as fh:
            fh.write(history_to_text(history))
    print(f"config digest {config_digest(config)}")
    print(f"stopped after {history.epochs_run} epochs ({history.stopping_reason}); "
          f"best epoch {history.best_epoch}, "
          f"validation RRSE {history.best_val_rrse:.2f}% -> {args.out}")
    return EXIT_OK


def _compatible_dataset(model, path):
    dataset = split_normalize(read_canonical_csv(path))
    if model.meta.get("delta_channel"):
        dataset = augment_delta_channel(dataset)
    if dataset.k_x_raw != model.k_x_raw or dataset.k_out != model.k_out:
        raise DataError(
            f"channel mismatch: model expects {model.k_x_raw} inputs / "
            f"{model.k_out} outputs, data has {dataset.k_x_raw} / {dataset.k_out}"
        )
    digest = dataset.norm_digest()
    expected = model.meta.get("norm_digest")
    if expected is not None and digest != expected:
        raise DataError(
            f"normalization digest mismatch: model was trained on {expected}, "
            f"this file gives {digest}"
        )
    return dataset


def cmd_evaluate(args) -> int:
    try:
        model = load_model(args.model)
    except (OSError, ValueError) as exc:
        print(f"evaluate: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        dataset = _compatible_dataset(model, args.data)
    except DataError as exc:
        print(f"evaluate: {exc}", file=sys.stderr)
        return EXIT_DATA
    from .integrators import StepSpec, tableau

    spec = StepSpec(
        tableau=tableau(model.meta["scheme"]),
        formulation=model.meta["formulation"],
        interpolation=model.meta["interpolation"],
        mu_delta=dataset.mu_delta,
    )
    report = evaluate_split(model, dataset, spec, split=args.split)
    sys.stdout.write(format_metrics(
        report,
        config_digest=model.meta.get("config_digest", ""),
        seed=model.meta.get("seed", ""),
        epochs_run=model.meta.get("epochs_run", ""),
    ))
    if args.dump:
        from .evaluation import _split_target_range

        lo, hi = _split_target_range(dataset, args.split)
        preds = rollout(model, dataset, spec)[lo - 1:hi - 1]
        stats = dataset.stats
        y_true = dataset.series.y[lo:hi] * stats.y_std + stats.y_mean
        y_pred = preds * stats.y_std + stats.y_mean
        dump_predictions(args.dump, dataset.series.t[lo:hi], y_true, y_pred)
        print(f"wrote predictions -> {args.dump}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    if args.suite not in SUITES:
        print(f"benchmark: unknown suite {args.suite!r}; available: "
              f"{', '.join(sorted(SUITES))}", file=sys.stderr)
        return EXIT_USAGE
    suite = SUITES[args.suite]
    seeds = tuple(range(args.seeds)) if args.seeds else DEFAULT_SEEDS
    try:
        result = run_suite(
            suite, args.data_dir, seeds=seeds, jobs=args.jobs,
            cache_dir=args.cache, log=print if args.verbose else None,
        )
    except FileNotFoundError as exc:
        print(f"benchmark: {exc}", file=sys.stderr)
        return EXIT_DATA
    write_suite_csv(result, args.out)
    for r in result.rows:
        std = "-" if r.agg.std is None else f"{r.agg.std:.2f}"
        flag = ""
        if r.band_ok is False:
            flag = "  [outside soft band]"
        print(f"{r.spec.name:32s} {r.agg.mean:7.2f} +- {std:>6s} %  "
              f"failures={r.agg.failures}{flag}")
    failed_hard = False
    for check, ok, desc in result.ordering_results:
        kind = "hard" if check.hard else "soft"
        print(f"ordering [{kind}] {check.name}: {'PASS' if ok else 'FAIL'} ({desc})")
        if check.hard and not ok:
            failed_hard = True
    print(f"rows -> {args.out}")
    return EXIT_BAND if failed_hard else EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck_suite()
    failed = False
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}: "
              f"max rel err {r.value:.3g} (tol {r.tol:g})")
        failed |= not r.ok
    return EXIT_USAGE if failed else EXIT_OK


def cmd_ordercheck(args) -> int:
    results = ordercheck_suite()
    failed = False
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}: "
              f"|deviation| {r.value:.3g} (tol {r.tol:g})")
        failed |= not r.ok
    return EXIT_USAGE if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rksysid",
        description="System identification with Runge-Kutta recurrent models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="raw table -> canonical CSV, with subsampling")
    p.add_argument("input")
    p.add_argument("--preset", choices=sorted(DAISY_PRESETS))
    p.add_argument("--time-col", type=int, default=None)
    p.add_argument("--input-cols", default="")
    p.add_argument("--output-cols", default="")
    p.add_argument("--period", type=float, default=None)
    p.add_argument("--p-missing", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("synth", help="generate a surrogate raw data file")
    p.add_argument("kind", choices=SYNTH_KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="RRSE of a trained model on one split")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--dump", default=None)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("benchmark", help="run a reproduction suite over 5 seeds")
    p.add_argument("suite")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seeds", type=int, default=None,
                   help="number of seeds (default 5)")
    p.add_argument("--cache", default=None, help="directory for run result cache")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_benchmark)

    p = sub.add_parser("gradcheck", help="finite-difference gradient sweep")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("ordercheck", help="integration order verification")
    p.set_defaults(fn=cmd_ordercheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
