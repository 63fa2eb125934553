"""Command-line front end: ``mrq profile|train|predict|eval|compare``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import secrets
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .dataset import format_profile_table, load_dataset, profile_csv, profile_dataset
from .errors import ModelFormatError, ParameterError, ParseError, SchemaError, SplitError
from .evaluation import (
    build_report,
    parse_protocol,
    report_csv,
    report_text,
    run_config,
    run_experiment,
)
from .models import EMRQ, EMRQR, MRQ, ST, TrainConfig, train
from .serialize import load_model, save_model

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

logger = logging.getLogger("mrq")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _int_or_range(text):
    """``50`` or ``50:100`` (inclusive)."""
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            return (int(lo), int(hi))
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or lo:hi range, got {text!r}") from None


def _s_value(text):
    t = text.strip()
    body = t[:-1] if t.endswith("m") else t
    if body and not body.isdigit():
        raise argparse.ArgumentTypeError(f"expected an integer or a multiple of m such as 3m, got {text!r}")
    return t


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _write_atomic(path, text):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _resolve_seed(args):
    seed = args.seed if args.seed is not None else secrets.randbelow(2**31)
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        n_trees=args.trees,
        min_leaf_clf=args.min_leaf_clf,
        min_leaf_reg=args.min_leaf_reg,
        restarts=args.restarts,
        n_jobs=args.jobs,
    )


def _method_from_args(args) -> dict:
    method = {"variant": args.method}
    if args.method == MRQ:
        k = 50 if args.k is None else args.k
        if isinstance(k, tuple):
            raise UsageError("mrq takes a single --k value")
        method["k"] = k
    elif args.method in (EMRQ, EMRQR):
        default_k = (50, 100) if args.method == EMRQR else 50
        default_not = (1, 2) if args.method == EMRQR else 2
        method["k"] = default_k if args.k is None else args.k
        method["not"] = default_not if args.n_targets is None else args.n_targets
        method["s"] = args.s or "m"
        if args.method == EMRQ and (isinstance(method["k"], tuple) or isinstance(method["not"], tuple)):
            method["variant"] = EMRQR
    return method


def _add_learner_flags(p):
    p.add_argument("--trees", type=_positive, default=100, help="trees per bagging ensemble")
    p.add_argument("--min-leaf-clf", type=_positive, default=1)
    p.add_argument("--min-leaf-reg", type=_positive, default=5)
    p.add_argument("--restarts", type=_positive, default=10, help="k-means restarts")


def _add_method_flags(p):
    p.add_argument("--method", choices=(ST, MRQ, EMRQ, EMRQR), required=True)
    p.add_argument("--k", type=_int_or_range, help="centroids per quantizer, or lo:hi for emrqr")
    p.add_argument("--not", dest="n_targets", type=_int_or_range, help="targets per subquantizer, or lo:hi")
    p.add_argument("--s", type=_s_value, help="number of subquantizers: integer or multiple of m (m, 3m)")


def _add_data_flags(p):
    p.add_argument("--data", required=True, help="ARFF or CSV dataset")
    p.add_argument("--targets", type=int, required=True, help="number of trailing target attributes")
    p.add_argument("--format", choices=("arff", "csv"))


def _common(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker threads (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="mrq", description="Multi-target regression via output-space quantization.")
    parser.add_argument("--version", action="version", version=f"mrq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("profile", help="dataset summary table (sizes, |r|, output entropy)")
    p.add_argument("paths", nargs="+")
    p.add_argument("--targets", type=int, required=True)
    p.add_argument("--format", choices=("arff", "csv"))
    p.add_argument("--cv-folds", type=_positive, default=3)
    p.add_argument("--csv", help="also write the profile as CSV")
    _common(p)

    p = sub.add_parser("train", help="train a model and save it")
    _add_data_flags(p)
    _add_method_flags(p)
    _add_learner_flags(p)
    p.add_argument("--out", required=True, help="model file to write")
    _common(p)

    p = sub.add_parser("predict", help="predict targets for a feature file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="CSV of numeric features (d columns, optional header)")
    p.add_argument("--out", required=True, help="predictions CSV")
    _common(p)

    p = sub.add_parser("eval", help="resampled aRMAE of one method (optionally over a k grid)")
    _add_data_flags(p)
    _add_method_flags(p)
    _add_learner_flags(p)
    p.add_argument("--protocol", default="holdout:0.9:10", help="holdout:FRAC:REPEATS or kfold:FOLDS")
    p.add_argument("--k-grid", help="comma-separated k values; emits aRMAE and oracle aRMAE per k")
    p.add_argument("--oracle", action="store_true", help="also report the oracle-classifier aRMAE")
    p.add_argument("--out", help="write the per-repeat CSV here")
    p.add_argument("--no-timing", action="store_true")
    _common(p)

    p = sub.add_parser("compare", help="run a YAML-configured comparison and write reports")
    p.add_argument("config")
    p.add_argument("--no-timing", action="store_true", help="omit timing columns (byte-stable output)")
    _common(p)
    return parser


def cmd_profile(args):
    if args.targets < 1:
        raise UsageError("--targets must be >= 1")
    seed = _resolve_seed(args)
    profiles = []
    for path in args.paths:
        data = load_dataset(path, args.format, args.targets)
        profiles.append(profile_dataset(data, cv_folds=args.cv_folds, seed=seed))
    sys.stdout.write(format_profile_table(profiles))
    if args.csv:
        _write_atomic(args.csv, profile_csv(profiles))


def _load_for_training(args):
    if args.targets < 1:
        raise UsageError("--targets must be >= 1")
    data = load_dataset(args.data, args.format, args.targets)
    method = _method_from_args(args)
    nt = method.get("not")
    if nt is not None:
        lo, hi = nt if isinstance(nt, tuple) else (nt, nt)
        if args.n_targets is None and method["variant"] == EMRQR:
            hi = min(hi, data.m)
            method["not"] = (lo, hi)
        if lo < 1 or hi > data.m or lo > hi:
            raise UsageError(f"--not {nt} is invalid for a dataset with m={data.m} targets")
    k = method.get("k")
    if k is not None:
        lo, hi = k if isinstance(k, tuple) else (k, k)
        if lo < 1 or lo > hi:
            raise UsageError(f"--k {k} is invalid")
    return data, method


def cmd_train(args):
    data, method = _load_for_training(args)
    seed = _resolve_seed(args)
    model = train(data, np.arange(data.n), method, _train_config(args), seed)
    save_model(model, args.out)
    print(f"wrote {model.variant} model ({data.m} targets, {data.d} features) to {args.out}", file=sys.stderr)


def _read_features(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    rows = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not rows:
        raise DataError(f"{path}: empty input")
    try:
        [float(t) for t in rows[0].split(",")]
    except ValueError:
        rows = rows[1:]
    try:
        X = np.array([[float(t) for t in ln.split(",")] for ln in rows], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric feature value ({exc})") from None
    return X


def cmd_predict(args):
    _resolve_seed(args)
    model = load_model(args.model)
    X = _read_features(args.input)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DataError(f"input has {X.shape[1] if X.ndim == 2 else 0} columns, model expects {model.n_features}")
    Y = model.predict(X)
    names = model.target_names or tuple(f"y{j}" for j in range(model.m))
    lines = [",".join(names)] + [",".join(format(v, ".17g") for v in row) for row in Y]
    _write_atomic(args.out, "\n".join(lines) + "\n")
    if model.uncovered.any():
        print(f"warning: targets {list(np.flatnonzero(model.uncovered))} use the training-mean fallback", file=sys.stderr)


def cmd_eval(args):
    data, method = _load_for_training(args)
    seed = _resolve_seed(args)
    try:
        protocol = parse_protocol(args.protocol)
    except (ValueError, IndexError) as exc:
        raise UsageError(f"bad --protocol: {exc}") from None
    cfg = _train_config(args)
    if args.k_grid:
        if method["variant"] == ST:
            raise UsageError("--k-grid needs a quantization-based method")
        try:
            grid = [int(v) for v in args.k_grid.split(",")]
        except ValueError:
            raise UsageError(f"bad --k-grid {args.k_grid!r}") from None
        methods = [dict(method, k=k, name=f"{method['variant']}_k{k}") for k in grid]
        oracle = True
    else:
        methods = [method]
        oracle = args.oracle or method["variant"] != ST
    cells = run_experiment(data, methods, protocol, seed, cfg, oracle=oracle)
    report = build_report(cells, [data.name])
    timing = not args.no_timing
    print(f"{'method':>14} {'aRMAE':>7} {'std':>7} {'oracle':>7}")
    for i, name in enumerate(report.methods):
        orc = [c.oracle_armae for c in cells if c.method == name]
        orc_mean = float(np.nanmean(orc)) if orc and not np.all(np.isnan(orc)) else float("nan")
        print(f"{name:>14} {report.mean[i, 0]:>7.3f} {report.std[i, 0]:>7.3f} {orc_mean:>7.3f}")
    if args.out:
        _write_atomic(args.out, report_csv(report, timing))


def cmd_compare(args):
    seed = _resolve_seed(args)
    cfg_path = Path(args.config)
    if not cfg_path.is_file():
        raise FileNotFoundError(str(cfg_path))
    try:
        config = yaml.safe_load(cfg_path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise UsageError(f"config is not valid YAML: {exc}") from None
    if not isinstance(config, dict):
        raise UsageError("config must be a mapping")
    if args.seed is not None or "seed" not in config:
        config["seed"] = seed
    else:
        print(f"seed (from config): {config['seed']}", file=sys.stderr)
    base = cfg_path.parent
    out = config.get("output", {}) or {}
    text_path = base / out.get("text", "report.txt")
    csv_path = base / out.get("csv", "report.csv")
    if not config.get("methods"):
        report = build_report([], [e.get("name", Path(e["path"]).stem) for e in config.get("datasets", [])], [])
    else:
        report = run_config(config, base, n_jobs=args.jobs)
    timing = not args.no_timing
    text = report_text(report, timing)
    _write_atomic(text_path, text)
    _write_atomic(csv_path, report_csv(report, timing))
    sys.stdout.write(text)


COMMANDS = {
    "profile": cmd_profile,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        COMMANDS[args.command](args)
    except (UsageError, ParameterError) as exc:
        print(f"mrq: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, DataError, ParseError, SchemaError, SplitError, ModelFormatError) as exc:
        print(f"mrq: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        logger.debug("runtime failure", exc_info=True)
        print(f"mrq: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
