"""aRMAE, resampling experiments and Friedman/Nemenyi rank statistics."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2, rankdata

from .dataset import Dataset, Holdout, KFold, split
from .errors import MetricError, MrqError, ParameterError
from .models import MRQ, ST, TrainConfig, derive_seed, train

logger = logging.getLogger(__name__)

# Two-tailed Nemenyi critical values q_alpha (studentized range / sqrt(2), infinite df).
# M = 2..10 as published by Demsar (2006); M = 11..20 from scipy.stats.studentized_range.
NEMENYI_Q = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164,
           3.219, 3.268, 3.313, 3.354, 3.391, 3.426, 3.458, 3.489, 3.517, 3.544),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920,
           2.978, 3.030, 3.077, 3.120, 3.159, 3.196, 3.230, 3.261, 3.291, 3.319),
}


class LowerBoundViolation(MrqError, AssertionError):
    """An MRQ prediction beat its own oracle, which nearest-centroid coding forbids."""


def armae(y_true, y_pred):
    """Average relative mean absolute error and the per-target RMAE vector.

    The reference predictor is the mean of each target over the evaluation set
    itself. Targets that are constant on the evaluation set are excluded (NaN
    in the per-target vector) with a warning.
    """
    y_true = np.atleast_2d(np.asarray(y_true, dtype=float))
    y_pred = np.atleast_2d(np.asarray(y_pred, dtype=float))
    if y_true.shape != y_pred.shape:
        raise ParameterError(f"shape mismatch {y_true.shape} vs {y_pred.shape}")
    if y_true.shape[0] < 1:
        raise ParameterError("need at least one row")
    num = np.abs(y_pred - y_true).sum(axis=0)
    den = np.abs(y_true.mean(axis=0) - y_true).sum(axis=0)
    per = np.full(y_true.shape[1], np.nan)
    ok = den > 0
    per[ok] = num[ok] / den[ok]
    if not ok.all():
        if not ok.any():
            raise MetricError("every target is constant on the evaluation set")
        warnings.warn(f"targets {list(np.flatnonzero(~ok))} constant on the evaluation set; excluded", RuntimeWarning, stacklevel=2)
    return float(per[ok].mean()), per


def squared_errors(model, X, Y):
    """Per-row squared errors of the model and of its oracle, in standardized units."""
    std = model.standardizer
    Zt = std.transform(Y)
    se_model = ((std.transform(model.predict(X)) - Zt) ** 2).sum(axis=1)
    se_oracle = ((std.transform(model.predict_oracle(X, Y)) - Zt) ** 2).sum(axis=1)
    return se_model, se_oracle


def check_lower_bound(model, X, Y, slack=1e-9):
    """Verify MRQ's squared error is at least the quantizer's, row by row and in total."""
    se_model, se_oracle = squared_errors(model, X, Y)
    bad = np.flatnonzero(se_model < se_oracle - slack)
    if bad.size or se_model.sum() < se_oracle.sum() - slack:
        raise LowerBoundViolation(f"MRQ error below quantization error on rows {bad[:10].tolist()}")
    return se_model, se_oracle


def average_ranks(errors) -> np.ndarray:
    """Average rank of each method (rows) over datasets (columns); 1 = lowest error."""
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 2:
        raise ParameterError("errors must be a methods x datasets matrix")
    if np.isnan(errors).any():
        raise ParameterError("errors contain missing cells")
    return rank_matrix(errors).mean(axis=1)


def rank_matrix(errors) -> np.ndarray:
    """Per-dataset mid-ranks, same shape as ``errors``."""
    return np.apply_along_axis(rankdata, 0, np.asarray(errors, dtype=float))


def friedman_test(errors):
    """Friedman chi-square statistic over average ranks and its p-value (M-1 dof)."""
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 2:
        raise ParameterError("errors must be a methods x datasets matrix")
    M, D = errors.shape
    if M < 3 or D < 2:
        raise ParameterError(f"Friedman test needs M >= 3 methods and D >= 2 datasets, got M={M}, D={D}")
    R = average_ranks(errors)
    stat = 12.0 * D / (M * (M + 1)) * float(np.sum(R ** 2)) - 3.0 * D * (M + 1)
    stat = max(stat, 0.0) if abs(stat) < 1e-9 else stat
    return stat, float(chi2.sf(stat, M - 1))


def nemenyi_q(M, alpha=0.05) -> float:
    if alpha not in NEMENYI_Q:
        raise ParameterError(f"alpha must be one of {sorted(NEMENYI_Q)}")
    if not 2 <= M <= 20:
        raise ParameterError("Nemenyi table covers 2 to 20 methods")
    return NEMENYI_Q[alpha][M - 2]


def nemenyi_cd(M, D, alpha=0.05) -> float:
    """Critical difference of average ranks for M methods over D datasets."""
    if D < 1:
        raise ParameterError("D must be >= 1")
    return nemenyi_q(M, alpha) * math.sqrt(M * (M + 1) / (6.0 * D))


# ------------------------------------------------------------- experiments


@dataclass
class Cell:
    dataset: str
    method: str
    repeat: int
    armae: float = float("nan")
    per_target: np.ndarray | None = None
    oracle_armae: float = float("nan")
    train_seconds: float = 0.0
    predict_seconds: float = 0.0
    error: str = ""


def method_name(method: dict) -> str:
    if "name" in method:
        return str(method["name"])
    v = method["variant"]
    if v == ST:
        return "ST"
    if v == MRQ:
        return f"MRQ_{method.get('k', 50)}"
    return f"{v}_{method.get('s', 'm')}"


def run_experiment(data: Dataset, methods, protocol, seed=0, cfg: TrainConfig = TrainConfig(), oracle=False):
    """Evaluate every method on identical splits of ``data``.

    Returns a list of :class:`Cell` records, one per (method, repeat). Every
    MRQ model is checked against its oracle (squared-error lower bound).
    """
    splits = split(data.n, protocol, seed=seed)
    cells = []
    for r, (tr, te) in enumerate(splits):
        view = data.reimpute(tr)
        X_te, Y_te = view.features[te], view.targets[te]
        run_seed = derive_seed(seed, r)
        for method in methods:
            cell = Cell(data.name, method_name(method), r)
            try:
                t0 = time.perf_counter()
                model = train(view, tr, method, cfg, run_seed)
                t1 = time.perf_counter()
                pred = model.predict(X_te)
                t2 = time.perf_counter()
                cell.train_seconds, cell.predict_seconds = t1 - t0, t2 - t1
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    cell.armae, cell.per_target = armae(Y_te, pred)
                    if model.variant == MRQ:
                        check_lower_bound(model, X_te, Y_te)
                    if oracle and model.variant != ST:
                        cell.oracle_armae = armae(Y_te, model.predict_oracle(X_te, Y_te))[0]
            except LowerBoundViolation:
                raise
            except (MrqError, ValueError, FloatingPointError) as exc:
                cell.error = f"{type(exc).__name__}: {exc}"
                logger.warning("%s on %s repeat %d failed: %s", cell.method, data.name, r, exc)
            cells.append(cell)
    return cells


@dataclass
class EvaluationReport:
    datasets: list
    methods: list
    cells: list
    mean: np.ndarray  # methods x datasets, NaN where failed
    std: np.ndarray
    train_seconds: np.ndarray
    predict_seconds: np.ndarray
    ranked_methods: list = field(default_factory=list)
    avg_ranks: np.ndarray | None = None
    friedman_stat: float | None = None
    friedman_p: float | None = None
    cd: float | None = None
    alpha: float = 0.05
    notices: list = field(default_factory=list)


def build_report(cells, datasets=None, methods=None, alpha=0.05) -> EvaluationReport:
    """Aggregate cells into per-(dataset, method) means, ranks and test statistics."""
    if datasets is None:
        datasets = list(dict.fromkeys(c.dataset for c in cells))
    if methods is None:
        methods = list(dict.fromkeys(c.method for c in cells))
    M, D = len(methods), len(datasets)
    mean = np.full((M, D), np.nan)
    std = np.full((M, D), np.nan)
    tr = np.zeros((M, D))
    pr = np.zeros((M, D))
    for i, meth in enumerate(methods):
        for j, ds in enumerate(datasets):
            group = [c for c in cells if c.method == meth and c.dataset == ds]
            tr[i, j] = sum(c.train_seconds for c in group)
            pr[i, j] = sum(c.predict_seconds for c in group)
            if group and not any(c.error for c in group):
                vals = np.array([c.armae for c in group])
                mean[i, j] = vals.mean()
                std[i, j] = vals.std(ddof=1) if vals.size > 1 else 0.0
    report = EvaluationReport(datasets, methods, cells, mean, std, tr, pr, alpha=alpha)
    ok = ~np.isnan(mean).any(axis=1) if D else np.zeros(M, dtype=bool)
    dropped = [m for m, good in zip(methods, ok) if not good]
    if dropped:
        msg = f"methods with failed cells excluded from ranking: {dropped}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        report.notices.append(msg)
    ranked = [m for m, good in zip(methods, ok) if good]
    report.ranked_methods = ranked
    if ranked and D:
        errs = mean[ok]
        report.avg_ranks = average_ranks(errs)
        if len(ranked) >= 3 and D >= 2:
            report.friedman_stat, report.friedman_p = friedman_test(errs)
        else:
            report.notices.append(f"Friedman test skipped: needs >= 3 methods and >= 2 datasets (M={len(ranked)}, D={D})")
        if 2 <= len(ranked) <= 20:
            report.cd = nemenyi_cd(len(ranked), D, alpha)
    return report


def _fmt(x, digits=3):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return f"{x:.{digits}f}"


def report_text(report: EvaluationReport, timing=True) -> str:
    methods, datasets = report.methods, report.datasets
    w = max([10] + [len(m) + 1 for m in methods])
    lines = [f"{'Dataset':>10}" + "".join(f"{m:>{w}}" for m in methods)]
    if not methods:
        return lines[0] + "\n"
    for j, ds in enumerate(datasets):
        lines.append(f"{ds:>10}" + "".join(f"{_fmt(report.mean[i, j]):>{w}}" for i in range(len(methods))))
    if report.avg_ranks is not None:
        rank_of = dict(zip(report.ranked_methods, report.avg_ranks))
        lines.append(f"{'Av. rank':>10}" + "".join(f"{_fmt(rank_of.get(m)):>{w}}" for m in methods))
    if timing:
        total = report.train_seconds.sum(axis=1) + report.predict_seconds.sum(axis=1)
        lines.append(f"{'Time (s)':>10}" + "".join(f"{_fmt(t, 2):>{w}}" for t in total))
    if report.friedman_stat is not None:
        lines.append(f"Friedman chi2 = {_fmt(report.friedman_stat, 4)}, p = {_fmt(report.friedman_p, 4)}")
    if report.cd is not None:
        lines.append(f"Nemenyi CD (alpha={report.alpha}) = {_fmt(report.cd)}")
        lines.append("CD diagram: method, average rank, CD")
        for m, r in zip(report.ranked_methods, report.avg_ranks):
            lines.append(f"  {m} {_fmt(r)} {_fmt(report.cd)}")
    for note in report.notices:
        lines.append(f"notice: {note}")
    return "\n".join(lines) + "\n"


CSV_COLUMNS = ("kind", "dataset", "method", "repeat", "armae", "armae_std", "oracle_armae", "avg_rank", "statistic", "p_value", "cd")
TIMING_COLUMNS = ("train_seconds", "predict_seconds")


def report_csv(report: EvaluationReport, timing=True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = CSV_COLUMNS + (TIMING_COLUMNS if timing else ())
    w.writerow(cols)

    def row(**kw):
        w.writerow([kw.get(c, "") for c in cols])

    for c in report.cells:
        row(
            kind="repeat", dataset=c.dataset, method=c.method, repeat=c.repeat,
            armae="NA" if c.error else _fmt(c.armae, 6),
            oracle_armae="" if math.isnan(c.oracle_armae) else _fmt(c.oracle_armae, 6),
            train_seconds=_fmt(c.train_seconds, 4), predict_seconds=_fmt(c.predict_seconds, 4),
        )
    for j, ds in enumerate(report.datasets):
        for i, m in enumerate(report.methods):
            row(
                kind="summary", dataset=ds, method=m,
                armae=_fmt(report.mean[i, j]), armae_std=_fmt(report.std[i, j]),
                train_seconds=_fmt(report.train_seconds[i, j], 4),
                predict_seconds=_fmt(report.predict_seconds[i, j], 4),
            )
    if report.avg_ranks is not None:
        for m, r in zip(report.ranked_methods, report.avg_ranks):
            row(kind="rank", method=m, avg_rank=_fmt(r))
    if report.friedman_stat is not None:
        row(kind="friedman", statistic=_fmt(report.friedman_stat, 4), p_value=_fmt(report.friedman_p, 4))
    if report.cd is not None:
        for m, r in zip(report.ranked_methods, report.avg_ranks):
            row(kind="cd_diagram", method=m, avg_rank=_fmt(r), cd=_fmt(report.cd))
    return buf.getvalue()


def emit_report(report: EvaluationReport, path, fmt="text", timing=True) -> None:
    if fmt not in ("text", "csv"):
        raise ParameterError(f"unknown report format {fmt!r}")
    text = report_text(report, timing) if fmt == "text" else report_csv(report, timing)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def parse_protocol(spec) -> Holdout | KFold:
    """``holdout:0.9:10`` or ``kfold:10`` (also accepts the dataclasses themselves)."""
    if isinstance(spec, (Holdout, KFold)):
        return spec
    if isinstance(spec, dict):
        if spec.get("type") == "kfold":
            return KFold(int(spec.get("folds", 10)))
        return Holdout(float(spec.get("train_frac", 0.9)), int(spec.get("repeats", 10)))
    parts = str(spec).split(":")
    if parts[0] == "holdout":
        frac = float(parts[1]) if len(parts) > 1 else 0.9
        reps = int(parts[2]) if len(parts) > 2 else 10
        return Holdout(frac, reps)
    if parts[0] == "kfold":
        return KFold(int(parts[1]) if len(parts) > 1 else 10)
    raise ParameterError(f"unknown protocol {spec!r}")


def run_config(config: dict, base_dir=".", n_jobs=1):
    """Run a declarative comparison (see README for the YAML layout)."""
    from pathlib import Path

    from .dataset import load_dataset

    base = Path(base_dir)
    seed = int(config.get("seed", 0))
    protocol = parse_protocol(config.get("protocol", "holdout:0.9:10"))
    cfg = TrainConfig(
        n_trees=int(config.get("trees", 100)),
        min_leaf_clf=int(config.get("min_leaf_clf", 1)),
        min_leaf_reg=int(config.get("min_leaf_reg", 5)),
        restarts=int(config.get("restarts", 10)),
        n_jobs=n_jobs,
    )
    methods = list(config.get("methods", []))
    names = [method_name(m) for m in methods]
    if len(set(names)) != len(names):
        raise ParameterError(f"method names must be unique: {names}")
    cells, ds_names = [], []
    for entry in config.get("datasets", []):
        data = load_dataset(base / entry["path"], entry.get("format"), int(entry["targets"]))
        name = entry.get("name", data.name)
        ds_names.append(name)
        for c in run_experiment(data, methods, protocol, seed, cfg, oracle=bool(config.get("oracle", False))):
            c.dataset = name
            cells.append(c)
    return build_report(cells, ds_names, names, float(config.get("alpha", 0.05)))
