"""Loading, standardization, resampling and profiling of multi-target data.

A :class:`Dataset` keeps the encoded design matrix and the target matrix
together with the raw input columns, so that missing-value imputation can be
refitted on the training rows of a split (:meth:`Dataset.reimpute`).
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .errors import EmptyInputError, ParameterError, ParseError, SchemaError, SplitError

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
NOMINAL = "nominal"


@dataclass(frozen=True)
class Column:
    """One raw input attribute.

    Nominal values are stored as level indices (float), missing entries as NaN.
    """

    name: str
    kind: str
    values: np.ndarray
    levels: tuple = ()


def _impute_and_encode(columns: Sequence[Column], rows=None):
    """Encode raw columns into a numeric matrix, imputing from ``rows``.

    Numeric columns are mean-imputed, nominal columns mode-imputed and then
    one-hot encoded (one indicator per declared level).
    """
    blocks = []
    names = []
    for col in columns:
        vals = col.values
        ref = vals if rows is None else vals[rows]
        ref = ref[~np.isnan(ref)]
        miss = np.isnan(vals)
        if col.kind == NUMERIC:
            fill = float(ref.mean()) if ref.size else 0.0
            v = np.where(miss, fill, vals)
            blocks.append(v[:, None])
            names.append(col.name)
        else:
            n_levels = len(col.levels)
            if ref.size:
                counts = np.bincount(ref.astype(np.int64), minlength=n_levels)
                fill = int(np.argmax(counts))
            else:
                fill = 0
            codes = np.where(miss, fill, vals).astype(np.int64)
            onehot = np.zeros((vals.shape[0], n_levels))
            onehot[np.arange(vals.shape[0]), codes] = 1.0
            blocks.append(onehot)
            names.extend(f"{col.name}={lvl}" for lvl in col.levels)
    return np.hstack(blocks), tuple(names)


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus target matrix of a multi-target regression task."""

    name: str
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple
    target_names: tuple
    source: str = ""
    fmt: str = "array"
    columns: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        Y = np.asarray(self.targets, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2:
            raise SchemaError("features and targets must be 2-d matrices")
        if X.shape[0] != Y.shape[0]:
            raise SchemaError(f"row mismatch: {X.shape[0]} feature rows vs {Y.shape[0]} target rows")
        if X.shape[0] < 1 or X.shape[1] < 1 or Y.shape[1] < 1:
            raise SchemaError(f"need N, d, m >= 1, got N={X.shape[0]}, d={X.shape[1]}, m={Y.shape[1]}")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise SchemaError("features and targets must be finite after ingestion")
        if len(self.feature_names) != X.shape[1] or len(self.target_names) != Y.shape[1]:
            raise SchemaError("name lists do not match matrix widths")
        names = list(self.feature_names) + list(self.target_names)
        if len(set(names)) != len(names):
            raise SchemaError("attribute names must be unique")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", Y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "target_names", tuple(self.target_names))

    @classmethod
    def from_arrays(cls, X, Y, name="synthetic", feature_names=None, target_names=None):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if feature_names is None:
            feature_names = [f"x{i}" for i in range(X.shape[1])]
        if target_names is None:
            target_names = [f"y{j}" for j in range(Y.shape[1])]
        return cls(name, X, Y, tuple(feature_names), tuple(target_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def m(self) -> int:
        return self.targets.shape[1]

    @property
    def n_inputs(self) -> int:
        """Number of input attributes before one-hot encoding."""
        return len(self.columns) if self.columns else self.d

    @property
    def has_missing(self) -> bool:
        return any(np.isnan(c.values).any() for c in self.columns)

    def reimpute(self, rows) -> "Dataset":
        """Return a copy whose missing feature values are imputed from ``rows`` only."""
        if not self.has_missing:
            return self
        X, _ = _impute_and_encode(self.columns, np.asarray(rows))
        return replace(self, features=X)


# ---------------------------------------------------------------- parsing


def _parse_number(token, line, path):
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"not a number: {token!r}", line, path) from None


_ATTR_RE = re.compile(r"""@attribute\s+('(?:[^']|\\')*'|"[^"]*"|\S+)\s+(.*)$""", re.IGNORECASE)


def _unquote(s):
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "'\"":
        return s[1:-1]
    return s


def _split_row(text):
    return [_unquote(t) for t in next(csv.reader([text], quotechar="'", skipinitialspace=True))]


def _read_arff(path):
    relation = Path(path).stem
    attrs = []  # (name, kind, levels)
    rows = []  # (line_no, tokens)
    in_data = False
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if in_data:
                if line.startswith("{"):
                    raise ParseError("sparse ARFF rows are not supported", line_no, path)
                rows.append((line_no, _split_row(line)))
                continue
            low = line.lower()
            if low.startswith("@relation"):
                relation = _unquote(line[len("@relation"):])
            elif low.startswith("@attribute"):
                m = _ATTR_RE.match(line)
                if m is None:
                    raise ParseError("malformed @attribute declaration", line_no, path)
                name = _unquote(m.group(1))
                spec = m.group(2).strip()
                if spec.startswith("{"):
                    if not spec.endswith("}"):
                        raise ParseError("unterminated nominal level list", line_no, path)
                    levels = tuple(_split_row(spec[1:-1]))
                    attrs.append((name, NOMINAL, levels))
                elif spec.lower() in ("numeric", "real", "integer"):
                    attrs.append((name, NUMERIC, ()))
                else:
                    raise ParseError(f"unsupported attribute type {spec!r}", line_no, path)
            elif low.startswith("@data"):
                if not attrs:
                    raise ParseError("@data before any @attribute", line_no, path)
                in_data = True
            else:
                raise ParseError(f"unexpected header line {line!r}", line_no, path)
    if not in_data:
        raise ParseError("no @data section", None, path)

    columns = []
    for j, (name, kind, levels) in enumerate(attrs):
        vals = np.empty(len(rows))
        lookup = {lvl: i for i, lvl in enumerate(levels)}
        for i, (line_no, toks) in enumerate(rows):
            if len(toks) != len(attrs):
                raise ParseError(f"expected {len(attrs)} values, found {len(toks)}", line_no, path)
            tok = toks[j].strip()
            if tok == "?" or tok == "":
                vals[i] = np.nan
            elif kind == NUMERIC:
                vals[i] = _parse_number(tok, line_no, path)
            else:
                if tok not in lookup:
                    raise ParseError(f"value {tok!r} not a level of {name!r}", line_no, path)
                vals[i] = lookup[tok]
        columns.append(Column(name, kind, vals, levels))
    return relation, columns


def _is_number(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _read_csv(path):
    with open(path, encoding="utf-8", errors="replace", newline="") as fh:
        text = fh.read()
    records = [(i, r) for i, r in enumerate(csv.reader(io.StringIO(text)), start=1) if any(c.strip() for c in r)]
    if not records:
        raise ParseError("empty file", None, path)
    width = len(records[0][1])
    first = [c.strip() for c in records[0][1]]
    if any(c and not _is_number(c) for c in first):
        names = first
        body = records[1:]
    else:
        names = [f"c{j}" for j in range(width)]
        body = records
    if not body:
        raise ParseError("no data rows", None, path)
    for line_no, rec in body:
        if len(rec) != width:
            raise ParseError(f"expected {width} values, found {len(rec)}", line_no, path)
    columns = []
    for j, name in enumerate(names):
        toks = [rec[j].strip() for _, rec in body]
        if all(t == "" or _is_number(t) for t in toks):
            vals = np.array([np.nan if t == "" else float(t) for t in toks])
            columns.append(Column(name, NUMERIC, vals))
        else:
            levels = tuple(dict.fromkeys(t for t in toks if t != ""))
            lookup = {lvl: i for i, lvl in enumerate(levels)}
            vals = np.array([np.nan if t == "" else lookup[t] for t in toks], dtype=float)
            columns.append(Column(name, NOMINAL, vals, levels))
    return Path(path).stem, columns


def load_dataset(path, fmt=None, n_targets=1) -> Dataset:
    """Read an ARFF or CSV file whose last ``n_targets`` attributes are targets.

    Nominal inputs are one-hot encoded, missing numerics are mean-imputed and
    missing nominals mode-imputed (over all rows; see :meth:`Dataset.reimpute`
    for split-aware imputation).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    if fmt is None:
        fmt = "arff" if path.suffix.lower() == ".arff" else "csv"
    fmt = fmt.lower()
    if fmt == "arff":
        name, columns = _read_arff(path)
    elif fmt == "csv":
        name, columns = _read_csv(path)
    else:
        raise ParameterError(f"unknown format {fmt!r}")
    if n_targets < 1:
        raise SchemaError("n_targets must be at least 1")
    if n_targets >= len(columns):
        raise SchemaError(f"n_targets={n_targets} leaves no input attributes ({len(columns)} columns)")
    inputs, outputs = columns[:-n_targets], columns[-n_targets:]
    for col in outputs:
        if col.kind != NUMERIC:
            raise SchemaError(f"target {col.name!r} is not numeric")
    X, feature_names = _impute_and_encode(inputs)
    Y = np.column_stack([c.values for c in outputs])
    if np.isnan(Y).any():
        col_means = np.nanmean(Y, axis=0)
        if np.isnan(col_means).any():
            raise SchemaError("a target column has no observed values")
        Y = np.where(np.isnan(Y), col_means, Y)
    data = Dataset(
        name=name,
        features=X,
        targets=Y,
        feature_names=feature_names,
        target_names=tuple(c.name for c in outputs),
        source=str(path),
        fmt=fmt,
        columns=tuple(inputs),
    )
    logger.info("loaded %s: N=%d d=%d m=%d", name, data.n, data.d, data.m)
    return data


# ---------------------------------------------------------- standardizing


@dataclass(frozen=True)
class Standardizer:
    """Per-target z-scoring with sample (n-1) standard deviations."""

    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray
    fitted_on: str = ""

    @classmethod
    def fit(cls, Y, fitted_on=""):
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[0] == 0:
            raise EmptyInputError("cannot fit a standardizer on zero rows")
        if Y.shape[0] == 1:
            raise SplitError("sample standard deviation undefined for a single row")
        mean = Y.mean(axis=0)
        std = Y.std(axis=0, ddof=1)
        constant = ~(std > 0)
        scale = np.where(constant, 1.0, std)
        return cls(mean, scale, constant, fitted_on)

    @property
    def m(self):
        return self.mean.shape[0]

    def transform(self, Y):
        return (np.asarray(Y, dtype=float) - self.mean) / self.scale

    def inverse_transform(self, Z):
        return np.asarray(Z, dtype=float) * self.scale + self.mean


def _rows_tag(rows):
    rows = np.asarray(rows)
    return f"{rows.size} rows"


def fit_standardizer(data: Dataset, rows) -> Standardizer:
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise EmptyInputError("rows must be nonempty")
    return Standardizer.fit(data.targets[rows], fitted_on=_rows_tag(rows))


# --------------------------------------------------------------- splitting


@dataclass(frozen=True)
class Holdout:
    train_frac: float = 0.9
    repeats: int = 10


@dataclass(frozen=True)
class KFold:
    folds: int = 10


def split(n, scheme, seed=0):
    """Train/test row-index pairs for ``scheme`` over ``n`` rows.

    ``n`` may also be a :class:`Dataset`.
    """
    if isinstance(n, Dataset):
        n = n.n
    rng = np.random.default_rng(seed)
    out = []
    if isinstance(scheme, Holdout):
        if not 0 < scheme.train_frac < 1:
            raise ParameterError("train_frac must lie in (0, 1)")
        if scheme.repeats < 1:
            raise ParameterError("repeats must be >= 1")
        n_train = int(round(scheme.train_frac * n))
        if n_train < 1 or n_train > n - 1:
            raise SplitError(f"holdout({scheme.train_frac}) on {n} rows leaves an empty side")
        for _ in range(scheme.repeats):
            perm = rng.permutation(n)
            out.append((np.sort(perm[:n_train]), np.sort(perm[n_train:])))
    elif isinstance(scheme, KFold):
        if scheme.folds < 2 or scheme.folds > n:
            raise SplitError(f"kfold({scheme.folds}) needs 2 <= folds <= N={n}")
        perm = rng.permutation(n)
        parts = np.array_split(perm, scheme.folds)
        for i, test in enumerate(parts):
            train = np.concatenate([p for j, p in enumerate(parts) if j != i])
            out.append((np.sort(train), np.sort(test)))
    else:
        raise ParameterError(f"unknown scheme {scheme!r}")
    return out


# --------------------------------------------------------------- profiling

DEFAULT_BANDWIDTHS = tuple(np.geomspace(0.1, 20.0, 20))


@dataclass(frozen=True)
class DatasetProfile:
    name: str
    n_examples: int
    d: int
    m: int
    avg_abs_pearson: float
    avg_output_entropy: float
    per_target_entropy: np.ndarray
    bandwidths: np.ndarray
    degenerate: tuple = ()


def avg_abs_pearson(Y) -> float:
    """Mean |r| over unordered target pairs; pairs with a constant target are skipped."""
    Y = np.asarray(Y, dtype=float)
    m = Y.shape[1]
    if m < 2:
        return 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.corrcoef(Y, rowvar=False)
    iu = np.triu_indices(m, k=1)
    vals = np.abs(r[iu])
    vals = vals[np.isfinite(vals)]
    return float(min(vals.mean(), 1.0)) if vals.size else 0.0


@njit(cache=True)
def _windowed_logdens(query, sorted_sample, h, cut):
    n = sorted_sample.shape[0]
    out = np.empty(query.shape[0])
    norm = math.log(n * h * math.sqrt(2 * math.pi))
    for i in range(query.shape[0]):
        q = query[i]
        pos = np.searchsorted(sorted_sample, q)
        dmin = np.inf
        if pos < n:
            dmin = sorted_sample[pos] - q
        if pos > 0 and q - sorted_sample[pos - 1] < dmin:
            dmin = q - sorted_sample[pos - 1]
        radius = dmin + cut * h
        lo = np.searchsorted(sorted_sample, q - radius)
        hi = np.searchsorted(sorted_sample, q + radius, side="right")
        shift = 0.5 * (dmin / h) ** 2
        acc = 0.0
        for j in range(lo, hi):
            z = (q - sorted_sample[j]) / h
            acc += math.exp(shift - 0.5 * z * z)
        out[i] = math.log(acc) - shift - norm
    return out


def _gauss_logdens(query, sample, h):
    """Log density of a 1-d Gaussian KDE at ``query``.

    Kernel terms more than 10 bandwidths beyond the nearest sample point are
    dropped; their total relative weight is below n * exp(-50).
    """
    return _windowed_logdens(
        np.ascontiguousarray(query, dtype=np.float64), np.sort(np.asarray(sample, dtype=np.float64)), float(h), 10.0
    )


def select_bandwidth(values, grid=DEFAULT_BANDWIDTHS, cv_folds=3, seed=0):
    """Bandwidth from ``grid`` maximizing the held-out mean log-likelihood."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < cv_folds:
        raise ParameterError(f"need at least {cv_folds} values for {cv_folds}-fold CV")
    folds = np.array_split(np.random.default_rng(seed).permutation(n), cv_folds)
    best_h, best_ll = None, -np.inf
    for h in grid:
        total = 0.0
        for i, test in enumerate(folds):
            train = np.concatenate([f for j, f in enumerate(folds) if j != i])
            total += _gauss_logdens(values[test], values[train], h).sum()
        ll = total / n
        if ll > best_ll:
            best_h, best_ll = float(h), ll
    return best_h


def kde_entropy(values, h):
    """Resubstitution entropy estimate (nats): minus the mean log-density of the sample."""
    values = np.asarray(values, dtype=float)
    return float(-_gauss_logdens(values, values, h).mean())


def profile_dataset(data: Dataset, cv_folds=3, bandwidth_grid=DEFAULT_BANDWIDTHS, seed=0) -> DatasetProfile:
    """Summary statistics of a dataset: sizes, target correlation and output entropy.

    Each target is min-max rescaled to [0, 100] before density estimation, so a
    uniform target scores about ln(100).
    """
    if data.n < cv_folds:
        raise ParameterError(f"N={data.n} smaller than cv_folds={cv_folds}")
    Y = data.targets
    ent = np.empty(data.m)
    bws = np.full(data.m, np.nan)
    degenerate = []
    for j in range(data.m):
        col = Y[:, j]
        lo, hi = col.min(), col.max()
        if hi == lo:
            ent[j] = -np.inf
            degenerate.append(data.target_names[j])
            continue
        scaled = (col - lo) / (hi - lo) * 100.0
        bws[j] = select_bandwidth(scaled, bandwidth_grid, cv_folds, seed=seed + j)
        ent[j] = kde_entropy(scaled, bws[j])
    if degenerate:
        warnings.warn(f"constant targets excluded from entropy average: {degenerate}", RuntimeWarning, stacklevel=2)
    finite = ent[np.isfinite(ent)]
    avg_ent = float(finite.mean()) if finite.size else float("-inf")
    return DatasetProfile(
        name=data.name,
        n_examples=data.n,
        d=data.n_inputs,
        m=data.m,
        avg_abs_pearson=avg_abs_pearson(Y),
        avg_output_entropy=avg_ent,
        per_target_entropy=ent,
        bandwidths=bws,
        degenerate=tuple(degenerate),
    )


PROFILE_COLUMNS = ("name", "n_examples", "d", "m", "avg_abs_pearson", "avg_output_entropy")


def format_profile_table(profiles) -> str:
    lines = [f"{'Name':>10} {'#ex.':>6} {'d':>5} {'m':>4} {'|r|':>6} {'H(Y)':>6}"]
    for p in profiles:
        lines.append(
            f"{p.name:>10} {p.n_examples:>6d} {p.d:>5d} {p.m:>4d} "
            f"{p.avg_abs_pearson:>6.2f} {p.avg_output_entropy:>6.2f}"
        )
    return "\n".join(lines) + "\n"


def profile_csv(profiles) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROFILE_COLUMNS)
    for p in profiles:
        w.writerow([p.name, p.n_examples, p.d, p.m, f"{p.avg_abs_pearson:.6f}", f"{p.avg_output_entropy:.6f}"])
    return buf.getvalue()
