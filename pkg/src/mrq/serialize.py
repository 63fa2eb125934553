"""Versioned plain-text model files.

Layout::

    MRQMODEL 1
    variant <st|mrq|emrq|emrqr>
    m <m> / d <d> / seed <seed>
    config <json>
    target_names <json>
    standardizer / mean ... / scale ... / constant ... / fallback ...
    components <count>
      component <j>  (codebook block, then ensemble block)
      regressor <j>  (ensemble block, st only)
    checksum sha256 <hex of every preceding byte>

Ensemble blocks list trees as pre-order node rows
``feature threshold left right value...``. Reals are written with 17
significant digits so that loading reproduces every float exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .dataset import Standardizer
from .errors import IntegrityError, ModelFormatError, TruncationError, VersionError
from .learners import BaggedTrees, Tree
from .models import ST, VARIANTS, Component, MtrModel
from .quantizer import Codebook

MAGIC = "MRQMODEL"
FORMAT_VERSION = 1


def _f(x) -> str:
    return format(float(x), ".17g")


def _row(values) -> str:
    return " ".join(_f(v) for v in values)


def _ensemble_lines(model: BaggedTrees):
    classes = "" if model.classes is None else " ".join(str(int(c)) for c in model.classes)
    yield f"ensemble {model.kind} {model.n_trees} {model.min_leaf} {model.seed} {model.n_features}"
    yield f"classes {classes}".rstrip()
    for tree in model.trees:
        yield f"tree {tree.n_nodes} {tree.value.shape[1]}"
        for i in range(tree.n_nodes):
            yield (
                f"{tree.feature[i]} {_f(tree.threshold[i])} {tree.left[i]} {tree.right[i]} "
                + _row(tree.value[i])
            )


def _codebook_lines(cb: Codebook):
    yield f"codebook {cb.k} {cb.dim} {cb.iterations_run} {_f(cb.train_qe)}"
    yield "targets " + " ".join(str(t) for t in cb.target_indices)
    for row in cb.centroids:
        yield _row(row)


def dumps(model: MtrModel) -> str:
    lines = [
        f"{MAGIC} {FORMAT_VERSION}",
        f"variant {model.variant}",
        f"m {model.m}",
        f"d {model.n_features}",
        f"seed {model.seed}",
        "config " + json.dumps(model.config, sort_keys=True),
        "target_names " + json.dumps(list(model.target_names)),
        "standardizer " + json.dumps(model.standardizer.fitted_on),
        "mean " + _row(model.standardizer.mean),
        "scale " + _row(model.standardizer.scale),
        "constant " + " ".join(str(int(c)) for c in model.standardizer.constant),
        "fallback " + _row(model.fallback_means),
    ]
    if model.variant == ST:
        lines.append(f"regressors {len(model.regressors)}")
        for j, reg in enumerate(model.regressors):
            lines.append(f"regressor {j}")
            lines.extend(_ensemble_lines(reg))
    else:
        lines.append(f"components {len(model.components)}")
        for j, comp in enumerate(model.components):
            lines.append(f"component {j}")
            lines.extend(_codebook_lines(comp.codebook))
            lines.extend(_ensemble_lines(comp.classifier))
    body = "\n".join(lines) + "\n"
    digest = hashlib.sha256(body.encode()).hexdigest()
    return body + f"checksum sha256 {digest}\n"


def save_model(model: MtrModel, path) -> None:
    """Write atomically: the target path never holds a partial file."""
    path = Path(path)
    text = dumps(model)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, lines):
        self.lines = lines
        self.pos = 0

    def next(self, key=None):
        if self.pos >= len(self.lines):
            raise TruncationError("unexpected end of model file")
        line = self.lines[self.pos]
        self.pos += 1
        if key is None:
            return line
        head, _, rest = line.partition(" ")
        if head != key:
            raise ModelFormatError(f"line {self.pos}: expected {key!r}, found {head!r}")
        return rest

    def floats(self, key):
        rest = self.next(key)
        return np.array([float(t) for t in rest.split()], dtype=float)


def _read_ensemble(r: _Reader) -> BaggedTrees:
    kind, n_trees, min_leaf, seed, n_features = r.next("ensemble").split()
    classes_txt = r.next("classes").split()
    classes = np.array([int(c) for c in classes_txt], dtype=np.int64) if kind == "classification" else None
    trees = []
    for _ in range(int(n_trees)):
        n_nodes, width = (int(t) for t in r.next("tree").split())
        flat = np.array(" ".join(r.next() for _ in range(n_nodes)).split(), dtype=float)
        if flat.size != n_nodes * (4 + width):
            raise ModelFormatError("tree node rows have the wrong width")
        table = flat.reshape(n_nodes, 4 + width)
        trees.append(
            Tree(
                kind,
                table[:, 0].astype(np.int64),
                table[:, 1].copy(),
                table[:, 2].astype(np.int64),
                table[:, 3].astype(np.int64),
                np.ascontiguousarray(table[:, 4:]),
            )
        )
    return BaggedTrees(kind, tuple(trees), int(min_leaf), int(seed), classes, int(n_features))


def _read_codebook(r: _Reader) -> Codebook:
    k, dim, iters, qe = r.next("codebook").split()
    targets = tuple(int(t) for t in r.next("targets").split())
    rows = [[float(t) for t in r.next().split()] for _ in range(int(k))]
    centroids = np.array(rows, dtype=float).reshape(int(k), int(dim))
    return Codebook(targets, centroids, float(qe), int(iters))


def loads(text: str) -> MtrModel:
    first, _, _ = text.partition("\n")
    parts = first.split()
    if len(parts) != 2 or parts[0] != MAGIC:
        raise VersionError("not an mrq model file (bad header)")
    try:
        version = int(parts[1])
    except ValueError:
        raise VersionError(f"unreadable format version {parts[1]!r}") from None
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version} (expected {FORMAT_VERSION})")

    stripped = text.rstrip("\n")
    body_end = stripped.rfind("\n")
    last = stripped[body_end + 1:]
    if not last.startswith("checksum "):
        raise TruncationError("model file has no checksum line (truncated?)")
    body = text[: body_end + 1]
    fields = last.split()
    if len(fields) != 3 or fields[1] != "sha256":
        raise IntegrityError("malformed checksum line")
    if hashlib.sha256(body.encode()).hexdigest() != fields[2]:
        raise IntegrityError("checksum mismatch: model file is corrupted")

    r = _Reader(body.rstrip("\n").split("\n"))
    try:
        r.next(MAGIC)
        variant = r.next("variant")
        if variant not in VARIANTS:
            raise ModelFormatError(f"unknown variant {variant!r}")
        m = int(r.next("m"))
        d = int(r.next("d"))
        seed = int(r.next("seed"))
        config = json.loads(r.next("config"))
        target_names = tuple(json.loads(r.next("target_names")))
        fitted_on = json.loads(r.next("standardizer"))
        mean = r.floats("mean")
        scale = r.floats("scale")
        constant = np.array([bool(int(t)) for t in r.next("constant").split()])
        fallback = r.floats("fallback")
        std = Standardizer(mean, scale, constant, fitted_on)
        comps, regs = [], []
        if variant == ST:
            for j in range(int(r.next("regressors"))):
                r.next("regressor")
                regs.append(_read_ensemble(r))
        else:
            for j in range(int(r.next("components"))):
                r.next("component")
                cb = _read_codebook(r)
                comps.append(Component(cb, _read_ensemble(r)))
    except (ValueError, IndexError) as exc:
        raise ModelFormatError(f"malformed model file near line {r.pos}: {exc}") from None
    if mean.shape[0] != m or fallback.shape[0] != m:
        raise ModelFormatError("standardizer width does not match m")
    return MtrModel(
        variant=variant,
        standardizer=std,
        fallback_means=fallback,
        components=tuple(comps),
        regressors=tuple(regs),
        config=config,
        seed=seed,
        n_features=d,
        target_names=target_names,
    )


def load_model(path) -> MtrModel:
    with open(path, encoding="utf-8", newline="") as fh:
        return loads(fh.read())
