"""Problem-transformation predictors: ST, MRQ, eMRQ and eMRQr.

MRQ replaces the target vector of every training row by the index of its
nearest k-means centroid (in standardized units) and learns a multi-class
classifier for that index. eMRQ does the same for ``s`` random target subsets
and averages, per target, the centroid coordinates predicted by every
subquantizer that covers it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, Standardizer
from .errors import EmptyInputError, ParameterError
from .learners import CLASSIFICATION, REGRESSION, BaggedTrees, fit_bagging
from .quantizer import Codebook, KmeansConfig, assign_all, kmeans_fit, sample_subsets

logger = logging.getLogger(__name__)

ST, MRQ, EMRQ, EMRQR = "st", "mrq", "emrq", "emrqr"
VARIANTS = (ST, MRQ, EMRQ, EMRQR)

# stream identifiers mixed into the master seed
_KMEANS, _CLASSIFIER, _PLAN, _DRAWS = 1, 2, 3, 4


def derive_seed(seed, *keys) -> int:
    return int(np.random.SeedSequence([int(seed), *keys]).generate_state(1)[0])


@dataclass(frozen=True)
class TrainConfig:
    """Base-learner and k-means settings shared by all variants."""

    n_trees: int = 100
    min_leaf_clf: int = 1
    min_leaf_reg: int = 5
    restarts: int = 10
    max_iters: int = 100
    tol: float = 1e-6
    n_jobs: int = 1


@dataclass(frozen=True)
class EmrqConfig:
    """``k`` and ``n_targets`` (NoT) are an int or an inclusive ``(lo, hi)`` range."""

    k: int | tuple = 50
    n_targets: int | tuple = 2
    s: int = 1
    seed: int = 0

    @property
    def randomized(self) -> bool:
        return isinstance(self.k, tuple) or isinstance(self.n_targets, tuple)

    def validate(self, m):
        for name, v in (("k", self.k), ("n_targets", self.n_targets)):
            lo, hi = (v if isinstance(v, tuple) else (v, v))
            if lo > hi:
                raise ParameterError(f"{name} range [{lo}, {hi}] is empty")
            if lo < 1:
                raise ParameterError(f"{name} must be >= 1")
        lo, hi = self.n_targets if isinstance(self.n_targets, tuple) else (self.n_targets, self.n_targets)
        if hi > m:
            raise ParameterError(f"NoT={hi} exceeds the number of targets m={m}")
        if self.s < 1:
            raise ParameterError("s must be >= 1")


@dataclass(frozen=True, eq=False)
class Component:
    """One subquantizer and the classifier that predicts its centroid index."""

    codebook: Codebook
    classifier: BaggedTrees

    @property
    def targets(self) -> tuple:
        return self.codebook.target_indices


@dataclass(frozen=True, eq=False)
class MtrModel:
    variant: str
    standardizer: Standardizer
    fallback_means: np.ndarray
    components: tuple = ()
    regressors: tuple = ()
    config: dict = field(default_factory=dict)
    seed: int = 0
    n_features: int = 0
    target_names: tuple = ()

    @property
    def m(self) -> int:
        return self.fallback_means.shape[0]

    @property
    def coverage(self) -> np.ndarray:
        counts = np.zeros(self.m, dtype=np.int64)
        for comp in self.components:
            counts[list(comp.targets)] += 1
        return counts

    @property
    def uncovered(self) -> np.ndarray:
        """Boolean mask of targets predicted by the training-mean fallback."""
        if self.variant == ST:
            return np.zeros(self.m, dtype=bool)
        return self.coverage == 0

    def _check_x(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ParameterError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = self._check_x(X)
        if self.variant == ST:
            out = np.column_stack([r.predict(X) for r in self.regressors])
        else:
            codes = [comp.classifier.predict_codes(X) for comp in self.components]
            out = self._pool(codes, X.shape[0])
        return out[0] if single else out

    def predict_oracle(self, X, Y_true) -> np.ndarray:
        """Prediction with every classifier replaced by the true centroid index."""
        if self.variant == ST:
            raise ParameterError("the oracle variant needs a quantization-based model")
        Y_true = np.atleast_2d(np.asarray(Y_true, dtype=float))
        Z = self.standardizer.transform(Y_true)
        codes = [assign_all(comp.codebook, Z[:, list(comp.targets)]) for comp in self.components]
        return self._pool(codes, Z.shape[0])

    def _pool(self, codes, n):
        acc = np.zeros((n, self.m))
        cnt = np.zeros(self.m)
        for comp, z in zip(self.components, codes):
            cols = list(comp.targets)
            acc[:, cols] += comp.codebook.centroids[z]
            cnt[cols] += 1
        covered = cnt > 0
        std = np.zeros((n, self.m))
        std[:, covered] = acc[:, covered] / cnt[covered]
        out = self.standardizer.inverse_transform(std)
        out[:, ~covered] = self.fallback_means[~covered]
        return out


def _train_rows(data, rows):
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise EmptyInputError("train rows must be nonempty")
    return rows


def _fit_component(X, Z, targets, k, cfg: TrainConfig, seed, j) -> Component:
    km = KmeansConfig(
        k=int(k), max_iters=cfg.max_iters, restarts=cfg.restarts, tol=cfg.tol, seed=derive_seed(seed, j, _KMEANS)
    )
    cb = kmeans_fit(Z[:, list(targets)], km, target_indices=targets)
    labels = assign_all(cb, Z[:, list(targets)])
    clf = fit_bagging(
        X,
        labels,
        CLASSIFICATION,
        n_trees=cfg.n_trees,
        min_leaf=cfg.min_leaf_clf,
        seed=derive_seed(seed, j, _CLASSIFIER),
        classes=np.arange(cb.k),
        n_jobs=cfg.n_jobs,
    )
    return Component(cb, clf)


def train_st(data: Dataset, rows, cfg: TrainConfig = TrainConfig(), seed=0, shared_seed=False) -> MtrModel:
    """One bagged regression ensemble per target, on raw target values."""
    rows = _train_rows(data, rows)
    X, Y = data.features[rows], data.targets[rows]
    regs = []
    for j in range(data.m):
        regs.append(
            fit_bagging(
                X,
                Y[:, j],
                REGRESSION,
                n_trees=cfg.n_trees,
                min_leaf=cfg.min_leaf_reg,
                seed=derive_seed(seed, 0 if shared_seed else j, _CLASSIFIER),
                n_jobs=cfg.n_jobs,
            )
        )
    std = Standardizer.fit(Y, fitted_on=f"{rows.size} rows") if rows.size > 1 else Standardizer(
        Y.mean(axis=0), np.ones(data.m), np.ones(data.m, dtype=bool), "1 row"
    )
    return MtrModel(
        variant=ST,
        standardizer=std,
        fallback_means=Y.mean(axis=0),
        regressors=tuple(regs),
        config={"n_trees": cfg.n_trees, "min_leaf": cfg.min_leaf_reg, "shared_seed": bool(shared_seed)},
        seed=int(seed),
        n_features=data.d,
        target_names=data.target_names,
    )


def train_mrq(data: Dataset, rows, k, cfg: TrainConfig = TrainConfig(), seed=0) -> MtrModel:
    """Single quantizer over all standardized targets plus one multi-class classifier."""
    if k < 1:
        raise ParameterError("k must be >= 1")
    rows = _train_rows(data, rows)
    X, Y = data.features[rows], data.targets[rows]
    std = Standardizer.fit(Y, fitted_on=f"{rows.size} rows")
    Z = std.transform(Y)
    comp = _fit_component(X, Z, tuple(range(data.m)), k, cfg, seed, 0)
    return MtrModel(
        variant=MRQ,
        standardizer=std,
        fallback_means=Y.mean(axis=0),
        components=(comp,),
        config={"k": int(k), "n_trees": cfg.n_trees, "min_leaf": cfg.min_leaf_clf, "restarts": cfg.restarts},
        seed=int(seed),
        n_features=data.d,
        target_names=data.target_names,
    )


def _draw(rng, v):
    if isinstance(v, tuple):
        return int(rng.integers(v[0], v[1] + 1))
    return int(v)


def train_emrq(data: Dataset, rows, ecfg: EmrqConfig, cfg: TrainConfig = TrainConfig()) -> MtrModel:
    """Ensemble of ``s`` subquantizers over random target subsets.

    With ranges for ``k`` or ``n_targets`` (eMRQr) each subquantizer draws its
    own values uniformly from the inclusive ranges.
    """
    ecfg.validate(data.m)
    rows = _train_rows(data, rows)
    X, Y = data.features[rows], data.targets[rows]
    std = Standardizer.fit(Y, fitted_on=f"{rows.size} rows")
    Z = std.transform(Y)
    seed = ecfg.seed
    plan = sample_subsets(data.m, ecfg.n_targets, ecfg.s, seed=derive_seed(seed, _PLAN))
    draws = np.random.default_rng(derive_seed(seed, _DRAWS))
    ks = [_draw(draws, ecfg.k) for _ in range(ecfg.s)]
    comps = tuple(_fit_component(X, Z, subset, ks[j], cfg, seed, j) for j, subset in enumerate(plan.subsets))
    model = MtrModel(
        variant=EMRQR if ecfg.randomized else EMRQ,
        standardizer=std,
        fallback_means=Y.mean(axis=0),
        components=comps,
        config={
            "k": list(ecfg.k) if isinstance(ecfg.k, tuple) else ecfg.k,
            "not": list(ecfg.n_targets) if isinstance(ecfg.n_targets, tuple) else ecfg.n_targets,
            "s": ecfg.s,
            "n_trees": cfg.n_trees,
            "min_leaf": cfg.min_leaf_clf,
            "restarts": cfg.restarts,
        },
        seed=int(seed),
        n_features=data.d,
        target_names=data.target_names,
    )
    if model.uncovered.any():
        names = [data.target_names[j] for j in np.flatnonzero(model.uncovered)]
        logger.warning("targets %s are covered by no subquantizer; predicting their training mean", names)
    return model


def predict_mrq(model: MtrModel, X) -> np.ndarray:
    if model.variant != MRQ:
        raise ParameterError(f"expected an mrq model, got {model.variant}")
    return model.predict(X)


def predict_emrq(model: MtrModel, X) -> np.ndarray:
    if model.variant not in (EMRQ, EMRQR):
        raise ParameterError(f"expected an emrq model, got {model.variant}")
    return model.predict(X)


def predict_oracle(model: MtrModel, X, Y_true) -> np.ndarray:
    return model.predict_oracle(X, Y_true)


def train(data: Dataset, rows, method: dict, cfg: TrainConfig = TrainConfig(), seed=0) -> MtrModel:
    """Dispatch on a method description such as ``{"variant": "mrq", "k": 50}``."""
    variant = method["variant"]
    if variant == ST:
        return train_st(data, rows, cfg, seed)
    if variant == MRQ:
        return train_mrq(data, rows, method.get("k", 50), cfg, seed)
    if variant in (EMRQ, EMRQR):
        s = resolve_s(method.get("s", "m"), data.m)
        if variant == EMRQR:
            k = tuple(method.get("k", (50, 100)))
            nt = tuple(method.get("not", (1, 2)))
            nt = (nt[0], min(nt[1], data.m))
        else:
            k = method.get("k", 50)
            nt = method.get("not", 2)
            k = tuple(k) if isinstance(k, list) else k
            nt = tuple(nt) if isinstance(nt, list) else nt
        return train_emrq(data, rows, EmrqConfig(k=k, n_targets=nt, s=s, seed=seed), cfg)
    raise ParameterError(f"unknown variant {variant!r}")


def resolve_s(s, m) -> int:
    """``s`` as an int, or ``"m"``/``"3m"`` style multiples of the target count."""
    if isinstance(s, str):
        s = s.strip()
        if s.endswith("m"):
            mult = s[:-1]
            return int(mult or 1) * m
        return int(s)
    return int(s)
