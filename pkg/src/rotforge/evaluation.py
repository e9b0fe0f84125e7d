"""Metrics, cross-validation, grid tuning and sensitivity sweeps.

Probability-based metrics work on :class:`PredictionRecord` lists so the
same code path serves freshly built models and predictions re-read from
CSV. NLL is reported in bits with probabilities clamped at 1e-16;
the weighted AUC uses the rank-sum formulation with average ranks and
excludes (renormalising) classes that lack positives or negatives.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _scipy_stats

from . import forests as _forests
from . import rng as _rng
from .data import Dataset
from .forests import ForestConfig, ForestModel
from .rotation import RotationConfig

NLL_CLAMP = 1e-16


@dataclass(frozen=True)
class PredictionRecord:
    true_class: int
    distribution: np.ndarray
    predicted_class: int

    def __post_init__(self):
        dist = np.asarray(self.distribution, dtype=np.float64)
        object.__setattr__(self, "distribution", dist)


@dataclass(frozen=True)
class MetricReport:
    error: float
    balanced_error: float
    auc: float
    nll: float
    n_test: int


def records_from_distributions(distributions: np.ndarray,
                               true_classes: np.ndarray) -> list[PredictionRecord]:
    preds = np.argmax(distributions, axis=1)
    return [PredictionRecord(int(t), d, int(p))
            for t, d, p in zip(true_classes, distributions, preds)]


def predict_dataset(model: ForestModel, test: Dataset) -> list[PredictionRecord]:
    dists = _forests.forest_distributions(model, test.values)
    return records_from_distributions(dists, test.labels)


def error_rate(preds: list[PredictionRecord]) -> float:
    if not preds:
        raise ValueError("no predictions")
    wrong = sum(1 for r in preds if r.predicted_class != r.true_class)
    return wrong / len(preds)


def balanced_error(preds: list[PredictionRecord]) -> float:
    """One minus the unweighted mean of per-class recalls.

    Classes absent from the true labels are excluded (with a warning).
    """
    if not preds:
        raise ValueError("no predictions")
    c = len(preds[0].distribution)
    correct = np.zeros(c)
    totals = np.zeros(c)
    for r in preds:
        totals[r.true_class] += 1
        if r.predicted_class == r.true_class:
            correct[r.true_class] += 1
    present = totals > 0
    if not present.all():
        warnings.warn("classes absent from test set excluded from balanced error",
                      stacklevel=2)
    recalls = correct[present] / totals[present]
    return float(1.0 - recalls.mean())


def _binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Rank-sum AUC with average ranks for tied scores."""
    ranks = _scipy_stats.rankdata(scores, method="average")
    n_pos = int(positive.sum())
    n_neg = len(scores) - n_pos
    rank_sum = ranks[positive].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_weighted(preds: list[PredictionRecord],
                 class_weights: np.ndarray | None = None) -> float:
    """Class-frequency-weighted one-vs-rest AUC.

    `class_weights` should be the training class frequencies; defaults to
    the test-set frequencies. Two-class problems report the minority
    class AUC. Classes with no positives or no negatives are dropped and
    the remaining weights renormalised.
    """
    if not preds:
        raise ValueError("no predictions")
    c = len(preds[0].distribution)
    scores = np.array([r.distribution for r in preds])
    truth = np.array([r.true_class for r in preds])
    if class_weights is None:
        class_weights = np.bincount(truth, minlength=c).astype(np.float64)
    weights = np.asarray(class_weights, dtype=np.float64)
    weights = weights / weights.sum()
    if c == 2:
        minority = int(np.argmin(weights))
        positive = truth == minority
        if positive.all() or not positive.any():
            raise ValueError("binary AUC needs both classes in the test set")
        return _binary_auc(scores[:, minority], positive)
    total_weight = 0.0
    acc = 0.0
    for j in range(c):
        positive = truth == j
        if not positive.any() or positive.all():
            continue
        acc += weights[j] * _binary_auc(scores[:, j], positive)
        total_weight += weights[j]
    if total_weight == 0:
        raise ValueError("no class with both positives and negatives")
    return acc / total_weight


def nll(preds: list[PredictionRecord]) -> float:
    """Mean negative log2 probability of the true class, clamped at 1e-16."""
    if not preds:
        raise ValueError("no predictions")
    total = 0.0
    for r in preds:
        total -= math.log2(max(float(r.distribution[r.true_class]), NLL_CLAMP))
    return total / len(preds)


def metric_report(preds: list[PredictionRecord],
                  class_weights: np.ndarray | None = None) -> MetricReport:
    return MetricReport(error=error_rate(preds),
                        balanced_error=balanced_error(preds),
                        auc=auc_weighted(preds, class_weights),
                        nll=nll(preds), n_test=len(preds))


# ---------------------------------------------------------------------------
# classifier specs

ROTF_TUNING_GRID = {
    "trees": [10, 100, 200, 300, 400, 500, 600, 700, 800, 900],
    "group_size": [3, 4, 5, 6, 7, 8, 9, 10, 11, 12],
    "proportion": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
}

RANDF_TUNING_GRID = {
    "trees": [10, 100, 200, 300, 400, 500, 600, 700, 800, 900],
}


@dataclass(frozen=True)
class ClassifierSpec:
    """Declarative classifier description shared by tuner, sweeps and CLI."""
    family: str  # rotf | randf | hybrid | rotf_ra
    params: dict = field(default_factory=dict)
    seed: int = 0

    def with_params(self, **overrides) -> "ClassifierSpec":
        merged = dict(self.params)
        merged.update(overrides)
        return ClassifierSpec(self.family, merged, self.seed)


def _forest_config(spec: ClassifierSpec) -> ForestConfig:
    p = spec.params
    rotation = RotationConfig(f=p.get("group_size", 3),
                              p=p.get("proportion", 0.5))
    if spec.family == "rotf":
        return ForestConfig(k=p.get("trees", 200), base="C45", transform="PCA",
                            rotation=rotation, seed=spec.seed)
    if spec.family == "randf":
        return ForestConfig(k=p.get("trees", 500), base="RandomTree",
                            transform="BAG", seed=spec.seed)
    if spec.family == "hybrid":
        return ForestConfig(k=p.get("trees", 200), base=p["base"],
                            transform=p["transform"], rotation=rotation,
                            seed=spec.seed)
    if spec.family == "rotf_ra":
        return ForestConfig(k=p.get("trees", 200), base="C45", transform="PCA",
                            rotation=rotation,
                            max_attributes_per_tree=p.get("max_atts", 40),
                            seed=spec.seed)
    raise ValueError(f"unknown classifier family {spec.family!r}")


def build_classifier(spec: ClassifierSpec, train: Dataset) -> ForestModel:
    cfg = _forest_config(spec)
    if spec.family == "rotf_ra":
        return _forests.build_random_attribute_rotf(
            train, cfg.max_attributes_per_tree or train.m, cfg)
    if spec.family == "randf":
        return _forests.build_random_forest(train, cfg)
    if spec.family == "hybrid":
        return _forests.build_hybrid(train, cfg.base, cfg.transform, cfg)
    return _forests.build_rotation_forest(train, cfg)


# ---------------------------------------------------------------------------
# cross-validation and tuning

def stratified_folds(labels: np.ndarray, n_classes: int, folds: int,
                     seed: int) -> np.ndarray:
    """Deterministic fold index per case; per-class counts differ by <= 1."""
    gen = _rng.stream(_rng.mix64(seed, 0xF01D))
    assignment = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for j in range(n_classes):
        idx = np.nonzero(labels == j)[0]
        shuffled = idx[gen.permutation(len(idx))]
        for pos, case in enumerate(shuffled):
            assignment[case] = (offset + pos) % folds
        offset += len(idx)
    return assignment


def cross_validate(spec: ClassifierSpec, train: Dataset, folds: int = 10,
                   seed: int = 0) -> float:
    """Pooled ten-fold (by default) cross-validation error."""
    if train.n < folds:
        raise ValueError("need at least as many cases as folds")
    assignment = stratified_folds(train.labels, train.n_classes, folds, seed)
    wrong = 0
    for fold in range(folds):
        test_mask = assignment == fold
        if not test_mask.any():
            continue
        model = build_classifier(spec, train.subset(np.nonzero(~test_mask)[0]))
        dists = _forests.forest_distributions(model, train.values[test_mask])
        wrong += int((np.argmax(dists, axis=1) != train.labels[test_mask]).sum())
    return wrong / train.n


def grid_tune(spec: ClassifierSpec, grid: dict, train: Dataset,
              folds: int = 10, seed: int = 0):
    """Evaluate every grid combination on shared folds.

    Returns (best_params, best_cv_error, table) where table lists
    (params, cv_error) in declaration order. Ties break on fewest trees,
    then smallest group size, then declaration order.
    """
    names = list(grid)
    combos = list(itertools.product(*(grid[name] for name in names)))
    if not combos:
        raise ValueError("empty grid")
    table = []
    best = None
    for decl_index, combo in enumerate(combos):
        params = dict(zip(names, combo))
        cv_error = cross_validate(spec.with_params(**params), train, folds, seed)
        table.append((params, cv_error))
        key = (cv_error, params.get("trees", 0), params.get("group_size", 0),
               decl_index)
        if best is None or key < best[0]:
            best = (key, params, cv_error)
    return best[1], best[2], table


# ---------------------------------------------------------------------------
# sensitivity sweeps

@dataclass(frozen=True)
class SweepPoint:
    value: object
    mean_diff: float
    ci_low: float
    ci_high: float


def _resample_errors(spec: ClassifierSpec, dataset: Dataset, resamples: int,
                     train_fraction: float, tree_counts: list[int] | None):
    """Mean test error per tree count (or for the spec as-is).

    When `tree_counts` is given, one forest with max(tree_counts) members
    is built per resample and evaluated at each prefix size; member seeds
    depend only on tree index, so prefix ensembles match smaller builds.
    """
    from .data import ResamplePlan, stratified_resample

    ks = sorted(tree_counts) if tree_counts else [None]
    errors = np.zeros(len(ks))
    for r in range(resamples):
        train, test = stratified_resample(dataset, ResamplePlan(
            resample_id=r, train_fraction=train_fraction))
        if tree_counts:
            model = build_classifier(spec.with_params(trees=ks[-1]), train)
            for i, k in enumerate(ks):
                dists = _forests.forest_distributions(model, test.values,
                                                      max_members=k)
                errors[i] += (np.argmax(dists, axis=1) != test.labels).mean()
        else:
            model = build_classifier(spec, train)
            dists = _forests.forest_distributions(model, test.values)
            errors[0] += (np.argmax(dists, axis=1) != test.labels).mean()
    errors /= resamples
    return dict(zip(ks, errors)) if tree_counts else float(errors[0])


def sensitivity_sweep(datasets: list[Dataset], param: str, values: list,
                      baseline, resamples: int = 30,
                      base_spec: ClassifierSpec | None = None,
                      train_fraction: float = 0.5) -> list[SweepPoint]:
    """Per-value mean error difference against the baseline setting,
    with a 95% t confidence interval across datasets."""
    if param not in ("trees", "group_size", "proportion"):
        raise ValueError(f"unknown sweep parameter {param!r}")
    if len(datasets) < 2:
        raise ValueError("need at least two datasets for a confidence interval")
    spec = base_spec or ClassifierSpec("rotf")
    all_values = list(values) if baseline in values else list(values) + [baseline]
    per_dataset = []  # dataset -> {value: error}
    for dataset in datasets:
        if param == "trees":
            per_dataset.append(_resample_errors(spec, dataset, resamples,
                                                train_fraction,
                                                tree_counts=all_values))
        else:
            errs = {}
            for value in all_values:
                errs[value] = _resample_errors(
                    spec.with_params(**{param: value}), dataset, resamples,
                    train_fraction, tree_counts=None)
            per_dataset.append(errs)
    n = len(datasets)
    t_quantile = float(_scipy_stats.t.ppf(0.975, n - 1))
    out = []
    for value in values:
        diffs = np.array([errs[value] - errs[baseline] for errs in per_dataset])
        mean = float(diffs.mean())
        sd = float(diffs.std(ddof=1))
        half = t_quantile * sd / math.sqrt(n)
        out.append(SweepPoint(value=value, mean_diff=mean,
                              ci_low=mean - half, ci_high=mean + half))
    return out
