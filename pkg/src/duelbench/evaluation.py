"""AUROC/PRC metrics, stratified splitting, cross-validation and random-search tuning."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import classifiers
from .errors import ConfigError, DegenerateDataError, ShapeError, UndefinedMetricError
from .rng import derive_seed, generator


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} differ")
    pos = labels == 1
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise UndefinedMetricError("metric needs both classes present")
    return scores, pos


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with ties counted 1/2, via average ranks in O(n log n)."""
    scores, pos = _check_binary(scores, labels)
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    avg_rank = ends - (counts - 1) / 2.0
    n1 = int(pos.sum())
    n0 = scores.size - n1
    u = avg_rank[inverse][pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def _threshold_counts(scores, pos):
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(pos[order])
    fp = np.cumsum(~pos[order])
    last = np.r_[s[1:] != s[:-1], True]
    return s[last], tp[last].astype(np.float64), fp[last].astype(np.float64)


def roc_curve(scores, labels):
    """(thresholds, fpr, tpr), starting at (0, 0) with threshold +inf."""
    scores, pos = _check_binary(scores, labels)
    thr, tp, fp = _threshold_counts(scores, pos)
    return (np.r_[np.inf, thr], np.r_[0.0, fp / fp[-1]], np.r_[0.0, tp / tp[-1]])


def prc(scores, labels):
    """(thresholds, recall, precision, average_precision) at each distinct score, descending.

    Average precision is the step sum of (R_i - R_{i-1}) * P_i with R_0 = 0.
    """
    scores, pos = _check_binary(scores, labels)
    thr, tp, fp = _threshold_counts(scores, pos)
    recall = tp / pos.sum()
    precision = tp / (tp + fp)
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return thr, recall, precision, ap


@dataclass
class EvaluationResult:
    auroc: float
    average_precision: float
    roc_points: list
    prc_points: list
    roc_thresholds: list = field(default_factory=list, repr=False)
    prc_thresholds: list = field(default_factory=list, repr=False)


def evaluate_scores(scores, labels) -> EvaluationResult:
    rt, fpr, tpr = roc_curve(scores, labels)
    pt, recall, precision, ap = prc(scores, labels)
    return EvaluationResult(auroc(scores, labels), ap, list(zip(fpr.tolist(), tpr.tolist())),
                            list(zip(recall.tolist(), precision.tolist())),
                            rt.tolist(), pt.tolist())


# --- splitting ---------------------------------------------------------------

@dataclass
class DataView:
    features: np.ndarray
    target: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return self.target.shape[0]

    def take(self, idx) -> "DataView":
        return DataView(self.features[idx], self.target[idx], self.indices[idx])


def as_view(data) -> DataView:
    if isinstance(data, DataView):
        return data
    n = data.target.shape[0]
    return DataView(np.ascontiguousarray(data.features, dtype=np.float64),
                    np.asarray(data.target), np.arange(n))


def stratified_split(data, train_fraction: float, seed: int) -> tuple[DataView, DataView]:
    """Per-class shuffle, first round(fraction * n_class) rows of each class go to train."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    view = as_view(data)
    rng = generator(seed, "split")
    train, test = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(view.target == cls)
        rng.shuffle(idx)
        cut = int(round(train_fraction * idx.size))
        train.append(idx[:cut])
        test.append(idx[cut:])
    for name, parts in (("train", train), ("test", test)):
        if any(p.size == 0 for p in parts):
            raise DegenerateDataError(f"split leaves the {name} side with a single class")
    return view.take(np.sort(np.concatenate(train))), view.take(np.sort(np.concatenate(test)))


def stratified_folds(target, k: int, seed: int) -> list[np.ndarray]:
    """Stratified k-fold test index sets: each class shuffled, then dealt round-robin."""
    target = np.asarray(target)
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    rng = generator(seed, "folds")
    folds = [[] for _ in range(k)]
    for cls in (0, 1):
        idx = np.flatnonzero(target == cls)
        if idx.size < k:
            raise DegenerateDataError(f"class {cls} has {idx.size} rows, fewer than k={k} folds")
        rng.shuffle(idx)
        for j in range(k):
            folds[j].append(idx[j::k])
    return [np.sort(np.concatenate(f)) for f in folds]


def cross_val_auroc(spec, params, train, k: int, seed: int) -> float:
    """Mean of per-fold test AUROCs over stratified k folds."""
    view = as_view(train)
    folds = stratified_folds(view.target, k, seed)
    n = len(view)
    total = 0.0
    for j, test_idx in enumerate(folds):
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        model = classifiers.fit(spec, params, view.features[mask], view.target[mask],
                                derive_seed(seed, spec.name, "fold", j))
        total += auroc(model.predict_scores(view.features[test_idx]), view.target[test_idx])
    return total / k


# --- tuning ------------------------------------------------------------------

@dataclass
class TunedResult:
    method: str
    best_params: dict
    best_cv_auroc: float
    test_auroc: float
    n_trials: int
    trial_log: list
    cv_folds: int
    test_scores: np.ndarray | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "best_params": self.best_params,
            "best_cv_auroc": self.best_cv_auroc,
            "test_auroc": self.test_auroc,
            "n_trials": self.n_trials,
            "cv_folds": self.cv_folds,
            "trial_log": [{"params": p, "cv_auroc": s} for p, s in self.trial_log],
        }


def sample_params(spec, budget: int, seed: int) -> list[dict]:
    """The trial stream, generated up front so evaluation order cannot change it."""
    rng = generator(seed, "params", spec.name)
    return [{h.name: h.sample(rng) for h in spec.hyper_space} for _ in range(budget)]


def tune(spec, train, test, budget: int, k: int, seed: int) -> TunedResult:
    """Uniform random search scored by k-fold CV AUROC; the winner (earliest on ties)
    is refit on the whole training view and scored once on ``test``."""
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    train, test = as_view(train), as_view(test)
    trials = sample_params(spec, budget, seed)
    log = [(p, cross_val_auroc(spec, p, train, k, seed)) for p in trials]
    best = max(range(budget), key=lambda i: (log[i][1], -i))
    model = classifiers.fit(spec, trials[best], train.features, train.target,
                            derive_seed(seed, spec.name, "refit"))
    scores = model.predict_scores(test.features)
    return TunedResult(spec.name, trials[best], log[best][1], auroc(scores, test.target),
                       budget, log, k, scores)


def evaluate_methods(data, specs, budget: int, k: int, seed: int,
                     train_fraction: float = 0.8) -> dict:
    """One stratified split, then ``tune`` for each spec; returns name -> TunedResult."""
    train, test = stratified_split(data, train_fraction, derive_seed(seed, "split"))
    return {spec.name: tune(spec, train, test, budget, k, derive_seed(seed, "tune"))
            for spec in specs}
