"""In-house binary classifiers with declared hyperparameter spaces.

All learners expose ``fit(X, y, seed)`` and ``predict_scores(X)``; larger
scores mean more confidence in class 1. Tree growth, kNN search and the
linear-model descent loops run in the kernel backend (see ``_backend``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from ._backend import kernels
from .errors import ConfigError, DegenerateDataError, ShapeError
from .rng import derive_seed

INT, REAL, LOG_REAL, CATEGORICAL = "integer-range", "real-range", "log-real-range", "categorical"


@dataclass(frozen=True)
class HyperParam:
    name: str
    kind: str
    low: float | None = None
    high: float | None = None
    choices: tuple = ()
    log: bool = False  # integer ranges only: sample log-uniformly

    def __post_init__(self):
        if self.kind == CATEGORICAL:
            if not self.choices:
                raise ConfigError(f"{self.name}: categorical choices must be nonempty")
        elif self.kind in (INT, REAL, LOG_REAL):
            if not self.low < self.high:
                raise ConfigError(f"{self.name}: need low < high, got {self.low}, {self.high}")
            if (self.kind == LOG_REAL or self.log) and self.low <= 0:
                raise ConfigError(f"{self.name}: log ranges need a positive lower bound")
        else:
            raise ConfigError(f"{self.name}: unknown kind {self.kind!r}")

    def contains(self, value) -> bool:
        if self.kind == CATEGORICAL:
            return value in self.choices
        if self.kind == INT and (isinstance(value, bool) or int(value) != value):
            return False
        return self.low <= value <= self.high

    def sample(self, rng: np.random.Generator):
        if self.kind == CATEGORICAL:
            return self.choices[int(rng.integers(len(self.choices)))]
        if self.kind == INT:
            if self.log:
                v = math.exp(rng.uniform(math.log(self.low), math.log(self.high)))
                return int(min(max(round(v), self.low), self.high))
            return int(rng.integers(self.low, self.high + 1))
        if self.kind == LOG_REAL:
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        return float(rng.uniform(self.low, self.high))

    def to_json(self) -> dict:
        if self.kind == CATEGORICAL:
            return {"name": self.name, "kind": self.kind, "choices": list(self.choices)}
        out = {"name": self.name, "kind": self.kind, "low": self.low, "high": self.high}
        if self.log:
            out["log"] = True
        return out


def _presort(X: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def _check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ShapeError(f"bad training shapes {X.shape} / {y.shape}")
    if y.min() == y.max():
        raise DegenerateDataError("training data contains a single class")
    return X, y


class _Learner:
    n_features_: int

    def _check_query(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise ShapeError(f"expected {self.n_features_} feature columns, got shape {X.shape}")
        return X


class _Standardized(_Learner):
    def _scale_fit(self, X):
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.std_ = np.where(std > 0, std, 1.0)
        return np.ascontiguousarray((X - self.mean_) / self.std_)

    def _scale(self, X):
        return np.ascontiguousarray((X - self.mean_) / self.std_)


class Tree:
    """Flat arrays of one fitted tree."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, arrays):
        self.feature, self.threshold, self.left, self.right, self.value = arrays

    def predict(self, X):
        return kernels.predict_tree(self.feature, self.threshold, self.left, self.right,
                                    self.value, X)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())


class DecisionTree(_Learner):
    """CART with gini impurity and midpoint thresholds."""

    def __init__(self, max_depth=5, min_samples_leaf=1):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf

    def fit(self, X, y, seed=0):
        X, y = _check_xy(X, y)
        self.n_features_ = X.shape[1]
        ones = np.ones_like(y)
        # gini reduction equals the squared-sum gain with g = y, h = 1, lambda = 0
        self.tree_ = Tree(kernels.build_tree(X, _presort(X), y, ones, ones, self.max_depth, 0,
                                             float(self.min_samples_leaf), 0.0, 0, seed))
        return self

    def predict_scores(self, X):
        return self.tree_.predict(self._check_query(X))


class RandomForest(_Learner):
    """Bagged gini trees with sqrt(d) candidate features per split; scores are the
    mean leaf class fraction."""

    def __init__(self, n_estimators=100, max_depth=10, min_samples_leaf=1, max_features=None):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features

    def fit(self, X, y, seed=0):
        X, y = _check_xy(X, y)
        self.n_features_ = X.shape[1]
        k = self.max_features or max(1, int(math.sqrt(X.shape[1])))
        self.forest_ = kernels.fit_forest(X, _presort(X), y, self.n_estimators, self.max_depth,
                                          float(self.min_samples_leaf), k,
                                          derive_seed(seed, "forest"))
        return self

    @property
    def n_trees(self) -> int:
        return len(self.forest_[5])

    def predict_scores(self, X):
        return kernels.predict_forest(*self.forest_, self._check_query(X))


class GradientBoosting(_Learner):
    """Newton boosting on logistic loss; scores are log-odds.

    ``max_leaves=0`` grows level-wise trees bounded by ``max_depth``;
    ``max_depth=-1`` with ``max_leaves > 0`` grows best-first trees.
    """

    def __init__(self, n_estimators=100, learning_rate=0.1, max_depth=3, max_leaves=0,
                 min_samples_leaf=1, reg_lambda=1.0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.max_leaves = max_leaves
        self.min_samples_leaf = min_samples_leaf
        self.reg_lambda = reg_lambda

    def fit(self, X, y, seed=0):
        X, y = _check_xy(X, y)
        self.n_features_ = X.shape[1]
        p0 = y.mean()
        self.base_score_ = math.log(p0 / (1.0 - p0))
        self.ensemble_ = kernels.fit_boosting(
            X, _presort(X), y, self.n_estimators, self.learning_rate, self.max_depth,
            self.max_leaves, float(self.min_samples_leaf), self.reg_lambda, self.base_score_)
        return self

    def predict_scores(self, X):
        return kernels.predict_boosting(*self.ensemble_, self._check_query(X),
                                        self.learning_rate, self.base_score_)


class KNearestNeighbors(_Standardized):
    def __init__(self, n_neighbors=5, weights="uniform"):
        self.n_neighbors = n_neighbors
        self.weights = weights

    def fit(self, X, y, seed=0):
        X, y = _check_xy(X, y)
        self.n_features_ = X.shape[1]
        self.X_ = self._scale_fit(X)
        self.y_ = np.ascontiguousarray(y)
        return self

    def predict_scores(self, X):
        Xq = self._scale(self._check_query(X))
        k = min(self.n_neighbors, self.X_.shape[0])
        return kernels.knn_scores(self.X_, self.y_, Xq, k, self.weights == "distance")


class LogisticRegression(_Standardized):
    """L2-regularized, full-batch gradient descent with step 0.1 / L."""

    n_iter = 500

    def __init__(self, l2=1.0):
        self.l2 = l2

    def fit(self, X, y, seed=0):
        X, y = _check_xy(X, y)
        self.n_features_ = X.shape[1]
        Xs = self._scale_fit(X)
        Xb = np.hstack([Xs, np.ones((Xs.shape[0], 1))])
        # Lipschitz constant of the mean logistic loss gradient plus the L2 term
        lipschitz = 0.25 * float(np.linalg.eigvalsh(Xb.T @ Xb / Xb.shape[0])[-1]) + self.l2
        self.coef_, self.intercept_ = kernels.logreg_fit(Xs, y, self.l2, self.n_iter,
                                                         0.1 / lipschitz)
        return self

    def predict_scores(self, X):
        return _sigmoid(self._scale(self._check_query(X)) @ self.coef_ + self.intercept_)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


class LinearSVM(_Standardized):
    """Hinge loss, deterministic full-batch Pegasos; scores are signed margins."""

    n_iter = 500

    def __init__(self, reg=0.01):
        self.reg = reg

    def fit(self, X, y, seed=0):
        X, y = _check_xy(X, y)
        self.n_features_ = X.shape[1]
        Xs = self._scale_fit(X)
        self.coef_, self.intercept_ = kernels.linsvm_fit(Xs, 2.0 * y - 1.0, self.reg, self.n_iter)
        return self

    def predict_scores(self, X):
        return self._scale(self._check_query(X)) @ self.coef_ + self.intercept_


# --- registry ----------------------------------------------------------------

@dataclass(frozen=True)
class ClassifierSpec:
    name: str
    hyper_space: tuple
    default_params: dict
    factory: Callable[..., Any] = field(compare=False)

    def validate(self, params: dict) -> None:
        names = {h.name for h in self.hyper_space}
        extra = set(params) - names
        missing = names - set(params)
        if extra or missing:
            raise ConfigError(f"{self.name}: unexpected {sorted(extra)}, missing {sorted(missing)}")
        for h in self.hyper_space:
            if not h.contains(params[h.name]):
                raise ConfigError(f"{self.name}: {h.name}={params[h.name]!r} outside its space")

    def to_json(self) -> dict:
        return {"name": self.name, "hyper_space": [h.to_json() for h in self.hyper_space],
                "default_params": dict(self.default_params)}


_DEPTH = HyperParam("max_depth", INT, 1, 10)
_ESTIMATORS = HyperParam("n_estimators", INT, 10, 500, log=True)
_RATE = HyperParam("learning_rate", LOG_REAL, 0.01, 0.3)

_SPECS = (
    ClassifierSpec("decision_tree",
                   (_DEPTH, HyperParam("min_samples_leaf", INT, 1, 20)),
                   {"max_depth": 5, "min_samples_leaf": 1},
                   DecisionTree),
    ClassifierSpec("random_forest", (_ESTIMATORS, _DEPTH),
                   {"n_estimators": 100, "max_depth": 10},
                   RandomForest),
    ClassifierSpec("gradient_boosting_a", (_ESTIMATORS, _RATE, _DEPTH),
                   {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 3},
                   lambda **p: GradientBoosting(max_leaves=0, min_samples_leaf=1, **p)),
    ClassifierSpec("gradient_boosting_b",
                   (_ESTIMATORS, _RATE, HyperParam("max_leaves", INT, 2, 64),
                    HyperParam("min_samples_leaf", INT, 1, 50)),
                   {"n_estimators": 100, "learning_rate": 0.1, "max_leaves": 31,
                    "min_samples_leaf": 20},
                   lambda **p: GradientBoosting(max_depth=-1, **p)),
    ClassifierSpec("knn",
                   (HyperParam("n_neighbors", INT, 1, 50),
                    HyperParam("weights", CATEGORICAL, choices=("uniform", "distance"))),
                   {"n_neighbors": 5, "weights": "uniform"},
                   KNearestNeighbors),
    ClassifierSpec("logistic_regression", (HyperParam("l2", LOG_REAL, 1e-4, 1e2),),
                   {"l2": 1.0}, LogisticRegression),
    ClassifierSpec("linear_svm", (HyperParam("reg", LOG_REAL, 1e-4, 1e2),),
                   {"reg": 0.01}, LinearSVM),
)
REGISTRY = {s.name: s for s in _SPECS}


def registry(names=None) -> list[ClassifierSpec]:
    """Built-in specs, optionally restricted to ``names`` (order preserved)."""
    if names is None:
        return list(_SPECS)
    unknown = [n for n in names if n not in REGISTRY]
    if unknown:
        raise ConfigError(f"unknown classifier(s): {', '.join(map(str, unknown))}")
    return [REGISTRY[n] for n in names]


def get_spec(name: str) -> ClassifierSpec:
    return registry([name])[0]


def fit(spec: ClassifierSpec, params: dict, X, y, seed: int = 0):
    """Validate ``params`` against ``spec.hyper_space`` and fit a fresh learner."""
    spec.validate(params)
    model = spec.factory(**params).fit(X, y, seed)
    model.name = spec.name
    model.params = dict(params)
    model.seed = seed
    return model


def predict_scores(model, X) -> np.ndarray:
    return model.predict_scores(X)
