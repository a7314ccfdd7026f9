"""Suite assembly: Ruzicka similarity over operator bigrams and greedy diverse selection."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import classifiers, dataset, evaluation, expr
from .errors import ConfigError, DegenerateDataError


def ruzicka(x, y) -> float:
    """Sum of coordinate-wise minima over sum of maxima; two empty histograms give 1.0."""
    keys = set(x) | set(y)
    hi = sum(max(x.get(k, 0), y.get(k, 0)) for k in keys)
    if hi == 0:
        return 1.0
    lo = sum(min(x.get(k, 0), y.get(k, 0)) for k in keys)
    return lo / hi


def ranking(per_method_auroc: dict) -> tuple:
    """Method names by descending AUROC, ties alphabetical."""
    return tuple(sorted(per_method_auroc, key=lambda m: (-per_method_auroc[m], m)))


@dataclass(frozen=True)
class BenchmarkEntry:
    function_text: str
    seed: int
    per_method_auroc: dict
    histogram: Counter = field(default=None, compare=False)
    gap: float = 0.0
    spread: float = 0.0

    def __post_init__(self):
        if self.histogram is None:
            f = expr.parse(self.function_text)
            object.__setattr__(self, "histogram", expr.bigram_histogram(f))

    @property
    def method_ranking(self) -> tuple:
        return ranking(self.per_method_auroc)

    def to_json(self) -> dict:
        return {"function": self.function_text, "seed": self.seed,
                "per_method_auroc": dict(self.per_method_auroc),
                "ranking": list(self.method_ranking),
                "histogram": expr.histogram_to_json(self.histogram),
                "gap": self.gap, "spread": self.spread}

    @classmethod
    def from_json(cls, d: dict) -> "BenchmarkEntry":
        try:
            return cls(d["function"], int(d.get("seed", 0)), dict(d.get("per_method_auroc", {})),
                       None, float(d.get("gap", 0.0)), float(d.get("spread", 0.0)))
        except KeyError as exc:
            raise ConfigError(f"suite entry lacks field {exc}") from None


def similarity_matrix(entries) -> np.ndarray:
    hists = [e.histogram if isinstance(e, BenchmarkEntry) else e for e in entries]
    if not hists:
        raise ConfigError("similarity matrix needs at least one entry")
    n = len(hists)
    m = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            m[i, j] = m[j, i] = ruzicka(hists[i], hists[j])
    return m


def select_suite(candidates, max_size: int = 40, tau: float = 0.5) -> list[BenchmarkEntry]:
    """Greedy admission. Priority: unseen method ranking first, then higher spread,
    higher gap, function text. A candidate joins when its similarity to every member
    is below ``tau``. The suite is returned in input order."""
    if not 0.0 < tau <= 1.0:
        raise ConfigError(f"tau must be in (0, 1], got {tau}")
    if max_size < 1:
        raise ConfigError(f"max_size must be >= 1, got {max_size}")
    remaining = list(range(len(candidates)))
    admitted: list[int] = []
    rankings = set()
    while remaining and len(admitted) < max_size:
        pick = min(remaining, key=lambda i: (
            candidates[i].method_ranking in rankings, -candidates[i].spread,
            -candidates[i].gap, candidates[i].function_text, i))
        remaining.remove(pick)
        h = candidates[pick].histogram
        if all(ruzicka(h, candidates[j].histogram) < tau for j in admitted):
            admitted.append(pick)
            rankings.add(candidates[pick].method_ranking)
    return [candidates[i] for i in sorted(admitted)]


def revalidate(function, seed: int, methods=None, n_samples: int = 1000, n_features: int = 10,
               budget: int = 200, folds: int = 10, tune_seed: int = 0,
               train_fraction: float = 0.8, target: str | None = None,
               rival: str | None = None) -> BenchmarkEntry:
    """Score ``function`` on a fresh replicate dataset with the reporting protocol."""
    f = expr.parse(function) if isinstance(function, str) else function
    ds = dataset.synthesize(f, dataset.DatasetConfig(n_samples, n_features, seed))
    if dataset.median_tied(ds.raw):
        raise DegenerateDataError(f"{expr.to_string(f)}: raw outcome tied at the median")
    specs = classifiers.registry(methods)
    results = evaluation.evaluate_methods(ds, specs, budget, folds, tune_seed, train_fraction)
    aucs = {name: r.test_auroc for name, r in results.items()}
    gap = aucs[target] - aucs[rival] if target and rival else 0.0
    rest = [v for m, v in aucs.items() if m not in (target, rival)]
    spread = float(np.std(rest)) if rest else 0.0
    return BenchmarkEntry(expr.to_string(f), seed, aucs, expr.bigram_histogram(f), gap, spread)
