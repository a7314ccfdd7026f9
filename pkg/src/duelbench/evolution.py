"""Two-objective evolutionary search for functions that win classifier duels.

Objectives, both maximized: ``gap = AUROC(target) - AUROC(rival)`` and
``spread`` = population std-dev of the bystander AUROCs. Selection uses
non-dominated sorting with crowding distance; an elitist archive keeps the
all-time non-dominated set.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import permutations

import numpy as np

from . import classifiers, dataset, evaluation, expr
from .errors import ConfigError, DegenerateDataError, UndefinedMetricError
from .rng import derive_seed, generator

SPREAD_SCOPES = ("bystanders", "all")


@dataclass(frozen=True)
class DuelConfig:
    target: str
    rival: str
    bystanders: tuple = None
    population_size: int = 20
    generations: int = 15
    mutation_rate: float = 0.3
    crossover_rate: float = 0.7
    fitness_tuning_budget: int = 8
    fitness_cv_folds: int = 3
    dataset_config: dataset.DatasetConfig = field(default_factory=dataset.DatasetConfig)
    seed: int = 0
    archive_capacity: int = 50
    train_fraction: float = 0.8
    spread_scope: str = "bystanders"
    grow: expr.GrowConfig = field(default_factory=expr.GrowConfig)

    def __post_init__(self):
        if self.bystanders is None:
            rest = tuple(s.name for s in classifiers.registry()
                         if s.name not in (self.target, self.rival))
            object.__setattr__(self, "bystanders", rest)
        else:
            object.__setattr__(self, "bystanders", tuple(self.bystanders))
        self.validate()

    def validate(self):
        if self.target == self.rival:
            raise ConfigError(f"target and rival must differ, both are {self.target!r}")
        if set(self.bystanders) & {self.target, self.rival}:
            raise ConfigError("bystanders must exclude the target and the rival")
        if len(set(self.bystanders)) != len(self.bystanders):
            raise ConfigError("bystanders contain duplicates")
        classifiers.registry(self.methods)
        for name in ("mutation_rate", "crossover_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.population_size < 2:
            raise ConfigError(f"population_size must be >= 2, got {self.population_size}")
        if self.generations < 0:
            raise ConfigError(f"generations must be >= 0, got {self.generations}")
        if self.fitness_tuning_budget < 1:
            raise ConfigError("fitness_tuning_budget must be >= 1")
        if self.fitness_cv_folds < 2:
            raise ConfigError("fitness_cv_folds must be >= 2")
        if self.archive_capacity < 2:
            raise ConfigError(f"archive_capacity must be >= 2, got {self.archive_capacity}")
        if self.spread_scope not in SPREAD_SCOPES:
            raise ConfigError(f"spread_scope must be one of {SPREAD_SCOPES}")
        if self.grow.n_features > self.dataset_config.n_features:
            raise ConfigError("grow.n_features exceeds dataset_config.n_features")

    @property
    def methods(self) -> tuple:
        return (self.target, self.rival) + self.bystanders

    def to_json(self) -> dict:
        out = asdict(self)
        out["bystanders"] = list(self.bystanders)
        out["grow"]["operators"] = list(self.grow.operators)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DuelConfig":
        d = dict(d)
        if "dataset_config" in d:
            d["dataset_config"] = dataset.DatasetConfig(**d["dataset_config"])
        if "grow" in d:
            g = dict(d["grow"])
            if "operators" in g:
                g["operators"] = tuple(g["operators"])
            d["grow"] = expr.GrowConfig(**g)
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class FitnessRecord:
    gap: float
    spread: float
    per_method_auroc: dict
    degenerate: bool = False

    @property
    def objectives(self) -> tuple[float, float]:
        return (self.gap, self.spread)

    def to_json(self) -> dict:
        return {"gap": self.gap, "spread": self.spread, "degenerate": self.degenerate,
                "per_method_auroc": dict(self.per_method_auroc)}


def degenerate_record(duel: DuelConfig) -> FitnessRecord:
    """Worst-case sentinel (gap -1, spread 0); AUROCs chosen to be consistent with it."""
    aucs = {duel.target: 0.0, duel.rival: 1.0}
    aucs.update({b: 0.5 for b in duel.bystanders})
    return FitnessRecord(-1.0, 0.0, aucs, True)


def shared_features(duel: DuelConfig) -> np.ndarray:
    cfg = duel.dataset_config
    seed = derive_seed(cfg.seed, duel.seed, "features")
    return dataset.sample_features(dataset.DatasetConfig(cfg.n_samples, cfg.n_features, seed))


def _score_labels(duel: DuelConfig, features: np.ndarray, target: np.ndarray) -> FitnessRecord:
    view = evaluation.DataView(features, target, np.arange(target.shape[0]))
    try:
        results = evaluation.evaluate_methods(view, classifiers.registry(duel.methods),
                                              duel.fitness_tuning_budget,
                                              duel.fitness_cv_folds, duel.seed,
                                              duel.train_fraction)
    except (DegenerateDataError, UndefinedMetricError):
        return degenerate_record(duel)
    aucs = {name: r.test_auroc for name, r in results.items()}
    pool = duel.bystanders if duel.spread_scope == "bystanders" else duel.methods
    spread = float(np.std([aucs[m] for m in pool])) if pool else 0.0
    return FitnessRecord(aucs[duel.target] - aucs[duel.rival], spread, aucs)


def _labels(f, features: np.ndarray):
    raw = expr.evaluate_batch(f, features)
    if dataset.median_tied(raw):
        return None
    return dataset.binarize(raw)


def evaluate_fitness(f, duel: DuelConfig, features: np.ndarray) -> FitnessRecord:
    """Label ``features`` with ``f`` (rank-median), split 80/20, tune every method,
    and score the duel. Ties at the median make the labelling arbitrary, so such
    functions (constants included) get the degenerate sentinel."""
    target = _labels(f, features)
    if target is None:
        return degenerate_record(duel)
    return _score_labels(duel, features, target)


def _task(args):
    duel, features, target = args
    return _score_labels(duel, features, target)


class FitnessCache:
    """Fitness memo keyed by the label vector: with fixed features, split and tuning
    seeds, the labels determine the record completely."""

    def __init__(self):
        self._store: dict[bytes, FitnessRecord] = {}
        self.hits = 0
        self.misses = 0

    def evaluate_many(self, functions, duel: DuelConfig, features: np.ndarray,
                      jobs: int = 1) -> list[FitnessRecord]:
        keys, todo = [], {}
        for f in functions:
            target = _labels(f, features)
            key = None if target is None else target.tobytes()
            keys.append(key)
            if key is None:
                continue
            if key in self._store or key in todo:
                self.hits += 1
            else:
                self.misses += 1
                todo[key] = target
        work = [(duel, features, t) for t in todo.values()]
        if jobs > 1 and len(work) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_task, work))
        else:
            results = [_task(w) for w in work]
        self._store.update(zip(todo, results))
        sentinel = degenerate_record(duel)
        return [sentinel if k is None else self._store[k] for k in keys]


# --- Pareto machinery ----------------------------------------------------------

def dominates(a, b) -> bool:
    return a[0] >= b[0] and a[1] >= b[1] and (a[0] > b[0] or a[1] > b[1])


def crowding_distance(points, members) -> dict[int, float]:
    """Crowding distance of each index in ``members`` (boundary points get inf)."""
    dist = {i: 0.0 for i in members}
    if len(members) <= 2:
        return {i: math.inf for i in members}
    for m in range(2):
        order = sorted(members, key=lambda i: (points[i][m], i))
        lo, hi = points[order[0]][m], points[order[-1]][m]
        dist[order[0]] = dist[order[-1]] = math.inf
        if hi == lo:
            continue
        for a, i, b in zip(order, order[1:], order[2:]):
            dist[i] += (points[b][m] - points[a][m]) / (hi - lo)
    return dist


def non_dominated_sort(points) -> list[list[int]]:
    """Fronts of indices (maximizing both objectives). Within a front: descending
    crowding distance, ties by index."""
    points = [tuple(map(float, p)) for p in points]
    n = len(points)
    # sweep on objective 0 descending; front of a point = 1 + max front among dominators
    order = sorted(range(n), key=lambda i: (-points[i][0], -points[i][1], i))
    rank = [0] * n
    for pos, i in enumerate(order):
        r = 0
        for j in order[:pos]:
            if rank[j] >= r and dominates(points[j], points[i]):
                r = rank[j] + 1
        rank[i] = r
    n_fronts = max(rank) + 1 if n else 0
    fronts = [[] for _ in range(n_fronts)]
    for i in range(n):
        fronts[rank[i]].append(i)
    out = []
    for members in fronts:
        cd = crowding_distance(points, members)
        out.append(sorted(members, key=lambda i: (-cd[i], i)))
    return out


@dataclass(frozen=True)
class ArchiveEntry:
    function: object
    fitness: FitnessRecord

    @property
    def text(self) -> str:
        return expr.to_string(self.function)

    def to_json(self) -> dict:
        rec = self.fitness.to_json()
        rec["function"] = self.text
        rec["histogram"] = expr.histogram_to_json(expr.bigram_histogram(self.function))
        return rec


class ParetoArchive:
    """Bounded, pairwise non-dominated set of (function, fitness) entries."""

    def __init__(self, capacity: int = 50):
        if capacity < 2:
            raise ConfigError(f"archive capacity must be >= 2, got {capacity}")
        self.capacity = capacity
        self.entries: list[ArchiveEntry] = []
        self.history: list[dict] = []

    def __len__(self):
        return len(self.entries)

    def update(self, candidates) -> None:
        seen = {e.text for e in self.entries}
        pool = list(self.entries)
        for c in candidates:
            if c.fitness.degenerate or c.text in seen:
                continue
            seen.add(c.text)
            pool.append(c)
        points = [e.fitness.objectives for e in pool]
        front = [i for i in range(len(pool))
                 if not any(dominates(points[j], points[i]) for j in range(len(pool)))]
        while len(front) > self.capacity:
            cd = crowding_distance(points, front)
            drop = min(front, key=lambda i: (cd[i], -i))
            front.remove(drop)
        kept = [pool[i] for i in front]
        self.entries = sorted(kept, key=lambda e: (-e.fitness.gap, -e.fitness.spread, e.text))

    def best_gap(self) -> float:
        return max((e.fitness.gap for e in self.entries), default=-1.0)

    def to_jsonl(self, duel: DuelConfig | None = None) -> str:
        lines = []
        for e in self.entries:
            rec = e.to_json()
            if duel is not None:
                rec["target"], rec["rival"] = duel.target, duel.rival
            lines.append(json.dumps(rec, sort_keys=True))
        return "".join(line + "\n" for line in lines)


# --- the loop ------------------------------------------------------------------

def _tournament(rng, rank, crowd) -> int:
    a, b = (int(v) for v in rng.integers(len(rank), size=2))
    ka, kb = (rank[a], -crowd[a], a), (rank[b], -crowd[b], b)
    return a if ka <= kb else b


def _rank_and_crowding(points):
    rank = [0] * len(points)
    crowd = [0.0] * len(points)
    for r, front in enumerate(non_dominated_sort(points)):
        cd = crowding_distance(points, front)
        for i in front:
            rank[i] = r
            crowd[i] = cd[i]
    return rank, crowd


def run_duel(duel: DuelConfig, jobs: int = 1, progress=None) -> ParetoArchive:
    """Evolve functions for one duel. All random draws happen before each generation's
    evaluations, so the result does not depend on ``jobs``."""
    duel.validate()
    rng = generator(duel.seed, "evolve")
    features = shared_features(duel)
    cache = FitnessCache()
    archive = ParetoArchive(duel.archive_capacity)

    pop = [random_tree(duel, rng) for _ in range(duel.population_size)]
    fit = cache.evaluate_many(pop, duel, features, jobs)
    archive.update(ArchiveEntry(f, r) for f, r in zip(pop, fit))
    _record(archive, cache, 0)
    if progress:
        progress(duel, archive)

    for gen in range(1, duel.generations + 1):
        rank, crowd = _rank_and_crowding([r.objectives for r in fit])
        children = []
        while len(children) < duel.population_size:
            a = pop[_tournament(rng, rank, crowd)]
            b = pop[_tournament(rng, rank, crowd)]
            if rng.random() < duel.crossover_rate:
                a, b = expr.crossover(a, b, rng, duel.grow)
            if rng.random() < duel.mutation_rate:
                a = expr.mutate(a, rng, duel.grow)
            if rng.random() < duel.mutation_rate:
                b = expr.mutate(b, rng, duel.grow)
            children += [a, b]
        children = children[:duel.population_size]
        child_fit = cache.evaluate_many(children, duel, features, jobs)
        archive.update(ArchiveEntry(f, r) for f, r in zip(children, child_fit))

        merged, merged_fit = pop + children, fit + child_fit
        chosen = [i for front in non_dominated_sort([r.objectives for r in merged_fit])
                  for i in front][:duel.population_size]
        pop = [merged[i] for i in chosen]
        fit = [merged_fit[i] for i in chosen]
        _record(archive, cache, gen)
        if progress:
            progress(duel, archive)
    return archive


def random_tree(duel: DuelConfig, rng):
    return expr.random_tree(duel.grow, rng)


def _record(archive: ParetoArchive, cache: FitnessCache, gen: int) -> None:
    archive.history.append({"generation": gen, "best_gap": archive.best_gap(),
                            "archive_size": len(archive), "evaluations": cache.misses,
                            "cache_hits": cache.hits})


def duel_seed(base_seed: int, target: str, rival: str) -> int:
    return derive_seed(base_seed, target, rival)


def run_all_duels(names, base: DuelConfig, jobs: int = 1, progress=None):
    """Every ordered (target, rival) pair over ``names``, each seeded independently."""
    names = [s.name for s in classifiers.registry(list(names))]
    if len(names) < 2:
        raise ConfigError("need at least two classifiers to hold a duel")
    out = []
    for target, rival in permutations(names, 2):
        rest = tuple(n for n in names if n not in (target, rival))
        duel = replace(base, target=target, rival=rival, bystanders=rest,
                       seed=duel_seed(base.seed, target, rival))
        out.append((duel, run_duel(duel, jobs, progress)))
    return out
