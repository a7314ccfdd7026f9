"""Synthesis of balanced binary datasets from generative functions."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import expr
from .errors import ConfigError
from .rng import standard_normal


@dataclass(frozen=True)
class DatasetConfig:
    n_samples: int = 1000
    n_features: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 4 or self.n_samples % 2:
            raise ConfigError(f"n_samples must be even and >= 4, got {self.n_samples}")
        if self.n_features < 1:
            raise ConfigError(f"n_features must be >= 1, got {self.n_features}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass
class Dataset:
    features: np.ndarray
    target: np.ndarray
    config: DatasetConfig
    function_text: str
    raw: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]


def sample_features(config: DatasetConfig) -> np.ndarray:
    """Standard-normal feature matrix, filled row-major from the seed's stream."""
    values = standard_normal(config.seed, config.n_samples * config.n_features)
    return values.reshape(config.n_samples, config.n_features)


def binarize(raw) -> np.ndarray:
    """Rank-median labels: sort by (raw value, row index); lower half 0, upper half 1."""
    raw = np.asarray(raw, dtype=np.float64)
    n = raw.shape[0]
    if n % 2:
        raise ConfigError(f"cannot balance an odd number of samples ({n})")
    order = np.argsort(raw, kind="stable")
    target = np.zeros(n, dtype=np.int8)
    target[order[n // 2:]] = 1
    return target


def median_tied(raw) -> bool:
    """True when the two samples straddling the class boundary share a raw value,
    i.e. the labelling is decided by row order rather than by the function."""
    raw = np.asarray(raw, dtype=np.float64)
    order = np.argsort(raw, kind="stable")
    h = raw.shape[0] // 2
    return bool(raw[order[h - 1]] == raw[order[h]])


def _check_function(f, n_features: int):
    used = expr.features_used(f)
    if used and max(used) >= n_features:
        raise ConfigError(
            f"function references x{max(used)} but the dataset has {n_features} features")


def from_features(f, features: np.ndarray, config: DatasetConfig) -> Dataset:
    _check_function(f, features.shape[1])
    raw = expr.evaluate_batch(f, features)
    return Dataset(features, binarize(raw), config, expr.to_string(f), raw)


def synthesize(f, config: DatasetConfig) -> Dataset:
    _check_function(f, config.n_features)
    return from_features(f, sample_features(config), config)


def replicate(f, base_config: DatasetConfig, n_replicates: int) -> list[Dataset]:
    """Datasets for seeds base_seed, base_seed + 1, ..., one independent stream each."""
    if n_replicates < 1:
        raise ConfigError(f"n_replicates must be >= 1, got {n_replicates}")
    out = []
    for k in range(n_replicates):
        cfg = DatasetConfig(base_config.n_samples, base_config.n_features,
                            (base_config.seed + k) % 2**64)
        out.append(synthesize(f, cfg))
    return out


# --- files -------------------------------------------------------------------

def sidecar(ds: Dataset, **extra) -> dict:
    meta = {
        "function": ds.function_text,
        "seed": ds.config.seed,
        "n_samples": ds.config.n_samples,
        "n_features": ds.config.n_features,
        "operator_set": list(expr.OPERATOR_SET),
        "layout": "row-major",
    }
    meta.update(extra)
    return meta


def write_csv(ds: Dataset, path: Path, **extra) -> Path:
    """Write ``path`` plus a ``<path>.json`` metadata sidecar; floats use repr (round-trip exact)."""
    path = Path(path)
    d = ds.features.shape[1]
    with path.open("w", newline="") as fh:
        fh.write(",".join([f"feature_{j}" for j in range(d)] + ["target"]) + "\n")
        for row, t in zip(ds.features.tolist(), ds.target.tolist()):
            fh.write(",".join(map(repr, row)) + f",{t}\n")
    sidecar_path = path.with_suffix(path.suffix + ".json")
    sidecar_path.write_text(json.dumps(sidecar(ds, **extra), indent=2, sort_keys=True) + "\n")
    return path


def read_csv(path: Path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "target":
            raise ConfigError(f"{path}: last column must be 'target'")
        rows = [r for r in reader if r]
    data = np.array(rows, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ConfigError(f"{path}: ragged or empty table")
    target = data[:, -1]
    if not np.isin(target, (0.0, 1.0)).all():
        raise ConfigError(f"{path}: target must be 0/1")
    meta = {}
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if sidecar_path.exists():
        meta = json.loads(sidecar_path.read_text())
    n = data.shape[0]
    # odd-sized external tables are still readable; only synthesis requires even n
    cfg = object.__new__(DatasetConfig)
    object.__setattr__(cfg, "n_samples", n)
    object.__setattr__(cfg, "n_features", data.shape[1] - 1)
    object.__setattr__(cfg, "seed", int(meta.get("seed", 0)))
    return Dataset(np.ascontiguousarray(data[:, :-1]), target.astype(np.int8), cfg,
                   meta.get("function", ""))
