"""Evolve symbolic generative functions into synthetic classification benchmarks
that separate a chosen pair of classifiers."""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
