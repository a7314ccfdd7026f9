"""Deterministic random streams.

Feature matrices come from a Philox4x64-10 counter stream keyed by the dataset
seed. Each raw 64-bit word ``r`` becomes a uniform ``((r >> 11) + 0.5) * 2**-53``
in (0, 1), which is pushed through the Wichura AS241 inverse normal CDF
(``statistics.NormalDist.inv_cdf``). Values are consumed row-major.

Everything else (GP variation, tuning, bagging) uses ``numpy.random.Generator``
objects built from seeds derived with :func:`derive_seed`, so independent
components never share a mutable stream.
"""

from __future__ import annotations

import hashlib
from statistics import NormalDist

import numpy as np

MASK64 = (1 << 64) - 1
_STD_NORMAL = NormalDist()


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from an arbitrary tuple of printable parts."""
    text = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def generator(*parts: object) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))


def philox_uniforms(seed: int, count: int) -> np.ndarray:
    bits = np.random.Philox(key=seed & MASK64)
    raw = bits.random_raw(count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def standard_normal(seed: int, count: int) -> np.ndarray:
    inv = _STD_NORMAL.inv_cdf
    return np.fromiter((inv(u) for u in philox_uniforms(seed, count).tolist()),
                       dtype=np.float64, count=count)


def splitmix64(state: int) -> tuple[int, int]:
    """One step of SplitMix64; returns (new_state, output).

    Mirrors the generator inside the compiled tree kernel.
    """
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)
