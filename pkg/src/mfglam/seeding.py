"""Deterministic derivation of independent random streams.

Every stochastic step takes an explicit generator derived from a master
seed plus string/integer tags naming the purpose ("design", "optim", ...)
so parallel jobs never share streams and reruns are bit-reproducible.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["derive_seed_sequence", "derive_rng", "derive_seed"]


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    # crc32 is stable across processes and platforms, unlike hash()
    return zlib.crc32(str(tag).encode("utf-8"))


def derive_seed_sequence(seed: int, *tags) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed)] + [_tag_to_int(t) for t in tags])


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """Independent generator for (seed, tags); same inputs, same stream."""
    return np.random.default_rng(derive_seed_sequence(seed, *tags))


def derive_seed(seed: int, *tags) -> int:
    """Derived integer seed, for APIs that take a seed rather than a stream."""
    return int(derive_seed_sequence(seed, *tags).generate_state(1)[0])
