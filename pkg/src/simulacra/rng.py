"""Seed plumbing: labeled seed derivation and the counter-based uniform stream."""
import hashlib

import numpy as np

from . import kernels

_MASK64 = (1 << 64) - 1


def derive_seed(global_seed: int, *labels) -> int:
    """Derive an independent 64-bit seed from ``global_seed`` and a label path."""
    key = f"{int(global_seed) & _MASK64}/" + "/".join(str(x) for x in labels)
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def generator(global_seed: int, *labels) -> np.random.Generator:
    """A numpy Generator seeded from a labeled derivation of ``global_seed``."""
    return np.random.default_rng(derive_seed(global_seed, *labels))


def uniform(seed: int, entity, step: int, draw: int):
    """PRF(seed, entity, step, draw) mapped to [0, 1); pure function of its keys."""
    return kernels.prf_uniform(seed, entity, step, draw)
