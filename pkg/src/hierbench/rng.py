"""Counter-based random substreams.

Every stochastic routine derives its generators from a master seed plus an
integer key path (e.g. ``(replicate_chunk, app_index, level)``), so work units
can run in any order or on any number of threads and still reproduce the same
numbers.
"""

from __future__ import annotations

import os
import secrets

import numpy as np

# fixed integer tags so that string names never depend on hashing
_TAGS = {
    "scenarios": 1,
    "axes": 2,
    "rollouts": 3,
    "tree": 10,
    "bootstrap": 11,
    "trial": 12,
    "calibration": 13,
    "split-half": 14,
    "config-pick": 15,
    "coin": 16,
    "record": 17,
    "match": 18,
    "coverage-base": 19,
}

SEED_ENV = "HIERBENCH_SEED"


def _key(part) -> int:
    if isinstance(part, str):
        return _TAGS[part]
    return int(part)


def substream(seed: int, *key) -> np.random.Generator:
    """Philox generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key) -> int:
    """A 64-bit child seed, stable across platforms."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def resolve_seed(seed: int | None) -> int:
    """Explicit seed, else the environment override, else a fresh random seed."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env:
        return int(env)
    return secrets.randbits(63)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
