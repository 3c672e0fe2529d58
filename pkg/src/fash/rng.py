"""Deterministic random-stream helpers.

Monte-Carlo results must not depend on thread scheduling, so every unit
gets its own counter-based stream derived from (master seed, unit id).
"""

from __future__ import annotations

import hashlib

import numpy as np


def as_generator(rng: int | np.random.Generator | None) -> np.random.Generator:
    """Coerce a seed (or an existing generator) into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _stable_digest(label: str) -> int:
    # hash() is salted per process; blake2 is stable across runs and platforms.
    return int.from_bytes(hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little")


def unit_stream(master_seed: int, unit_id: str) -> np.random.Generator:
    """Per-unit generator that is independent of processing order."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), _stable_digest(unit_id)]))


def replicate_stream(master_seed: int, *indices: int) -> np.random.Generator:
    """Generator for one cell of a seeded sweep (e.g. one replicate of one rho)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, indices)]))
