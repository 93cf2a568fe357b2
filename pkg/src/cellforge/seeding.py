"""Stable seed derivation: one master seed fans out to every stochastic
component by hashing, so results do not depend on evaluation order."""

from __future__ import annotations

import hashlib

import numpy as np

SEED_BITS = 63


def stable_seed(*parts) -> int:
    """Non-negative 63-bit integer derived from ``parts`` (ints and strings)."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big") >> (64 - SEED_BITS)


def derived_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(stable_seed(*parts))


def draw_base(rng: np.random.Generator | None) -> int:
    """One integer from ``rng`` that keys all per-edge streams of a run."""
    if rng is None:
        return 0
    return int(rng.integers(0, 2**SEED_BITS))


def edge_rng(base: int, layer: int, u: int, v: int, way: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base, layer, u, v, way]))
