"""Deterministic random-stream derivation.

Every random draw in the package flows from one master seed through a named
substream, so two runs with the same seed agree bit for bit and results do
not depend on iteration order or parallel schedule.
"""

from __future__ import annotations

import numpy as np

# Substream labels. Distinct labels in the spawn key give independent streams.
TIEBREAK = 1
SPLIT = 2
CAL_U = 3
EVAL_U = 4
SYNTH = 5
TRIAL = 6
TUNE_SPLIT = 7
TUNE_GRID = 8
SORT = 9
TUNE = 10
LABELS = 11


def sequence(seed: int, *path: int) -> np.random.SeedSequence:
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return np.random.SeedSequence(seed, spawn_key=tuple(path))


def rng(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream identified by (seed, *path)."""
    return np.random.Generator(np.random.PCG64(sequence(seed, *path)))


def child_seed(seed: int, *path: int) -> int:
    """Derived 64-bit seed, usable as the master seed of a sub-computation."""
    return int(sequence(seed, *path).generate_state(1, np.uint64)[0])
