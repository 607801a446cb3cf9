"""Deterministic named random substreams.

All randomness in a run flows from one root seed; each consumer asks for a
named substream so that adding or reordering consumers never perturbs the
draws of the others.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """A generator keyed by (seed, name); stable across processes."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, key]))
