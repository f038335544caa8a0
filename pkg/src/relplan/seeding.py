"""Named, reproducible RNG streams derived from one master seed.

Every stochastic component (walks, weight init, shuffling, balancing,
evaluation) pulls its generator from a labelled stream so components can be
re-run in isolation without disturbing each other.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(master: int, *labels: object) -> int:
    """Derive a stable 63-bit seed from a master seed and a label path."""
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1


def stream(master: int, *labels: object) -> np.random.Generator:
    """Generator for the named stream, independent of other streams."""
    return np.random.default_rng(child_seed(master, *labels))
