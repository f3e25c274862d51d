"""Binomial confidence intervals, 3-sigma acceptance bands and seed derivation."""
from __future__ import annotations

import hashlib
import math

import numpy as np
from scipy.stats import binomtest


def ci95(successes: int, trials: int) -> tuple[float, float]:
    """Wilson 95% interval for a binomial proportion."""
    if trials <= 0:
        return (0.0, 1.0)
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=0.95, method="wilson")
    return (float(ci.low), float(ci.high))


def sigma(p: float, trials: int) -> float:
    """Standard deviation of a sample proportion with true value ``p``."""
    p = min(max(p, 0.0), 1.0)
    return math.sqrt(p * (1 - p) / trials)


def within_band(empirical: float, theory: float, trials: int, k: float = 3.0) -> bool:
    return abs(empirical - theory) <= k * sigma(theory, trials)


def above_bound(empirical: float, bound: float, trials: int, k: float = 3.0) -> bool:
    return empirical >= bound - k * sigma(bound, trials)


def child_seed(root: int, name: str, index: int = 0) -> np.random.SeedSequence:
    """Independent stream for ``(root, name, index)``.

    The name is hashed with SHA-256 (stable across processes, unlike ``hash``)
    and, with the index, becomes the spawn key of a SeedSequence on the root.
    """
    digest = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")
    return np.random.SeedSequence(int(root) % 2**64, spawn_key=(digest, int(index)))


def child_rng(root: int, name: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(child_seed(root, name, index))
