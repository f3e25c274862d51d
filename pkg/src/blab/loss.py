"""Pointwise losses that vanish exactly on agreement, and the empirical loss over a sample."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import Dataset


@dataclass(frozen=True)
class LocalLoss:
    """``evaluator(v, w) >= 0`` (possibly ``inf``), zero iff ``v == w``. Vectorised over arrays."""

    name: str
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, v, w):
        return self.evaluator(np.asarray(v, dtype=float), np.asarray(w, dtype=float))


def _zero_one(v, w):
    return (v != w).astype(float)


_TINY = np.nextafter(0.0, 1.0)


def _squared(v, w):
    # the square underflows for tiny nonzero gaps; keep it strictly positive off the diagonal
    out = (v - w) ** 2
    return np.where((out == 0) & (v != w), _TINY, out)


def _make_log(cap: float):
    def evaluator(v, w):
        d = np.abs(v - w)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(d < 1, -np.log1p(-np.minimum(d, 1.0)), np.inf)
        out = np.where(np.isnan(d), np.inf, out)
        return np.minimum(out, cap)

    return evaluator


zero_one = LocalLoss("zero_one", _zero_one)
squared = LocalLoss("squared", _squared)


def capped_log(cap: float = math.inf) -> LocalLoss:
    """``-log(1 - |v - w|)``, reaching ``cap`` (default ``inf``) once ``|v - w| >= 1``."""
    if not cap > 0:
        raise ValueError("cap must be positive")
    return LocalLoss(f"capped_log({cap})", _make_log(cap))


BUNDLED = (zero_one, squared, capped_log())


def empirical_loss(S: Dataset, h, R: LocalLoss = zero_one) -> float:
    """Sum of ``R(h(x), label)`` over the multiset ``S``. ``h`` maps an ``(M, n)`` array to ``M`` outputs."""
    if len(S) == 0:
        return 0.0
    preds = np.asarray(h(S.x), dtype=float).reshape(-1)
    total = float(np.sum(R(preds, S.labels)))
    return total


def is_erm_minimiser(h, S: Dataset) -> bool:
    """True iff ``h`` attains zero loss on ``S``, the global floor of every admissible loss sum."""
    return empirical_loss(S, h, zero_one) == 0.0
