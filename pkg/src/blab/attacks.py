"""Witness perturbations and Monte Carlo flip-rate estimates for box classifiers."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from . import stats
from .certify import directed_flip
from .distributions import Dataset
from .errors import InvalidArgument, NotApplicable
from .networks import ThresholdNet, forward

_CHUNK = 200_000


def is_boundary_vertex(x, b: float):
    """Every coordinate is exactly ``+b`` or ``-b``. Row-wise for 2-D input."""
    x = np.asarray(x, dtype=float)
    return np.all(np.abs(x) == b, axis=-1)


def witness_perturbation(x, alpha: float, b: float) -> np.ndarray:
    """``(alpha/n) * sign(x)``: norm ``alpha/sqrt(n)``, pushing every coordinate past ``b``."""
    x = np.asarray(x, dtype=float)
    if not alpha > 0:
        raise InvalidArgument("alpha must be positive")
    if not bool(is_boundary_vertex(x, b)):
        raise NotApplicable("point is not a vertex of the decision cube")
    n = x.shape[-1]
    return (alpha / n) * np.sign(x)


def candidate_perturbations(x, alpha: float, b: float) -> np.ndarray:
    """Deterministic attempts of norm ``alpha/sqrt(n)``: the sign pattern of ``x``, all ``2n`` axis
    directions, and the direction to the nearest boundary point of the ``b``-cube."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    r = alpha / math.sqrt(n)
    signs = np.where(x >= 0, 1.0, -1.0)
    rows = [signs * (alpha / n)]
    rows.extend(r * np.eye(n))
    rows.extend(-r * np.eye(n))
    rows.append(directed_flip(b, x, r))
    return np.asarray(rows)


def witness_attempt_flips(net: ThresholdNet, points, alpha: float) -> int:
    """Number of :func:`candidate_perturbations` (over all points) that change the label."""
    if net.boundary is None:
        raise InvalidArgument("witness attempts need a box network with a known boundary")
    flips = 0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        zetas = candidate_perturbations(x, alpha, net.boundary)
        flips += int(np.sum(np.asarray(forward(net, x + zetas)) != _label(net, x)))
    return flips


@dataclass(frozen=True)
class PerturbationTrial:
    zeta: np.ndarray
    flipped: bool


@dataclass(frozen=True)
class RateResult:
    rate: float
    ci95: tuple[float, float]
    successes: int
    trials: int


def _label(net: ThresholdNet, x) -> int:
    out = forward(net, x)
    if net.output_rule != "sign":
        raise InvalidArgument("flip detection needs a sign-output network")
    return int(out)


def perturbation_trials(net: ThresholdNet, x, alpha: float, trials: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """``trials`` draws ``zeta ~ U(B(alpha/sqrt(n), 0))`` and whether each flips ``net`` at ``x``."""
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    rng = geo._as_rng(rng)
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    base = _label(net, x)
    zetas = geo.sample_ball(n, alpha / math.sqrt(n), None, rng, size=trials)
    flipped = np.asarray(forward(net, x + zetas)) != base
    return zetas, flipped


def trials_csv(zetas: np.ndarray, flipped: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "zeta_norm", "flipped"])
    for i, (z, f) in enumerate(zip(zetas, flipped)):
        w.writerow([i, format(float(np.linalg.norm(z)), ".17g"), int(f)])
    return buf.getvalue()


def destabilization_rate(net: ThresholdNet, x, alpha: float, trials: int, rng) -> RateResult:
    """Fraction of uniform ball perturbations of radius ``alpha/sqrt(n)`` that change the label at ``x``."""
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    rng = geo._as_rng(rng)
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    base = _label(net, x)
    flips = 0
    for start in range(0, trials, _CHUNK):
        t = min(_CHUNK, trials - start)
        zetas = geo.sample_ball(n, alpha / math.sqrt(n), None, rng, size=t)
        flips += int(np.sum(np.asarray(forward(net, x + zetas)) != base))
    return RateResult(flips / trials, stats.ci95(flips, trials), flips, trials)


def universal_rate(net: ThresholdNet, points, alpha: float, trials: int, rng) -> RateResult:
    """Fraction of single draws ``zeta`` that change the label of every listed point at once."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < 1:
        raise InvalidArgument("need at least one point")
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    rng = geo._as_rng(rng)
    n = pts.shape[1]
    base = np.asarray(forward(net, pts))
    hits = 0
    chunk = max(1, _CHUNK // len(pts))
    for start in range(0, trials, chunk):
        t = min(chunk, trials - start)
        zetas = geo.sample_ball(n, alpha / math.sqrt(n), None, rng, size=t)
        all_flipped = np.ones(t, dtype=bool)
        for p, lab in zip(pts, base):
            all_flipped &= np.asarray(forward(net, p + zetas)) != lab
        hits += int(np.sum(all_flipped))
    return RateResult(hits / trials, stats.ci95(hits, trials), hits, trials)


@dataclass
class UnstableSet:
    """Sample points with a witness flip; ``indices`` refer to rows of the source dataset."""

    indices: np.ndarray
    points: Dataset
    witnesses: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    def witness(self, j: int) -> np.ndarray:
        return self.witnesses[j]


def unstable_set(net: ThresholdNet, data: Dataset, alpha: float) -> UnstableSet:
    """Points sitting on a vertex of the net's decision cube whose witness perturbation flips the label.

    Membership is structural (exact boundary-vertex test) and then confirmed by
    evaluating the network at ``x`` and ``x + witness``.
    """
    if net.boundary is None:
        raise InvalidArgument("unstable_set needs a box network with a known boundary")
    b = net.boundary
    n = data.n
    cand = np.flatnonzero(is_boundary_vertex(data.x, b)) if len(data) else np.zeros(0, dtype=np.int64)
    if len(cand) == 0:
        return UnstableSet(cand, data[cand], np.zeros((0, n)))
    x = data.x[cand]
    zetas = (alpha / n) * np.sign(x)
    before = np.asarray(forward(net, x))
    after = np.asarray(forward(net, x + zetas))
    keep = before != after
    idx = cand[keep]
    return UnstableSet(idx, data[idx], zetas[keep])


def distinct_points(points: np.ndarray, m: int) -> np.ndarray:
    """Up to ``m`` points, preferring distinct rows and then repeating in sample order."""
    pts = np.atleast_2d(points)
    _, first = np.unique(pts, axis=0, return_index=True)
    order = [int(i) for i in np.sort(first)]
    taken = set(order)
    rest = [i for i in range(len(pts)) if i not in taken]
    chosen = (order + rest)[:m]
    return pts[chosen]
