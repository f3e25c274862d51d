"""Closed-form certified radii for cube classifiers and the future-sample certificate experiment.

For the decision cube ``{max_i |x_i| <= b}`` the exact Euclidean robustness
radius is ``b - max_i |x_i|`` inside (distance to the nearest face) and the
Euclidean distance to the cube outside.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import stats
from .distributions import Dataset, DistributionSpec, sample_dataset
from .errors import InvalidArgument


def certified_radius(b: float, x) -> np.ndarray | float:
    """Largest ``r`` such that every perturbation of norm below ``r`` keeps the label. Row-wise."""
    if not b > 0:
        raise InvalidArgument("boundary must be positive")
    x = np.asarray(x, dtype=float)
    m = geo.linf(x)
    excess = np.maximum(np.abs(x) - b, 0.0)
    outside = np.sqrt(np.sum(excess * excess, axis=-1))
    r = np.where(m <= b, b - m, outside)
    return float(r) if np.ndim(r) == 0 else r


def flip_direction(b: float, x) -> np.ndarray:
    """Unit direction along which the label changes soonest (the nearest boundary point)."""
    x = np.asarray(x, dtype=float)
    if geo.linf(x) <= b:
        j = int(np.argmax(np.abs(x)))
        d = np.zeros_like(x)
        d[j] = 1.0 if x[j] >= 0 else -1.0
        return d
    p = np.clip(x, -b, b)
    d = p - x
    return d / np.linalg.norm(d)


def directed_flip(b: float, x, r: float) -> np.ndarray:
    """Perturbation of norm ``r`` along :func:`flip_direction`."""
    return r * flip_direction(b, x)


@dataclass
class RobustnessCheck:
    robust: bool
    margins: np.ndarray


def verify_robust_on_sample(b: float, data: Dataset | np.ndarray, alpha: float) -> RobustnessCheck:
    """Certified robust at radius ``alpha/sqrt(n)`` on every point (strict: radius must exceed it)."""
    x = data.x if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    if not alpha > 0:
        raise InvalidArgument("alpha must be positive")
    n = x.shape[1]
    margins = np.atleast_1d(certified_radius(b, x))
    return RobustnessCheck(bool(np.all(margins > alpha / math.sqrt(n))), margins)


@dataclass
class CertificateReport:
    n: int
    k: int
    M: int
    trials: int
    alpha: float
    per_point_radius: list[float]
    all_robust_at_alpha: bool
    theory_prob_all_robust: float
    empirical_prob_all_robust: float
    all_robust_count: int
    theory_future_failure: float
    empirical_future_failure: float
    future_failure_count: int
    extra: dict = field(default_factory=dict)

    @property
    def all_robust_ci95(self) -> tuple[float, float]:
        return stats.ci95(self.all_robust_count, self.trials)

    @property
    def future_failure_ci95(self) -> tuple[float, float]:
        return stats.ci95(self.future_failure_count, self.trials)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "M": self.M,
            "trials": self.trials,
            "alpha": self.alpha,
            "per_point_radius": [float(r) for r in self.per_point_radius],
            "all_robust_at_alpha": self.all_robust_at_alpha,
            "theory_prob_all_robust": self.theory_prob_all_robust,
            "empirical_prob_all_robust": self.empirical_prob_all_robust,
            "theory_future_failure": self.theory_future_failure,
            "empirical_future_failure": self.empirical_future_failure,
        }


def future_failure_experiment(
    spec: DistributionSpec, M: int, trials: int, rng, alpha: float | None = None
) -> CertificateReport:
    """Certify the robust twin on ``trials`` independent ``M``-samples, then test one future draw each.

    ``spec`` should be a ``shifted_vertices`` spec; with ``base`` it behaves as
    ``k = 0``. The twin's boundary is ``(1+eps/2)/sqrt(n)``, so a shifted vertex
    has certified radius zero while every other support point keeps more than
    ``alpha/sqrt(n)`` for ``alpha < eps/2``.
    """
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    if int(M) != M or M < 1:
        raise InvalidArgument("M must be a positive integer")
    alpha = spec.eps / 4 if alpha is None else alpha
    if not (0 < alpha < spec.eps / 2):
        raise InvalidArgument(f"alpha must lie in (0, eps/2) = (0, {spec.eps / 2}), got {alpha}")
    rng = geo._as_rng(rng)
    n, k = spec.n, spec.k
    b = geo.boundary(n, 1.0 + spec.eps / 2)
    level = alpha / math.sqrt(n)

    robust_count = 0
    first_radii = None
    chunk = max(1, 200_000 // M)
    for start in range(0, trials, chunk):
        t = min(chunk, trials - start)
        data = sample_dataset(spec, t * M, rng)
        radii = np.asarray(certified_radius(b, data.x)).reshape(t, M)
        if first_radii is None:
            first_radii = radii[0]
        robust_count += int(np.sum(np.all(radii > level, axis=1)))

    future = sample_dataset(spec, trials, rng)
    fail_count = int(np.sum(np.asarray(certified_radius(b, future.x)) <= level))

    theory_all = (1.0 - k / 2 ** (n + 1)) ** M
    return CertificateReport(
        n=n,
        k=k,
        M=M,
        trials=trials,
        alpha=alpha,
        per_point_radius=list(first_radii),
        all_robust_at_alpha=bool(np.all(first_radii > level)),
        theory_prob_all_robust=theory_all,
        empirical_prob_all_robust=robust_count / trials,
        all_robust_count=robust_count,
        theory_future_failure=k / 2 ** (n + 1),
        empirical_future_failure=fail_count / trials,
        future_failure_count=fail_count,
    )
