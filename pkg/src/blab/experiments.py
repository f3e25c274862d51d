"""End-to-end reproductions of the instability, robustness and certificate claims.

Each ``run_*`` function returns an :class:`ExperimentReport` holding named
metrics. A metric pairs an empirical value with the theoretical value or bound
it is checked against:

``eq``  ``|empirical - theory| <= 3 sigma`` for Monte Carlo rates (``sigma`` is
        the binomial standard deviation at the theoretical value), or
        ``<= tolerance`` for deterministic quantities.
``ge``  ``empirical >= bound - 3 sigma``.
``lt``/``gt``  strict deterministic comparisons.

All randomness flows from ``cfg.seed`` through :func:`stats.child_rng`, so a
report is a pure function of its config.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import __version__
from . import geometry as geo
from . import stats
from .attacks import destabilization_rate, distinct_points, unstable_set, universal_rate, witness_attempt_flips
from .certify import future_failure_experiment, verify_robust_on_sample
from .distributions import (
    DistributionSpec,
    default_spec,
    label1_count_threshold,
    sample_dataset,
    separation_audit,
    split_dataset,
)
from .errors import InvalidArgument
from .loss import BUNDLED, empirical_loss, is_erm_minimiser
from .networks import RELU, ActivationSpec, ThresholdNet, build_twin_pair, theta, theta_inf_dist, twin_gap

SIGMAS = 3.0
PROBABILITY_ONE_NOTE = (
    "The guarantees checked here hold with probability 1; samples from the null set where they "
    "may fail (e.g. a label-0 draw landing exactly on a cube face) have no empirical counterpart."
)


@dataclass
class ExperimentConfig:
    spec: DistributionSpec
    M: int = 1000
    r: Optional[int] = None
    s: Optional[int] = None
    alpha: Optional[float] = None
    q: float = 0.1
    kappa: float = 1.0
    beta: float = 1.0
    lam: float = 1e-6
    Lam: float = 1e6
    m: int = 4
    trials: int = 10_000
    draws: int = 10_000
    seed: int = 0
    act: ActivationSpec = RELU

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise InvalidArgument("M must be a positive integer")
        if self.r is None and self.s is None:
            self.r = (self.M * 7) // 10
        if self.r is None:
            self.r = self.M - self.s
        if self.s is None:
            self.s = self.M - self.r
        if self.r < 0 or self.s < 0 or self.r + self.s != self.M:
            raise InvalidArgument(f"r + s must equal M ({self.r} + {self.s} != {self.M})")
        if self.alpha is None:
            self.alpha = self.spec.eps / 4
        if not (0 < self.alpha < self.spec.eps / 2):
            raise InvalidArgument(f"alpha must lie in (0, eps/2) = (0, {self.spec.eps / 2:.6g}), got {self.alpha}")
        if not (0 < self.q < 0.5):
            raise InvalidArgument(f"q must lie in (0, 1/2), got {self.q}")
        for name in ("kappa", "beta", "lam", "Lam"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidArgument(f"{name} must be a positive finite number, got {v}")
        if self.m < 1:
            raise InvalidArgument("m must be at least 1")
        if self.trials < 1 or self.draws < 1:
            raise InvalidArgument("trials and draws must be at least 1")
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidArgument("seed must be a 64-bit unsigned integer")

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def eps(self) -> float:
        return self.spec.eps

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("spec", "act")}
        d["spec"] = self.spec.to_dict()
        d["act"] = self.act.to_dict()
        return d


def make_config(n: int, variant: str = "base", k: int = 0, eps: Optional[float] = None, **kw) -> ExperimentConfig:
    return ExperimentConfig(spec=default_spec(n, eps, variant, k), **kw)


@dataclass
class Metric:
    name: str
    empirical: float
    theory: float
    comparison: str
    trials: Optional[int] = None
    tolerance: float = 0.0
    ci95: Optional[tuple[float, float]] = None
    passed: bool = field(init=False)

    def __post_init__(self):
        e, t = float(self.empirical), float(self.theory)
        if self.comparison == "eq":
            if self.trials:
                self.passed = stats.within_band(e, t, self.trials, SIGMAS)
            else:
                self.passed = abs(e - t) <= self.tolerance
        elif self.comparison == "ge":
            self.passed = stats.above_bound(e, t, self.trials, SIGMAS) if self.trials else e >= t
        elif self.comparison == "lt":
            self.passed = e < t
        elif self.comparison == "gt":
            self.passed = e > t
        else:
            raise InvalidArgument(f"unknown comparison {self.comparison!r}")
        if self.ci95 is None and self.trials:
            self.ci95 = stats.ci95(round(e * self.trials), self.trials)

    @property
    def sigma(self) -> float:
        return stats.sigma(self.theory, self.trials) if self.trials else 0.0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "empirical": float(self.empirical),
            "bound_or_theory": float(self.theory),
            "ci95": None if self.ci95 is None else [float(self.ci95[0]), float(self.ci95[1])],
            "comparison": self.comparison,
            "trials": self.trials,
            "pass": bool(self.passed),
        }


@dataclass
class ExperimentReport:
    statement: str
    config: dict
    seed: int
    metrics: list[Metric]
    runtime_ms: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.metrics)

    def metric(self, name: str) -> Metric:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    def to_dict(self, include_runtime: bool = False) -> dict:
        return {
            "statement": self.statement,
            "config": self.config,
            "seed": self.seed,
            "metrics": [m.to_dict() for m in self.metrics],
            "runtime_ms": round(self.runtime_ms, 3) if include_runtime else None,
            "provenance": {"seed": self.seed, "version": __version__, "notes": self.notes},
            "pass": self.passed,
        }

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=1, sort_keys=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["statement", "seed", "name", "empirical", "bound_or_theory", "ci95_lo", "ci95_hi", "comparison", "pass"])
        for m in self.metrics:
            lo, hi = m.ci95 if m.ci95 is not None else ("", "")
            w.writerow([self.statement, self.seed, m.name, repr(float(m.empirical)), repr(float(m.theory)), lo, hi, m.comparison, int(m.passed)])
        return buf.getvalue()


def _timed(statement: str, cfg_dict: dict, seed: int, fn) -> ExperimentReport:
    t0 = time.perf_counter()
    metrics, notes = fn()
    report = ExperimentReport(statement, cfg_dict, seed, metrics, notes=[PROBABILITY_ONE_NOTE, *notes])
    report.runtime_ms = (time.perf_counter() - t0) * 1000
    return report


def _zero_loss_all(h, data) -> bool:
    return all(empirical_loss(data, h, R) == 0.0 for R in BUNDLED)


def _instability_suite(cfg: ExperimentConfig, victim: ThresholdNet, tag: str) -> tuple[list[Metric], list[str]]:
    """Resample ``cfg.trials`` datasets and measure everything the instability claim asserts about ``victim``."""
    n, M = cfg.n, cfg.M
    threshold = label1_count_threshold(cfg.q, M)
    zero_loss = sep_ok = u_is_label1 = enough = witnesses_ok = 0
    first_u = None
    for t in range(cfg.trials):
        data = sample_dataset(cfg.spec, M, stats.child_rng(cfg.seed, f"{tag}/sample", t))
        split = split_dataset(data, cfg.r, cfg.s)
        joined = split.joined()
        zero_loss += _zero_loss_all(victim, joined) and is_erm_minimiser(victim, joined)
        sep_ok += separation_audit(joined, cfg.spec.delta).passed
        U = unstable_set(victim, joined, cfg.alpha)
        u_is_label1 += bool(np.array_equal(U.indices, np.flatnonzero(joined.labels == 1)))
        enough += len(U) >= threshold
        norms = np.linalg.norm(U.witnesses, axis=1) if len(U) else np.zeros(0)
        witnesses_ok += bool(np.all(norms <= cfg.alpha / math.sqrt(n) * (1 + 1e-12)))
        if first_u is None and len(U):
            first_u = U.points.x
    T = cfg.trials
    hoeff = 1 - math.exp(-2 * cfg.q**2 * M)
    metrics = [
        Metric("zero_loss_fraction", zero_loss / T, 1.0, "eq"),
        Metric("separation_pass_fraction", sep_ok / T, 1.0, "eq"),
        Metric("unstable_set_is_label1_fraction", u_is_label1 / T, 1.0, "eq"),
        Metric("witness_norm_ok_fraction", witnesses_ok / T, 1.0, "eq"),
        Metric(f"freq_unstable_set_ge_{threshold}", enough / T, hoeff, "ge", trials=T),
    ]
    notes = [f"unstable-set threshold floor((1/2 - q) M) = {threshold}"]
    if first_u is None:
        notes.append("no sample produced an unstable point; rate metrics skipped")
        return metrics, notes
    x0 = first_u[0]
    rate = destabilization_rate(victim, x0, cfg.alpha, cfg.draws, stats.child_rng(cfg.seed, f"{tag}/rate"))
    metrics.append(Metric("per_point_flip_rate", rate.rate, 1 - 2.0**-n, "eq", trials=cfg.draws, ci95=rate.ci95))
    pts = distinct_points(first_u, cfg.m)
    uni = universal_rate(victim, pts, cfg.alpha, cfg.draws, stats.child_rng(cfg.seed, f"{tag}/universal"))
    metrics.append(
        Metric(f"universal_flip_rate_m{len(pts)}", uni.rate, 1 - len(pts) / 2.0**n, "ge", trials=cfg.draws, ci95=uni.ci95)
    )
    return metrics, notes


def run_statement_i(cfg: ExperimentConfig) -> ExperimentReport:
    """Zero loss, unstable-set size, per-point typicality and universality for the unstable net."""
    if cfg.spec.variant != "base":
        raise InvalidArgument("statement (i) runs on the base variant")

    def body():
        f, _ = build_twin_pair(cfg.n, cfg.eps, cfg.kappa, cfg.act)
        return _instability_suite(cfg, f, "i")

    return _timed("i", cfg.to_dict(), cfg.seed, body)


def kappa_choices(n: int, eps: float, lam: float, Lam: float) -> tuple[float, float]:
    """Gains whose twin gap is ``lam/2`` and ``2 Lam``."""
    return lam * math.sqrt(n) / eps, 4 * Lam * math.sqrt(n) / eps


def _robust_flip_count(net: ThresholdNet, x: np.ndarray, alpha: float, draws: int, rng) -> int:
    flips = 0
    per_point = max(1, draws // max(1, len(x)))
    for p in x:
        flips += destabilization_rate(net, p, alpha, per_point, rng).successes
    return flips


def run_statement_ii(cfg: ExperimentConfig) -> ExperimentReport:
    """Small- and large-gap twin pairs: both members minimise the loss, one is unstable, one robust."""
    if cfg.spec.variant != "base":
        raise InvalidArgument("statement (ii) runs on the base variant")

    def body():
        n, eps = cfg.n, cfg.eps
        k_small, k_large = kappa_choices(n, eps, cfg.lam, cfg.Lam)
        data = split_dataset(sample_dataset(cfg.spec, cfg.M, stats.child_rng(cfg.seed, "ii/sample")), cfg.r, cfg.s).joined()
        metrics = []
        for tag, kappa in (("lambda", k_small), ("Lambda", k_large), ("kappa", cfg.kappa)):
            f, ft = build_twin_pair(n, eps, kappa, cfg.act)
            gap = theta_inf_dist(f, ft)
            if tag == "lambda":
                metrics.append(Metric("theta_dist_small", gap, cfg.lam, "lt"))
            elif tag == "Lambda":
                metrics.append(Metric("theta_dist_large", gap, cfg.Lam, "gt"))
            else:
                ulp = float(np.spacing(np.max(np.abs(np.concatenate([theta(f), theta(ft)])))))
                metrics.append(Metric("theta_dist_identity", gap, float(twin_gap(n, eps, kappa)), "eq", tolerance=ulp))
            metrics.append(Metric(f"zero_loss_unstable_{tag}", float(not _zero_loss_all(f, data)), 0.0, "eq"))
            metrics.append(Metric(f"zero_loss_robust_{tag}", float(not _zero_loss_all(ft, data)), 0.0, "eq"))
            U = unstable_set(f, data, cfg.alpha)
            metrics.append(Metric(f"unstable_set_size_{tag}", len(U), int(np.sum(data.labels == 1)), "eq"))
            metrics.append(Metric(f"robust_unstable_set_size_{tag}", len(unstable_set(ft, data, cfg.alpha)), 0, "eq"))
            check = verify_robust_on_sample(ft.boundary, data, cfg.alpha)
            metrics.append(Metric(f"robust_certified_{tag}", float(check.robust), 1.0, "eq"))
            metrics.append(
                Metric(f"robust_witness_flips_{tag}", witness_attempt_flips(ft, data.x, cfg.alpha), 0, "eq")
            )
        _, ft = build_twin_pair(n, eps, cfg.kappa, cfg.act)
        flips = _robust_flip_count(ft, data.x[:100], cfg.alpha, cfg.draws, stats.child_rng(cfg.seed, "ii/robust"))
        metrics.append(Metric("robust_random_flip_count", flips, 0, "eq"))
        notes = [f"kappa_small = lam sqrt(n)/eps = {k_small!r}; kappa_large = 4 Lam sqrt(n)/eps = {k_large!r}"]
        return metrics, notes

    return _timed("ii", cfg.to_dict(), cfg.seed, body)


def run_statement_iii(cfg: ExperimentConfig, part: str) -> ExperimentReport:
    """Part ``a``: the robust twin fails on the scaled family. Part ``b``: certificate failure on future draws."""
    if part == "a":
        if cfg.spec.variant != "scaled_cube":
            raise InvalidArgument("statement (iii-a) needs the scaled_cube variant")

        def body_a():
            _, ft = build_twin_pair(cfg.n, cfg.eps, cfg.kappa, cfg.act)
            if ft.boundary != geo.boundary(cfg.n, cfg.spec.vertex_scale):
                raise AssertionError("internal: robust boundary differs from scaled vertex coordinate")
            return _instability_suite(cfg, ft, "iiia")

        return _timed("iiia", cfg.to_dict(), cfg.seed, body_a)
    if part == "b":
        if cfg.spec.variant not in ("shifted_vertices", "base"):
            raise InvalidArgument("statement (iii-b) needs the shifted_vertices variant")

        def body_b():
            rep = future_failure_experiment(cfg.spec, cfg.M, cfg.trials, stats.child_rng(cfg.seed, "iiib"), cfg.alpha)
            metrics = [
                Metric("all_robust_frequency", rep.empirical_prob_all_robust, rep.theory_prob_all_robust, "eq",
                       trials=cfg.trials, ci95=rep.all_robust_ci95),
                Metric("future_failure_frequency", rep.empirical_future_failure, rep.theory_future_failure, "eq",
                       trials=cfg.trials, ci95=rep.future_failure_ci95),
            ]
            notes = [f"first-sample certified radii min = {min(rep.per_point_radius):.17g}"]
            return metrics, notes

        return _timed("iiib", cfg.to_dict(), cfg.seed, body_b)
    raise InvalidArgument("part must be 'a' or 'b'")


def hoeffding_bound(q: float, M: int) -> float:
    return 1 - math.exp(-2 * q * q * M)


def hoeffding_check(q: float, M: int, trials: int, rng, n: int = 4, spec: Optional[DistributionSpec] = None) -> ExperimentReport:
    """Frequency of ``#label-1 >= floor((1/2 - q) M)`` over ``trials`` samples against ``1 - exp(-2 q^2 M)``."""
    if not (0 < q < 0.5):
        raise InvalidArgument(f"q must lie in (0, 1/2), got {q}")
    if int(M) != M or M < 1 or trials < 1:
        raise InvalidArgument("M and trials must be positive integers")
    spec = default_spec(n) if spec is None else spec
    rng = geo._as_rng(rng)
    threshold = label1_count_threshold(q, M)

    def body():
        hits = 0
        chunk = max(1, 500_000 // M)
        for start in range(0, trials, chunk):
            t = min(chunk, trials - start)
            labels = sample_dataset(spec, t * M, rng).labels.reshape(t, M)
            hits += int(np.sum(labels.sum(axis=1) >= threshold))
        bound = hoeffding_bound(q, M)
        grid = [max(1, M // 4), max(1, M // 2), M, 2 * M, 4 * M]
        monotone = all(hoeffding_bound(q, a) <= hoeffding_bound(q, b) for a, b in zip(grid, grid[1:]))
        metrics = [
            Metric(f"freq_label1_ge_{threshold}", hits / trials, bound, "ge", trials=trials),
            Metric("bound_monotone_in_M", float(monotone), 1.0, "eq"),
        ]
        return metrics, [f"threshold floor((1/2 - q) M) = {threshold}"]

    cfg = {"q": q, "M": M, "trials": trials, "spec": spec.to_dict()}
    return _timed("hoeffding", cfg, -1, body)


def run_hoeffding(cfg: ExperimentConfig) -> ExperimentReport:
    rep = hoeffding_check(cfg.q, cfg.M, cfg.trials, stats.child_rng(cfg.seed, "hoeffding"), spec=cfg.spec)
    rep.config = cfg.to_dict()
    rep.seed = cfg.seed
    return rep


def run(statement: str, cfg: ExperimentConfig) -> ExperimentReport:
    if statement == "i":
        return run_statement_i(cfg)
    if statement == "ii":
        return run_statement_ii(cfg)
    if statement == "iiia":
        return run_statement_iii(cfg, "a")
    if statement == "iiib":
        return run_statement_iii(cfg, "b")
    if statement == "hoeffding":
        return run_hoeffding(cfg)
    raise InvalidArgument(f"unknown statement {statement!r}")


def with_spec(cfg: ExperimentConfig, spec: DistributionSpec) -> ExperimentConfig:
    return replace(cfg, spec=spec)
