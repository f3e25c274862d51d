"""The counterexample distribution family and dataset utilities.

A draw is a label-1 cube vertex with probability 1/2 (each of the ``2**n``
vertices carrying mass ``1/2**(n+1)``) and otherwise a label-0 point from the
J0 region of a sphere. Three variants are supported:

``base``
    vertices of ``Cb(2/sqrt(n), 0)``; label-0 points uniform on
    ``{|x| = 1, max|x_i| > (1+eps)/sqrt(n)}``.
``scaled_cube``
    vertices of ``Cb(2(1+eps/2)/sqrt(n), 0)``; label-0 points on the sphere of
    radius ``R = 1+eps/2``, inside ``[-1,1]^n`` and outside
    ``Cb(2R(1+eps_t)/sqrt(n), 0)`` with ``eps_t = min(eps, sqrt(n)/R - 1)/2``.
``shifted_vertices``
    as ``base``, but the last ``k`` vertex indices are pushed out by ``1+eps/2``.

Instead of the uniform J0 measure, label-0 mass can sit on finitely many
weighted points (``j0_points``/``j0_weights``), which gives distinct members of
the family with identical label-1 behaviour.
"""
from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

from . import geometry as geo
from .errors import InfeasibleSpec, InvalidArgument

VARIANTS = ("base", "scaled_cube", "shifted_vertices")
_REL_SLACK = 1e-12


class LabeledPoint(NamedTuple):
    x: np.ndarray
    label: int


@dataclass(frozen=True)
class DistributionSpec:
    n: int
    eps: float
    delta: float
    variant: str = "base"
    k: int = 0
    j0_points: Optional[tuple[tuple[float, ...], ...]] = None
    j0_weights: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        geo.check_eps(self.n, self.eps)
        if self.variant not in VARIANTS:
            raise InvalidArgument(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "shifted_vertices":
            if not (1 <= self.k <= 2**self.n):
                raise InvalidArgument(f"shifted_vertices needs 1 <= k <= 2**n, got k={self.k}")
        elif self.k != 0:
            raise InvalidArgument("k is only meaningful for the shifted_vertices variant")
        if not self.delta > 0:
            raise InvalidArgument("delta must be positive")
        if self.delta > self.eps / math.sqrt(self.n) * (1 + _REL_SLACK):
            raise InvalidArgument(f"delta must not exceed eps/sqrt(n) = {self.eps / math.sqrt(self.n):.17g}")
        margin = self.separation_margin
        if self.delta > margin * (1 + _REL_SLACK):
            raise InvalidArgument(
                f"delta={self.delta} exceeds the guaranteed class separation {margin:.17g} of variant {self.variant!r}"
            )
        if self.variant == "scaled_cube":
            self._check_scaled_feasible()
        if (self.j0_points is None) != (self.j0_weights is None):
            raise InvalidArgument("j0_points and j0_weights must be given together")
        if self.j0_points is not None:
            pts = np.asarray(self.j0_points, dtype=float)
            w = np.asarray(self.j0_weights, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != self.n or len(pts) == 0 or len(w) != len(pts):
                raise InvalidArgument("j0_points must be a non-empty (K, n) array with K matching weights")
            if np.any(w < 0) or not math.isclose(float(w.sum()), 1.0, rel_tol=0, abs_tol=1e-9):
                raise InvalidArgument("j0_weights must be non-negative and sum to 1")
            if not np.all(self.label0_member(pts)):
                raise InvalidArgument("every j0 point must lie in the label-0 support region")
            object.__setattr__(self, "j0_points", tuple(tuple(float(v) for v in p) for p in pts))
            object.__setattr__(self, "j0_weights", tuple(float(v) for v in w))

    # -- geometry of the variant -------------------------------------------

    @property
    def vertex_scale(self) -> float:
        return 1.0 + self.eps / 2 if self.variant == "scaled_cube" else 1.0

    @property
    def shifted_scale(self) -> float:
        return 1.0 + self.eps / 2

    @property
    def label0_radius(self) -> float:
        return self.vertex_scale

    @property
    def eps_tilde(self) -> float:
        r = self.vertex_scale
        return min(self.eps, math.sqrt(self.n) / r - 1.0) / 2

    @property
    def label0_lower(self) -> float:
        """Label-0 points have ``max|x_i|`` strictly above this."""
        if self.variant == "scaled_cube":
            return self.vertex_scale * (1.0 + self.eps_tilde) / math.sqrt(self.n)
        return geo.j0_threshold(self.n, self.eps)

    @property
    def label0_upper(self) -> float:
        return 1.0

    @property
    def separation_margin(self) -> float:
        """Lower bound on the distance between differently labelled support points."""
        c = 1.0 / math.sqrt(self.n)
        if self.variant == "scaled_cube":
            return self.vertex_scale * self.eps_tilde * c
        if self.variant == "shifted_vertices":
            return self.eps / 2 * c
        return self.eps * c

    def _check_scaled_feasible(self) -> None:
        r = self.label0_radius
        if self.label0_lower >= self.label0_upper or r > math.sqrt(self.n):
            raise InfeasibleSpec("scaled_cube label-0 region is empty for these (n, eps)")

    def label0_member(self, x, atol: float = 1e-12):
        x = np.asarray(x, dtype=float)
        on_sphere = np.abs(np.linalg.norm(x, axis=-1) - self.label0_radius) <= atol
        m = geo.linf(x)
        return on_sphere & (m > self.label0_lower) & (m <= self.label0_upper)

    def label1_support(self) -> np.ndarray:
        """Every label-1 support point, row ``i`` for vertex index ``i`` (small n only)."""
        verts = geo.all_vertices(self.n, self.vertex_scale)
        if self.variant == "shifted_vertices":
            verts[2**self.n - self.k:] = geo.vertex_signs(
                self.n, np.arange(2**self.n - self.k, 2**self.n)
            ) * geo.boundary(self.n, self.shifted_scale)
        return verts

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        d = {"n": self.n, "eps": self.eps, "delta": self.delta, "variant": self.variant, "k": self.k}
        if self.j0_points is not None:
            d["j0_points"] = [list(p) for p in self.j0_points]
            d["j0_weights"] = list(self.j0_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DistributionSpec":
        pts = d.get("j0_points")
        w = d.get("j0_weights")
        return cls(
            n=int(d["n"]),
            eps=float(d["eps"]),
            delta=float(d["delta"]),
            variant=d.get("variant", "base"),
            k=int(d.get("k", 0)),
            j0_points=None if pts is None else tuple(tuple(p) for p in pts),
            j0_weights=None if w is None else tuple(w),
        )


def default_spec(n: int, eps: Optional[float] = None, variant: str = "base", k: int = 0) -> DistributionSpec:
    """Spec with ``eps = min(0.5, (sqrt(n)-1)/2)`` and delta at the variant's separation margin."""
    if eps is None:
        eps = min(0.5, 0.5 * (math.sqrt(n) - 1))
    probe = DistributionSpec(n=n, eps=eps, delta=eps / math.sqrt(n) * 1e-3, variant=variant, k=k)
    return DistributionSpec(n=n, eps=eps, delta=probe.separation_margin, variant=variant, k=k)


@dataclass
class Dataset:
    """Multiset of labelled points; row ``j`` of ``x`` carries ``labels[j]``."""

    x: np.ndarray
    labels: np.ndarray
    spec: Optional[DistributionSpec] = None
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float)) if len(self.x) else np.zeros((0, self._ndim()))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.x) != len(self.labels):
            raise InvalidArgument("x and labels must have equal length")
        if self.labels.size and not np.all((self.labels == 0) | (self.labels == 1)):
            raise InvalidArgument("labels must be 0 or 1")

    def _ndim(self) -> int:
        if self.spec is not None:
            return self.spec.n
        arr = np.asarray(self.x)
        return arr.shape[1] if arr.ndim == 2 else 0

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[LabeledPoint]:
        for xi, li in zip(self.x, self.labels):
            yield LabeledPoint(xi, int(li))

    def __getitem__(self, item) -> "Dataset":
        return Dataset(self.x[item], self.labels[item], self.spec, self.seed)

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(np.concatenate([self.x, other.x]), np.concatenate([self.labels, other.labels]), self.spec)

    # -- file formats --------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(self.n)] + ["label"])
        for xi, li in zip(self.x, self.labels):
            w.writerow([format(v, ".17g") for v in xi] + [int(li)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        if header[-1] != "label" or any(h != f"x{i + 1}" for i, h in enumerate(header[:-1])):
            raise InvalidArgument("CSV header must be x1,...,xn,label")
        n = len(header) - 1
        x = np.array([[float(v) for v in r[:-1]] for r in body], dtype=float).reshape(len(body), n)
        labels = np.array([int(r[-1]) for r in body], dtype=np.int64)
        return cls(x, labels)

    def to_json_dict(self) -> dict:
        return {
            "spec": None if self.spec is None else self.spec.to_dict(),
            "seed": self.seed,
            "points": [{"x": [float(v) for v in xi], "label": int(li)} for xi, li in zip(self.x, self.labels)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        d = json.loads(text)
        spec = None if d.get("spec") is None else DistributionSpec.from_dict(d["spec"])
        pts = d["points"]
        n = spec.n if spec is not None else (len(pts[0]["x"]) if pts else 0)
        x = np.array([p["x"] for p in pts], dtype=float).reshape(len(pts), n)
        labels = np.array([p["label"] for p in pts], dtype=np.int64)
        return cls(x, labels, spec, d.get("seed"))


def _sample_label0(spec: DistributionSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    if count == 0:
        return np.zeros((0, spec.n))
    if spec.j0_points is not None:
        pts = np.asarray(spec.j0_points)
        idx = rng.choice(len(pts), size=count, p=np.asarray(spec.j0_weights))
        return pts[idx]
    return geo.sample_sphere_shell(
        spec.n, spec.label0_radius, spec.label0_lower, rng, size=count, upper=spec.label0_upper
    )


def _label1_points(spec: DistributionSpec, idx: np.ndarray) -> np.ndarray:
    signs = geo.vertex_signs(spec.n, idx)
    scale = np.full(len(idx), geo.boundary(spec.n, spec.vertex_scale))
    if spec.variant == "shifted_vertices":
        shifted = idx >= (2**spec.n - spec.k)
        scale[shifted] = geo.boundary(spec.n, spec.shifted_scale)
    return signs * scale[:, None]


def sample_with_indices(spec: DistributionSpec, M: int, rng) -> tuple[Dataset, np.ndarray]:
    """Like :func:`sample_dataset` but also returns each point's vertex index (-1 for label 0)."""
    if int(M) != M or M < 1:
        raise InvalidArgument(f"sample size M must be a positive integer, got {M!r}")
    rng = geo._as_rng(rng)
    labels = (rng.random(M) < 0.5).astype(np.int64)
    ones = np.flatnonzero(labels == 1)
    zeros = np.flatnonzero(labels == 0)
    idx = np.full(M, -1, dtype=np.int64)
    idx[ones] = rng.integers(0, 2**spec.n, size=len(ones), dtype=np.int64)
    x = np.empty((M, spec.n))
    x[ones] = _label1_points(spec, idx[ones])
    x[zeros] = _sample_label0(spec, len(zeros), rng)
    return Dataset(x, labels, spec), idx


def sample_dataset(spec: DistributionSpec, M: int, rng) -> Dataset:
    """``M`` i.i.d. labelled draws from the distribution described by ``spec``."""
    return sample_with_indices(spec, M, rng)[0]


@dataclass(frozen=True)
class DatasetSplit:
    train: Dataset
    validation: Dataset

    @property
    def M(self) -> int:
        return len(self.train) + len(self.validation)

    def joined(self) -> Dataset:
        return self.train.concat(self.validation)


def split_dataset(data: Dataset, r: int, s: int) -> DatasetSplit:
    """First ``r`` points become the training multiset, the next ``s`` the validation multiset."""
    if r < 0 or s < 0 or r + s != len(data):
        raise InvalidArgument(f"r + s must equal the dataset size {len(data)}, got r={r}, s={s}")
    return DatasetSplit(data[:r], data[r:r + s])


@dataclass(frozen=True)
class SeparationAudit:
    min_cross_distance: float
    passed: bool


def min_cross_distance(x0: np.ndarray, x1: np.ndarray) -> float:
    if len(x0) == 0 or len(x1) == 0:
        return math.inf
    x0 = np.unique(x0, axis=0)
    x1 = np.unique(x1, axis=0)
    best = math.inf
    step = max(1, 2**20 // max(1, len(x1) * x0.shape[1]))
    for i in range(0, len(x0), step):
        d = np.linalg.norm(x0[i:i + step, None, :] - x1[None, :, :], axis=2)
        best = min(best, float(d.min()))
    return best


def separation_audit(data: Dataset, delta: float) -> SeparationAudit:
    """Minimum distance over differently labelled pairs; passes when it is at least ``delta``."""
    d = min_cross_distance(data.x[data.labels == 0], data.x[data.labels == 1])
    return SeparationAudit(d, d >= delta)


def label1_count_threshold(q, M: int) -> int:
    """``floor((1/2 - q) M)`` evaluated in exact rational arithmetic on the decimal value of ``q``."""
    qf = Fraction(str(q)) if isinstance(q, float) else Fraction(q)
    return math.floor((Fraction(1, 2) - qf) * M)


def stack(datasets: Sequence[Dataset]) -> Dataset:
    return Dataset(np.concatenate([d.x for d in datasets]), np.concatenate([d.labels for d in datasets]))
