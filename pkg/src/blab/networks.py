"""Feed-forward threshold networks and the explicit box-classifier constructions.

A network is ``phi = G^L o act o G^{L-1} o ... o act o G^1`` with affine layers
``G^l x = W^l x + b^l``, followed by ``sign`` (``sign(s) = 1`` for ``s >= 0``,
else 0) or by nothing.

The box classifier with boundary ``b`` and gain ``kappa`` is the two-layer net

    sign( sum_i [g(theta) - g(kappa (x_i - b) + theta)]
        + sum_i [g(theta) - g(kappa (-x_i - b) + theta)] )

which outputs 1 exactly on ``{max_i |x_i| <= b}`` for any admissible ``g`` and
any ``kappa > 0``.
"""
from __future__ import annotations

import json
import math
from decimal import Decimal, localcontext
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geometry as geo
from .errors import InvalidArgument

FAMILIES = ("relu", "leaky_relu_difference", "piecewise_linear_sigmoid")


@dataclass(frozen=True)
class ActivationSpec:
    """An activation constant on ``(-inf, theta)`` and strictly increasing on ``[theta, theta1]``.

    ``relu``: ``max(t - theta, 0)``.
    ``leaky_relu_difference``: ``leaky(t - theta) - leaky(t - theta - shift) - slope * shift``
    with ``leaky`` of negative slope ``slope``; increasing on ``[theta, theta + shift]``.
    ``piecewise_linear_sigmoid``: ``clip(t, theta, theta1) - theta``.

    Every family is normalised to ``g(theta) = 0`` and evaluated branch-wise, so
    the constant region returns the same float for every input.
    """

    family: str = "relu"
    theta: float = 0.0
    slope: float = 0.5
    shift: float = 1.0
    theta1: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"activation family must be one of {FAMILIES}, got {self.family!r}")
        if not math.isfinite(self.theta):
            raise InvalidArgument("theta must be finite")
        if self.family == "leaky_relu_difference":
            if not (0 < self.slope < 1):
                raise InvalidArgument("leaky slope must lie in (0, 1)")
            if not self.shift > 0:
                raise InvalidArgument("leaky shift must be positive")
        if self.family == "piecewise_linear_sigmoid":
            if self.theta1 is None or not self.theta1 > self.theta:
                raise InvalidArgument("piecewise_linear_sigmoid needs theta1 > theta")

    def __call__(self, t):
        u = np.asarray(t, dtype=float) - self.theta
        if self.family == "relu":
            return np.where(u > 0, u, 0.0)
        if self.family == "leaky_relu_difference":
            # leaky(u) - leaky(u - c) is a*c for u < 0, (1-a)u + a*c on [0, c], c beyond
            a, c = self.slope, self.shift
            return np.where(u <= 0, 0.0, np.where(u < c, (1 - a) * u, (1 - a) * c))
        return np.clip(u, 0.0, self.theta1 - self.theta)

    @property
    def lipschitz(self) -> float:
        return 1 - self.slope if self.family == "leaky_relu_difference" else 1.0

    @property
    def at_threshold(self) -> float:
        """``g(theta)``."""
        return float(self(self.theta))

    def to_dict(self) -> dict:
        d = {"family": self.family, "theta": self.theta}
        if self.family == "leaky_relu_difference":
            d.update(slope=self.slope, shift=self.shift)
        if self.family == "piecewise_linear_sigmoid":
            d["theta1"] = self.theta1
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ActivationSpec":
        return cls(**d)


RELU = ActivationSpec()


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, ndmin=2)
        b = np.array(self.biases, dtype=float).reshape(-1)
        if w.shape[0] != b.shape[0]:
            raise InvalidArgument(f"layer has {w.shape[0]} rows but {b.shape[0]} biases")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape


@dataclass(frozen=True, eq=False)
class ThresholdNet:
    """Immutable feed-forward net.

    ``boundary`` records the half-side of the decision cube for nets built by
    :func:`build_box_net` (and carried through :func:`depth_extend`); it is
    ``None`` for anything else.
    """

    layers: tuple[Layer, ...]
    activation: ActivationSpec = RELU
    output_rule: str = "sign"
    boundary: Optional[float] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise InvalidArgument("a network needs at least one layer")
        if self.output_rule not in ("sign", "identity"):
            raise InvalidArgument("output_rule must be 'sign' or 'identity'")
        for prev, cur in zip(layers, layers[1:]):
            if cur.shape[1] != prev.shape[0]:
                raise InvalidArgument(f"dimension chain broken: {prev.shape} -> {cur.shape}")
        if layers[-1].shape[0] != 1:
            raise InvalidArgument("the output layer must have width 1")
        object.__setattr__(self, "layers", layers)

    @property
    def n(self) -> int:
        return self.layers[0].shape[1]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def architecture(self) -> tuple[int, ...]:
        """``(N_L = 1, ..., N_1, N_0 = n)``."""
        return tuple(l.shape[0] for l in reversed(self.layers)) + (self.n,)

    def __call__(self, x):
        return forward(self, x)

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "architecture": list(self.architecture),
            "activation": self.activation.to_dict(),
            "layers": [{"weights": l.weights.tolist(), "biases": l.biases.tolist()} for l in self.layers],
            "output_rule": self.output_rule,
            "boundary": self.boundary,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdNet":
        layers = tuple(Layer(np.array(l["weights"], dtype=float), np.array(l["biases"], dtype=float)) for l in d["layers"])
        net = cls(
            layers,
            ActivationSpec.from_dict(d["activation"]),
            d.get("output_rule", "sign"),
            d.get("boundary"),
            d.get("meta", {}),
        )
        if "architecture" in d and tuple(d["architecture"]) != net.architecture:
            raise InvalidArgument("declared architecture does not match the layer shapes")
        return net

    @classmethod
    def from_json(cls, text: str) -> "ThresholdNet":
        return cls.from_dict(json.loads(text))


def pre_output(net: ThresholdNet, x) -> np.ndarray:
    """Value of the last affine layer, before ``sign``. Row-wise for 2-D input."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.n:
        raise InvalidArgument(f"input has dimension {x.shape[-1]}, network expects {net.n}")
    h = x
    for i, layer in enumerate(net.layers):
        h = h @ layer.weights.T + layer.biases
        if i < len(net.layers) - 1:
            h = net.activation(h)
    return h[..., 0]


def forward(net: ThresholdNet, x):
    """Network output: integer 0/1 under the sign rule, real otherwise."""
    s = pre_output(net, x)
    if net.output_rule == "sign":
        out = (s >= 0).astype(np.int64)
        return int(out) if np.ndim(out) == 0 else out
    return float(s) if np.ndim(s) == 0 else s


def _hidden_bias(kappa: float, b: float, theta: float) -> float:
    """Bias ``theta - kappa*b``, nudged down so a point with coordinate exactly ``b`` lands at or below ``theta``."""
    kb = kappa * b
    bias = theta - kb
    while kb + bias > theta:
        bias = np.nextafter(bias, -math.inf)
    return float(bias)


def build_box_net(
    n: int,
    kappa: float,
    act: ActivationSpec = RELU,
    boundary: Optional[float] = None,
    output_rule: str = "sign",
    hidden_bias: Optional[float] = None,
) -> ThresholdNet:
    """Two-layer net with ``2n`` hidden units deciding ``max_i |x_i| <= boundary``.

    ``boundary`` defaults to ``1/sqrt(n)``. Pass ``geometry.boundary(n, 1 + eps/2)``
    for the robust twin. ``hidden_bias`` overrides the first-layer bias; it must
    not exceed the default, otherwise points on the boundary would be rejected.
    """
    if n < 1 or int(n) != n:
        raise InvalidArgument("n must be a positive integer")
    if not (kappa > 0 and math.isfinite(kappa)):
        raise InvalidArgument("kappa must be a positive finite number")
    if not isinstance(act, ActivationSpec):
        raise InvalidArgument("act must be an ActivationSpec")
    b = geo.inv_sqrt(n) if boundary is None else float(boundary)
    if not b > 0:
        raise InvalidArgument("boundary must be positive")
    bias = _hidden_bias(kappa, b, act.theta)
    if hidden_bias is not None:
        if hidden_bias > bias:
            raise InvalidArgument("hidden_bias would move the decision boundary inside the cube")
        bias = float(hidden_bias)
    eye = np.eye(n)
    w1 = np.vstack([kappa * eye, -kappa * eye])
    b1 = np.full(2 * n, bias)
    w2 = -np.ones((1, 2 * n))
    b2 = np.array([2 * n * act.at_threshold])
    meta = {"kind": "box", "kappa": kappa}
    return ThresholdNet((Layer(w1, b1), Layer(w2, b2)), act, output_rule, b, meta)


def build_unstable(n: int, kappa: float = 1.0, act: ActivationSpec = RELU) -> ThresholdNet:
    return build_box_net(n, kappa, act, geo.boundary(n))


def build_robust(n: int, eps: float, kappa: float = 1.0, act: ActivationSpec = RELU) -> ThresholdNet:
    return build_box_net(n, kappa, act, geo.boundary(n, 1.0 + eps / 2))


def twin_gap(n: int, eps: float, kappa: float) -> Decimal:
    """``kappa * eps / (2 sqrt(n))`` to 40 significant digits."""
    with localcontext() as ctx:
        ctx.prec = 40
        return Decimal(kappa) * Decimal(eps) / (2 * Decimal(n).sqrt())


def build_twin_pair(
    n: int, eps: float, kappa: float = 1.0, act: ActivationSpec = RELU
) -> tuple[ThresholdNet, ThresholdNet]:
    """Unstable net (boundary ``1/sqrt(n)``) and robust twin (boundary ``(1+eps/2)/sqrt(n)``).

    The two nets share every weight. Each hidden bias may be lowered by a few
    ulps below its default, which keeps boundary points classified 1. Of those
    choices, the pair whose bias gap is closest to ``kappa*eps/(2 sqrt(n))`` is
    returned, so the gap is within half a bias ulp of that value.
    """
    geo.check_eps(n, eps)
    b, bt = geo.boundary(n), geo.boundary(n, 1.0 + eps / 2)
    base, base_t = _hidden_bias(kappa, b, act.theta), _hidden_bias(kappa, bt, act.theta)
    target = twin_gap(n, eps, kappa)

    def lowered(v: float, steps: int) -> float:
        for _ in range(steps):
            v = float(np.nextafter(v, -math.inf))
        return v

    best = None
    for j in range(4):
        for i in range(4):
            lo, lo_t = lowered(base, j), lowered(base_t, i)
            err = abs(Decimal(abs(lo_t - lo)) - target)
            if best is None or err < best[0]:
                best = (err, lo, lo_t)
    _, bias, bias_t = best
    f = build_box_net(n, kappa, act, b, hidden_bias=bias)
    ft = build_box_net(n, kappa, act, bt, hidden_bias=bias_t)
    f.meta.update(kind="unstable")
    ft.meta.update(kind="robust", eps=eps)
    return f, ft


def build_regularized(n: int, beta: float, act: ActivationSpec = RELU) -> ThresholdNet:
    """Real-valued core: zero on ``Cb(2/sqrt(n), 0)``, negative outside, gain ``beta``."""
    if not (beta > 0 and math.isfinite(beta)):
        raise InvalidArgument("beta must be a positive finite number")
    net = build_box_net(n, beta, act, geo.boundary(n), output_rule="identity")
    return ThresholdNet(net.layers, act, "identity", net.boundary, {"kind": "regularized", "beta": beta})


def depth_extend(net: ThresholdNet, arch: Sequence[int]) -> ThresholdNet:
    """Deeper (and/or wider) net computing the same 0/1 map as a two-layer sign net.

    ``arch`` is ``(1, N_{L-1}, ..., N_1, n)``. With ``s`` the pre-sign value of
    the core, layer 2 computes ``g(theta - s)``, which equals ``g(theta)``
    exactly when ``s >= 0``. Later layers re-apply ``g(t - g(theta) + theta)``,
    and the output is ``sign(g(theta) - t)``. Extra width is zero-weight padding.
    """
    arch = [int(a) for a in arch]
    if net.depth != 2 or net.output_rule != "sign":
        raise InvalidArgument("depth_extend expects a two-layer sign network")
    n = net.n
    L = len(arch) - 1
    if L < 2:
        raise InvalidArgument("architecture needs L >= 2 layers")
    if arch[0] != 1 or arch[-1] != n:
        raise InvalidArgument(f"architecture must start with 1 and end with n={n}")
    if arch[-2] < max(2 * n, net.layers[0].shape[0]):
        raise InvalidArgument(f"N_1 must be at least 2n = {2 * n} (and the core's width)")
    if any(w < 1 for w in arch[1:-2]):
        raise InvalidArgument("intermediate widths must be at least 1")

    act = net.activation
    g0 = act.at_threshold
    widths = list(reversed(arch))  # n, N_1, ..., N_{L-1}, 1
    core1, core2 = net.layers
    h = core1.shape[0]

    w1 = np.zeros((widths[1], n))
    b1 = np.zeros(widths[1])
    w1[:h] = core1.weights
    b1[:h] = core1.biases
    layers = [Layer(w1, b1)]

    if L == 2:
        w2 = np.zeros((1, widths[1]))
        w2[:, :h] = core2.weights
        layers.append(Layer(w2, core2.biases))
    else:
        # carry unit: g(theta - s), s = W2 h + b2
        w = np.zeros((widths[2], widths[1]))
        b = np.zeros(widths[2])
        w[0, :h] = -core2.weights[0]
        b[0] = act.theta - core2.biases[0]
        layers.append(Layer(w, b))
        for l in range(3, L):
            w = np.zeros((widths[l], widths[l - 1]))
            b = np.zeros(widths[l])
            w[0, 0] = 1.0
            b[0] = act.theta - g0
            layers.append(Layer(w, b))
        w = np.zeros((1, widths[L - 1]))
        w[0, 0] = -1.0
        layers.append(Layer(w, np.array([g0])))

    meta = dict(net.meta, depth_extended_from=list(net.architecture))
    out = ThresholdNet(tuple(layers), act, "sign", net.boundary, meta)
    if out.architecture != tuple(arch):
        raise AssertionError("internal: built architecture differs from request")
    return out


def theta(net: ThresholdNet) -> np.ndarray:
    """All weights and biases, layer by layer, weights (row-major) before biases."""
    return np.concatenate([np.concatenate([l.weights.ravel(), l.biases]) for l in net.layers])


def theta_inf_dist(a, b) -> float:
    """``max |a_j - b_j|`` between two parameter vectors (or two nets)."""
    a = theta(a) if isinstance(a, ThresholdNet) else np.asarray(a, dtype=float)
    b = theta(b) if isinstance(b, ThresholdNet) else np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidArgument(f"parameter vectors differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)))


def lipschitz_estimate(net: ThresholdNet, region: float, pairs: int, rng) -> float:
    """Sampled lower bound ``max |f(x) - f(y)| / |x - y|`` over uniform pairs in ``[-region, region]^n``."""
    if pairs < 1:
        raise InvalidArgument("pairs must be at least 1")
    rng = geo._as_rng(rng)
    best = 0.0
    for start in range(0, pairs, 100_000):
        k = min(100_000, pairs - start)
        x = rng.uniform(-region, region, size=(k, net.n))
        y = rng.uniform(-region, region, size=(k, net.n))
        fx = np.asarray(forward(net, x), dtype=float)
        fy = np.asarray(forward(net, y), dtype=float)
        d = np.linalg.norm(x - y, axis=1)
        ok = d > 0
        if np.any(ok):
            best = max(best, float(np.max(np.abs(fx - fy)[ok] / d[ok])))
    return best


def zero_net(n: int) -> ThresholdNet:
    """Identity-output net that is identically zero."""
    return ThresholdNet((Layer(np.zeros((1, n)), np.zeros(1)),), RELU, "identity")
