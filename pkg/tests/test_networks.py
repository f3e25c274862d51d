import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blab import geometry as geo
from blab.errors import InvalidArgument
from blab.networks import (
    RELU,
    ActivationSpec,
    ThresholdNet,
    build_box_net,
    build_regularized,
    build_robust,
    build_twin_pair,
    build_unstable,
    depth_extend,
    forward,
    lipschitz_estimate,
    pre_output,
    theta,
    theta_inf_dist,
    zero_net,
)

ACTIVATIONS = [
    RELU,
    ActivationSpec("relu", theta=0.3),
    ActivationSpec("leaky_relu_difference", theta=-1.7, slope=0.2, shift=2.0),
    ActivationSpec("piecewise_linear_sigmoid", theta=0.0, theta1=1.0),
]
KAPPAS = [1e-6, 1.0, 1e6]


def box_oracle(x, b):
    return (np.max(np.abs(x), axis=-1) <= b).astype(int)


def test_box_net_examples():
    f = build_box_net(2, 1.0, RELU, 1 / math.sqrt(2))
    assert forward(f, np.zeros(2)) == 1
    assert forward(f, np.array([1.0, 1.0])) == 0
    assert f.architecture == (1, 4, 2)


def test_box_net_j0_samples_are_rejected(rng):
    for n in (2, 4, 8):
        f = build_unstable(n)
        x = geo.sample_J0(n, min(0.5, (math.sqrt(n) - 1) / 2), rng, size=2000)
        assert not np.any(forward(f, x))


@pytest.mark.parametrize("act", ACTIVATIONS, ids=lambda a: f"{a.family}-{a.theta}")
@pytest.mark.parametrize("kappa", KAPPAS)
def test_decision_invariance(rng, act, kappa):
    for n in (1, 3, 6, 10):
        b = geo.boundary(n)
        f = build_box_net(n, kappa, act, b)
        x = rng.uniform(-1.5 * b, 1.5 * b, size=(10_000, n))
        np.testing.assert_array_equal(forward(f, x), box_oracle(x, b))
        verts = geo.all_vertices(n)
        assert np.all(pre_output(f, verts) == 0.0)
        assert np.all(forward(f, verts) == 1)


@pytest.mark.parametrize("act", ACTIVATIONS, ids=lambda a: a.family)
def test_robust_net_keeps_scaled_boundary(act):
    n, eps = 4, 0.5
    ft = build_robust(n, eps, 1.0, act)
    verts = geo.all_vertices(n, 1 + eps / 2)
    assert np.all(forward(ft, verts) == 1)
    assert np.all(forward(ft, verts * (1 + 1e-9)) == 0)


def test_activation_validation():
    with pytest.raises(InvalidArgument):
        ActivationSpec("sigmoid")
    with pytest.raises(InvalidArgument):
        ActivationSpec("leaky_relu_difference", slope=1.2)
    with pytest.raises(InvalidArgument):
        ActivationSpec("piecewise_linear_sigmoid", theta=1.0, theta1=0.5)
    with pytest.raises(InvalidArgument):
        build_box_net(2, 1.0, "relu")
    with pytest.raises(InvalidArgument):
        build_box_net(2, 0.0)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_activation_constant_below_threshold(theta0, t):
    for act in (
        ActivationSpec("relu", theta0),
        ActivationSpec("leaky_relu_difference", theta0, slope=0.3, shift=0.5),
        ActivationSpec("piecewise_linear_sigmoid", theta0, theta1=theta0 + 1),
    ):
        if t <= theta0:
            assert act(t) == act.at_threshold == 0.0


def test_forward_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        forward(build_unstable(3), np.zeros(2))


def test_regularized_examples(rng):
    n = 5
    fr = build_regularized(n, 1.0)
    assert forward(fr, np.zeros(n)) == 0.0
    x = rng.uniform(-1, 1, size=(20_000, n))
    assert np.all(forward(fr, x) <= 0)


@pytest.mark.parametrize("beta", [1e-6, 1.0])
def test_regularized_sign_matches_box_net(rng, beta):
    n = 6
    fr = build_regularized(n, beta)
    f = build_box_net(n, beta, RELU, geo.boundary(n))
    x = rng.uniform(-2 * geo.boundary(n), 2 * geo.boundary(n), size=(10_000, n))
    np.testing.assert_array_equal((forward(fr, x) >= 0).astype(int), forward(f, x))


def test_regularized_relu_linearity_on_grid():
    # oracle: every relu term is homogeneous in beta, so doubling beta doubles the output
    g = np.linspace(-1, 1, 41)
    x = np.array(list(itertools.product(g, g)))
    v1 = forward(build_regularized(2, 0.75), x)
    v2 = forward(build_regularized(2, 1.5), x)
    np.testing.assert_allclose(v2, 2 * v1, rtol=1e-12, atol=1e-15)


def test_lipschitz_estimate_examples():
    assert lipschitz_estimate(zero_net(3), 1.0, 100, 0) == 0.0
    n, beta = 4, 1.0
    a = lipschitz_estimate(build_regularized(n, beta), 1.0, 50_000, 3)
    b = lipschitz_estimate(build_regularized(n, beta / 2), 1.0, 50_000, 3)
    assert abs(a / b - 2) <= 0.1
    assert a <= 2 * beta * math.sqrt(n)


def test_lipschitz_rejects_zero_pairs():
    with pytest.raises(InvalidArgument):
        lipschitz_estimate(zero_net(2), 1.0, 0, 0)


def test_theta_length_and_distance():
    f = build_unstable(3)
    assert len(theta(f)) == 6 * 3 + 6 + 6 + 1
    assert theta_inf_dist(f, f) == 0
    with pytest.raises(InvalidArgument):
        theta_inf_dist(f, build_unstable(4))


def test_twin_distance_worked_example():
    # kappa*eps/(2 sqrt(n)) = 1e-3 * 0.4 / 4
    f, ft = build_twin_pair(4, 0.4, 1e-3)
    d = theta_inf_dist(f, ft)
    assert d == pytest.approx(1e-4, rel=1e-12)


@pytest.mark.parametrize("kappa", KAPPAS)
@pytest.mark.parametrize("n,eps", [(2, 0.2), (4, 0.5), (8, 0.5), (10, 1.0)])
def test_twin_distance_one_ulp(n, eps, kappa):
    f, ft = build_twin_pair(n, eps, kappa)
    d = theta_inf_dist(f, ft)
    target = kappa * eps / (2 * math.sqrt(n))
    ulp = np.spacing(np.max(np.abs(np.concatenate([theta(f), theta(ft)]))))
    assert abs(d - target) <= ulp
    # the pair keeps the exact boundary behaviour
    assert np.all(pre_output(f, geo.all_vertices(n)) == 0)
    assert np.all(forward(ft, geo.all_vertices(n, 1 + eps / 2)) == 1)


def _extend_cases():
    return [
        (2, [1, 1, 4, 2]),
        (2, [1, 3, 5, 7, 2]),
        (3, [1, 2, 6, 3]),
        (3, [1, 1, 1, 9, 3]),
    ]


@pytest.mark.parametrize("act", ACTIVATIONS, ids=lambda a: a.family)
@pytest.mark.parametrize("n,arch", _extend_cases())
def test_depth_extend_grid_oracle(act, n, arch):
    f = build_unstable(n, 1.0, act)
    deep = depth_extend(f, arch)
    assert deep.architecture == tuple(arch)
    g = np.linspace(-1, 1, 101 if n == 2 else 41)
    grid = np.array(list(itertools.product(g, repeat=n)))
    grid = np.vstack([grid, geo.all_vertices(n)])
    np.testing.assert_array_equal(forward(deep, grid), forward(f, grid))


def test_depth_extend_same_depth_is_identical():
    f = build_unstable(3)
    same = depth_extend(f, [1, 6, 3])
    np.testing.assert_array_equal(theta(same), theta(f))


def test_depth_extend_rejects_narrow_first_layer():
    with pytest.raises(InvalidArgument):
        depth_extend(build_unstable(3), [1, 2, 5, 3])
    with pytest.raises(InvalidArgument):
        depth_extend(build_unstable(3), [2, 6, 3])
    with pytest.raises(InvalidArgument):
        depth_extend(build_regularized(3, 1.0), [1, 1, 6, 3])


def test_json_round_trip():
    act = ActivationSpec("leaky_relu_difference", theta=0.1, slope=0.25, shift=0.5)
    f = depth_extend(build_robust(3, 0.5, 2.0, act), [1, 2, 7, 3])
    back = ThresholdNet.from_json(f.to_json())
    np.testing.assert_array_equal(theta(back), theta(f))
    assert back.activation == act and back.architecture == f.architecture
    assert back.boundary == f.boundary


def test_parameters_are_read_only():
    f = build_unstable(2)
    with pytest.raises(ValueError):
        f.layers[0].weights[0, 0] = 5.0
