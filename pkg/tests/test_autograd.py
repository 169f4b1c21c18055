import numpy as np
import pytest

from conftest import random_dataset
from layer_insertion.autograd import (
    GradientSet,
    backprop,
    finite_diff_gradient,
    kink_coordinates,
    max_relative_error,
)
from layer_insertion.insertion import build_fully_extended, init_resnet_identity_block
from layer_insertion.network import NetworkSpec, ParamSet, init_params, objective, param_count
from layer_insertion.numerics import softmax


def random_fnn_spec(rng):
    while True:
        hidden = rng.integers(2, 6, size=rng.integers(1, 3))
        spec = NetworkSpec("fnn", (2, *hidden, 2))
        if param_count(spec) <= 60:
            return spec


def random_resnet_spec(rng):
    while True:
        h = int(rng.integers(2, 5))
        spec = NetworkSpec("resnet", (2,) + (h,) * int(rng.integers(2, 4)) + (2,))
        if param_count(spec) <= 60:
            return spec


@pytest.mark.parametrize("family", ["fnn", "resnet"])
def test_backprop_matches_finite_differences(family):
    rng = np.random.default_rng({"fnn": 101, "resnet": 202}[family])
    make = random_fnn_spec if family == "fnn" else random_resnet_spec
    worst = 0.0
    for i in range(20):
        spec = make(rng)
        params = init_params(spec, seed=1000 + i)
        data = random_dataset(rng, 12)
        _, g = backprop(params, data)
        fd = finite_diff_gradient(params, data, step=1e-6)
        mask = kink_coordinates(params, data, step=1e-6)
        assert mask.mean() < 0.5
        worst = max(worst, max_relative_error(g, fd, mask))
    assert worst <= 1e-5


def test_linear_network_finite_difference(rng):
    params = init_params(NetworkSpec("fnn", (2, 2)), seed=3)
    data = random_dataset(rng, 10)
    _, g = backprop(params, data)
    fd = finite_diff_gradient(params, data)
    np.testing.assert_allclose(g.flat(), fd.flat(), rtol=0, atol=1e-9)


def test_loss_equals_objective(rng):
    for kind, widths in (("fnn", (2, 5, 5, 2)), ("resnet", (2, 3, 3, 3, 2))):
        params = init_params(NetworkSpec(kind, widths), 8)
        data = random_dataset(rng, 25)
        assert abs(backprop(params, data)[0] - objective(params, data)) <= 1e-12


@pytest.mark.parametrize("kind,widths", [("fnn", (2, 4, 4, 2)), ("resnet", (2, 3, 3, 3, 2))])
def test_mean_gradient_is_mean_of_sample_gradients(kind, widths, rng):
    params = init_params(NetworkSpec(kind, widths), 2)
    data = random_dataset(rng, 15)
    _, g = backprop(params, data)
    assert isinstance(g, GradientSet) and g.batch_size == 15
    per = np.mean([backprop(params, data.subset([i]))[1].flat() for i in range(15)], axis=0)
    np.testing.assert_allclose(g.flat(), per, rtol=0, atol=1e-12)


def test_zero_w2_block_gradients_closed_form(rng):
    """A W2 = 0 block has zero W1/b gradients and dW2 = mean g sigma(z)^T."""
    base = init_params(NetworkSpec("resnet", (2, 3, 3, 2)), seed=6)
    blk = init_resnet_identity_block(3, 0.8)
    params = ParamSet(base.spec, entry=base.entry, blocks=[blk], exit=base.exit)
    data = random_dataset(rng, 40)
    _, g = backprop(params, data)
    gb = g.blocks[0]
    assert np.all(gb.w1 == 0.0)
    assert np.all(gb.bias == 0.0)
    # independent evaluation: block is last, so dL/dx_k = exit^T (p - y) / n
    x, y = data.features.T, data.labels.T
    x1 = params.entry @ x
    p = softmax(params.exit @ x1)
    upstream = params.exit.T @ (p - y) / x.shape[1]
    expected = upstream @ np.tanh(0.8 * x1).T
    np.testing.assert_allclose(gb.w2, expected, rtol=1e-12, atol=1e-15)
    assert np.linalg.norm(gb.w2) > 0


def test_inserted_fnn_identity_layer_has_nonzero_gradient(default_split):
    train, _ = default_split
    base = init_params(NetworkSpec("fnn", (2, 5, 2)), seed=1)
    ext, mapping = build_fully_extended(base)
    _, g = backprop(ext, train)
    i = mapping[0][1]
    assert np.linalg.norm(g.layers[i].weight) > 0
    assert np.linalg.norm(g.layers[i].bias) > 0


def test_backprop_rejects_mismatched_labels(rng):
    params = init_params(NetworkSpec("fnn", (2, 3, 3)), 0)
    with pytest.raises(ValueError):
        backprop(params, random_dataset(rng, 4))


def test_finite_diff_step_must_be_positive(rng):
    with pytest.raises(ValueError):
        finite_diff_gradient(init_params(NetworkSpec("fnn", (2, 2)), 0), random_dataset(rng, 3), step=0)
