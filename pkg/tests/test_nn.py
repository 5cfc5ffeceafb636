"""Numeric core: forward oracles and finite-difference gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fovea import nn
from oracles import assert_grads_close, conv2d_naive, finite_difference_grad, maxpool2x2_naive


def t4(arr, dtype=np.float32):
    return nn.Tensor4(np.asarray(arr, dtype=dtype))


def rand4(rng, shape, dtype=np.float64):
    return nn.Tensor4(rng.standard_normal(shape).astype(dtype))


# ---------------------------------------------------------------- conv forward

def test_conv_identity_kernel():
    rng = np.random.default_rng(0)
    x = rand4(rng, (2, 1, 6, 6), np.float32)
    layer = nn.ConvLayer(np.ones((1, 1, 1, 1), np.float32), np.zeros(1, np.float32))
    y = nn.conv2d_forward(x, layer)
    np.testing.assert_array_equal(y.values, x.values)


def test_conv_box_kernel_counts_padding():
    x = t4(np.ones((1, 1, 5, 5)))
    layer = nn.ConvLayer(np.ones((1, 1, 3, 3), np.float32), np.zeros(1, np.float32))
    y = nn.conv2d_forward(x, layer).values[0, 0]
    assert y[2, 2] == 9.0
    assert y[0, 0] == 4.0
    assert y[0, 2] == 6.0


def test_conv_bias_added_per_filter():
    x = t4(np.zeros((1, 2, 4, 4)))
    layer = nn.ConvLayer(np.zeros((3, 2, 3, 3), np.float32), np.array([1.0, -2.0, 0.5], np.float32))
    y = nn.conv2d_forward(x, layer).values
    for f, b in enumerate([1.0, -2.0, 0.5]):
        assert np.all(y[:, f] == b)


@pytest.mark.parametrize("k", [1, 3, 5, 7])
def test_conv_matches_naive_loops(k):
    rng = np.random.default_rng(k)
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((4, 3, k, k))
    b = rng.standard_normal(4)
    got = nn.conv2d_forward(nn.Tensor4(x), nn.ConvLayer(w, b)).values
    want = conv2d_naive(x, w, b)
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)


def test_conv_output_shape_preserved():
    x = t4(np.zeros((3, 5, 10, 14)))
    layer = nn.ConvLayer(np.zeros((7, 5, 9, 9), np.float32), np.zeros(7, np.float32))
    assert nn.conv2d_forward(x, layer).dims == (3, 7, 10, 14)


def test_conv_channel_mismatch_raises():
    x = t4(np.zeros((1, 3, 4, 4)))
    layer = nn.ConvLayer(np.zeros((2, 4, 3, 3), np.float32), np.zeros(2, np.float32))
    with pytest.raises(nn.DimensionError, match="channels"):
        nn.conv2d_forward(x, layer)


def test_even_kernel_rejected():
    with pytest.raises(nn.DimensionError):
        nn.ConvLayer(np.zeros((1, 1, 2, 2), np.float32), np.zeros(1, np.float32))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_conv_is_linear_in_input(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((2, 2, 3, 3))
    layer = nn.ConvLayer(w, np.zeros(2))
    a = rng.standard_normal((1, 2, 5, 5))
    b = rng.standard_normal((1, 2, 5, 5))
    ya = nn.conv2d_forward(nn.Tensor4(a), layer).values
    yb = nn.conv2d_forward(nn.Tensor4(b), layer).values
    yab = nn.conv2d_forward(nn.Tensor4(2.0 * a - 3.0 * b), layer).values
    np.testing.assert_allclose(yab, 2.0 * ya - 3.0 * yb, rtol=1e-9, atol=1e-10)


# --------------------------------------------------------------- conv backward

def _conv_fd_setup(seed, k=3, shape=(2, 3, 6, 6), filters=4):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    w = rng.standard_normal((filters, shape[1], k, k))
    b = rng.standard_normal(filters)
    proj = rng.standard_normal((shape[0], filters, shape[2], shape[3]))
    return x, w, b, proj


@pytest.mark.parametrize("k", [1, 3, 5])
def test_conv_input_gradient_matches_fd(k):
    x, w, b, proj = _conv_fd_setup(10 + k, k=k)
    layer = nn.ConvLayer(w, b)

    def f(xv):
        return float(np.sum(nn.conv2d_forward(nn.Tensor4(xv), layer).values * proj))

    gx, _, _ = nn.conv2d_backward(nn.Tensor4(proj), nn.Tensor4(x), layer)
    assert_grads_close(gx.values, finite_difference_grad(f, x.copy()), rtol=1e-6)


def test_conv_weight_gradient_matches_fd():
    x, w, b, proj = _conv_fd_setup(20)

    def f(wv):
        return float(np.sum(nn.conv2d_forward(nn.Tensor4(x), nn.ConvLayer(wv, b)).values * proj))

    _, gw, _ = nn.conv2d_backward(nn.Tensor4(proj), nn.Tensor4(x), nn.ConvLayer(w, b))
    assert_grads_close(gw, finite_difference_grad(f, w.copy()), rtol=1e-6)


def test_conv_bias_gradient_matches_fd():
    x, w, b, proj = _conv_fd_setup(30)

    def f(bv):
        return float(np.sum(nn.conv2d_forward(nn.Tensor4(x), nn.ConvLayer(w, bv)).values * proj))

    _, _, gb = nn.conv2d_backward(nn.Tensor4(proj), nn.Tensor4(x), nn.ConvLayer(w, b))
    assert_grads_close(gb, finite_difference_grad(f, b.copy()), rtol=1e-6)


# -------------------------------------------------------------------- pooling

def test_pool_simple_window():
    x = t4([[[[1.0, 2.0], [3.0, 4.0]]]])
    y, argmax = nn.maxpool2x2_forward(x)
    assert y.values.reshape(-1).tolist() == [4.0]
    assert argmax.reshape(-1).tolist() == [3]


def test_pool_tie_takes_first_in_scan_order():
    x = t4(np.full((1, 1, 4, 4), 7.0))
    y, argmax = nn.maxpool2x2_forward(x)
    assert np.all(y.values == 7.0)
    assert np.all(argmax == 0)


def test_pool_matches_naive():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 6, 6))
    y, _ = nn.maxpool2x2_forward(nn.Tensor4(x))
    np.testing.assert_array_equal(y.values, maxpool2x2_naive(x))


def test_pool_odd_dims_rejected():
    with pytest.raises(nn.DimensionError):
        nn.maxpool2x2_forward(t4(np.zeros((1, 1, 5, 4))))


def test_pool_backward_routes_to_argmax_only():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 2, 6, 6))
    y, argmax = nn.maxpool2x2_forward(nn.Tensor4(x))
    g = rng.standard_normal(y.dims)
    gx = nn.maxpool2x2_backward(nn.Tensor4(g), argmax).values
    # every gradient value lands in exactly one cell per window, sums preserved
    assert gx.shape == x.shape
    np.testing.assert_allclose(
        gx.reshape(2, 2, 3, 2, 3, 2).sum(axis=(3, 5)), g, rtol=1e-12
    )
    assert np.count_nonzero(gx) <= g.size


def test_pool_backward_matches_fd():
    rng = np.random.default_rng(5)
    # well-separated values so the argmax is locally stable under FD nudges
    x = rng.permutation(np.arange(72, dtype=np.float64)).reshape(1, 2, 6, 6)
    proj = rng.standard_normal((1, 2, 3, 3))

    def f(xv):
        return float(np.sum(nn.maxpool2x2_forward(nn.Tensor4(xv))[0].values * proj))

    _, argmax = nn.maxpool2x2_forward(nn.Tensor4(x))
    gx = nn.maxpool2x2_backward(nn.Tensor4(proj), argmax).values
    assert_grads_close(gx, finite_difference_grad(f, x.copy()), rtol=1e-6)


# ---------------------------------------------------------------- activations

def test_relu_values():
    y = nn.activation_forward(t4([[[[-1.0, 0.0, 2.0, -0.5]]]]), "relu")
    assert y.values.reshape(-1).tolist() == [0.0, 0.0, 2.0, 0.0]


def test_leaky_relu_values():
    y = nn.activation_forward(t4([[[[-2.0, 3.0]]]]), "leaky_relu", slope=0.01)
    np.testing.assert_allclose(y.values.reshape(-1), [-0.02, 3.0], rtol=1e-6)


def test_elu_values():
    y = nn.activation_forward(t4([[[[-1.0, 1.5]]]], np.float64), "elu", alpha=1.0)
    np.testing.assert_allclose(y.values.reshape(-1), [np.expm1(-1.0), 1.5], rtol=1e-12)


def test_unknown_activation_rejected():
    with pytest.raises(ValueError, match="unknown activation"):
        nn.activation_forward(t4(np.zeros((1, 1, 2, 2))), "tanh")


@pytest.mark.parametrize("kind,kwargs", [
    ("relu", {}),
    ("leaky_relu", {"slope": 0.01}),
    ("leaky_relu", {"slope": 0.2}),
    ("elu", {"alpha": 1.0}),
    ("elu", {"alpha": 0.7}),
])
def test_activation_gradient_matches_fd(kind, kwargs):
    rng = np.random.default_rng(6)
    # keep values away from the origin kink where FD is ill-defined
    x = rng.standard_normal((2, 2, 4, 4))
    x = np.where(np.abs(x) < 1e-2, 0.5, x)
    proj = rng.standard_normal(x.shape)

    def f(xv):
        return float(np.sum(nn.activation_forward(nn.Tensor4(xv), kind, **kwargs).values * proj))

    g = nn.activation_backward(nn.Tensor4(proj), nn.Tensor4(x), kind, **kwargs)
    assert_grads_close(g.values, finite_difference_grad(f, x.copy()), rtol=1e-6)


def test_elu_continuous_at_zero():
    eps = 1e-7
    y = nn.activation_forward(t4([[[[-eps, 0.0, eps]]]], np.float64), "elu")
    np.testing.assert_allclose(y.values.reshape(-1), [-eps, 0.0, eps], atol=1e-13)


# -------------------------------------------------------------------- dropout

def test_dropout_identity_when_not_training():
    rng = np.random.default_rng(7)
    x = rand4(rng, (2, 3, 8, 8), np.float32)
    y = nn.dropout(x, rate=0.5, seed=123, training=False)
    np.testing.assert_array_equal(y.values, x.values)


def test_dropout_identity_at_rate_zero():
    rng = np.random.default_rng(8)
    x = rand4(rng, (1, 1, 4, 4), np.float32)
    y = nn.dropout(x, rate=0.0, seed=9, training=True)
    np.testing.assert_array_equal(y.values, x.values)


def test_dropout_statistics_and_scaling():
    x = nn.Tensor4(np.ones((1, 1, 1000, 1000), np.float32))
    y = nn.dropout(x, rate=0.5, seed=42, training=True).values
    kept = y != 0.0
    assert abs(kept.mean() - 0.5) < 0.01
    np.testing.assert_allclose(y[kept], 2.0, rtol=1e-6)  # survivors scaled by 1/(1-rate)
    assert abs(y.mean() - 1.0) < 0.02  # expectation preserved


def test_dropout_same_seed_same_mask():
    rng = np.random.default_rng(9)
    x = rand4(rng, (2, 4, 8, 8), np.float32)
    a = nn.dropout(x, 0.5, seed=77, training=True).values
    b = nn.dropout(x, 0.5, seed=77, training=True).values
    c = nn.dropout(x, 0.5, seed=78, training=True).values
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_dropout_backward_applies_same_mask():
    rng = np.random.default_rng(10)
    x = rand4(rng, (1, 2, 16, 16), np.float64)
    y = nn.dropout(x, 0.5, seed=5, training=True)
    mask = y.values / np.where(x.values == 0, 1, x.values)  # 0 or 2 per cell
    g = rand4(rng, x.dims, np.float64)
    gx = nn.dropout_backward(g, 0.5, seed=5, training=True)
    np.testing.assert_allclose(gx.values, g.values * mask, rtol=1e-12)


def test_dropout_invalid_rate_rejected():
    x = t4(np.zeros((1, 1, 2, 2)))
    for rate in (-0.1, 1.0, 1.5):
        with pytest.raises(ValueError):
            nn.dropout(x, rate, seed=0, training=True)


# ------------------------------------------------------------------------ mse

def test_mse_known_value():
    loss, grad = nn.mse_loss(t4([[[[1.0, 2.0]]]]), t4([[[[0.0, 4.0]]]]))
    assert loss == pytest.approx((1.0 + 4.0) / 2.0)
    np.testing.assert_allclose(grad.values.reshape(-1), [1.0, -2.0], rtol=1e-6)


def test_mse_zero_at_equality():
    rng = np.random.default_rng(11)
    x = rand4(rng, (2, 1, 4, 4), np.float32)
    loss, grad = nn.mse_loss(x, nn.Tensor4(x.values.copy()))
    assert loss == 0.0
    assert np.all(grad.values == 0.0)


def test_mse_gradient_matches_fd():
    rng = np.random.default_rng(12)
    pred = rng.standard_normal((2, 1, 5, 5))
    target = rng.standard_normal((2, 1, 5, 5))

    def f(pv):
        return nn.mse_loss(nn.Tensor4(pv), nn.Tensor4(target))[0]

    _, grad = nn.mse_loss(nn.Tensor4(pred), nn.Tensor4(target))
    assert_grads_close(grad.values, finite_difference_grad(f, pred.copy()), rtol=1e-6)


def test_mse_shape_mismatch_raises():
    with pytest.raises(nn.DimensionError):
        nn.mse_loss(t4(np.zeros((1, 1, 2, 2))), t4(np.zeros((1, 1, 2, 3))))


# ----------------------------------------------------------------------- adam

def test_adam_zero_gradient_keeps_params():
    params = np.array([1.0, -2.0, 3.0], np.float64)
    state = nn.AdamState.fresh(3, lr=0.1)
    new, state2 = nn.adam_step(params, np.zeros(3), state)
    np.testing.assert_allclose(new, params, atol=1e-12)
    assert state2.step == 1


def test_adam_first_step_is_signed_lr():
    # bias correction makes the first update lr * g / (|g| + eps') ~= lr * sign(g)
    params = np.zeros(4, np.float64)
    grads = np.array([3.0, -0.5, 10.0, -1e-3])
    new, _ = nn.adam_step(params, grads, nn.AdamState.fresh(4, lr=0.01))
    np.testing.assert_allclose(new, -0.01 * np.sign(grads), rtol=1e-4)


def test_adam_minimizes_quadratic():
    w = np.array([5.0], np.float64)
    state = nn.AdamState.fresh(1, lr=0.5)
    trail = [abs(w[0])]
    for _ in range(50):
        w, state = nn.adam_step(w, 2.0 * w, state)
        trail.append(abs(w[0]))
    assert trail[-1] < 0.1
    assert trail[-1] < trail[0]


def test_adam_state_is_not_mutated():
    state = nn.AdamState.fresh(2, lr=0.1)
    m0 = state.m.copy()
    nn.adam_step(np.ones(2), np.ones(2), state)
    np.testing.assert_array_equal(state.m, m0)
    assert state.step == 0


def test_adam_shape_mismatch_raises():
    with pytest.raises(nn.DimensionError):
        nn.adam_step(np.ones(3), np.ones(4), nn.AdamState.fresh(3, lr=0.1))


# --------------------------------------------------------------------- xavier

def test_xavier_bounds_and_zero_bias():
    layer = nn.ConvLayer(np.empty((32, 5, 9, 9), np.float32), np.ones(32, np.float32))
    init = nn.xavier_init(layer, seed=0)
    fan_in, fan_out = 5 * 81, 32 * 81
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    assert np.all(np.abs(init.weights) <= bound)
    assert np.all(init.bias == 0.0)
    assert init.weights.dtype == np.float32


def test_xavier_variance_near_uniform_moment():
    # var of U(-b, b) is b^2/3 = 2/(fan_in+fan_out)
    layer = nn.ConvLayer(np.empty((256, 256, 3, 3), np.float32), np.zeros(256, np.float32))
    init = nn.xavier_init(layer, seed=1)
    expected = 2.0 / (256 * 9 + 256 * 9)
    assert abs(init.weights.var() / expected - 1.0) < 0.1
    assert abs(init.weights.mean()) < 1e-3


def test_xavier_deterministic_per_seed():
    layer = nn.ConvLayer(np.empty((8, 4, 5, 5), np.float32), np.zeros(8, np.float32))
    a = nn.xavier_init(layer, seed=7).weights
    b = nn.xavier_init(layer, seed=7).weights
    c = nn.xavier_init(layer, seed=8).weights
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


# ------------------------------------------------------------------ float64 path

def test_all_ops_preserve_float64():
    rng = np.random.default_rng(13)
    x = nn.Tensor4(rng.standard_normal((1, 2, 4, 4)))
    layer = nn.ConvLayer(rng.standard_normal((2, 2, 3, 3)), rng.standard_normal(2))
    y = nn.conv2d_forward(x, layer)
    assert y.values.dtype == np.float64
    p, _ = nn.maxpool2x2_forward(y)
    assert p.values.dtype == np.float64
    a = nn.activation_forward(p, "elu")
    assert a.values.dtype == np.float64
    d = nn.dropout(a, 0.5, seed=1, training=True)
    assert d.values.dtype == np.float64
    _, g = nn.mse_loss(d, nn.Tensor4(np.zeros_like(d.values)))
    assert g.values.dtype == np.float64
