import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tfbs_moe import nn_core as nn
from tfbs_moe.seqdata import encode_sequence


def naive_conv(kernels, bias, x):
    """Direct loops over (batch, filter, position, offset, channel)."""
    B, L, C = x.shape
    F, M, _ = kernels.shape
    out = np.zeros((B, F, L - M + 1))
    for b in range(B):
        for f in range(F):
            for j in range(L - M + 1):
                acc = 0.0
                for m in range(M):
                    for c in range(C):
                        acc += kernels[f, m, c] * x[b, j + m, c]
                out[b, f, j] = acc + bias[f]
    return out


def test_conv_indicator_filter():
    layer = nn.ConvLayer(np.array([[[1.0, 0, 0, 0]]]), np.zeros(1))
    out, _ = nn.conv1d_forward(layer, encode_sequence("AC").matrix)
    np.testing.assert_array_equal(out[0, 0], [1, 0])


def test_conv_zero_kernels_give_bias():
    layer = nn.ConvLayer(np.zeros((2, 3, 4)), np.array([0.5, -1.0]))
    out, _ = nn.conv1d_forward(layer, encode_sequence("ACGTAC").matrix)
    assert np.all(out[0, 0] == 0.5) and np.all(out[0, 1] == -1.0)


def test_conv_all_ones_width_two():
    kernels = np.ones((1, 2, 4))
    x = encode_sequence("AA").matrix[None]
    expected = naive_conv(kernels, np.zeros(1), x)
    assert expected.tolist() == [[[2.0]]]
    out, _ = nn.conv1d_forward(nn.ConvLayer(kernels, np.zeros(1)), x)
    np.testing.assert_array_equal(out, expected)


def test_conv_too_short_raises():
    with pytest.raises(ValueError):
        nn.conv1d_forward(nn.ConvLayer(np.ones((1, 5, 4)), np.zeros(1)), encode_sequence("ACG").matrix)


def test_conv_matches_naive_loops_exactly():
    # integer-valued operands: every partial sum is exact, so summation order cannot matter
    rng = np.random.default_rng(0)
    for _ in range(200):
        F, M = rng.integers(1, 9, 2)
        L = rng.integers(M, 9)
        k, b = rng.integers(-8, 9, (F, M, 4)).astype(float), rng.integers(-8, 9, F).astype(float)
        x = np.eye(4)[rng.integers(0, 4, (2, L))] if rng.random() < 0.5 else rng.integers(-4, 5, (2, L, 4)) * 1.0
        out, _ = nn.conv1d_forward(nn.ConvLayer(k, b), x)
        assert np.array_equal(out, naive_conv(k, b, x))


def test_conv_matches_naive_loops_real_valued():
    rng = np.random.default_rng(0)
    for _ in range(200):
        F, M = rng.integers(1, 9, 2)
        L = rng.integers(M, 9)
        k, b = rng.normal(size=(F, M, 4)), rng.normal(size=F)
        x = rng.normal(size=(2, L, 4))
        out, _ = nn.conv1d_forward(nn.ConvLayer(k, b), x)
        assert np.allclose(out, naive_conv(k, b, x), rtol=0, atol=1e-12)


def test_relu_examples():
    np.testing.assert_array_equal(nn.relu([-1.0, 0.0, 2.0]), [0, 0, 2])
    assert not nn.relu(-np.ones(5)).any()
    x = np.random.default_rng(1).normal(size=20)
    np.testing.assert_array_equal(nn.relu(nn.relu(x)), nn.relu(x))


def test_relu_subgradient_at_zero():
    _, mask = nn.relu_forward(np.array([-1.0, 0.0, 1.0]))
    np.testing.assert_array_equal(nn.relu_backward(np.ones(3), mask), [0, 0, 1])


def test_max_pool_examples():
    np.testing.assert_array_equal(nn.global_max_pool(np.array([[[1.0, 3, 2]]])), [[3]])
    np.testing.assert_array_equal(nn.global_max_pool(np.full((1, 1, 4), 7.0)), [[7]])
    np.testing.assert_array_equal(nn.global_max_pool(np.array([[[4.0], [-2.0]]])), [[4, -2]])


def test_max_pool_backward_routes_to_first_max():
    fmap = np.array([[[1.0, 5, 5, 2], [0, 0, 0, 0]]])
    _, cache = nn.global_max_pool_forward(fmap)
    d = nn.global_max_pool_backward(np.array([[2.0, 3.0]]), cache)
    np.testing.assert_array_equal(d, [[[0, 2, 0, 0], [3, 0, 0, 0]]])


@given(arrays(np.float64, (3, 4, 6), elements=st.floats(-5, 5)))
def test_max_pool_backward_one_hot_rows(fmap):
    _, cache = nn.global_max_pool_forward(fmap)
    d = nn.global_max_pool_backward(np.ones((3, 4)), cache)
    assert np.all((d != 0).sum(axis=-1) <= 1)


def test_dense_examples():
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    eye = nn.DenseLayer(np.eye(2), np.zeros(2))
    np.testing.assert_array_equal(nn.dense_forward(eye, x)[0], x)
    zero = nn.DenseLayer(np.zeros((2, 3)), np.array([1.0, 2.0, 3.0]))
    assert np.all(nn.dense_forward(zero, x)[0] == [1, 2, 3])
    out, _ = nn.dense_forward(nn.DenseLayer([[1.0], [1.0]], [1.0]), [[1.0, 2.0]])
    assert out.tolist() == [[4.0]]


def test_dense_dimension_mismatch():
    with pytest.raises(ValueError):
        nn.dense_forward(nn.DenseLayer(np.zeros((3, 1)), np.zeros(1)), np.zeros((2, 2)))


def test_softmax_examples():
    np.testing.assert_allclose(nn.softmax([1.0, 1.0, 1.0]), [1 / 3] * 3, rtol=0, atol=1e-15)
    np.testing.assert_allclose(nn.softmax([0.0, math.log(2)]), [1 / 3, 2 / 3], rtol=0, atol=1e-15)


@given(arrays(np.float64, (5, 6), elements=st.floats(-1e4, 1e4)), st.floats(-100, 100))
def test_softmax_normalized_and_shift_invariant(v, c):
    p = nn.softmax(v, axis=1)
    assert np.all(np.isfinite(p)) and np.all(p >= 0)
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-12)
    np.testing.assert_allclose(nn.softmax(v + c, axis=1), p, atol=1e-12)


def test_sigmoid_examples():
    assert nn.sigmoid(0.0) == 0.5
    assert abs(nn.sigmoid(math.log(3)) - 0.75) < 1e-15
    x = np.linspace(-800, 800, 41)
    s = nn.sigmoid(x)
    assert np.all(np.isfinite(s)) and np.all((s >= 0) & (s <= 1))
    np.testing.assert_allclose(nn.sigmoid(-x), 1 - s, atol=1e-15)


def test_bce_examples():
    assert nn.bce_loss([1.0], [1]) < 1e-11
    assert abs(nn.bce_loss([0.5, 0.5], [0, 1]) - math.log(2)) < 1e-15
    p, y = np.array([0.1, 0.7, 0.95]), np.array([0, 1, 1])
    assert abs(nn.bce_loss(p, y) - nn.bce_loss(1 - p, 1 - y)) < 1e-15


def test_bce_logit_grad_matches_fd():
    rng = np.random.default_rng(0)
    o, y = rng.normal(size=(6, 1)), rng.integers(0, 2, 6)
    g = nn.bce_logit_grad(o, y)
    err = nn.finite_difference_check(lambda: nn.bce_loss(nn.sigmoid(o), y), o, g)
    assert err < 1e-6


def test_fd_check_linear_is_exact():
    w = np.array([0.5, -2.0, 3.0])
    x = np.array([1.0, 2.0, -1.0])
    assert nn.finite_difference_check(lambda: float(w @ x), x, w) <= 1e-10


def test_fd_check_square():
    x = np.array([3.0])
    num = nn.numeric_gradient(lambda: float(x[0] ** 2), x, 1e-4)
    assert abs(num[0] - 6.0) < 1e-7
    assert nn.finite_difference_check(lambda: float(x[0] ** 2), x, np.array([6.0])) < 1e-7


def test_fd_check_restores_input():
    x = np.array([1.0, 2.0])
    before = x.copy()
    nn.numeric_gradient(lambda: float((x ** 3).sum()), x)
    assert np.array_equal(x, before)


def _layer_checks(rng):
    """Per-layer FD checks of input and parameter gradients on one random shape."""
    F, M = rng.integers(1, 6, 2)
    L = rng.integers(M, 10)
    conv = nn.ConvLayer(rng.normal(size=(F, M, 4)), rng.normal(size=F))
    x = rng.normal(size=(2, L, 4))
    out, cache = nn.conv1d_forward(conv, x)
    r = rng.normal(size=out.shape)
    dx, g = nn.conv1d_backward(conv, r, cache)
    f = lambda: float((nn.conv1d_forward(conv, x)[0] * r).sum())  # noqa: E731
    errs = [nn.finite_difference_check(f, x, dx), nn.finite_difference_check(f, conv.kernels, g["kernels"]),
            nn.finite_difference_check(f, conv.bias, g["bias"])]

    din, dout = rng.integers(1, 6, 2)
    dense = nn.DenseLayer(rng.normal(size=(din, dout)), rng.normal(size=dout))
    x = rng.normal(size=(3, din))
    r = rng.normal(size=(3, dout))
    dx, g = nn.dense_backward(dense, r, nn.dense_forward(dense, x)[1])
    f = lambda: float((nn.dense_forward(dense, x)[0] * r).sum())  # noqa: E731
    errs += [nn.finite_difference_check(f, x, dx), nn.finite_difference_check(f, dense.weights, g["weights"]),
             nn.finite_difference_check(f, dense.bias, g["bias"])]

    v = rng.normal(size=(3, int(rng.integers(2, 6))))
    r = rng.normal(size=v.shape)
    dv = nn.softmax_backward(r, nn.softmax(v, axis=1))
    errs.append(nn.finite_difference_check(lambda: float((nn.softmax(v, axis=1) * r).sum()), v, dv))
    return max(errs)


def test_layer_gradients_on_random_shapes():
    rng = np.random.default_rng(42)
    worst = max(_layer_checks(rng) for _ in range(100))
    assert worst < 1e-5
