import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.errors import ShapeError, ValidationError
from src.layers import (
    ConvParams, LstmParams,
    dropout, dropout_backward,
    fully_connected_backward, fully_connected_forward,
    lstm_backward, lstm_forward,
    max_pool_backward, max_pool_forward,
    relu_backward, relu_forward,
    temporal_conv_backward, temporal_conv_forward,
)
from src.rng import make_rng


def naive_conv(x, w, b):
    T, D, C_in = x.shape
    F, _, _, C_out = w.shape
    out = np.zeros((T - F + 1, D, C_out))
    for t in range(T - F + 1):
        for d in range(D):
            for j in range(C_out):
                acc = b[j]
                for f in range(F):
                    for c in range(C_in):
                        acc += w[f, 0, c, j] * x[t + f, d, c]
                out[t, d, j] = acc
    return out


def naive_pool(x, P, stride):
    T, D, C = x.shape
    T_out = (T - P) // stride + 1
    out = np.zeros((T_out, D, C))
    for t in range(T_out):
        for d in range(D):
            for c in range(C):
                out[t, d, c] = max(x[t * stride + p, d, c] for p in range(P))
    return out


def test_conv_matches_nested_loop_oracle():
    gen = np.random.default_rng(0)
    for _ in range(100):
        T, D, C_in, C_out, F = gen.integers(3, 9), gen.integers(1, 4), gen.integers(1, 3), gen.integers(1, 3), gen.integers(1, 4)
        x = gen.normal(size=(T, D, C_in))
        p = ConvParams(gen.normal(size=(F, 1, C_in, C_out)), gen.normal(size=C_out))
        assert_allclose(temporal_conv_forward(x, p), naive_conv(x, p.weights, p.bias), rtol=0, atol=1e-12)


def test_conv_single_filter_example():
    # filtro [1, -1] sobre una rampa: diferencia constante
    x = np.arange(6, dtype=float).reshape(6, 1, 1)
    p = ConvParams(np.array([1.0, -1.0]).reshape(2, 1, 1, 1), np.zeros(1))
    assert_allclose(temporal_conv_forward(x, p)[:, 0, 0], -np.ones(5))


def test_conv_rejects_short_input_and_channel_mismatch():
    p = ConvParams(np.ones((5, 1, 1, 2)), np.zeros(2))
    with pytest.raises(ShapeError):
        temporal_conv_forward(np.ones((4, 3, 1)), p)
    with pytest.raises(ShapeError):
        temporal_conv_forward(np.ones((8, 3, 2)), p)
    with pytest.raises(ValidationError):
        temporal_conv_forward(np.full((8, 3, 1), np.nan), p)


def test_pool_matches_oracle():
    gen = np.random.default_rng(1)
    for _ in range(100):
        T, P, stride = gen.integers(2, 10), gen.integers(1, 3), gen.integers(1, 3)
        if T < P:
            continue
        x = gen.normal(size=(T, 2, 3))
        assert_allclose(max_pool_forward(x, P, stride), naive_pool(x, P, stride), rtol=0, atol=1e-12)


def test_pool_example_and_errors():
    x = np.array([1.0, 3.0, 2.0, 5.0]).reshape(4, 1, 1)
    assert_array_equal(max_pool_forward(x, 2, 1)[:, 0, 0], [3.0, 3.0, 5.0])
    with pytest.raises(ShapeError):
        max_pool_forward(x, 5, 1)
    with pytest.raises(ValidationError):
        max_pool_forward(x, 0, 1)


def test_batched_equals_unbatched():
    gen = np.random.default_rng(2)
    xb = gen.normal(size=(3, 10, 2, 2))
    p = ConvParams(gen.normal(size=(3, 1, 2, 4)), gen.normal(size=4))
    batched = temporal_conv_forward(xb, p)
    for i in range(3):
        assert_allclose(batched[i], temporal_conv_forward(xb[i], p), rtol=1e-12, atol=1e-12)


def test_conv_gradients(fd, rel_error):
    gen = np.random.default_rng(3)
    x = gen.normal(size=(2, 8, 3, 2))
    p = ConvParams(gen.normal(size=(3, 1, 2, 4)), gen.normal(size=4))
    G = gen.normal(size=(2, 6, 3, 4))
    loss = lambda: float(np.sum(temporal_conv_forward(x, p, activation="relu") * G))
    gx, gw, gb = temporal_conv_backward(G, x, p, activation="relu")
    assert rel_error(gx, fd(loss, x)) < 1e-4
    assert rel_error(gw, fd(loss, p.weights)) < 1e-4
    assert rel_error(gb, fd(loss, p.bias)) < 1e-4


def test_pool_gradient(fd, rel_error):
    gen = np.random.default_rng(4)
    x = gen.normal(size=(2, 9, 2, 3))
    out, idx = max_pool_forward(x, 2, 1, return_indices=True)
    G = gen.normal(size=out.shape)
    loss = lambda: float(np.sum(max_pool_forward(x, 2, 1) * G))
    assert rel_error(max_pool_backward(G, x.shape, idx), fd(loss, x)) < 1e-4


def test_fully_connected_gradients(fd, rel_error):
    gen = np.random.default_rng(5)
    x, W, b = gen.normal(size=(4, 6)), gen.normal(size=(6, 3)), gen.normal(size=3)
    G = gen.normal(size=(4, 3))
    for activation in ("identity", "relu", "sigmoid"):
        loss = lambda: float(np.sum(fully_connected_forward(x, W, b, activation) * G))
        gx, gw, gb = fully_connected_backward(G, x, W, activation, bias=b)
        assert rel_error(gx, fd(loss, x)) < 1e-4
        assert rel_error(gw, fd(loss, W)) < 1e-4
        assert rel_error(gb, fd(loss, b)) < 1e-4


def test_fully_connected_shape_mismatch():
    with pytest.raises(ShapeError):
        fully_connected_forward(np.ones((2, 5)), np.ones((4, 3)), np.zeros(3))


def _lstm_params(gen, M, H):
    return LstmParams(gen.normal(scale=0.5, size=(M, 4 * H)), gen.normal(scale=0.5, size=(H, 4 * H)),
                      gen.normal(scale=0.1, size=4 * H))


def test_lstm_gradients(fd, rel_error):
    gen = np.random.default_rng(6)
    M, H = 3, 4
    seq = gen.normal(size=(2, 5, M))
    p = _lstm_params(gen, M, H)
    G_seq, G_last = gen.normal(size=(2, 5, H)), gen.normal(size=(2, H))

    def loss():
        hs, hT, _ = lstm_forward(seq, p)
        return float(np.sum(hs * G_seq) + np.sum(hT * G_last))

    _, _, _, cache = lstm_forward(seq, p, return_cache=True)
    g_seq, grads, _, _ = lstm_backward(G_seq, G_last, p, cache)
    assert rel_error(g_seq, fd(loss, seq)) < 1e-4
    assert rel_error(grads.w_x, fd(loss, p.w_x)) < 1e-4
    assert rel_error(grads.w_h, fd(loss, p.w_h)) < 1e-4
    assert rel_error(grads.b, fd(loss, p.b)) < 1e-4


def test_lstm_zero_weights_give_zero_states():
    H = 3
    p = LstmParams(np.zeros((2, 4 * H)), np.zeros((H, 4 * H)), np.zeros(4 * H))
    hs, hT, cT = lstm_forward(np.ones((4, 2)), p)
    # i=f=o=0.5, g=0 en cada paso
    assert_allclose(hs, 0.0)
    assert_allclose(cT, 0.0)


def test_lstm_rejects_wrong_width():
    p = _lstm_params(np.random.default_rng(0), 3, 2)
    with pytest.raises(ShapeError):
        lstm_forward(np.ones((4, 5)), p)


def test_relu():
    x = np.array([-1.0, 0.5, 2.0])
    assert_array_equal(relu_forward(x), [0.0, 0.5, 2.0])
    assert_array_equal(relu_backward(np.ones(3), x), [0.0, 1.0, 1.0])


def test_dropout_modes():
    x = np.ones((1000,))
    assert_array_equal(dropout(x, 0.5, "eval", None), x)
    out, mask = dropout(x, 0.5, "train", make_rng(0, "drop"), return_mask=True)
    kept = out > 0
    assert_allclose(out[kept], 2.0)
    assert 0.4 < kept.mean() < 0.6
    assert_array_equal(dropout_backward(np.ones_like(x), mask), mask)
    with pytest.raises(ValidationError):
        dropout(x, 1.0, "train", make_rng(0))
    with pytest.raises(ValidationError):
        dropout(x, 0.1, "predict", make_rng(0))


def test_conv_is_linear_without_bias():
    gen = np.random.default_rng(7)
    p = ConvParams(gen.normal(size=(3, 1, 2, 4)), np.zeros(4))
    x, y = gen.normal(size=(10, 3, 2)), gen.normal(size=(10, 3, 2))
    a, b = 1.7, -0.4
    assert_allclose(temporal_conv_forward(a * x + b * y, p),
                    a * temporal_conv_forward(x, p) + b * temporal_conv_forward(y, p), rtol=1e-12, atol=1e-12)


def test_conv_commutes_with_time_shift():
    gen = np.random.default_rng(8)
    p = ConvParams(gen.normal(size=(4, 1, 1, 2)), gen.normal(size=2))
    x = gen.normal(size=(15, 2, 1))
    full = temporal_conv_forward(x, p)
    for k in (1, 3, 5):
        assert_allclose(temporal_conv_forward(x[k:], p), full[k:], rtol=0, atol=1e-12)


def test_pool_keeps_every_window_end_of_increasing_sequence():
    x = np.arange(1.0, 10.0).reshape(9, 1, 1)
    assert_array_equal(max_pool_forward(x, 2, 1)[:, 0, 0], x[1:, 0, 0])
    assert_array_equal(max_pool_forward(x, 3, 3)[:, 0, 0], [3.0, 6.0, 9.0])


def test_bias_gradient_is_sum_of_output_gradient():
    gen = np.random.default_rng(9)
    x = gen.normal(size=(2, 8, 3, 2))
    p = ConvParams(gen.normal(size=(3, 1, 2, 4)), gen.normal(size=4))
    G = gen.normal(size=(2, 6, 3, 4))
    _, _, gb = temporal_conv_backward(G, x, p)
    assert_allclose(gb, G.sum(axis=(0, 1, 2)), rtol=1e-12)
    G2 = gen.normal(size=(5, 3))
    _, _, gb2 = fully_connected_backward(G2, gen.normal(size=(5, 4)), gen.normal(size=(4, 3)))
    assert_allclose(gb2, G2.sum(axis=0), rtol=1e-12)


def test_lstm_single_step_matches_gate_formulas():
    gen = np.random.default_rng(10)
    M, H = 3, 2
    p = _lstm_params(gen, M, H)
    x, h0, c0 = gen.normal(size=M), gen.normal(size=H), gen.normal(size=H)
    sig = lambda z: 1.0 / (1.0 + np.exp(-z))
    z = x @ p.w_x + h0 @ p.w_h + p.b
    i, f, g, o = sig(z[:H]), sig(z[H:2 * H]), np.tanh(z[2 * H:3 * H]), sig(z[3 * H:])
    c = f * c0 + i * g
    h = o * np.tanh(c)
    hs, hT, cT = lstm_forward(x[None], p, h0, c0)
    assert_allclose(hT, h, rtol=1e-12)
    assert_allclose(cT, c, rtol=1e-12)
    assert_allclose(hs[0], h, rtol=1e-12)


def test_dropout_rate_and_mean_on_large_input():
    x = np.full(100_000, 3.0)
    out = dropout(x, 0.5, "train", make_rng(11, "drop"))
    assert abs((out > 0).mean() - 0.5) <= 0.01
    assert abs(out.mean() / x.mean() - 1.0) <= 0.02
