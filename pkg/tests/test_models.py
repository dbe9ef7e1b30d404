import numpy as np
import pytest

from gluq.autodiff import Tensor
from gluq.evidential import constrain, total_loss
from gluq.exceptions import ConfigError, ShapeError
from gluq.models import (
    ModelConfig,
    _GRUDirection,
    build_model,
    causal_mask,
    expected_parameter_count,
    multi_head_attention,
    sinusoidal_encoding,
    temporal_attention,
)

from helpers import REL_TOL, check_gradients

ARCHS = ("lstm", "gru_attn", "transformer")


def windows(n, seed=0):
    return np.random.default_rng(seed).normal(size=(n, 36, 4))


def n_params(model):
    return sum(p.data.size for p in model.parameters())


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# -- configuration and shapes -------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(architecture="cnn"),
    dict(architecture="lstm", head="bayes"),
    dict(architecture="lstm", head="dropout"),
    dict(architecture="lstm", head="plain", dropout=0.2),
    dict(architecture="lstm", head="dropout", dropout=1.0),
])
def test_invalid_configs(kwargs):
    with pytest.raises(ConfigError):
        ModelConfig(**kwargs)


@pytest.mark.parametrize("arch", ARCHS)
@pytest.mark.parametrize("head, horizon, width", [("evidential", 6, 24), ("plain", 12, 12), ("dropout", 6, 6)])
def test_output_width(arch, head, horizon, width):
    cfg = ModelConfig(arch, head, horizon, dropout=0.2 if head == "dropout" else None)
    assert build_model(cfg).forward(windows(3)).shape == (3, width)


# closed forms written out by hand from the layer sizes, independently of
# expected_parameter_count
HAND_COUNTS = {
    # LSTM 4 -> 128, Linear 128 -> 64, head 64 -> h
    "lstm": lambda h: 4 * 128 * (4 + 128) + 4 * 128 + 128 * 64 + 64 + 64 * h + h,
    # 3 bidirectional GRU layers (inputs 4, 80, 80), attention 80x80 + bias + vector, Linear 80 -> 32
    "gru_attn": lambda h: (2 * (3 * 40 * 4 + 3 * 40 * 40 + 6 * 40)
                           + 4 * (3 * 40 * 80 + 3 * 40 * 40 + 6 * 40)
                           + 80 * 80 + 80 + 80 + 80 * 32 + 32 + 32 * h + h),
    # input projection, two blocks (2 layer norms, 4 projections, feed-forward), final norm, head
    "transformer": lambda h: (4 * 64 + 64 + 2 * (4 * 64 + 4 * (64 * 64 + 64) + 64 * 128 + 128 + 128 * 64 + 64)
                              + 128 + 64 * h + h),
}


@pytest.mark.parametrize("arch", ARCHS)
@pytest.mark.parametrize("head, horizon", [("plain", 6), ("evidential", 12)])
def test_parameter_count(arch, head, horizon):
    cfg = ModelConfig(arch, head, horizon)
    width = cfg.output_width
    assert n_params(build_model(cfg)) == expected_parameter_count(cfg) == HAND_COUNTS[arch](width)


@pytest.mark.parametrize("arch", ARCHS)
def test_wrong_window_shape(arch):
    model = build_model(ModelConfig(arch))
    with pytest.raises(ShapeError):
        model.forward(np.zeros((2, 35, 4)))
    with pytest.raises(ShapeError):
        model.forward(np.zeros((36, 4)))


@pytest.mark.parametrize("arch", ARCHS)
def test_zero_weights_give_zero_forecast(arch):
    model = build_model(ModelConfig(arch, horizon=12))
    for p in model.parameters():
        p.data[...] = 0.0
    np.testing.assert_array_equal(model.forward(windows(2)).data, np.zeros((2, 12)))


@pytest.mark.parametrize("arch", ARCHS)
def test_construction_and_forward_are_deterministic(arch):
    X = windows(4)
    a = build_model(ModelConfig(arch, "evidential", seed=3)).predict_raw(X)
    b = build_model(ModelConfig(arch, "evidential", seed=3)).predict_raw(X)
    c = build_model(ModelConfig(arch, "evidential", seed=4)).predict_raw(X)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("arch", ARCHS)
def test_dropout_head_eval_equals_plain(arch):
    X = windows(3)
    plain = build_model(ModelConfig(arch, "plain", seed=1))
    drop = build_model(ModelConfig(arch, "dropout", dropout=0.3, seed=1))
    np.testing.assert_array_equal(drop.forward(X).data, plain.forward(X).data)
    np.testing.assert_array_equal(plain.forward(X, mode="train").data, plain.forward(X).data)
    t1 = drop.forward(X, mode="train", seed=1).data
    t2 = drop.forward(X, mode="train", seed=2).data
    assert not np.array_equal(t1, t2)
    np.testing.assert_array_equal(t1, drop.forward(X, mode="train", seed=1).data)


# -- LSTM ---------------------------------------------------------------------

def lstm_oracle(X, w_x, w_h, b):
    """Plain numpy LSTM recurrence, gate order (input, forget, cell, output)."""
    H = w_h.shape[0]
    h = np.zeros((X.shape[0], H))
    c = np.zeros_like(h)
    for t in range(X.shape[1]):
        z = X[:, t] @ w_x + h @ w_h + b
        i, f, g, o = sigmoid(z[:, :H]), sigmoid(z[:, H:2 * H]), np.tanh(z[:, 2 * H:3 * H]), sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
    return h


def test_lstm_matches_numpy_recurrence():
    model = build_model(ModelConfig("lstm", seed=2))
    X = windows(3)
    got = model.run(X)[-1].data
    np.testing.assert_allclose(got, lstm_oracle(X, model.w_x.data, model.w_h.data, model.b.data), atol=1e-13)
    np.testing.assert_allclose(model.encode(X).data, got @ model.fc.weight.data + model.fc.bias.data, atol=1e-13)


def test_lstm_single_step_by_hand():
    model = build_model(ModelConfig("lstm"))
    for p in (model.w_x, model.w_h, model.b):
        p.data[...] = 0.0
    H = model.hidden
    # unit 0: input gate and output gate open, candidate driven by feature 0
    model.w_x.data[0, 2 * H] = 1.0
    model.b.data[0] = 20.0
    model.b.data[3 * H] = 20.0
    model.b.data[H] = -20.0  # forget gate closed: only the last step matters
    X = np.zeros((1, 36, 4))
    X[0, -1, 0] = 0.5
    h = model.run(X)[-1].data[0, 0]
    i = o = 1 / (1 + np.exp(-20.0))
    f = 1 / (1 + np.exp(20.0))
    c_prev = i * np.tanh(0.0)  # zero input before the last step
    c = f * c_prev + i * np.tanh(0.5)
    assert h == pytest.approx(o * np.tanh(c), abs=1e-15)
    assert h == pytest.approx(np.tanh(np.tanh(0.5)), abs=1e-8)


# -- GRU with temporal attention ------------------------------------------------

def test_gru_step_scalar_oracle():
    rng = np.random.default_rng(4)
    cell = _GRUDirection(1, 1, rng)
    for p in (cell.w_x, cell.w_h, cell.b_x, cell.b_h):
        p.data[...] = rng.normal(size=p.data.shape)
    (wr, wz, wn), (ur, uz, un) = cell.w_x.data[0], cell.w_h.data[0]
    (bxr, bxz, bxn), (bhr, bhz, bhn) = cell.b_x.data, cell.b_h.data
    x, h = 0.7, -0.3
    r = sigmoid(wr * x + bxr + ur * h + bhr)
    z = sigmoid(wz * x + bxz + uz * h + bhz)
    n = np.tanh(wn * x + bxn + r * (un * h + bhn))
    want = (1 - z) * n + z * h
    xp = Tensor(np.array([[wr * x + bxr, wz * x + bxz, wn * x + bxn]]))
    assert cell.step(xp, Tensor(np.array([[h]]))).item() == pytest.approx(want, abs=1e-15)


def test_attention_weights_normalized():
    model = build_model(ModelConfig("gru_attn", seed=5))
    w = model.attention_weights(windows(6, seed=5) * 3)
    assert w.shape == (6, 36)
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-9)


def test_uniform_and_one_hot_attention():
    rng = np.random.default_rng(6)
    states = Tensor(rng.normal(size=(2, 36, 80)))
    ctx, w = temporal_attention(states, Tensor(np.zeros((2, 36))))
    np.testing.assert_allclose(w.data, 1 / 36, rtol=1e-14)
    np.testing.assert_allclose(ctx.data, states.data.mean(axis=1), atol=1e-13)
    logits = np.zeros((2, 36))
    logits[:, -1] = 100.0
    ctx, _ = temporal_attention(states, Tensor(logits))
    np.testing.assert_allclose(ctx.data, states.data[:, -1], atol=1e-12)


def test_gru_states_are_bidirectional():
    model = build_model(ModelConfig("gru_attn", seed=7))
    X = windows(1)
    base = model.states(X).data
    X2 = X.copy()
    X2[0, -1] += 1.0
    moved = model.states(X2).data
    # the backward direction carries the last input back to t = 0
    assert np.abs(moved[0, 0, 40:] - base[0, 0, 40:]).max() > 1e-9


# -- Transformer --------------------------------------------------------------

def test_positional_encoding_at_origin():
    pe = sinusoidal_encoding(36, 64)
    np.testing.assert_array_equal(pe[0], np.tile([0.0, 1.0], 32))
    assert pe[1, 0] == pytest.approx(np.sin(1.0))


def test_causal_mask_layout():
    m = causal_mask(3, 3)
    np.testing.assert_array_equal(m, np.triu(np.ones((3, 3), bool), k=1))
    np.testing.assert_array_equal(causal_mask(1, 4), [[False] * 4])


def test_two_step_attention_by_hand():
    x = np.array([[[1.0, 0.0], [0.5, 2.0]]])
    eye = Tensor(np.eye(2))
    out = multi_head_attention(Tensor(x), Tensor(x), eye, eye, eye, eye, 1).data[0]
    s = np.array([x[0, 1] @ x[0, 0], x[0, 1] @ x[0, 1]]) / np.sqrt(2)
    w = np.exp(s - s.max())
    w /= w.sum()
    np.testing.assert_allclose(out[0], x[0, 0], atol=1e-15)
    np.testing.assert_allclose(out[1], w[0] * x[0, 0] + w[1] * x[0, 1], atol=1e-15)


@pytest.mark.parametrize("t", [35, 20, 1])
def test_transformer_causality(t):
    model = build_model(ModelConfig("transformer", "evidential", seed=8))
    X = windows(2, seed=t)
    base = model.representations(X).data
    X2 = X.copy()
    X2[:, t] += np.random.default_rng(t).normal(size=(2, 4)) * 5
    moved = model.representations(X2).data
    np.testing.assert_allclose(moved[:, :t], base[:, :t], rtol=0, atol=1e-12)
    assert not np.allclose(moved[:, t], base[:, t])


def test_transformer_fast_path_matches_full_representation():
    model = build_model(ModelConfig("transformer", seed=9))
    X = windows(3)
    np.testing.assert_allclose(model.encode(X).data, model.representations(X).data[:, -1], atol=1e-12)


# -- gradients ----------------------------------------------------------------

@pytest.mark.parametrize("arch", ARCHS)
def test_end_to_end_gradients(arch):
    rng = np.random.default_rng(10)
    model = build_model(ModelConfig(arch, "evidential", horizon=6, seed=10))
    X = windows(2, seed=10)
    y = Tensor(rng.normal(size=(2, 6)))
    params = model.parameters()
    worst = check_gradients(lambda: total_loss(constrain(model.forward(X), 6), y, 3.0), params, 24, rng)
    assert worst < REL_TOL


def test_dropout_head_gradients_with_fixed_mask():
    rng = np.random.default_rng(11)
    model = build_model(ModelConfig("lstm", "dropout", dropout=0.3, seed=11))
    X = windows(3, seed=11)
    y = Tensor(rng.normal(size=(3, 6)))

    def loss():
        d = model.forward(X, mode="train", seed=5) - y
        return (d * d).mean()

    assert check_gradients(loss, model.parameters(), 24, rng) < REL_TOL
