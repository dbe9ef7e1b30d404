"""LSTM, attentive bidirectional GRU and causal Transformer forecasters.

Every architecture is split into a deterministic trunk (:meth:`encode`) that
ends right before the single dropout site, and a linear head. The head emits
``h`` values (plain / dropout) or ``4h`` raw evidential values.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Linear, LayerNorm, Module, Tensor, dropout, dropout_mask, ops
from .autodiff.nn import _param
from .data import WINDOW_LENGTH
from .exceptions import ConfigError, ShapeError

__all__ = [
    "ARCHITECTURES",
    "HEADS",
    "ModelConfig",
    "SequenceModel",
    "LSTMNet",
    "GRUAttnNet",
    "TransformerNet",
    "build_model",
    "attach_head",
    "temporal_attention",
    "multi_head_attention",
    "sinusoidal_encoding",
    "expected_parameter_count",
]

ARCHITECTURES = ("lstm", "gru_attn", "transformer")
HEADS = ("plain", "dropout", "evidential")
DROPOUT_SITE = 1  # layer key for the dropout mask stream


@dataclass(frozen=True)
class ModelConfig:
    architecture: str
    head: str = "plain"
    horizon: int = 6
    dropout: float | None = None
    seed: int = 0
    n_features: int = 4

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.head == "dropout":
            if self.dropout is None or not 0.0 <= self.dropout < 1.0:
                raise ConfigError("dropout head needs a dropout rate in [0, 1)")
        elif self.dropout not in (None, 0, 0.0):
            raise ConfigError(f"dropout rate is only used by the dropout head, not {self.head!r}")

    @property
    def output_width(self) -> int:
        return 4 * self.horizon if self.head == "evidential" else self.horizon

    def to_dict(self):
        return asdict(self)


class SequenceModel(Module):
    """Trunk + dropout site + linear head."""

    feature_width: int

    def __init__(self, config: ModelConfig):
        self.config = config
        self.output = None

    def _name_parameters(self):
        for name, p in self.named_parameters():
            p.name = name

    def _check_input(self, X):
        X = X.data if isinstance(X, Tensor) else np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1:] != (WINDOW_LENGTH, self.config.n_features):
            raise ShapeError(
                f"expected windows of shape (N, {WINDOW_LENGTH}, {self.config.n_features}), got {X.shape}")
        return Tensor(X)

    def encode(self, X) -> Tensor:
        raise NotImplementedError

    def head(self, features: Tensor, mask=None) -> Tensor:
        return self.output(dropout(features, mask))

    def dropout_mask(self, n_rows, seed, step):
        rate = self.config.dropout if self.config.head == "dropout" else 0.0
        if not rate:
            return None
        return dropout_mask((n_rows, self.feature_width), rate, seed, DROPOUT_SITE, step)

    def forward(self, X, mode="eval", step=0, seed=None) -> Tensor:
        """Raw head output; ``mode="train"`` activates dropout for the dropout head."""
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        feats = self.encode(X)
        mask = None
        if mode == "train":
            mask = self.dropout_mask(feats.shape[0], self.config.seed if seed is None else seed, step)
        return self.head(feats, mask)

    __call__ = forward

    def predict_raw(self, X, batch_size=2048) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = [self.forward(X[i:i + batch_size]).data for i in range(0, len(X), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.config.output_width))

    def features(self, X, batch_size=2048) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = [self.encode(X[i:i + batch_size]).data for i in range(0, len(X), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.feature_width))


def attach_head(model: SequenceModel, rng) -> SequenceModel:
    """Create the output layer matching the configured head kind."""
    if model.config.head not in HEADS:
        raise ConfigError(f"unsupported head {model.config.head!r}")
    model.output = Linear(model.feature_width, model.config.output_width, rng)
    model._name_parameters()
    return model


# ----------------------------------------------------------------------------
# LSTM
# ----------------------------------------------------------------------------

class LSTMNet(SequenceModel):
    """Single-layer LSTM (128) -> final hidden state -> Linear(64) -> dropout -> head."""

    hidden = 128
    fc_width = 64

    def __init__(self, config, rng):
        super().__init__(config)
        H, n_in = self.hidden, config.n_features
        bx, bh = 1.0 / np.sqrt(n_in), 1.0 / np.sqrt(H)
        self.w_x = _param(rng.uniform(-bx, bx, (n_in, 4 * H)), "w_x")
        self.w_h = _param(rng.uniform(-bh, bh, (H, 4 * H)), "w_h")
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0  # forget gate
        self.b = _param(b, "b")
        self.fc = Linear(H, self.fc_width, rng)
        self.feature_width = self.fc_width

    def run(self, X):
        """Hidden states of every timestep (list of ``(B, H)`` tensors)."""
        X = self._check_input(X)
        H = self.hidden
        proj = ops.matmul(X, self.w_x) + self.b
        n = X.shape[0]
        h = Tensor(np.zeros((n, H)))
        c = Tensor(np.zeros((n, H)))
        states = []
        for t in range(X.shape[1]):
            z = proj[:, t, :] + ops.matmul(h, self.w_h)
            i = ops.sigmoid(z[:, :H])
            f = ops.sigmoid(z[:, H:2 * H])
            g = ops.tanh(z[:, 2 * H:3 * H])
            o = ops.sigmoid(z[:, 3 * H:])
            c = f * c + i * g
            h = o * ops.tanh(c)
            states.append(h)
        return states

    def encode(self, X):
        return self.fc(self.run(X)[-1])


# ----------------------------------------------------------------------------
# attentive bidirectional GRU
# ----------------------------------------------------------------------------

class _GRUDirection(Module):
    def __init__(self, n_in, hidden, rng):
        bx, bh = 1.0 / np.sqrt(n_in), 1.0 / np.sqrt(hidden)
        self.w_x = _param(rng.uniform(-bx, bx, (n_in, 3 * hidden)), "w_x")
        self.w_h = _param(rng.uniform(-bh, bh, (hidden, 3 * hidden)), "w_h")
        self.b_x = _param(np.zeros(3 * hidden), "b_x")
        self.b_h = _param(np.zeros(3 * hidden), "b_h")
        self.hidden = hidden

    def step(self, xp, h):
        """One GRU update given the precomputed input projection ``xp``."""
        H = self.hidden
        hp = ops.matmul(h, self.w_h) + self.b_h
        r = ops.sigmoid(xp[:, :H] + hp[:, :H])
        z = ops.sigmoid(xp[:, H:2 * H] + hp[:, H:2 * H])
        n = ops.tanh(xp[:, 2 * H:] + r * hp[:, 2 * H:])
        return (1.0 - z) * n + z * h

    def run(self, X, reverse=False):
        proj = ops.matmul(X, self.w_x) + self.b_x
        T = X.shape[1]
        h = Tensor(np.zeros((X.shape[0], self.hidden)))
        out = [None] * T
        for t in (range(T - 1, -1, -1) if reverse else range(T)):
            h = self.step(proj[:, t, :], h)
            out[t] = h
        return ops.stack(out, axis=1)


def temporal_attention(states: Tensor, logits: Tensor):
    """Softmax over time of ``logits`` (B, T) and the weighted context (B, D)."""
    weights = ops.softmax(logits, axis=-1)
    B, T = logits.shape
    context = ops.matmul(weights.reshape(B, 1, T), states).reshape(B, states.shape[-1])
    return context, weights


class GRUAttnNet(SequenceModel):
    """3-layer bidirectional GRU (40 per direction) -> additive temporal
    attention -> Linear(32) + ReLU -> dropout -> head."""

    hidden = 40
    layers = 3
    fc_width = 32

    def __init__(self, config, rng):
        super().__init__(config)
        H = self.hidden
        width = 2 * H
        self.cells = []
        n_in = config.n_features
        for _ in range(self.layers):
            self.cells.append(_GRUDirection(n_in, H, rng))
            self.cells.append(_GRUDirection(n_in, H, rng))
            n_in = width
        self.att = Linear(width, width, rng)
        bound = 1.0 / np.sqrt(width)
        self.att_v = _param(rng.uniform(-bound, bound, (width, 1)), "att_v")
        self.fc = Linear(width, self.fc_width, rng)
        self.feature_width = self.fc_width

    def states(self, X):
        x = self._check_input(X)
        for layer in range(self.layers):
            fwd, bwd = self.cells[2 * layer], self.cells[2 * layer + 1]
            x = ops.concat([fwd.run(x), bwd.run(x, reverse=True)], axis=-1)
        return x

    def attention_logits(self, states):
        B, T, D = states.shape
        return ops.matmul(ops.tanh(self.att(states)), self.att_v).reshape(B, T)

    def attention_weights(self, X) -> np.ndarray:
        s = self.states(X)
        return ops.softmax(self.attention_logits(s), axis=-1).data

    def encode(self, X):
        s = self.states(X)
        context, _ = temporal_attention(s, self.attention_logits(s))
        return ops.relu(self.fc(context))


# ----------------------------------------------------------------------------
# causal Transformer
# ----------------------------------------------------------------------------

def sinusoidal_encoding(length, width) -> np.ndarray:
    """Fixed encoding: ``sin`` on even, ``cos`` on odd channels."""
    pos = np.arange(length)[:, None]
    freq = np.exp(-np.log(10000.0) * np.arange(0, width, 2) / width)
    pe = np.zeros((length, width))
    pe[:, 0::2] = np.sin(pos * freq)
    pe[:, 1::2] = np.cos(pos * freq[: width // 2])
    return pe


def causal_mask(n_query, n_key):
    """True where query ``i`` (aligned to the last ``n_query`` keys) may not look."""
    q = np.arange(n_key - n_query, n_key)[:, None]
    return np.arange(n_key)[None, :] > q


def multi_head_attention(xq, xkv, wq, wk, wv, wo, n_heads, bq=None, bk=None, bv=None, bo=None):
    """Scaled dot-product attention with a causal mask.

    ``xq`` holds the last ``Tq`` positions of ``xkv``; each query attends to
    keys at its own position or earlier.
    """
    B, Tq, D = xq.shape
    Tk = xkv.shape[1]
    dh = D // n_heads

    def proj(x, w, b, T):
        y = ops.matmul(x, w)
        if b is not None:
            y = y + b
        return y.reshape(B, T, n_heads, dh).transpose(0, 2, 1, 3)

    q = proj(xq, wq, bq, Tq)
    k = proj(xkv, wk, bk, Tk)
    v = proj(xkv, wv, bv, Tk)
    scores = ops.matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh))
    mask = causal_mask(Tq, Tk) if Tq > 1 else None
    weights = ops.softmax(scores, axis=-1, mask=mask)
    ctx = ops.matmul(weights, v).transpose(0, 2, 1, 3).reshape(B, Tq, D)
    out = ops.matmul(ctx, wo)
    return out + bo if bo is not None else out


class _EncoderBlock(Module):
    def __init__(self, width, n_heads, ff, rng):
        self.ln1 = LayerNorm(width)
        self.q = Linear(width, width, rng)
        self.k = Linear(width, width, rng)
        self.v = Linear(width, width, rng)
        self.o = Linear(width, width, rng)
        self.ln2 = LayerNorm(width)
        self.ff1 = Linear(width, ff, rng)
        self.ff2 = Linear(ff, width, rng)
        self.n_heads = n_heads

    def __call__(self, x, last_only=False):
        h = self.ln1(x)
        hq = h[:, -1:, :] if last_only else h
        att = multi_head_attention(hq, h, self.q.weight, self.k.weight, self.v.weight, self.o.weight,
                                   self.n_heads, self.q.bias, self.k.bias, self.v.bias, self.o.bias)
        x = (x[:, -1:, :] if last_only else x) + att
        return x + self.ff2(ops.gelu(self.ff1(self.ln2(x))))


class TransformerNet(SequenceModel):
    """Linear(64) + sinusoidal positions -> 2 pre-norm causal encoder blocks
    (4 heads, GELU feed-forward 128) -> final LayerNorm -> last timestep ->
    dropout -> head."""

    width = 64
    n_heads = 4
    ff = 128
    n_layers = 2

    def __init__(self, config, rng):
        super().__init__(config)
        self.proj = Linear(config.n_features, self.width, rng)
        self.blocks = [_EncoderBlock(self.width, self.n_heads, self.ff, rng) for _ in range(self.n_layers)]
        self.ln_f = LayerNorm(self.width)
        self.pe = sinusoidal_encoding(WINDOW_LENGTH, self.width)
        self.feature_width = self.width

    def representations(self, X) -> Tensor:
        """Final-layer representation of every timestep, ``(B, 36, 64)``."""
        x = self.proj(self._check_input(X)) + self.pe
        for block in self.blocks:
            x = block(x)
        return self.ln_f(x)

    def encode(self, X):
        # Only the final position feeds the head, so the last block computes
        # its query, residual and feed-forward for that position alone.
        x = self.proj(self._check_input(X)) + self.pe
        for block in self.blocks[:-1]:
            x = block(x)
        x = self.blocks[-1](x, last_only=True)
        B = x.shape[0]
        return self.ln_f(x).reshape(B, self.width)


_CLASSES = {"lstm": LSTMNet, "gru_attn": GRUAttnNet, "transformer": TransformerNet}


def build_model(config: ModelConfig) -> SequenceModel:
    """Instantiate and initialize a model deterministically from ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    model = _CLASSES[config.architecture](config, rng)
    return attach_head(model, rng)


def expected_parameter_count(config: ModelConfig) -> int:
    """Closed-form parameter count from the layer sizes."""
    out, n_in = config.output_width, config.n_features
    if config.architecture == "lstm":
        H, F = LSTMNet.hidden, LSTMNet.fc_width
        return 4 * H * (n_in + H) + 4 * H + (H * F + F) + (F * out + out)
    if config.architecture == "gru_attn":
        H, F, W = GRUAttnNet.hidden, GRUAttnNet.fc_width, 2 * GRUAttnNet.hidden
        total = 0
        for layer in range(GRUAttnNet.layers):
            d_in = n_in if layer == 0 else W
            total += 2 * (3 * H * (d_in + H) + 6 * H)
        total += W * W + W + W  # attention projection and scoring vector
        return total + (W * F + F) + (F * out + out)
    D, FF = TransformerNet.width, TransformerNet.ff
    block = 2 * D + 4 * (D * D + D) + 2 * D + (D * FF + FF) + (FF * D + D)
    return (n_in * D + D) + TransformerNet.n_layers * block + 2 * D + (D * out + out)
