"""Parameter containers and small layers built on the tensor primitives."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = ["Module", "Linear", "LayerNorm", "dropout_mask", "dropout"]


class Module:
    """Attribute-walking parameter container.

    Parameters are ``Tensor`` attributes with ``requires_grad=True``; child
    modules and lists of modules are traversed in attribute order, so names
    are stable across runs.
    """

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise T.ShapeError(f"{name}: expected {p.shape}, got {arr.shape}")
            p.data = arr.copy()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def _param(data, name):
    return Tensor(data, requires_grad=True, name=name)


class Linear(Module):
    """``y = x @ weight + bias`` with uniform fan-in initialization."""

    def __init__(self, n_in, n_out, rng, bias=True):
        bound = 1.0 / np.sqrt(n_in)
        self.weight = _param(rng.uniform(-bound, bound, size=(n_in, n_out)), "weight")
        self.bias = _param(np.zeros(n_out), "bias") if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, n, eps=1e-5):
        self.weight = _param(np.ones(n), "weight")
        self.bias = _param(np.zeros(n), "bias")
        self.eps = eps

    def __call__(self, x):
        return T.layer_norm(x, self.weight, self.bias, self.eps)


def dropout_mask(shape, rate, seed, layer, step):
    """Inverted-dropout keep mask from a counter-based generator.

    The Philox stream is keyed by ``(seed, layer, step)`` so any mask can be
    regenerated independently of call order.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    key = np.random.SeedSequence([int(seed), int(layer), int(step)]).generate_state(2, np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout(x, mask):
    return x if mask is None else T.mul(x, mask)
