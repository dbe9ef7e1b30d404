"""Minimal float64 reverse-mode autodiff used by every trainable model."""

from . import tensor as ops
from .checkpoint import CheckpointError, load_arrays, save_arrays
from .nn import LayerNorm, Linear, Module, dropout, dropout_mask
from .optim import Adam, NumericError
from .special import EULER_GAMMA, DomainError, digamma, lgamma, log_gamma
from .tensor import ShapeError, Tape, TapeStateError, Tensor, as_tensor

__all__ = [
    "ops",
    "Tensor",
    "Tape",
    "ShapeError",
    "TapeStateError",
    "as_tensor",
    "Module",
    "Linear",
    "LayerNorm",
    "dropout",
    "dropout_mask",
    "Adam",
    "NumericError",
    "log_gamma",
    "digamma",
    "lgamma",
    "DomainError",
    "EULER_GAMMA",
    "save_arrays",
    "load_arrays",
    "CheckpointError",
]
