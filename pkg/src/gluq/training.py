"""Mini-batch training with per-epoch validation and best-checkpoint retention."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, NumericError, Tape, Tensor
from .evidential import constrain, total_loss
from .exceptions import ConfigError, TrainingError
from .models import SequenceModel

__all__ = ["EpochRecord", "TrainingLog", "batch_loss", "evaluate_loss", "fit_model", "epoch_order"]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)
    best_epoch: int | None = None  # None: initial weights kept

    def to_rows(self):
        return [(r.epoch, r.train_loss, r.val_loss) for r in self.records]

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss"]
        for e, tr, va in self.to_rows():
            lines.append(f"{e},{tr!r},{'' if va is None else repr(va)}")
        return "\n".join(lines) + "\n"


def batch_loss(model: SequenceModel, out: Tensor, y, beta_r, kl_coef) -> Tensor:
    """Mean squared error for point heads; NIG loss for the evidential head."""
    y = Tensor(np.asarray(y, dtype=np.float64))
    if model.config.head == "evidential":
        return total_loss(constrain(out, model.config.horizon), y, beta_r, kl_coef)
    diff = out - y
    return (diff * diff).mean()


def evaluate_loss(model, X, y, beta_r, kl_coef, batch_size=2048) -> float:
    """Eval-mode loss over a dataset, weighted by batch size."""
    total, n = 0.0, len(X)
    for i in range(0, n, batch_size):
        xb, yb = X[i:i + batch_size], y[i:i + batch_size]
        total += batch_loss(model, model.forward(xb), yb, beta_r, kl_coef).item() * len(xb)
    return total / n


def epoch_order(n, seed, epoch):
    return np.random.default_rng(np.random.SeedSequence([seed, 0x5EED, epoch])).permutation(n)


def fit_model(model: SequenceModel, X, y, X_val=None, y_val=None, *, epochs=300, batch_size=1024,
              lr=1e-4, beta_r=1.0, kl_coef=0.01, seed=0, callback=None):
    """Train ``model`` in place and return a :class:`TrainingLog`.

    Inputs are normalized windows and normalized targets. Each epoch visits
    a seeded permutation of the training windows in mini-batches; a batch
    size above the training-set size collapses to one full batch. With
    validation data, the weights of the epoch with the lowest validation
    loss are restored at the end.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if epochs < 0:
        raise ConfigError("epochs must be non-negative")
    if batch_size < 1:
        raise ConfigError("batch_size must be positive")
    if len(X) != len(y) or len(X) == 0:
        raise ConfigError(f"need matching, non-empty inputs and targets ({len(X)} vs {len(y)})")
    has_val = X_val is not None and len(X_val) > 0
    params = model.parameters()
    opt = Adam(params, lr=lr)
    log = TrainingLog()
    best_val, best_state = np.inf, None
    if has_val:
        best_val = evaluate_loss(model, X_val, y_val, beta_r, kl_coef)
        best_state = model.state_dict()
    bs = min(batch_size, len(X))
    step = 0
    for epoch in range(epochs):
        order = epoch_order(len(X), seed, epoch)
        total = 0.0
        for i in range(0, len(X), bs):
            idx = order[i:i + bs]
            with Tape() as tape:
                out = model.forward(X[idx], mode="train", step=step, seed=seed)
                loss = batch_loss(model, out, y[idx], beta_r, kl_coef)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"non-finite training loss at epoch {epoch}", epoch=epoch)
            grads = tape.gradient(loss, params)
            try:
                opt.step(grads)
            except NumericError as exc:
                raise TrainingError(f"{exc} at epoch {epoch}", epoch=epoch) from None
            total += value * len(idx)
            step += 1
        val = None
        if has_val:
            val = evaluate_loss(model, X_val, y_val, beta_r, kl_coef)
            if not np.isfinite(val):
                raise TrainingError(f"non-finite validation loss at epoch {epoch}", epoch=epoch)
            if val < best_val:
                best_val, best_state, log.best_epoch = val, model.state_dict(), epoch
        else:
            log.best_epoch = epoch
        log.records.append(EpochRecord(epoch, total / len(X), val))
        if callback is not None:
            callback(log.records[-1])
    if has_val:
        model.load_state_dict(best_state)
    return log
