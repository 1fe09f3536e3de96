"""Quantile losses and the mini-batch training loop.

The objective is the composite quantile loss: pinball loss summed over
windows, quantile levels, and horizon steps. For optimization and logging it
is scaled to a per-window mean so values are comparable across split sizes;
the sum-form metric lives in ``caf.evaluation``.

Training is deterministic from TrainConfig.seed: epoch shuffles and dropout
masks come from named substreams, so rerunning a fit reproduces every batch
and every update bit-for-bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import WindowSet
from .errors import ConfigError, DivergedError, ShapeError
from .model import Forecaster
from .params import ParamStore
from .rng import Rng, derive_seed


def quantile_loss(y: float, yhat: float, q: float) -> float:
    """Pinball loss (q - 1{y < yhat})(y - yhat); non-negative, 0 iff y = yhat."""
    if not 0.0 < q < 1.0:
        raise ConfigError(f"quantile level must lie in (0, 1), got {q}")
    err = y - yhat
    return (q - (1.0 if y < yhat else 0.0)) * err


def pinball(err: Tensor, quantiles) -> Tensor:
    """Differentiable pinball loss of forecast errors err = y - yhat.

    err has quantile levels on its last axis; broadcasting the level vector
    against it gives max(q*err, (q-1)*err), which equals the pinball loss on
    both sides of zero.
    """
    qv = np.asarray(quantiles, dtype=np.float64)
    return ad.maximum(ad.mul(err, qv), ad.mul(err, qv - 1.0))


def composite_quantile_loss(y: np.ndarray, yhat, quantiles):
    """Sum of pinball losses over windows, levels, and horizon steps.

    y is (N, tau); yhat is (N, tau, |Q|) as Tensor (differentiable) or
    ndarray. Returns (total, per_cell) with total a scalar Tensor and
    per_cell the (tau, |Q|) breakdown summed over windows.
    """
    yhat_t = yhat if isinstance(yhat, Tensor) else ad.constant(yhat)
    y = np.asarray(y, dtype=np.float64)
    if yhat_t.shape[:2] != y.shape or yhat_t.shape[2] != len(quantiles):
        raise ShapeError(
            f"forecasts {yhat_t.shape} do not align with targets {y.shape} "
            f"and {len(quantiles)} quantile levels"
        )
    err = ad.sub(ad.constant(y[..., None]), yhat_t)
    cells = pinball(err, quantiles)
    return ad.tensor_sum(cells), cells.values.sum(axis=0)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # "adam" | "sgd"
    seed: int = 0
    early_stop_patience: int = 10
    clip_norm: float = 1.0  # 0 disables clipping

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.early_stop_patience < 0:
            raise ConfigError("early_stop_patience must be >= 0")
        if self.clip_norm < 0:
            raise ConfigError("clip_norm must be >= 0")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "seed": self.seed,
            "early_stop_patience": self.early_stop_patience,
            "clip_norm": self.clip_norm,
        }

    @staticmethod
    def from_dict(obj: dict) -> "TrainConfig":
        return TrainConfig(**obj)


class _Adam:
    """Adaptive moment estimation with the standard decay constants."""

    def __init__(self, store: ParamStore, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {name: np.zeros_like(t.values) for name, t in store.params.items()}
        self.v = {name: np.zeros_like(t.values) for name, t in store.params.items()}
        self.t = 0

    def step(self, store: ParamStore) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, tensor in store.params.items():
            g = tensor.grad
            if g is None:
                continue
            m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            tensor.values -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class _Sgd:
    def __init__(self, store: ParamStore, lr: float):
        self.lr = lr

    def step(self, store: ParamStore) -> None:
        for tensor in store.params.values():
            if tensor.grad is not None:
                tensor.values -= self.lr * tensor.grad


def clip_gradients(store: ParamStore, clip_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most clip_norm."""
    total = 0.0
    for t in store.params.values():
        if t.grad is not None:
            total += float((t.grad**2).sum())
    norm = np.sqrt(total)
    if clip_norm > 0 and norm > clip_norm:
        scale = clip_norm / norm
        for t in store.params.values():
            if t.grad is not None:
                t.grad *= scale
    return norm


@dataclass
class FitResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_cql: float = float("inf")
    stopped_early: bool = False


def mean_cql(model: Forecaster, params: ParamStore, windows: WindowSet) -> float:
    """Per-window composite quantile loss with dropout off (normalized units)."""
    yhat, _ = model.forward_batch(windows.x, windows.times, params, rng=None)
    total, _ = composite_quantile_loss(windows.y, yhat, model.config.quantiles)
    return total.item() / len(windows)


def fit(
    model: Forecaster,
    params: ParamStore,
    train: WindowSet,
    validation: WindowSet,
    config: TrainConfig,
    log=None,
) -> FitResult:
    """Mini-batch descent on the mean composite quantile loss.

    Logs one history row per epoch (epoch 0 is the untrained model), keeps
    the best-validation parameter values, and restores them before
    returning. Raises DivergedError (with the last good values and the
    history so far) if the loss goes non-finite.
    """
    if len(train) == 0:
        raise ConfigError("training split has no windows")
    if len(validation) == 0:
        raise ConfigError("validation split has no windows")
    quantiles = model.config.quantiles
    optimizer = (
        _Adam(params, config.learning_rate)
        if config.optimizer == "adam"
        else _Sgd(params, config.learning_rate)
    )

    result = FitResult()
    t0 = time.perf_counter()

    def record(epoch: int) -> tuple[float, float]:
        train_cql = mean_cql(model, params, train)
        val_cql = mean_cql(model, params, validation)
        row = {
            "epoch": epoch,
            "train_cql": train_cql,
            "val_cql": val_cql,
            "seconds": time.perf_counter() - t0,
        }
        result.history.append(row)
        if log is not None:
            log(row)
        return train_cql, val_cql

    _, val0 = record(0)
    best_values = params.clone_values()
    result.best_val_cql = val0
    bad_epochs = 0

    for epoch in range(1, config.epochs + 1):
        order = Rng(derive_seed(config.seed, f"shuffle/{epoch}")).shuffle_index(len(train))
        for batch_no, start in enumerate(range(0, len(train), config.batch_size)):
            idx = order[start : start + config.batch_size]
            batch = train.subset(idx)
            drop_rng = (
                Rng(derive_seed(config.seed, f"dropout/{epoch}/{batch_no}"))
                if model.config.dropout > 0
                else None
            )
            params.zero_grads()
            yhat, _ = model.forward_batch(batch.x, batch.times, params, rng=drop_rng)
            total, _ = composite_quantile_loss(batch.y, yhat, quantiles)
            loss = ad.mul(total, 1.0 / len(batch))
            if not np.isfinite(loss.values).all():
                raise DivergedError(
                    f"loss became non-finite in epoch {epoch}",
                    last_good=best_values,
                    history=result.history,
                )
            loss.backward()
            clip_gradients(params, config.clip_norm)
            optimizer.step(params)

        _, val_cql = record(epoch)
        if not np.isfinite(val_cql):
            raise DivergedError(
                f"validation loss became non-finite after epoch {epoch}",
                last_good=best_values,
                history=result.history,
            )
        if val_cql < result.best_val_cql:
            result.best_val_cql = val_cql
            result.best_epoch = epoch
            best_values = params.clone_values()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > config.early_stop_patience:
                result.stopped_early = True
                break

    params.load_values(best_values)
    return result


def write_history_csv(history: list[dict], path, append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        if not append:
            fh.write("epoch,train_cql,val_cql,seconds\n")
        for row in history:
            fh.write(
                f"{row['epoch']},{row['train_cql']!r},{row['val_cql']!r},{row['seconds']:.3f}\n"
            )
