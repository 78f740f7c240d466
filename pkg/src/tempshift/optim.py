"""AdamW training with epoch-wise validation selection and patience early stopping."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import metrics
from . import model as mdl
from .dataset import Standardizer, TemporalDataset
from .embedding import TemporalEncoder
from .splitting import SplitPlan

log = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 1024
    patience: int = 16
    max_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")


@dataclass
class AdamWState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamWState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
        )


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamWState, lr: float, wd: float):
    """One decoupled-weight-decay Adam update, applied to ``params`` in place.

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
    """
    state.step += 1
    c1 = 1.0 - BETA1**state.step
    c2 = 1.0 - BETA2**state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + EPS) + wd * p
        p -= lr * update
    return params, state


class EarlyStopper:
    """Tracks the best validation metric; ties do not count as improvement."""

    def __init__(self, task: str, patience: int):
        self.task = task
        self.patience = patience
        self.best: float | None = None
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, epoch: int, value: float) -> bool:
        if self.best is None or metrics.is_better(self.task, value, self.best):
            self.best = value
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class FitResult:
    model: mdl.PredictorState
    encoder: TemporalEncoder
    best_epoch: int
    best_val: float
    train_loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    stop_reason: str = ""
    config: TrainConfig | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.val_metric)

    def to_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "best_val": self.best_val,
            "epochs_run": self.epochs_run,
            "stop_reason": self.stop_reason,
            "history": {"train_loss": self.train_loss, "val_metric": self.val_metric},
            "config": asdict(self.config) if self.config else None,
            "seed": self.config.seed if self.config else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def model_inputs(encoder: TemporalEncoder, X: np.ndarray, t) -> np.ndarray:
    if encoder.width == 0:
        return X
    return np.concatenate([X, encoder.transform(t)], axis=1)


def batch_loss_and_grads(
    state: mdl.PredictorState,
    encoder: TemporalEncoder,
    X: np.ndarray,
    t,
    y,
    task: str,
    rng=None,
):
    """Loss and gradients for model and trainable encoder arrays on one batch."""
    if encoder.width:
        E, cache = encoder.forward(t)
        inputs = np.concatenate([X, E], axis=1)
    else:
        inputs, cache = X, None
    loss, grads, g_in = mdl.loss_and_grad(state, inputs, y, task, rng=rng)
    if cache is not None:
        grads.update(encoder.backward(g_in[:, X.shape[1] :], cache))
    return loss, grads


def raw_outputs(state, encoder, ds: TemporalDataset, rows) -> np.ndarray:
    rows = np.asarray(rows)
    return mdl.predict_raw(state, model_inputs(encoder, ds.features[rows], ds.timestamps[rows]))


def evaluate(state, encoder, ds: TemporalDataset, rows, standardizer: Standardizer | None = None) -> float:
    """Validation/test metric in original label units."""
    preds = predict(state, encoder, ds, rows, standardizer)
    targets = ds.labels[np.asarray(rows)]
    if standardizer is not None:
        targets = standardizer.inverse_labels(targets)
    return metrics.score(ds.task, preds, targets)


def train(
    model_state: mdl.PredictorState,
    encoder: TemporalEncoder,
    dataset: TemporalDataset,
    plan: SplitPlan,
    config: TrainConfig,
    standardizer: Standardizer | None = None,
) -> FitResult:
    """Fit on ``plan.train_idx`` and keep the snapshot with the best validation metric.

    ``dataset`` must already be standardized with statistics from the training
    rows; pass the ``standardizer`` so that regression metrics are reported in
    original units. The input state and encoder are not modified.
    """
    train_idx = np.asarray(plan.train_idx)
    val_idx = np.asarray(plan.val_idx)
    if train_idx.size == 0 or val_idx.size == 0:
        raise TrainingError("empty train or validation set")
    state = model_state.copy()
    enc = encoder.copy()
    params = {**state.params(), **enc.trainable()}
    opt = AdamWState.zeros_like(params)
    shuffle_rng = np.random.default_rng([config.seed, 0])
    dropout_rng = np.random.default_rng([config.seed, 1])
    stopper = EarlyStopper(dataset.task, config.patience)

    X, t, y = dataset.features, dataset.timestamps, dataset.labels
    result = FitResult(state.copy(), enc.copy(), -1, float("nan"), config=config)
    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(train_idx)
        total = 0.0
        for start in range(0, order.size, config.batch_size):
            rows = order[start : start + config.batch_size]
            loss, grads = batch_loss_and_grads(state, enc, X[rows], t[rows], y[rows], dataset.task, dropout_rng)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(
                    f"non-finite loss or gradient at epoch {epoch}, batch starting {start} (loss={loss})"
                )
            adamw_step(params, grads, opt, config.learning_rate, config.weight_decay)
            total += loss * rows.size
        result.train_loss.append(total / train_idx.size)
        val = evaluate(state, enc, dataset, val_idx, standardizer)
        result.val_metric.append(val)
        if stopper.update(epoch, val):
            result.model = state.copy()
            result.encoder = enc.copy()
            result.best_epoch = epoch
            result.best_val = val
        log.debug("epoch %d train_loss %.6f val %.6f", epoch, result.train_loss[-1], val)
        if stopper.should_stop:
            result.stop_reason = "patience"
            break
    else:
        result.stop_reason = "max_epochs"
    return result


def predict(state, encoder, dataset: TemporalDataset, rows, standardizer: Standardizer | None = None) -> np.ndarray:
    """Probabilities for classification, label-unit values for regression."""
    z = raw_outputs(state, encoder, dataset, rows)
    if dataset.task == "classification":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if standardizer is not None:
        return standardizer.inverse_labels(z)
    return z
