"""Linear and ReLU-MLP predictors with hand-written backprop (float64)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("linear", "mlp")


class ModelError(ValueError):
    pass


@dataclass
class PredictorState:
    kind: str
    dims: tuple[int, ...]
    weights: list[np.ndarray]  # weights[i] has shape (dims[i+1], dims[i])
    biases: list[np.ndarray]
    dropout: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}")
        if self.dims[-1] != 1:
            raise ModelError("predictor output width must be 1")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.dims[i + 1], self.dims[i]) or b.shape != (self.dims[i + 1],):
                raise ModelError(f"layer {i} shapes do not match dims {self.dims}")

    @property
    def d_in(self) -> int:
        return self.dims[0]

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = W
            out[f"b{i}"] = b
        return out

    def copy(self) -> "PredictorState":
        return PredictorState(
            self.kind,
            self.dims,
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.dropout,
        )


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each layer
    pre: list[np.ndarray] = field(default_factory=list)  # pre-activation of hidden layers
    masks: list[np.ndarray | None] = field(default_factory=list)


def init(kind: str, dims, seed: int = 0, dropout: float = 0.0) -> PredictorState:
    """Fan-in uniform initialisation, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise ModelError(f"zero-width layer in dims {dims}")
    if kind == "linear" and len(dims) != 2:
        raise ModelError("a linear model has dims [d_in, 1]")
    if kind == "mlp" and len(dims) < 3:
        raise ModelError("an MLP needs at least one hidden layer")
    if not 0.0 <= dropout < 1.0:
        raise ModelError("dropout must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return PredictorState(kind, dims, weights, biases, dropout)


def forward(state: PredictorState, X: np.ndarray, train_mode: bool = False, rng=None):
    """Return ``(outputs, cache)``; the cache is ``None`` in eval mode.

    In train mode hidden activations are dropped with inverted scaling using
    masks drawn from ``rng``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != state.d_in:
        raise ModelError(f"expected input with {state.d_in} columns, got shape {X.shape}")
    cache = ForwardCache() if train_mode else None
    h = X
    last = len(state.weights) - 1
    for i, (W, b) in enumerate(zip(state.weights, state.biases)):
        if cache is not None:
            cache.inputs.append(h)
        z = h @ W.T + b
        if i == last:
            return z[:, 0], cache
        h = np.maximum(z, 0.0)
        mask = None
        if train_mode and state.dropout > 0:
            if rng is None:
                raise ModelError("dropout in train mode needs an rng")
            keep = 1.0 - state.dropout
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        if cache is not None:
            cache.pre.append(z)
            cache.masks.append(mask)
    raise AssertionError("unreachable")


def predict_raw(state: PredictorState, X) -> np.ndarray:
    return forward(state, X, train_mode=False)[0]


def _check_labels(y, task):
    if task == "classification" and not np.isin(y, (0.0, 1.0)).all():
        raise ModelError("classification labels must be 0 or 1")
    if task not in ("classification", "regression"):
        raise ModelError(f"unknown task {task!r}")


def output_loss(z: np.ndarray, y: np.ndarray, task: str) -> tuple[float, np.ndarray]:
    """Mean loss and d(loss)/d(output)."""
    n = z.shape[0]
    if task == "classification":
        # softplus(z) - y z, stable for large |z|
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        return loss, (p - y) / n
    r = z - y
    return float(np.mean(r * r)), 2.0 * r / n


def per_instance_loss(z: np.ndarray, y: np.ndarray, task: str) -> np.ndarray:
    if task == "classification":
        return np.logaddexp(0.0, z) - y * z
    return (z - y) ** 2


def backward(state: PredictorState, cache: ForwardCache, g_out: np.ndarray):
    """Backprop ``d(loss)/d(output)`` through the cached forward pass."""
    grads: dict[str, np.ndarray] = {}
    g = g_out[:, None]
    for i in range(len(state.weights) - 1, -1, -1):
        grads[f"W{i}"] = g.T @ cache.inputs[i]
        grads[f"b{i}"] = g.sum(axis=0)
        g = g @ state.weights[i]
        if i > 0:
            mask = cache.masks[i - 1]
            if mask is not None:
                g = g * mask
            g = g * (cache.pre[i - 1] > 0)
    return grads, g


def loss_and_grad(state: PredictorState, X, y, task: str, rng=None):
    """Mean loss, parameter gradients and the gradient with respect to ``X``."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ModelError("empty batch")
    _check_labels(y, task)
    z, cache = forward(state, X, train_mode=True, rng=rng)
    loss, g_out = output_loss(z, y, task)
    grads, g_x = backward(state, cache, g_out)
    return loss, grads, g_x


def penultimate_representation(state: PredictorState, X) -> np.ndarray:
    if state.kind != "mlp":
        raise ModelError("penultimate representation needs an MLP")
    h = np.asarray(X, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != state.d_in:
        raise ModelError(f"expected input with {state.d_in} columns, got shape {h.shape}")
    for W, b in zip(state.weights[:-1], state.biases[:-1]):
        h = np.maximum(h @ W.T + b, 0.0)
    return h


def save_checkpoint(state: PredictorState, path) -> None:
    """JSON checkpoint: a ``dims`` header followed by row-major weights per layer."""
    doc = {
        "format": "tempshift-checkpoint/1",
        "kind": state.kind,
        "dims": list(state.dims),
        "dropout": state.dropout,
        "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in zip(state.weights, state.biases)],
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> PredictorState:
    doc = json.loads(Path(path).read_text())
    return PredictorState(
        doc["kind"],
        tuple(doc["dims"]),
        [np.asarray(layer["W"], dtype=np.float64) for layer in doc["layers"]],
        [np.asarray(layer["b"], dtype=np.float64) for layer in doc["layers"]],
        doc.get("dropout", 0.0),
    )
