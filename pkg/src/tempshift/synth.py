"""Synthetic temporal tabular data with a known noiseless signal.

    signal(t, x) = w.x + trend_coeff * (t - start) / (end - start)
                   + sum_j A_j sin(2 pi t / P_j + phi_j)

Regression labels add ``Normal(0, noise_std)``; classification labels are
``1[signal + noise > median(signal)]``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import TemporalDataset


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n: int = 40_000
    d: int = 8
    w: tuple[float, ...] | None = None  # drawn from the seed when None
    trend_coeff: float = 1.0
    periodic: tuple[tuple[float, float, float], ...] = ()  # (period s, amplitude, phase)
    noise_std: float = 0.1
    start: int = 1_609_718_400  # 2021-01-04 00:00 UTC, a Monday
    end: int = 1_609_718_400 + 140 * 86_400
    task: str = "regression"
    seed: int = 0

    def __post_init__(self):
        if self.n < 10:
            raise SynthError("n must be at least 10")
        if self.d < 1:
            raise SynthError("d must be at least 1")
        if self.noise_std < 0:
            raise SynthError("noise_std must be non-negative")
        if self.end <= self.start:
            raise SynthError("end must be after start")
        if any(p <= 0 for p, _, _ in self.periodic):
            raise SynthError("periods must be positive")
        if self.w is not None and len(self.w) != self.d:
            raise SynthError("w must have d entries")
        if self.task not in ("regression", "classification"):
            raise SynthError(f"unknown task {self.task!r}")

    def weights(self) -> np.ndarray:
        if self.w is not None:
            return np.asarray(self.w, dtype=np.float64)
        rng = np.random.default_rng([self.seed, 7])
        return rng.standard_normal(self.d) / np.sqrt(self.d)

    def fingerprint(self) -> str:
        doc = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["periodic"] = [list(c) for c in self.periodic]
        out["w"] = list(self.w) if self.w is not None else None
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        doc = dict(doc)
        doc["periodic"] = tuple(tuple(float(v) for v in c) for c in doc.get("periodic", ()))
        if doc.get("w") is not None:
            doc["w"] = tuple(float(v) for v in doc["w"])
        return cls(**doc)


def _signal(config: SynthConfig, t, X) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    out = X @ config.weights()
    out = out + config.trend_coeff * (t - config.start) / (config.end - config.start)
    for period, amp, phase in config.periodic:
        out = out + amp * np.sin(2 * np.pi * np.mod(t, period) / period + phase)
    return out


def generate(config: SynthConfig) -> TemporalDataset:
    rng = np.random.default_rng(config.seed)
    t = np.sort(rng.integers(config.start, config.end, size=config.n, endpoint=False))
    X = rng.standard_normal((config.n, config.d))
    noise = rng.standard_normal(config.n) * config.noise_std
    signal = _signal(config, t, X)
    if config.task == "regression":
        y = signal + noise
    else:
        y = (signal + noise > np.median(signal)).astype(np.float64)
    return TemporalDataset(
        features=X,
        timestamps=t.astype(np.int64),
        labels=y,
        task=config.task,
        feature_names=tuple(f"x{i}" for i in range(config.d)),
        meta={"synth_fingerprint": config.fingerprint()},
    )


def oracle_predict(config: SynthConfig, t, x) -> np.ndarray | float:
    """The noiseless signal, the best possible regression prediction."""
    if np.ndim(t) == 0:
        return float(_signal(config, np.array([t]), np.atleast_2d(x))[0])
    return _signal(config, t, x)


def oracle_rmse(config: SynthConfig, ds: TemporalDataset, rows=None) -> float:
    fp = ds.meta.get("synth_fingerprint")
    if fp is not None and fp != config.fingerprint():
        raise SynthError("dataset was generated from a different config")
    if config.task != "regression":
        raise SynthError("oracle RMSE is defined for regression data")
    rows = np.arange(ds.n) if rows is None else np.asarray(rows)
    pred = _signal(config, ds.timestamps[rows], ds.features[rows])
    return float(np.sqrt(np.mean((pred - ds.labels[rows]) ** 2)))
