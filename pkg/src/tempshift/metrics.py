"""Task metrics, improvement aggregation, robustness scores and loss curves."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.stats import rankdata

from .dataset import TimeSliceIndex


class MetricError(ValueError):
    pass


HIGHER_IS_BETTER = {"classification": True, "regression": False}


def auc(scores, labels) -> float:
    """ROC AUC via the Mann-Whitney statistic; tied scores count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined when only one class is present")
    ranks = rankdata(scores)  # midranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def rmse(preds, targets) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.size == 0 or preds.shape != targets.shape:
        raise MetricError("rmse needs two non-empty arrays of equal shape")
    return float(np.sqrt(np.mean((preds - targets) ** 2)))


def score(task: str, preds, targets) -> float:
    """AUC for classification (``preds`` are scores), RMSE for regression."""
    return auc(preds, targets) if task == "classification" else rmse(preds, targets)


def is_better(task: str, new: float, old: float) -> bool:
    """Strict improvement in the task's direction."""
    return new > old if HIGHER_IS_BETTER[task] else new < old


def pct_improvement(base: float, new: float, task: str) -> float:
    """Signed percent change, positive when ``new`` is better than ``base``."""
    if base <= 0:
        raise MetricError("baseline metric must be positive")
    if HIGHER_IS_BETTER[task]:
        return (new - base) / base * 100.0
    return (base - new) / base * 100.0


def mean_improvement(pairs) -> float:
    """Plain mean of :func:`pct_improvement` over ``(base, new, task)`` triples."""
    vals = [pct_improvement(b, n, t) for b, n, t in pairs]
    if not vals:
        raise MetricError("no pairs to average")
    return float(np.mean(vals))


def robust_average(values) -> float:
    """Mean after dropping one maximum and one minimum value."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size < 3:
        raise MetricError("robust average needs at least three values")
    return float(v[1:-1].mean())


def robustness_score(mu: float, sigma: float, k: float) -> float:
    if sigma < 0:
        raise MetricError("sigma must be non-negative")
    return mu - k * sigma


def slice_means(values, slices: TimeSliceIndex) -> np.ndarray:
    """Per-slice mean; empty slices are NaN."""
    values = np.asarray(values, dtype=np.float64)
    out = np.full(len(slices), np.nan)
    for i, (a, b) in enumerate(slices.ranges):
        if b > a:
            out[i] = values[a:b].mean()
    return out


def fill_gaps(curve: np.ndarray) -> np.ndarray:
    """Linear interpolation over NaN entries; edges take the nearest value."""
    curve = np.asarray(curve, dtype=np.float64)
    ok = ~np.isnan(curve)
    if not ok.any():
        raise MetricError("all slices are empty")
    x = np.arange(curve.size)
    return np.interp(x, x[ok], curve[ok])


def loss_over_time(per_instance_losses, slices: TimeSliceIndex, smoothing_sigma: float = 2.0) -> np.ndarray:
    """Per-slice mean loss smoothed by a Gaussian (truncated at 4 sigma, reflective edges)."""
    curve = fill_gaps(slice_means(per_instance_losses, slices))
    if smoothing_sigma <= 0:
        return curve
    return gaussian_filter1d(curve, smoothing_sigma, mode="reflect", truncate=4.0)
