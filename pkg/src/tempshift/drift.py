"""Linear-kernel MMD heatmaps between time slices and stripe (period) detection."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .dataset import TimeSliceIndex

SOURCES = ("raw_features", "representation")


class DriftError(ValueError):
    pass


def linear_mmd2(X, Y) -> float:
    """Biased MMD^2 with kernel ``k(u, v) = u . v``, i.e. ``||mean(X) - mean(Y)||^2``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise DriftError("MMD needs two non-empty sets")
    if X.shape[1] != Y.shape[1]:
        raise DriftError(f"column widths differ: {X.shape[1]} vs {Y.shape[1]}")
    diff = X.mean(axis=0) - Y.mean(axis=0)
    return float(diff @ diff)


@dataclass(frozen=True)
class DriftHeatmap:
    boundaries: np.ndarray
    counts: np.ndarray
    matrix: np.ndarray  # NaN where either slice is empty
    source: str

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["slice_start", *(int(b) for b in self.boundaries)])
        for b, row in zip(self.boundaries, self.matrix):
            writer.writerow([int(b), *("" if np.isnan(v) else repr(float(v)) for v in row)])
        return buf.getvalue()

    def to_pgm(self) -> bytes:
        """Binary 8-bit greyscale image, min-max scaled; missing entries are white."""
        M = self.matrix
        ok = ~np.isnan(M)
        img = np.full(M.shape, 255, dtype=np.uint8)
        if ok.any():
            lo, hi = float(M[ok].min()), float(M[ok].max())
            span = hi - lo if hi > lo else 1.0
            img[ok] = np.round((M[ok] - lo) / span * 255.0).astype(np.uint8)
        header = f"P5\n{M.shape[1]} {M.shape[0]}\n255\n".encode("ascii")
        return header + img.tobytes()


def heatmap(data, slices: TimeSliceIndex, source: str = "raw_features") -> DriftHeatmap:
    """Pairwise linear MMD^2 between every pair of time slices of ``data``."""
    if source not in SOURCES:
        raise DriftError(f"unknown heatmap source {source!r}")
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    counts = slices.counts
    if data.shape[0] != int(counts.sum()):
        raise DriftError("data rows do not line up with the slice index")
    nonempty = counts > 0
    if nonempty.sum() < 2:
        raise DriftError("need at least two non-empty slices")
    means = np.full((len(slices), data.shape[1]), np.nan)
    for i, (a, b) in enumerate(slices.ranges):
        if b > a:
            means[i] = data[a:b].mean(axis=0)
    M = np.empty((len(slices), len(slices)))
    for i in range(len(slices)):
        diff = means - means[i]
        M[i] = np.einsum("jk,jk->j", diff, diff)
    np.fill_diagonal(M, 0.0)
    M[~nonempty, :] = np.nan
    M[:, ~nonempty] = np.nan
    return DriftHeatmap(np.asarray(slices.boundaries), counts, M, source)


def band_profile(H: DriftHeatmap, max_lag: int) -> np.ndarray:
    """Mean MMD^2 along each diagonal ``M[i, i + lag]`` for ``lag = 0..max_lag``."""
    if not 0 <= max_lag < H.size:
        raise DriftError(f"max_lag must lie in [0, {H.size - 1}]")
    out = np.full(max_lag + 1, np.nan)
    for lag in range(max_lag + 1):
        band = np.diagonal(H.matrix, offset=lag)
        band = band[~np.isnan(band)]
        if band.size:
            out[lag] = band.mean()
    return out


def detect_periods(profile, threshold: float = 0.1) -> list[int]:
    """Lags that are strict local minima and sit below ``(1 - threshold) * median``."""
    p = np.asarray(profile, dtype=np.float64)
    if p.size < 3:
        raise DriftError("profile must have at least three lags")
    cutoff = np.nanmedian(p) * (1.0 - threshold)
    found = []
    for lag in range(1, p.size - 1):
        here, left, right = p[lag], p[lag - 1], p[lag + 1]
        if np.isnan(here) or np.isnan(left) or np.isnan(right):
            continue
        if here < left and here < right and here < cutoff:
            found.append(lag)
    return found
