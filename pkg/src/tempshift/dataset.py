"""Timestamped tabular data: loading, ordering, standardization, time slicing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

STD_FLOOR = 1e-12
TASKS = ("classification", "regression")


class DatasetError(ValueError):
    pass


class SchemaError(DatasetError):
    pass


class ParseError(DatasetError):
    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column}: cannot parse {value!r}")


class EmptyInputError(DatasetError):
    pass


@dataclass(frozen=True)
class TemporalDataset:
    features: np.ndarray
    timestamps: np.ndarray
    labels: np.ndarray
    task: str
    feature_names: tuple[str, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.task not in TASKS:
            raise DatasetError(f"unknown task {self.task!r}")
        n = len(self.timestamps)
        if self.features.shape != (n, len(self.feature_names)):
            raise DatasetError(
                f"features shape {self.features.shape} does not match "
                f"{n} rows x {len(self.feature_names)} names"
            )
        if len(self.labels) != n:
            raise DatasetError("labels length differs from timestamps")

    @property
    def n(self) -> int:
        return len(self.timestamps)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> "TemporalDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return replace(
            self,
            features=self.features[rows],
            timestamps=self.timestamps[rows],
            labels=self.labels[rows],
        )


@dataclass(frozen=True)
class ColumnSchema:
    timestamp: str
    label: str
    features: tuple[str, ...] = ()  # empty: every other column
    task: str = "regression"


def parse_timestamp(text: str) -> int:
    """Integer epoch seconds, or an ISO-8601 date/date-time (naive values are UTC)."""
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        value = None
    if value is not None and math.isfinite(value) and value == int(value):
        return int(value)
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _is_missing(text: str) -> bool:
    return text.strip().lower() in ("", "nan", "na", "null")


def load_csv(
    path,
    schema: ColumnSchema,
    drop_bad_rows: bool = False,
    impute_missing: bool = False,
) -> TemporalDataset:
    """Read a headed, comma-separated file into a :class:`TemporalDataset`.

    Rows are numbered from 1 (first data row after the header) in errors.
    With ``drop_bad_rows`` unparseable rows are skipped and the count is stored in
    ``meta["dropped_rows"]``. With ``impute_missing`` empty feature cells are kept
    as NaN so that :func:`impute_with_mean` can fill them from training rows.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyInputError(f"{path} is empty") from None
        rows = list(reader)

    for col in (schema.timestamp, schema.label, *schema.features):
        if col not in header:
            raise SchemaError(f"column {col!r} not found in {path}")
    feature_names = schema.features or tuple(
        h for h in header if h not in (schema.timestamp, schema.label)
    )
    if not feature_names:
        raise SchemaError("schema selects no feature columns")
    ts_col = header.index(schema.timestamp)
    y_col = header.index(schema.label)
    f_cols = [header.index(f) for f in feature_names]

    feats, stamps, labels = [], [], []
    dropped = 0
    for i, raw in enumerate(rows, start=1):
        if not raw or all(not c.strip() for c in raw):
            continue
        try:
            if len(raw) != len(header):
                raise ParseError(i, "<row>", ",".join(raw))
            try:
                stamp = parse_timestamp(raw[ts_col])
            except ValueError:
                raise ParseError(i, schema.timestamp, raw[ts_col]) from None
            try:
                label = float(raw[y_col])
            except ValueError:
                raise ParseError(i, schema.label, raw[y_col]) from None
            if not math.isfinite(label):
                raise ParseError(i, schema.label, raw[y_col])
            values = []
            for name, j in zip(feature_names, f_cols):
                cell = raw[j]
                if impute_missing and _is_missing(cell):
                    values.append(math.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(i, name, cell) from None
                if not math.isfinite(v):
                    raise ParseError(i, name, cell)
                values.append(v)
        except ParseError:
            if not drop_bad_rows:
                raise
            dropped += 1
            continue
        feats.append(values)
        stamps.append(stamp)
        labels.append(label)

    if not stamps:
        raise EmptyInputError(f"{path} has no usable data rows")
    labels = np.asarray(labels, dtype=np.float64)
    if schema.task == "classification" and not np.isin(labels, (0.0, 1.0)).all():
        raise DatasetError("classification labels must be 0 or 1")
    return TemporalDataset(
        features=np.asarray(feats, dtype=np.float64),
        timestamps=np.asarray(stamps, dtype=np.int64),
        labels=labels,
        task=schema.task,
        feature_names=tuple(feature_names),
        meta={"source": str(path), "dropped_rows": dropped},
    )


def write_csv(ds: TemporalDataset, path, timestamp_col: str = "timestamp", label_col: str = "label") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([timestamp_col, *ds.feature_names, label_col])
        for t, x, y in zip(ds.timestamps, ds.features, ds.labels):
            label = int(y) if ds.task == "classification" else repr(float(y))
            writer.writerow([int(t), *(repr(float(v)) for v in x), label])


def sort_by_time(ds: TemporalDataset) -> TemporalDataset:
    order = np.argsort(ds.timestamps, kind="stable")
    if np.array_equal(order, np.arange(ds.n)):
        return ds
    return ds.take(order)


def impute_with_mean(ds: TemporalDataset, rows) -> TemporalDataset:
    """Replace NaN feature cells with the per-column mean over ``rows``."""
    mask = np.isnan(ds.features)
    if not mask.any():
        return ds
    sub = ds.features[np.asarray(rows)]
    with np.errstate(invalid="ignore"):
        means = np.nanmean(sub, axis=0)
    means = np.where(np.isnan(means), 0.0, means)
    filled = np.where(mask, means[None, :], ds.features)
    return replace(ds, features=filled)


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray
    label_mean: float | None = None
    label_std: float | None = None

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.means) / self.stds

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return Z * self.stds + self.means

    def transform_labels(self, y: np.ndarray) -> np.ndarray:
        if self.label_mean is None:
            return y
        return (y - self.label_mean) / self.label_std

    def inverse_labels(self, z: np.ndarray) -> np.ndarray:
        if self.label_mean is None:
            return z
        return z * self.label_std + self.label_mean


def fit_standardizer(ds: TemporalDataset, rows) -> Standardizer:
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise DatasetError("cannot fit a standardizer on an empty row set")
    X = ds.features[rows]
    means = X.mean(axis=0)
    stds = np.maximum(X.std(axis=0), STD_FLOOR)
    if ds.task == "regression":
        y = ds.labels[rows]
        return Standardizer(means, stds, float(y.mean()), max(float(y.std()), STD_FLOOR))
    return Standardizer(means, stds)


def apply(ds: TemporalDataset, s: Standardizer) -> TemporalDataset:
    return replace(ds, features=s.transform(ds.features), labels=s.transform_labels(ds.labels))


def inverse(ds: TemporalDataset, s: Standardizer) -> TemporalDataset:
    return replace(ds, features=s.inverse(ds.features), labels=s.inverse_labels(ds.labels))


@dataclass(frozen=True)
class TimeSliceIndex:
    slice_width: int
    boundaries: np.ndarray  # slice start times
    ranges: tuple[tuple[int, int], ...]  # half-open row ranges

    def __len__(self) -> int:
        return len(self.ranges)

    @property
    def counts(self) -> np.ndarray:
        return np.array([b - a for a, b in self.ranges], dtype=np.int64)

    def nonempty(self) -> np.ndarray:
        return self.counts > 0

    def slice_of_rows(self) -> np.ndarray:
        """Slice number of every row."""
        out = np.empty(self.ranges[-1][1] if self.ranges else 0, dtype=np.int64)
        for i, (a, b) in enumerate(self.ranges):
            out[a:b] = i
        return out


def slice_by_time(ds_or_timestamps, slice_width: int) -> TimeSliceIndex:
    """Cut sorted rows into fixed-width time slices aligned to multiples of the width.

    Empty slices are kept so that slice-index differences stay proportional to
    elapsed time.
    """
    if slice_width <= 0:
        raise DatasetError("slice_width must be positive")
    ts = getattr(ds_or_timestamps, "timestamps", ds_or_timestamps)
    ts = np.asarray(ts, dtype=np.int64)
    if ts.size == 0:
        raise EmptyInputError("no rows to slice")
    if np.any(np.diff(ts) < 0):
        raise DatasetError("timestamps must be sorted before slicing")
    origin = (int(ts[0]) // slice_width) * slice_width
    slot = (ts - origin) // slice_width
    count = int(slot[-1]) + 1
    starts = np.searchsorted(slot, np.arange(count), side="left")
    ends = np.searchsorted(slot, np.arange(count), side="right")
    return TimeSliceIndex(
        slice_width=int(slice_width),
        boundaries=origin + slice_width * np.arange(count, dtype=np.int64),
        ranges=tuple((int(a), int(b)) for a, b in zip(starts, ends)),
    )


def from_arrays(
    features,
    timestamps,
    labels,
    task: str = "regression",
    feature_names: Sequence[str] | None = None,
) -> TemporalDataset:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    names = tuple(feature_names) if feature_names else tuple(f"f{i}" for i in range(X.shape[1]))
    return TemporalDataset(
        features=X,
        timestamps=np.asarray(timestamps, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.float64),
        task=task,
        feature_names=names,
    )
