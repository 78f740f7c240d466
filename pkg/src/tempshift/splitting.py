"""Train/validation/test split geometries over a time-sorted dataset.

Pre-test rows are cut into three equal-count blocks S1 < S2 < S3 (in time). The
presets assign blocks to train and validation:

    original  train S1+S2   val S3
    a         train S1      val S3
    b         train S2      val S3
    c         train S1      val S2
    d         train S2      val S1
    ours      train S2+S3   val S1
    random    val drawn uniformly from S1+S2+S3 (|S3| rows), train the rest

The test block is always the final ``ceil(n * test_fraction)`` rows. Block
sizes differ by at most one (earliest blocks larger); validation blocks are cut
to ``|S3|`` rows, keeping the rows next to the training block, so every preset
validates on the same number of rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .dataset import TemporalDataset

PRESETS = ("original", "a", "b", "c", "d", "ours", "random")
DEFAULT_TEST_FRACTION = 0.2

_ASSIGNMENT = {
    "original": ((0, 1), (2,)),
    "a": ((0,), (2,)),
    "b": ((1,), (2,)),
    "c": ((0,), (1,)),
    "d": ((1,), (0,)),
    "ours": ((1, 2), (0,)),
}


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SegmentLayout:
    s1: range
    s2: range
    s3: range

    def __iter__(self):
        return iter((self.s1, self.s2, self.s3))

    def __getitem__(self, i: int) -> range:
        return (self.s1, self.s2, self.s3)[i]


@dataclass(frozen=True)
class SplitPlan:
    name: str
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    t_train_boundary: int
    segment_bounds: tuple[tuple[int, int], ...]
    test_fraction: float
    n: int
    seed: int | None = None
    boundary_times: dict = field(default_factory=dict, compare=False)

    @property
    def unused_idx(self) -> np.ndarray:
        n_tv = self.test_idx[0]
        used = np.zeros(n_tv, dtype=bool)
        used[self.train_idx] = True
        used[self.val_idx] = True
        return np.flatnonzero(~used)

    def training_lag(self, timestamps) -> int:
        """Seconds between the last training row and the first test row."""
        ts = np.asarray(timestamps)
        return int(ts[self.test_idx[0]] - ts[self.train_idx[-1]])

    def to_dict(self, include_indices: bool = False) -> dict:
        out = {
            "name": self.name,
            "n": self.n,
            "test_fraction": self.test_fraction,
            "seed": self.seed,
            "counts": {
                "train": int(self.train_idx.size),
                "val": int(self.val_idx.size),
                "test": int(self.test_idx.size),
                "unused": int(self.unused_idx.size),
            },
            "t_train_boundary": int(self.t_train_boundary),
            "segment_bounds": [list(b) for b in self.segment_bounds],
            "boundary_times": self.boundary_times,
        }
        if include_indices:
            out["indices"] = {
                "train": self.train_idx.tolist(),
                "val": self.val_idx.tolist(),
                "test": self.test_idx.tolist(),
            }
        return out

    def to_json(self, include_indices: bool = False) -> str:
        return json.dumps(self.to_dict(include_indices), indent=2, sort_keys=True)


def _test_count(n: int, test_fraction: float) -> int:
    # round first: 10 * 0.3 == 3.0000000000000004
    return math.ceil(round(n * test_fraction, 9))


def make_test_holdout(ds_or_n, test_fraction: float = DEFAULT_TEST_FRACTION) -> tuple[range, range]:
    n = ds_or_n if isinstance(ds_or_n, int) else ds_or_n.n
    if not 0 < test_fraction < 1:
        raise SplitError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = _test_count(n, test_fraction)
    n_tv = n - n_test
    if n_test < 1 or n_tv < 1:
        raise SplitError(f"{n} rows with test_fraction={test_fraction} leaves an empty block")
    return range(0, n_tv), range(n_tv, n)


def tertile_segments(trainval: range, fractions: tuple[float, float, float] | None = None) -> SegmentLayout:
    """Split ``trainval`` into three contiguous blocks.

    Without ``fractions`` the blocks have equal counts, the remainder going to
    the earliest blocks (7 rows -> 3, 2, 2).
    """
    n = len(trainval)
    if n < 3:
        raise SplitError(f"need at least 3 pre-test rows, got {n}")
    if fractions is None:
        base, extra = divmod(n, 3)
        sizes = [base + (1 if i < extra else 0) for i in range(3)]
    else:
        fr = np.asarray(fractions, dtype=np.float64)
        if fr.shape != (3,) or np.any(fr <= 0):
            raise SplitError("segment fractions must be three positive numbers")
        fr = fr / fr.sum()
        cuts = np.round(np.cumsum(fr) * n).astype(int)
        sizes = [int(cuts[0]), int(cuts[1] - cuts[0]), int(n - cuts[1])]
        if min(sizes) < 1:
            raise SplitError("segment fractions produce an empty block")
    start = trainval.start
    out = []
    for s in sizes:
        out.append(range(start, start + s))
        start += s
    return SegmentLayout(*out)


def preset_split(
    name: str,
    ds: TemporalDataset,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    seed: int | None = None,
    segment_fractions: tuple[float, float, float] | None = None,
) -> SplitPlan:
    if name not in PRESETS:
        raise SplitError(f"unknown split preset {name!r}; choose from {', '.join(PRESETS)}")
    ts = np.asarray(ds.timestamps)
    trainval, test = make_test_holdout(ds.n, test_fraction)
    seg = tertile_segments(trainval, segment_fractions)

    if name == "random":
        if seed is None:
            raise SplitError("the random preset requires a seed")
        rng = np.random.default_rng(seed)
        pool = np.arange(trainval.start, trainval.stop)
        val = np.sort(rng.choice(pool, size=len(seg.s3), replace=False))
        mask = np.ones(len(pool), dtype=bool)
        mask[val - trainval.start] = False
        train = pool[mask]
    else:
        tr_blocks, va_blocks = _ASSIGNMENT[name]
        train = np.concatenate([np.arange(seg[i].start, seg[i].stop) for i in tr_blocks])
        val = np.concatenate([np.arange(seg[i].start, seg[i].stop) for i in va_blocks])
        # keep |val| = |S3| for every preset; surplus rows farthest from train go unused
        size = len(seg.s3)
        val = val[-size:] if val[0] < train[0] else val[:size]

    test_idx = np.arange(test.start, test.stop)
    bounds = {
        "train": [int(ts[train[0]]), int(ts[train[-1]])],
        "val": [int(ts[val[0]]), int(ts[val[-1]])],
        "test": [int(ts[test_idx[0]]), int(ts[test_idx[-1]])],
    }
    return SplitPlan(
        name=name,
        train_idx=train.astype(np.int64),
        val_idx=val.astype(np.int64),
        test_idx=test_idx.astype(np.int64),
        t_train_boundary=int(ts[trainval.stop - 1]),
        segment_bounds=tuple((r.start, r.stop) for r in seg),
        test_fraction=float(test_fraction),
        n=ds.n,
        seed=seed if name == "random" else None,
        boundary_times=bounds,
    )


@dataclass
class RelationReport:
    checks: dict[str, bool] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def record(self, label: str, passed: bool) -> None:
        self.checks[label] = bool(passed)
        if not passed:
            self.violations.append(label)

    def lines(self) -> list[str]:
        return [f"{'PASS' if v else 'FAIL'}  {k}" for k, v in self.checks.items()]


def verify_plan_relations(plans: Iterable[SplitPlan]) -> RelationReport:
    """Check the structural relations that tie the presets together.

    Only the relations whose presets are present are checked. Plans built from
    different datasets or test fractions raise :class:`SplitError`.
    """
    plans = list(plans)
    if not plans:
        raise SplitError("no plans to verify")
    ref = plans[0]
    for p in plans[1:]:
        if p.n != ref.n or p.test_fraction != ref.test_fraction or not np.array_equal(p.test_idx, ref.test_idx):
            raise SplitError("plans were not built from the same dataset and test_fraction")

    by_name = {p.name: p for p in plans}
    report = RelationReport()
    eq = np.array_equal

    for p in plans:
        tv_end = p.test_idx[0]
        report.record(f"{p.name}: train/val disjoint", np.intersect1d(p.train_idx, p.val_idx).size == 0)
        report.record(
            f"{p.name}: test after train and val",
            p.train_idx.max() < tv_end and p.val_idx.max() < tv_end,
        )
        report.record(f"{p.name}: test is final contiguous block", eq(p.test_idx, np.arange(tv_end, p.n)))
        if p.name != "random":
            for part, idx in (("train", p.train_idx), ("val", p.val_idx)):
                report.record(f"{p.name}: {part} contiguous", bool(np.all(np.diff(idx) == 1)))

    sizes = {p.val_idx.size for p in plans}
    report.record("equal |val| across presets", len(sizes) == 1)

    def pair(label, x, y, part_x, part_y):
        if x in by_name and y in by_name:
            report.record(label, eq(getattr(by_name[x], part_x), getattr(by_name[y], part_y)))

    pair("val(a) = val(b)", "a", "b", "val_idx", "val_idx")
    pair("train(a) = train(c)", "a", "c", "train_idx", "train_idx")
    pair("train(b) = train(d)", "b", "d", "train_idx", "train_idx")
    pair("val(d) = val(ours)", "d", "ours", "val_idx", "val_idx")
    if "ours" in by_name:
        p = by_name["ours"]
        s1 = p.segment_bounds[0]
        report.record("val(ours) within S1", bool(np.all((p.val_idx >= s1[0]) & (p.val_idx < s1[1]))))
        report.record("ours: zero training lag", p.train_idx[-1] == p.test_idx[0] - 1)
    return report
