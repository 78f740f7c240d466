"""Single fits and full (preset x seed) experiments with report aggregation."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as dsm
from . import drift, metrics
from . import model as mdl
from .embedding import TemporalEncoder, TemporalEncoderConfig
from .optim import FitResult, TrainConfig, predict, train
from .splitting import DEFAULT_TEST_FRACTION, SplitPlan, preset_split


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "mlp"
    hidden: tuple[int, ...] = (128, 128)
    dropout: float = 0.1

    def dims(self, d_in: int) -> tuple[int, ...]:
        if self.kind == "linear":
            return (d_in, 1)
        return (d_in, *self.hidden, 1)


@dataclass
class RunResult:
    plan: SplitPlan
    fit: FitResult
    standardizer: dsm.Standardizer
    data: dsm.TemporalDataset  # standardized copy the model was trained on
    test_metric: float
    seed: int

    def predict(self, rows) -> np.ndarray:
        return predict(self.fit.model, self.fit.encoder, self.data, rows, self.standardizer)

    def instance_losses(self) -> np.ndarray:
        """Per-row loss over the whole dataset in original label units."""
        rows = np.arange(self.data.n)
        preds = self.predict(rows)
        y = self.standardizer.inverse_labels(self.data.labels)
        if self.data.task == "classification":
            p = np.clip(preds, 1e-15, 1 - 1e-15)
            return -(y * np.log(p) + (1 - y) * np.log(1 - p))
        return (preds - y) ** 2

    def representation(self) -> np.ndarray:
        from .optim import model_inputs

        inputs = model_inputs(self.fit.encoder, self.data.features, self.data.timestamps)
        return mdl.penultimate_representation(self.fit.model, inputs)


def run_single(
    ds: dsm.TemporalDataset,
    plan: SplitPlan,
    model_spec: ModelSpec,
    temporal: TemporalEncoderConfig,
    train_config: TrainConfig,
) -> RunResult:
    """Standardize on the training rows, fit, and score the test block."""
    seed = train_config.seed
    ds = dsm.impute_with_mean(ds, plan.train_idx)
    scaler = dsm.fit_standardizer(ds, plan.train_idx)
    data = dsm.apply(ds, scaler)
    encoder = TemporalEncoder.fit(temporal, ds.timestamps[plan.train_idx], seed=seed)
    state = mdl.init(model_spec.kind, model_spec.dims(ds.d + encoder.width), seed=seed, dropout=model_spec.dropout)
    fit = train(state, encoder, data, plan, train_config, standardizer=scaler)
    preds = predict(fit.model, fit.encoder, data, plan.test_idx, scaler)
    test = metrics.score(ds.task, preds, ds.labels[plan.test_idx])
    return RunResult(plan, fit, scaler, data, test, seed)


@dataclass
class ExperimentConfig:
    data_path: str = ""
    timestamp_col: str = "timestamp"
    label_col: str = "label"
    feature_cols: tuple[str, ...] = ()
    task: str = "regression"
    dataset_name: str = ""
    drop_bad_rows: bool = False
    impute_missing: bool = False
    test_fraction: float = DEFAULT_TEST_FRACTION
    presets: tuple[str, ...] = ("original", "ours")
    baseline: str = "original"
    method: str = "mlp"
    model: ModelSpec = field(default_factory=ModelSpec)
    temporal: TemporalEncoderConfig = field(default_factory=TemporalEncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "out"
    heatmaps: bool = False
    loss_curves: bool = False
    pgm: bool = False
    slice_width: int = 86_400
    smoothing_sigma: float = 2.0
    heatmap_label: bool = True
    save_indices: bool = False

    def __post_init__(self):
        from .splitting import PRESETS

        bad = [p for p in self.presets if p not in PRESETS]
        if bad:
            raise ValueError(f"unknown split presets: {', '.join(bad)}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.baseline not in self.presets:
            raise ValueError(f"baseline preset {self.baseline!r} is not among the presets")

    @property
    def name(self) -> str:
        return self.dataset_name or Path(self.data_path).stem


# ---------------------------------------------------------------- reports


@dataclass
class MethodScores:
    """Per-seed test metrics of one method/preset over one or more datasets."""

    label: str
    tasks: dict[str, str]
    values: dict[str, list[float]]

    def mean(self, dataset: str) -> float:
        return float(np.mean(self.values[dataset]))

    def std(self, dataset: str) -> float:
        v = self.values[dataset]
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0


def _rs(task: str, mu: float, sigma: float, k: int) -> float:
    # penalise towards "worse": down for AUC, up for RMSE
    if metrics.HIGHER_IS_BETTER[task]:
        return metrics.robustness_score(mu, sigma, k)
    return -metrics.robustness_score(-mu, sigma, k)


def _average_ranks(reports: list[MethodScores], datasets: list[str]) -> list[float]:
    from scipy.stats import rankdata

    per_dataset = []
    for name in datasets:
        task = reports[0].tasks[name]
        means = np.array([r.mean(name) for r in reports])
        key = -means if metrics.HIGHER_IS_BETTER[task] else means
        per_dataset.append(rankdata(key))
    return [float(x) for x in np.mean(per_dataset, axis=0)]


def compare_reports(reports: list[MethodScores], baseline: str | None = None) -> list[dict]:
    """Percent improvement, robustness scores and average rank against a baseline.

    Improvements are per-dataset percent changes of the seed mean (or of
    ``RS_k``) averaged with a plain mean over datasets.
    """
    if not reports:
        raise ValueError("no reports to compare")
    datasets = sorted(reports[0].values)
    for r in reports:
        if sorted(r.values) != datasets:
            raise ValueError(f"report {r.label!r} covers different datasets")
    base = next((r for r in reports if r.label == baseline), reports[0]) if baseline else reports[0]
    ranks = _average_ranks(reports, datasets)
    rows = []
    for r, rank in zip(reports, ranks):
        row = {
            "label": r.label,
            "baseline": base.label,
            "rank": rank,
            "datasets": {
                name: {"task": r.tasks[name], "mean": r.mean(name), "std": r.std(name), "n": len(r.values[name])}
                for name in datasets
            },
        }
        row["pct_improvement"] = metrics.mean_improvement(
            (base.mean(n), r.mean(n), r.tasks[n]) for n in datasets
        )
        if len(datasets) >= 3:
            row["robust_improvement"] = metrics.robust_average(
                [metrics.pct_improvement(base.mean(n), r.mean(n), r.tasks[n]) for n in datasets]
            )
        for k in (0, 1, 2):
            rs_new = {n: _rs(r.tasks[n], r.mean(n), r.std(n), k) for n in datasets}
            rs_base = {n: _rs(base.tasks[n], base.mean(n), base.std(n), k) for n in datasets}
            row[f"rs{k}"] = {n: rs_new[n] for n in datasets}
            row[f"rs{k}_improvement"] = metrics.mean_improvement(
                (rs_base[n], rs_new[n], r.tasks[n]) for n in datasets
            )
        rows.append(row)
    return rows


SCORE_FIELDS = ("method", "split", "dataset", "seed", "task", "metric", "value", "best_epoch", "epochs_run")


def scores_from_csv(text: str) -> list[MethodScores]:
    """Group ``scores.csv`` rows into one :class:`MethodScores` per method/split."""
    groups: dict[str, MethodScores] = {}
    for row in csv.DictReader(io.StringIO(text)):
        label = f"{row['method']}/{row['split']}"
        ms = groups.setdefault(label, MethodScores(label, {}, {}))
        ms.tasks[row["dataset"]] = row["task"]
        ms.values.setdefault(row["dataset"], []).append(float(row["value"]))
    return list(groups.values())


# ---------------------------------------------------------------- runner


def atomic_write(path: Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def load_dataset(cfg: ExperimentConfig) -> dsm.TemporalDataset:
    schema = dsm.ColumnSchema(cfg.timestamp_col, cfg.label_col, tuple(cfg.feature_cols), cfg.task)
    ds = dsm.load_csv(cfg.data_path, schema, drop_bad_rows=cfg.drop_bad_rows, impute_missing=cfg.impute_missing)
    return dsm.sort_by_time(ds)


def _fit_job(args):
    ds, cfg, preset, seed = args
    plan = preset_split(preset, ds, cfg.test_fraction, seed=seed)
    tcfg = TrainConfig(**{**asdict(cfg.train), "seed": seed})
    return run_single(ds, plan, cfg.model, cfg.temporal, tcfg)


class RunFailure(RuntimeError):
    def __init__(self, preset: str, seed: int, cause: BaseException):
        self.preset = preset
        self.seed = seed
        self.cause = cause
        super().__init__(f"preset {preset}, seed {seed}: {type(cause).__name__}: {cause}")


def run_experiment(cfg: ExperimentConfig, ds: dsm.TemporalDataset | None = None, jobs: int = 1) -> dict:
    """Fit every (preset, seed) pair and write the report artifacts to ``cfg.out_dir``.

    Returns the summary document. Raises :class:`RunFailure` for the first
    failing run after writing ``errors.json``.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if ds is None:
        ds = load_dataset(cfg)
    else:
        ds = dsm.sort_by_time(ds)
    jobs_list = [(ds, cfg, p, s) for p in cfg.presets for s in cfg.seeds]

    results: list[RunResult | BaseException] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_fit_job, j) for j in jobs_list]
            for f in futures:
                try:
                    results.append(f.result())
                except Exception as exc:  # noqa: BLE001
                    results.append(exc)
    else:
        for j in jobs_list:
            try:
                results.append(_fit_job(j))
            except Exception as exc:  # noqa: BLE001
                results.append(exc)

    errors = [
        {"preset": p, "seed": s, "error": type(r).__name__, "message": str(r)}
        for (_, _, p, s), r in zip(jobs_list, results)
        if isinstance(r, BaseException)
    ]
    if errors:
        atomic_write(out / "errors.json", _json({"errors": errors}))
        first = next((j, r) for j, r in zip(jobs_list, results) if isinstance(r, BaseException))
        raise RunFailure(first[0][2], first[0][3], first[1])

    metric_name = "auc" if ds.task == "classification" else "rmse"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCORE_FIELDS)
    by_preset: dict[str, list[RunResult]] = {}
    for (_, _, preset, seed), r in zip(jobs_list, results):
        by_preset.setdefault(preset, []).append(r)
        writer.writerow(
            [cfg.method, preset, cfg.name, seed, ds.task, metric_name, repr(r.test_metric),
             r.fit.best_epoch, r.fit.epochs_run]
        )
    atomic_write(out / "scores.csv", buf.getvalue())

    for preset, runs in by_preset.items():
        atomic_write(out / f"splitplan_{preset}.json", runs[0].plan.to_json(cfg.save_indices) + "\n")

    reports = [
        MethodScores(f"{cfg.method}/{p}", {cfg.name: ds.task}, {cfg.name: [r.test_metric for r in runs]})
        for p, runs in by_preset.items()
    ]
    comparison = compare_reports(reports, baseline=f"{cfg.method}/{cfg.baseline}")
    summary = {
        "dataset": cfg.name,
        "task": ds.task,
        "metric": metric_name,
        "n": ds.n,
        "baseline": cfg.baseline,
        "seeds": list(cfg.seeds),
        "presets": {},
        "config": _config_echo(cfg),
    }
    for preset, row in zip(by_preset, comparison):
        runs = by_preset[preset]
        stats = row["datasets"][cfg.name]
        summary["presets"][preset] = {
            "mean": stats["mean"],
            "std": stats["std"],
            "pct_improvement": row["pct_improvement"],
            "rank": row["rank"],
            **{f"rs{k}": row[f"rs{k}"][cfg.name] for k in (0, 1, 2)},
            **{f"rs{k}_improvement": row[f"rs{k}_improvement"] for k in (0, 1, 2)},
            "fits": [r.fit.to_dict() for r in runs],
            "training_lag_seconds": runs[0].plan.training_lag(ds.timestamps),
        }
    atomic_write(out / "summary.json", _json(summary))

    if cfg.heatmaps or cfg.loss_curves:
        write_diagnostics(cfg, ds, by_preset, out)
    return summary


def raw_heatmap(ds: dsm.TemporalDataset, test_fraction: float, slice_width: int, include_label: bool = True):
    """Heatmap of features (and label) standardized on the pre-test rows."""
    from .splitting import make_test_holdout

    trainval, _ = make_test_holdout(ds.n, test_fraction)
    ds = dsm.impute_with_mean(ds, np.arange(trainval.stop))
    scaler = dsm.fit_standardizer(ds, np.arange(trainval.stop))
    cols = [scaler.transform(ds.features)]
    if include_label:
        y = ds.labels[: trainval.stop]
        cols.append(((ds.labels - y.mean()) / max(y.std(), dsm.STD_FLOOR))[:, None])
    slices = dsm.slice_by_time(ds, slice_width)
    return drift.heatmap(np.concatenate(cols, axis=1), slices, "raw_features")


def write_diagnostics(cfg: ExperimentConfig, ds, by_preset: dict[str, list[RunResult]], out: Path) -> None:
    slices = dsm.slice_by_time(ds, cfg.slice_width)
    if cfg.heatmaps:
        H = raw_heatmap(ds, cfg.test_fraction, cfg.slice_width, cfg.heatmap_label)
        atomic_write(out / "heatmap_raw.csv", H.to_csv())
        if cfg.pgm:
            atomic_write(out / "heatmap_raw.pgm", H.to_pgm())
    for preset, runs in by_preset.items():
        run = runs[0]
        if cfg.heatmaps and run.fit.model.kind == "mlp":
            H = drift.heatmap(run.representation(), slices, "representation")
            atomic_write(out / f"heatmap_repr_{preset}.csv", H.to_csv())
            if cfg.pgm:
                atomic_write(out / f"heatmap_repr_{preset}.pgm", H.to_pgm())
        if cfg.loss_curves:
            losses = run.instance_losses()
            raw = metrics.slice_means(losses, slices)
            smooth = metrics.loss_over_time(losses, slices, cfg.smoothing_sigma)
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["slice_start", "count", "mean_loss", "smoothed_loss"])
            for b, c, m, s in zip(slices.boundaries, slices.counts, raw, smooth):
                writer.writerow([int(b), int(c), "" if np.isnan(m) else repr(float(m)), repr(float(s))])
            atomic_write(out / f"loss_curve_{preset}.csv", buf.getvalue())


def _config_echo(cfg: ExperimentConfig) -> dict:
    t = cfg.temporal
    return {
        "data_path": cfg.data_path,
        "test_fraction": cfg.test_fraction,
        "presets": list(cfg.presets),
        "model": asdict(cfg.model),
        "temporal": {
            "mode": t.mode,
            "periods": [list(c) for c in t.spec.components],
            "trend": t.trend,
            "d_embedding": t.d_embedding,
            "learnable_frequencies": t.learnable_frequencies,
            "attachment": t.attachment,
        },
        "train": asdict(cfg.train),
    }
