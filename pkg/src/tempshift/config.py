"""Flat ``key = value`` config files with dotted keys.

Grammar, one entry per line::

    # comment
    section.key = value

Whitespace around keys and values is stripped, later entries override earlier
ones, and ``--set key=value`` overrides are applied last. Lists are
comma-separated. Booleans accept true/false/yes/no/1/0.
"""

from __future__ import annotations

from pathlib import Path

from .embedding import PERIODS, FourierSpec, TemporalEncoderConfig, parse_periods
from .experiment import ExperimentConfig, ModelSpec
from .optim import TrainConfig
from .synth import SynthConfig

DAY = 86_400


class ConfigError(ValueError):
    pass


KNOWN_KEYS = {
    "data.path", "data.timestamp", "data.label", "data.features", "data.task", "data.name",
    "data.drop_bad_rows", "data.impute_missing",
    "split.test_fraction", "split.presets", "split.baseline", "split.save_indices",
    "model.kind", "model.hidden", "model.dropout", "model.method",
    "temporal.mode", "temporal.periods", "temporal.trend", "temporal.d_embedding",
    "temporal.learnable_frequencies", "temporal.attachment",
    "train.lr", "train.weight_decay", "train.batch_size", "train.patience", "train.max_epochs",
    "seeds", "output.dir",
    "diagnostics.heatmaps", "diagnostics.loss_curves", "diagnostics.pgm", "diagnostics.slice_width",
    "diagnostics.smoothing_sigma", "diagnostics.heatmap_label", "diagnostics.max_lag",
    "synth.n", "synth.d", "synth.trend", "synth.periods", "synth.noise", "synth.start", "synth.days",
    "synth.task", "synth.seed",
}


def parse_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def load(path=None, overrides=()) -> dict[str, str]:
    raw = parse_text(Path(path).read_text()) if path else {}
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        raw[key.strip()] = value.strip()
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return raw


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _list(v: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in v.split(",") if s.strip())


def _get(raw, key, conv, default):
    if key not in raw or raw[key] == "":
        return default
    try:
        return conv(raw[key])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{key}: {exc}") from None


def temporal_config(raw: dict[str, str]) -> TemporalEncoderConfig:
    mode = raw.get("temporal.mode", "none")
    spec = FourierSpec(())
    if "temporal.periods" in raw:
        spec = parse_periods(raw["temporal.periods"])
    elif mode == "fourier":
        spec = FourierSpec.from_names({"year": 4, "month": 4, "day": 4, "hour": 4})
    try:
        return TemporalEncoderConfig(
            mode=mode,
            spec=spec,
            trend=_get(raw, "temporal.trend", _bool, False),
            d_embedding=_get(raw, "temporal.d_embedding", int, 0),
            learnable_frequencies=_get(raw, "temporal.learnable_frequencies", _bool, False),
            attachment=raw.get("temporal.attachment", "as_features"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def experiment_config(raw: dict[str, str]) -> ExperimentConfig:
    tc = TrainConfig()
    try:
        train = TrainConfig(
            learning_rate=_get(raw, "train.lr", float, tc.learning_rate),
            weight_decay=_get(raw, "train.weight_decay", float, tc.weight_decay),
            batch_size=_get(raw, "train.batch_size", int, tc.batch_size),
            patience=_get(raw, "train.patience", int, tc.patience),
            max_epochs=_get(raw, "train.max_epochs", int, tc.max_epochs),
        )
        ms = ModelSpec()
        model = ModelSpec(
            kind=raw.get("model.kind", ms.kind),
            hidden=_get(raw, "model.hidden", lambda v: tuple(int(x) for x in _list(v)), ms.hidden),
            dropout=_get(raw, "model.dropout", float, ms.dropout),
        )
        presets = _get(raw, "split.presets", _list, ("original", "ours"))
        return ExperimentConfig(
            data_path=raw.get("data.path", ""),
            timestamp_col=raw.get("data.timestamp", "timestamp"),
            label_col=raw.get("data.label", "label"),
            feature_cols=_get(raw, "data.features", _list, ()),
            task=raw.get("data.task", "regression"),
            dataset_name=raw.get("data.name", ""),
            drop_bad_rows=_get(raw, "data.drop_bad_rows", _bool, False),
            impute_missing=_get(raw, "data.impute_missing", _bool, False),
            test_fraction=_get(raw, "split.test_fraction", float, 0.2),
            presets=presets,
            baseline=raw.get("split.baseline", presets[0]),
            method=raw.get("model.method", model.kind),
            model=model,
            temporal=temporal_config(raw),
            train=train,
            seeds=_get(raw, "seeds", lambda v: tuple(int(x) for x in _list(v)), (0,)),
            out_dir=raw.get("output.dir", "out"),
            heatmaps=_get(raw, "diagnostics.heatmaps", _bool, False),
            loss_curves=_get(raw, "diagnostics.loss_curves", _bool, False),
            pgm=_get(raw, "diagnostics.pgm", _bool, False),
            slice_width=_get(raw, "diagnostics.slice_width", int, DAY),
            smoothing_sigma=_get(raw, "diagnostics.smoothing_sigma", float, 2.0),
            heatmap_label=_get(raw, "diagnostics.heatmap_label", _bool, True),
            save_indices=_get(raw, "split.save_indices", _bool, False),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _synth_periods(v: str) -> tuple[tuple[float, float, float], ...]:
    """``week:1.0:0.3,day:0.5`` -> ((period, amplitude, phase), ...)."""
    out = []
    for item in _list(v):
        parts = item.split(":")
        period = PERIODS[parts[0]] if parts[0] in PERIODS else float(parts[0])
        amp = float(parts[1]) if len(parts) > 1 else 1.0
        phase = float(parts[2]) if len(parts) > 2 else 0.0
        out.append((float(period), amp, phase))
    return tuple(out)


def synth_config(raw: dict[str, str]) -> SynthConfig:
    d = SynthConfig()
    start = _get(raw, "synth.start", int, d.start)
    days = _get(raw, "synth.days", float, (d.end - d.start) / DAY)
    try:
        return SynthConfig(
            n=_get(raw, "synth.n", int, d.n),
            d=_get(raw, "synth.d", int, d.d),
            trend_coeff=_get(raw, "synth.trend", float, d.trend_coeff),
            periodic=_get(raw, "synth.periods", _synth_periods, ((604_800.0, 1.0, 0.0), (86_400.0, 0.5, 0.0))),
            noise_std=_get(raw, "synth.noise", float, d.noise_std),
            start=start,
            end=start + int(round(days * DAY)),
            task=raw.get("synth.task", d.task),
            seed=_get(raw, "synth.seed", int, d.seed),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
