"""Timestamp encoders: multi-period Fourier features with a learned projection.

The Fourier mode produces

    psi(t) = [ReLU(W @ Periodic(t) + b), z(t)]

where ``Periodic(t)`` stacks ``[sin(2 pi k t / T), cos(2 pi k t / T)]`` for
``k = 1..K`` over every configured period ``T``, and ``z(t)`` is the timestamp
z-scored with training-row statistics. With ``d_embedding == 0`` the projection
is skipped and the raw periodic features are used.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

HOUR = 3_600
DAY = 86_400
WEEK = 604_800
YEAR = 31_556_952  # 365.2425 days
MONTH = YEAR // 12  # 2_629_746

PERIODS = {"hour": HOUR, "day": DAY, "week": WEEK, "month": MONTH, "year": YEAR}
DEFAULT_PRIORS = ("year", "month", "day", "hour")

MODES = ("none", "num", "timeparts", "fourier")
ATTACHMENTS = ("as_features", "to_backbone")

ORDER_GRID = (0, 2, 4, 8, 16, 32, 64, 128)
D_EMBEDDING_GRID = (0, 2, 4, 8, 16, 32)


class EncoderError(ValueError):
    pass


@dataclass(frozen=True)
class FourierSpec:
    components: tuple[tuple[float, int], ...]  # (period seconds, order)

    def __post_init__(self):
        for period, order in self.components:
            if period <= 0:
                raise EncoderError(f"period must be positive, got {period}")
            if order < 0 or int(order) != order:
                raise EncoderError(f"order must be a non-negative integer, got {order}")

    @property
    def active(self) -> tuple[tuple[float, int], ...]:
        return tuple((p, int(k)) for p, k in self.components if k > 0)

    @property
    def width(self) -> int:
        return sum(2 * k for _, k in self.active)

    @classmethod
    def from_names(cls, orders: dict[str, int]) -> "FourierSpec":
        return cls(tuple((PERIODS[name], int(k)) for name, k in orders.items()))


@dataclass(frozen=True)
class TemporalEncoderConfig:
    mode: str = "none"
    spec: FourierSpec = field(default_factory=lambda: FourierSpec(()))
    trend: bool = False
    d_embedding: int = 0
    learnable_frequencies: bool = False
    attachment: str = "as_features"

    def __post_init__(self):
        if self.mode not in MODES:
            raise EncoderError(f"unknown temporal mode {self.mode!r}")
        if self.attachment not in ATTACHMENTS:
            raise EncoderError(f"unknown attachment {self.attachment!r}")
        if self.d_embedding < 0:
            raise EncoderError("d_embedding must be non-negative")
        if self.mode == "fourier" and self.spec.width == 0:
            raise EncoderError("fourier mode needs at least one component with order > 0")

    @property
    def width(self) -> int:
        if self.mode == "none":
            return 0
        if self.mode == "num":
            return 1
        if self.mode == "timeparts":
            return 6
        periodic = self.d_embedding if self.d_embedding > 0 else self.spec.width
        return periodic + int(self.trend)


@dataclass
class EncoderParams:
    W: np.ndarray | None = None  # (d_embedding, periodic width)
    b: np.ndarray | None = None
    freq_scale: np.ndarray | None = None  # one multiplier per active component
    trend_mean: float = 0.0
    trend_std: float = 1.0
    anchor: int = 0  # reference time for learnable-frequency phases
    part_mean: np.ndarray | None = None
    part_std: np.ndarray | None = None

    def copy(self) -> "EncoderParams":
        def c(a):
            return None if a is None else a.copy()

        return replace(self, W=c(self.W), b=c(self.b), freq_scale=c(self.freq_scale))

    def frequencies(self, config: TemporalEncoderConfig) -> np.ndarray:
        """Angular frequencies (rad/s) of the active components."""
        periods = np.array([p for p, _ in config.spec.active], dtype=np.float64)
        scale = self.freq_scale if self.freq_scale is not None else np.ones_like(periods)
        return 2 * np.pi * scale / periods


def trainable(config: TemporalEncoderConfig, params: EncoderParams) -> dict[str, np.ndarray]:
    """The encoder arrays the optimizer may update, by name."""
    out = {}
    if config.mode == "fourier":
        if config.d_embedding > 0:
            out["enc.W"] = params.W
            out["enc.b"] = params.b
        if config.learnable_frequencies:
            out["enc.freq_scale"] = params.freq_scale
    return out


def fourier_features(t, period: float, order: int) -> np.ndarray:
    """``[sin_1, cos_1, ..., sin_K, cos_K]`` of ``2 pi k t / period``.

    Scalar ``t`` gives a vector of length ``2K``; an array gives shape ``(n, 2K)``.
    """
    if period <= 0 or order < 1:
        raise EncoderError("period must be positive and order at least 1")
    t_arr = np.asarray(t)
    # reduce modulo the period first so large epoch values keep full precision
    frac = np.mod(t_arr.astype(np.float64), period) / period
    k = np.arange(1, order + 1, dtype=np.float64)
    phase = 2 * np.pi * frac[..., None] * k
    out = np.empty(phase.shape[:-1] + (2 * order,))
    out[..., 0::2] = np.sin(phase)
    out[..., 1::2] = np.cos(phase)
    return out


def periodic_concat(t, spec: FourierSpec) -> np.ndarray:
    active = spec.active
    if not active:
        raise EncoderError("Fourier spec has no component with order > 0")
    return np.concatenate([fourier_features(t, p, k) for p, k in active], axis=-1)


def timeparts(t) -> np.ndarray:
    """UTC ``[year, month, day, hour, minute, second]`` as floats."""
    if np.ndim(t) == 0:
        if t < 0:
            raise EncoderError("timestamps before 1970 are not supported")
        dt = datetime.fromtimestamp(int(t), tz=timezone.utc)
        return np.array([dt.year, dt.month, dt.day, dt.hour, dt.minute, dt.second], dtype=np.float64)
    return np.stack([timeparts(v) for v in np.asarray(t).ravel()]).reshape(np.shape(t) + (6,))


def trend(t, trend_mean: float, trend_std: float):
    return (np.asarray(t, dtype=np.float64) - trend_mean) / trend_std


def init_encoder(config: TemporalEncoderConfig, train_timestamps, seed: int = 0) -> EncoderParams:
    """Fit timestamp statistics on training rows and draw the projection weights."""
    ts = np.asarray(train_timestamps, dtype=np.float64)
    if ts.size == 0:
        raise EncoderError("no training timestamps")
    params = EncoderParams(
        trend_mean=float(ts.mean()),
        trend_std=float(max(ts.std(), 1.0)),
        anchor=int(round(float(ts.mean()))),
    )
    if config.mode == "timeparts":
        parts = timeparts(ts.astype(np.int64))
        params.part_mean = parts.mean(axis=0)
        params.part_std = np.maximum(parts.std(axis=0), 1e-12)
    if config.mode == "fourier":
        rng = np.random.default_rng(seed)
        width = config.spec.width
        if config.d_embedding > 0:
            bound = 1.0 / np.sqrt(width)
            params.W = rng.uniform(-bound, bound, size=(config.d_embedding, width))
            params.b = rng.uniform(-bound, bound, size=config.d_embedding)
        params.freq_scale = np.ones(len(config.spec.active))
    return params


@dataclass
class EncoderCache:
    periodic: np.ndarray | None = None
    pre: np.ndarray | None = None
    dt_periods: list = field(default_factory=list)  # (t - anchor) / T per component


def _periodic_learnable(t, config, params, cache):
    """Fourier features with trainable frequency multipliers.

    phase = 2 pi k (frac(anchor / T) + s (t - anchor) / T); equals the fixed
    phase when s == 1.
    """
    blocks = []
    t = np.asarray(t, dtype=np.float64)
    for (period, order), s in zip(config.spec.active, params.freq_scale):
        base = np.mod(params.anchor, period) / period
        rel = (t - params.anchor) / period
        k = np.arange(1, order + 1, dtype=np.float64)
        phase = 2 * np.pi * (base + s * rel)[:, None] * k
        block = np.empty((t.size, 2 * order))
        block[:, 0::2] = np.sin(phase)
        block[:, 1::2] = np.cos(phase)
        blocks.append(block)
        if cache is not None:
            cache.dt_periods.append(rel)
    return np.concatenate(blocks, axis=1)


def encode_batch(t, config: TemporalEncoderConfig, params: EncoderParams, with_cache: bool = False):
    """Encode an array of timestamps into shape ``(n, config.width)``."""
    t = np.asarray(t)
    n = t.shape[0]
    cache = EncoderCache() if with_cache else None
    if config.mode == "none":
        out = np.zeros((n, 0))
    elif config.mode == "num":
        out = trend(t, params.trend_mean, params.trend_std)[:, None]
    elif config.mode == "timeparts":
        out = timeparts(t)
        if params.part_mean is not None:
            out = (out - params.part_mean) / params.part_std
    else:
        if config.learnable_frequencies:
            periodic = _periodic_learnable(t, config, params, cache)
        else:
            periodic = periodic_concat(t, config.spec).reshape(n, -1)
        if config.d_embedding > 0:
            if params.W is None or params.W.shape != (config.d_embedding, config.spec.width):
                raise EncoderError("projection weights do not match the encoder config")
            pre = periodic @ params.W.T + params.b
            body = np.maximum(pre, 0.0)
        else:
            pre = None
            body = periodic
        if cache is not None:
            cache.periodic = periodic
            cache.pre = pre
        if config.trend:
            body = np.concatenate([body, trend(t, params.trend_mean, params.trend_std)[:, None]], axis=1)
        out = body
    if with_cache:
        return out, cache
    return out


def encode(t, config: TemporalEncoderConfig, params: EncoderParams) -> np.ndarray:
    """Encode one timestamp (vector) or many (matrix)."""
    if np.ndim(t) == 0:
        return encode_batch(np.array([t]), config, params)[0]
    return encode_batch(t, config, params)


def encoder_backward(
    grad: np.ndarray,
    cache: EncoderCache,
    config: TemporalEncoderConfig,
    params: EncoderParams,
) -> dict[str, np.ndarray]:
    """Gradients of the trainable encoder arrays given d(loss)/d(embedding)."""
    grads: dict[str, np.ndarray] = {}
    if config.mode != "fourier":
        return grads
    grad = np.asarray(grad)
    periodic_width = config.d_embedding if config.d_embedding > 0 else config.spec.width
    g_body = grad[:, :periodic_width]
    if config.d_embedding > 0:
        g_pre = g_body * (cache.pre > 0)
        grads["enc.W"] = g_pre.T @ cache.periodic
        grads["enc.b"] = g_pre.sum(axis=0)
        g_periodic = g_pre @ params.W if config.learnable_frequencies else None
    else:
        g_periodic = g_body
    if config.learnable_frequencies:
        g_s = np.zeros(len(config.spec.active))
        col = 0
        for i, ((period, order), rel) in enumerate(zip(config.spec.active, cache.dt_periods)):
            block = cache.periodic[:, col : col + 2 * order]
            gb = g_periodic[:, col : col + 2 * order]
            k = np.arange(1, order + 1, dtype=np.float64)
            dphase = 2 * np.pi * rel[:, None] * k  # d phase / d s
            sin, cos = block[:, 0::2], block[:, 1::2]
            g_s[i] = np.sum((gb[:, 0::2] * cos - gb[:, 1::2] * sin) * dphase)
            col += 2 * order
        grads["enc.freq_scale"] = g_s
    return grads


def config_grid(priors=DEFAULT_PRIORS, orders=ORDER_GRID, d_embeddings=D_EMBEDDING_GRID):
    """Every fourier configuration in the per-prior order x trend x d_embedding space.

    Combinations where all orders are zero are skipped (no periodic features).
    """
    for combo in itertools.product(orders, repeat=len(priors)):
        if not any(combo):
            continue
        spec = FourierSpec.from_names(dict(zip(priors, combo)))
        for trend_on in (False, True):
            for d in d_embeddings:
                yield TemporalEncoderConfig(mode="fourier", spec=spec, trend=trend_on, d_embedding=d)


def parse_periods(text: str) -> FourierSpec:
    """Parse ``"day:4,week:4"`` (names or second counts) into a :class:`FourierSpec`."""
    comps = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        name, _, order = item.partition(":")
        name = name.strip()
        period = PERIODS[name] if name in PERIODS else float(name)
        comps.append((period, int(order or 1)))
    return FourierSpec(tuple(comps))


@dataclass
class TemporalEncoder:
    """A config together with its fitted parameters."""

    config: TemporalEncoderConfig
    params: EncoderParams

    @classmethod
    def fit(cls, config: TemporalEncoderConfig, train_timestamps, seed: int = 0) -> "TemporalEncoder":
        return cls(config, init_encoder(config, train_timestamps, seed))

    @classmethod
    def identity(cls) -> "TemporalEncoder":
        return cls(TemporalEncoderConfig(), EncoderParams())

    @property
    def width(self) -> int:
        return self.config.width

    def transform(self, t) -> np.ndarray:
        return encode_batch(t, self.config, self.params)

    def forward(self, t):
        return encode_batch(t, self.config, self.params, with_cache=True)

    def backward(self, grad, cache) -> dict[str, np.ndarray]:
        return encoder_backward(grad, cache, self.config, self.params)

    def trainable(self) -> dict[str, np.ndarray]:
        return trainable(self.config, self.params)

    def copy(self) -> "TemporalEncoder":
        return TemporalEncoder(self.config, self.params.copy())
