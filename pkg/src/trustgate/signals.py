"""The five heuristic integrity signals.

Every signal maps a fix (plus whatever context it needs) to a score in
[0, 1], where 1 means "looks like a real device". A signal whose inputs
are missing is left out of the returned vector rather than guessed.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, fields
from enum import Enum

import numpy as np

from .geo import (
    EARTH_RADIUS_M,
    Fix,
    NetworkHint,
    RawSample,
    ValidationError,
    _haversine,
    speed_between,
)


class SignalId(str, Enum):
    S1_MOVEMENT = "S1"
    S2_ACCURACY = "S2"
    S3_TEMPORAL = "S3"
    S4_FIX_CONSISTENCY = "S4"
    S5_NETWORK = "S5"


ALL_SIGNALS = tuple(SignalId)
S1, S2, S3, S4, S5 = ALL_SIGNALS

# absent key = signal unavailable
SignalVector = dict[SignalId, float]


@dataclass(frozen=True)
class SignalConfig:
    """Knee constants of the piecewise-linear signal curves."""

    movement_full_mps: float = 50.0
    movement_zero_mps: float = 100.0
    accuracy_knee_m: float = 2.0
    teleport_mps: float = 100.0
    scatter_low: float = 0.05
    scatter_high: float = 3.0
    scatter_zero: float = 10.0
    scatter_min_samples: int = 3
    network_full: float = 3.0
    network_zero: float = 10.0
    window: int = 10

    def __post_init__(self) -> None:
        if not 0 < self.movement_full_mps < self.movement_zero_mps:
            raise ValidationError("movement knees must satisfy 0 < full < zero")
        if self.accuracy_knee_m <= 0 or self.teleport_mps <= 0:
            raise ValidationError("accuracy knee and teleport speed must be positive")
        if not 0 < self.scatter_low <= self.scatter_high < self.scatter_zero:
            raise ValidationError("scatter band must satisfy 0 < low <= high < zero")
        if self.scatter_min_samples < 2:
            raise ValidationError("scatter_min_samples must be at least 2")
        if not 0 <= self.network_full < self.network_zero:
            raise ValidationError("network knees must satisfy 0 <= full < zero")
        if self.window < 1:
            raise ValidationError("history window must hold at least one fix")

    @classmethod
    def from_dict(cls, data: dict) -> SignalConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown signal constants: {sorted(unknown)}")
        return cls(**data)


DEFAULT_SIGNAL_CONFIG = SignalConfig()


@dataclass(frozen=True)
class SignalContext:
    history: Sequence[Fix] = ()
    net_hint: NetworkHint | None = None
    raw_fixes: Sequence[RawSample] | None = None


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def _ramp_down(x: float, full: float, zero: float) -> float:
    # 1 at x <= full, 0 at x >= zero, linear between
    if x <= full:
        return 1.0
    if x >= zero:
        return 0.0
    return (zero - x) / (zero - full)


def movement_score(speed_mps: float, cfg: SignalConfig = DEFAULT_SIGNAL_CONFIG) -> float:
    return _ramp_down(speed_mps, cfg.movement_full_mps, cfg.movement_zero_mps)


def s1_movement(prev: Fix, cur: Fix, cfg: SignalConfig = DEFAULT_SIGNAL_CONFIG) -> float:
    return movement_score(speed_between(prev, cur), cfg)


def s2_accuracy(cur: Fix, cfg: SignalConfig = DEFAULT_SIGNAL_CONFIG) -> float:
    if not cur.accuracy > 0:
        raise ValidationError(f"accuracy must be positive, got {cur.accuracy!r}")
    return _clamp01(cur.accuracy / cfg.accuracy_knee_m)


def s3_temporal(
    cur: Fix, history: Sequence[Fix], cfg: SignalConfig = DEFAULT_SIGNAL_CONFIG
) -> float | None:
    """Share of consecutive pairs in ``history + [cur]`` without a teleport.

    Returns None when there is no history to pair with.
    """
    if not history:
        return None
    chain = list(history)[-cfg.window :]
    chain.append(cur)
    violations = 0
    for prev, nxt in zip(chain, chain[1:]):
        if speed_between(prev, nxt) > cfg.teleport_mps:
            violations += 1
    return 1.0 - violations / (len(chain) - 1)


def scatter_ratio(raw_fixes: Sequence[RawSample]) -> float:
    """RMS distance of the samples from their centroid over their mean accuracy."""
    n = len(raw_fixes)
    c_lat = sum(s.lat for s in raw_fixes) / n
    c_lon = sum(s.lon for s in raw_fixes) / n
    sq = 0.0
    for s in raw_fixes:
        d = _haversine(s.lat, s.lon, c_lat, c_lon)
        sq += d * d
    scatter = math.sqrt(sq / n)
    mean_acc = sum(s.accuracy for s in raw_fixes) / n
    return scatter / mean_acc


def s4_fix_consistency(
    raw_fixes: Sequence[RawSample] | None, cfg: SignalConfig = DEFAULT_SIGNAL_CONFIG
) -> float | None:
    """Scatter-vs-accuracy plausibility of the raw receiver samples.

    Full score inside ``[scatter_low, scatter_high]``; falls linearly to 0
    at a ratio of 0 (samples too perfect for their claimed accuracy) and at
    ``scatter_zero`` (samples inconsistent with it).
    """
    if raw_fixes is None or len(raw_fixes) < cfg.scatter_min_samples:
        return None
    rho = scatter_ratio(raw_fixes)
    if rho < cfg.scatter_low:
        return rho / cfg.scatter_low
    return _ramp_down(rho, cfg.scatter_high, cfg.scatter_zero)


def s5_network(
    cur: Fix, hint: NetworkHint | None, cfg: SignalConfig = DEFAULT_SIGNAL_CONFIG
) -> float | None:
    if hint is None:
        return None
    d = _haversine(cur.lat, cur.lon, hint.lat, hint.lon)
    return _ramp_down(d, cfg.network_full * hint.accuracy, cfg.network_zero * hint.accuracy)


def evaluate_all(
    cur: Fix, ctx: SignalContext, cfg: SignalConfig = DEFAULT_SIGNAL_CONFIG
) -> SignalVector:
    out: SignalVector = {}
    if ctx.history:
        out[S1] = s1_movement(ctx.history[-1], cur, cfg)
    out[S2] = s2_accuracy(cur, cfg)
    s3 = s3_temporal(cur, ctx.history, cfg)
    if s3 is not None:
        out[S3] = s3
    s4 = s4_fix_consistency(ctx.raw_fixes, cfg)
    if s4 is not None:
        out[S4] = s4
    s5 = s5_network(cur, ctx.net_hint, cfg)
    if s5 is not None:
        out[S5] = s5
    return out


def context_for(cur: Fix, history: Sequence[Fix]) -> SignalContext:
    """Context built from the fix's own optional fields."""
    return SignalContext(history=history, net_hint=cur.net_hint, raw_fixes=cur.raw_fixes)


# -- batch path ----------------------------------------------------------------


def _haversine_np(lat1, lon1, lat2, lon2):
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dl = np.radians(lon2 - lon1)
    h = np.sin((p2 - p1) * 0.5) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl * 0.5) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def _ramp_down_np(x, full, zero):
    return np.clip((zero - x) / (zero - full), 0.0, 1.0)


def signal_matrix(fixes: Sequence[Fix], cfg: SignalConfig = DEFAULT_SIGNAL_CONFIG) -> np.ndarray:
    """Signals for every fix of one session at once, shape ``(n, 5)``.

    Row ``i`` uses fixes ``0..i-1`` as history, exactly as a session gate
    would; unavailable signals are NaN. Columns follow ``ALL_SIGNALS``.
    """
    n = len(fixes)
    out = np.full((n, 5), np.nan)
    lat = np.array([f.lat for f in fixes])
    lon = np.array([f.lon for f in fixes])
    t = np.array([f.t for f in fixes], dtype=np.int64)
    acc = np.array([f.accuracy for f in fixes])
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValidationError("timestamps must strictly increase within a session")

    out[:, 1] = np.clip(acc / cfg.accuracy_knee_m, 0.0, 1.0)
    if n > 1:
        speed = _haversine_np(lat[:-1], lon[:-1], lat[1:], lon[1:]) / (dt / 1000.0)
        s1 = np.ones(n - 1)
        over = speed > cfg.movement_full_mps
        s1[over] = _ramp_down_np(speed[over], cfg.movement_full_mps, cfg.movement_zero_mps)
        out[1:, 0] = s1
        # pair j (fixes j-1, j) counts for rows j .. j+W-1
        viol = np.concatenate(([0], np.cumsum(speed > cfg.teleport_mps)))
        rows = np.arange(1, n)
        m = np.minimum(rows, cfg.window)
        out[1:, 2] = 1.0 - (viol[rows] - viol[rows - m]) / m

    raws = [f.raw_fixes for f in fixes]
    usable = [r is not None and len(r) >= cfg.scatter_min_samples for r in raws]
    if any(usable):
        idx = [i for i, u in enumerate(usable) if u]
        sizes = {len(raws[i]) for i in idx}
        if len(sizes) == 1:
            arr = np.array([raws[i] for i in idx])  # (m, k, 3)
            c_lat = arr[:, :, 0].mean(axis=1, keepdims=True)
            c_lon = arr[:, :, 1].mean(axis=1, keepdims=True)
            d = _haversine_np(arr[:, :, 0], arr[:, :, 1], c_lat, c_lon)
            rho = np.sqrt((d * d).mean(axis=1)) / arr[:, :, 2].mean(axis=1)
        else:
            rho = np.array([scatter_ratio(raws[i]) for i in idx])
        s4 = np.where(
            rho < cfg.scatter_low,
            rho / cfg.scatter_low,
            _ramp_down_np(rho, cfg.scatter_high, cfg.scatter_zero),
        )
        out[idx, 3] = s4

    hint_idx = [i for i, f in enumerate(fixes) if f.net_hint is not None]
    if hint_idx:
        h = np.array([(f.net_hint.lat, f.net_hint.lon, f.net_hint.accuracy) for f in (fixes[i] for i in hint_idx)])
        d = _haversine_np(lat[hint_idx], lon[hint_idx], h[:, 0], h[:, 1])
        out[hint_idx, 4] = _ramp_down_np(d, cfg.network_full * h[:, 2], cfg.network_zero * h[:, 2])
    return out
