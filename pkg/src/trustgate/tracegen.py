"""Seeded synthetic trace corpus.

Four honest motion patterns and six spoofing patterns. Every trace is a
pure function of ``(scenario, seed, params)``; corpus seeds are derived from
the master seed with numpy's ``SeedSequence`` and fed to the counter-based
Philox bit generator, so traces can be built in any order or in parallel.
"""

from __future__ import annotations

import dataclasses
import math
from collections.abc import Iterator
from dataclasses import dataclass, field
from itertools import repeat

import numpy as np
from scipy.signal import lfilter

from .geo import (
    EARTH_RADIUS_M,
    SCENARIOS,
    Fix,
    NetworkHint,
    RawSample,
    Scenario,
    Trace,
    ValidationError,
    destination,
)

PRNG_ID = "numpy.random.Philox(4x64-10) seeded via SeedSequence"
COORD_DECIMALS = 7
ACCURACY_DECIMALS = 4
T0_MS = 1_700_000_000_000


@dataclass(frozen=True)
class ScenarioParams:
    # receiver
    raw_per_fix: int = 5
    accuracy_range_m: tuple[float, float] = (5.0, 20.0)
    accuracy_jitter: float = 0.15
    gps_error_sigma: float = 0.2  # per axis, as a fraction of reported accuracy
    gps_error_rho: float = 0.95
    raw_noise_sigma: float = 0.3  # per axis, as a fraction of reported accuracy
    stationary_jitter_m: float = 3.0
    # network hint
    hint_accuracy_range_m: tuple[float, float] = (15.0, 60.0)
    hint_radius: float = 1.5
    hint_outlier_prob: float = 0.0005
    hint_outlier_range: tuple[float, float] = (3.5, 7.0)
    # motion
    walk_speed: tuple[float, float] = (1.4, 0.3)
    walk_turn_sigma: float = 0.15
    drive_speed_range: tuple[float, float] = (5.0, 30.0)
    drive_accel_sigma: float = 0.8
    drive_turn_sigma: float = 0.05
    train_speed_range: tuple[float, float] = (20.0, 45.0)
    train_accel_sigma: float = 0.3
    train_turn_sigma: float = 0.005
    # attacks
    teleport_prefix_range: tuple[float, float] = (0.15, 0.35)
    teleport_jump_km: tuple[float, float] = (500.0, 10_000.0)
    mock_accuracy_m: float = 0.01
    drift_rate_mps: tuple[float, float] = (0.5, 2.0)
    spoof_accuracy_range_m: tuple[float, float] = (0.005, 0.5)
    replay_offset_km: tuple[float, float] = (2.0, 50.0)
    mismatch_factor: tuple[float, float] = (20.0, 100.0)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioParams:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown scenario parameters: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


DEFAULT_PARAMS = ScenarioParams()


@dataclass(frozen=True)
class CorpusConfig:
    master_seed: int = 20260101
    traces_per_scenario: int = 1000
    fixes_per_trace: int = 60
    fix_interval_ms: int = 1000
    params: ScenarioParams = field(default_factory=ScenarioParams)

    def __post_init__(self) -> None:
        if self.traces_per_scenario < 1:
            raise ValidationError("traces_per_scenario must be at least 1")
        if self.fixes_per_trace < 2:
            raise ValidationError("fixes_per_trace must be at least 2")
        if self.fix_interval_ms <= 0:
            raise ValidationError("fix_interval_ms must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ValidationError("master_seed must be an unsigned 64-bit integer")

    def snapshot(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "traces_per_scenario": self.traces_per_scenario,
            "fixes_per_trace": self.fixes_per_trace,
            "fix_interval_ms": self.fix_interval_ms,
            "params": self.params.to_dict(),
        }


def trace_seed(master_seed: int, scenario_index: int, trace_index: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(scenario_index, trace_index))
    lo, hi = ss.generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


# -- motion ------------------------------------------------------------------


def _velocities(kind: str, n_steps: int, rng: np.random.Generator, p: ScenarioParams) -> np.ndarray:
    """Per-interval (east, north) velocity in m/s, shape (n_steps, 2)."""
    if kind == "stationary":
        return np.zeros((n_steps, 2))
    if kind == "walking":
        mean, sd = p.walk_speed
        speed = np.clip(rng.normal(mean, sd, n_steps), 0.3, 2.5)
        turn = p.walk_turn_sigma
    else:
        lo, hi = p.drive_speed_range if kind == "driving" else p.train_speed_range
        accel = p.drive_accel_sigma if kind == "driving" else p.train_accel_sigma
        steps = rng.normal(0.0, accel, n_steps)
        speed = np.empty(n_steps)
        v = rng.uniform(lo, hi)
        for i in range(n_steps):
            v = min(hi, max(lo, v + steps[i]))
            speed[i] = v
        turn = p.drive_turn_sigma if kind == "driving" else p.train_turn_sigma
    heading = rng.uniform(0.0, 2 * math.pi) + np.cumsum(rng.normal(0.0, turn, n_steps))
    return np.column_stack((speed * np.sin(heading), speed * np.cos(heading)))


class _Track:
    """Local east/north frame around an origin, sampled on a sub-fix grid.

    Fine index ``k * (i + 1)`` is fix ``i``; the ``k`` fine points ending
    there are the raw receiver epochs reported with it.
    """

    def __init__(self, lat0: float, lon0: float, n: int, k: int, dt_s: float):
        self.lat0, self.lon0, self.n, self.k, self.dt_s = lat0, lon0, n, k, dt_s
        self.fine = np.zeros((n * k + 1, 2))

    def drive(self, vel: np.ndarray) -> None:
        # one velocity row per fix interval; the first ends at fix 0
        step = np.repeat(vel, self.k, axis=0) * (self.dt_s / self.k)
        self.fine[1:] = np.cumsum(step, axis=0)

    def fix_idx(self) -> np.ndarray:
        return self.k * (np.arange(self.n) + 1)

    def to_latlon(self, en: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lat = self.lat0 + np.degrees(en[..., 1] / EARTH_RADIUS_M)
        lon = self.lon0 + np.degrees(en[..., 0] / (EARTH_RADIUS_M * math.cos(math.radians(self.lat0))))
        lon = (lon + 180.0) % 360.0 - 180.0
        return lat, lon


def _ar1(n: int, sigma: np.ndarray, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) error per axis with per-step standard deviation ``sigma``."""
    z = rng.normal(size=(n, 2))
    innov = math.sqrt(1.0 - rho * rho)
    # start in the stationary distribution: out[0] = z[0]
    out = lfilter([innov], [1.0, -rho], z, axis=0, zi=[[(1.0 - innov) * z[0, 0], (1.0 - innov) * z[0, 1]]])[0]
    return out * sigma[:, None]


def _disk(n: int, radius: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(size=n))
    a = rng.uniform(0.0, 2 * math.pi, n)
    return np.column_stack((r * np.sin(a), r * np.cos(a)))


def _ring(n: int, r_lo: np.ndarray, r_hi: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    r = rng.uniform(r_lo, r_hi)
    a = rng.uniform(0.0, 2 * math.pi, n)
    return np.column_stack((r * np.sin(a), r * np.cos(a)))


# -- assembly ----------------------------------------------------------------


@dataclass
class _Draft:
    """Column-wise trace under construction, all positions in lat/lon degrees."""

    lat: np.ndarray
    lon: np.ndarray
    acc: np.ndarray
    raw_lat: np.ndarray  # (n, k)
    raw_lon: np.ndarray
    hint_lat: np.ndarray
    hint_lon: np.ndarray
    hint_acc: float


def _honest(
    kind: str, lat0: float, lon0: float, n: int, dt_s: float, rng: np.random.Generator, p: ScenarioParams
) -> tuple[_Track, np.ndarray, np.ndarray, np.ndarray]:
    """Truth track plus honest receiver output: (track, fix_en, raw_en, accuracy)."""
    k = p.raw_per_fix
    track = _Track(lat0, lon0, n, k, dt_s)
    track.drive(_velocities(kind, n, rng, p))
    lo, hi = p.accuracy_range_m
    acc = rng.uniform(lo, hi) * rng.uniform(1 - p.accuracy_jitter, 1 + p.accuracy_jitter, n)
    acc = np.round(acc, ACCURACY_DECIMALS)
    err = _ar1(n, p.gps_error_sigma * acc, p.gps_error_rho, rng)
    if kind == "stationary":
        norm = np.linalg.norm(err, axis=1, keepdims=True)
        err = err * np.minimum(1.0, p.stationary_jitter_m / np.maximum(norm, 1e-12))
    fix_en = track.fine[track.fix_idx()] + err
    raw_idx = track.fix_idx()[:, None] - np.arange(k - 1, -1, -1)[None, :]
    noise = rng.normal(size=(n, k, 2)) * (p.raw_noise_sigma * acc)[:, None, None]
    raw_en = track.fine[raw_idx] + err[:, None, :] + noise
    return track, fix_en, raw_en, acc


def _hints(
    truth_en: np.ndarray, rng: np.random.Generator, p: ScenarioParams, outliers: bool = True
) -> tuple[np.ndarray, float]:
    n = len(truth_en)
    lo, hi = p.hint_accuracy_range_m
    hacc = round(float(rng.uniform(lo, hi)), 1)
    off = _disk(n, np.full(n, p.hint_radius * hacc), rng)
    if outliers:
        flip = rng.uniform(size=n) < p.hint_outlier_prob
        far = _ring(n, np.full(n, p.hint_outlier_range[0] * hacc), np.full(n, p.hint_outlier_range[1] * hacc), rng)
        off = np.where(flip[:, None], far, off)
    return truth_en + off, hacc


def _draft(track: _Track, fix_en, raw_en, acc, hint_en, hacc) -> _Draft:
    lat, lon = track.to_latlon(fix_en)
    rlat, rlon = track.to_latlon(raw_en)
    hlat, hlon = track.to_latlon(hint_en)
    return _Draft(lat, lon, acc, rlat, rlon, hlat, hlon, hacc)


def _origin(rng: np.random.Generator) -> tuple[float, float]:
    return float(rng.uniform(-60.0, 60.0)), float(rng.uniform(-179.0, 179.0))


def _scenario_draft(scenario: Scenario, n: int, dt_s: float, rng: np.random.Generator, p: ScenarioParams) -> _Draft:
    lat0, lon0 = _origin(rng)
    s = scenario

    if s in (Scenario.WALKING, Scenario.DRIVING, Scenario.STATIONARY, Scenario.TRAIN):
        track, fix_en, raw_en, acc = _honest(s.value, lat0, lon0, n, dt_s, rng, p)
        hint_en, hacc = _hints(track.fine[track.fix_idx()], rng, p)
        return _draft(track, fix_en, raw_en, acc, hint_en, hacc)

    if s is Scenario.DRIFT:
        kind = "walking" if rng.uniform() < 0.5 else "driving"
        track, fix_en, raw_en, acc = _honest(kind, lat0, lon0, n, dt_s, rng, p)
        truth = track.fine[track.fix_idx()]
        hint_en, hacc = _hints(truth, rng, p, outliers=False)
        rate = rng.uniform(*p.drift_rate_mps)
        bearing = rng.uniform(0.0, 2 * math.pi)
        u = np.array([math.sin(bearing), math.cos(bearing)])
        fine_t = np.arange(len(track.fine)) * (dt_s / track.k) - dt_s  # fix 0 at t=0
        offset = np.maximum(fine_t, 0.0)[:, None] * rate * u[None, :]
        raw_idx = track.fix_idx()[:, None] - np.arange(track.k - 1, -1, -1)[None, :]
        return _draft(track, fix_en + offset[track.fix_idx()], raw_en + offset[raw_idx], acc, hint_en, hacc)

    if s is Scenario.ACCURACY:
        track, _, _, _ = _honest("walking", lat0, lon0, n, dt_s, rng, p)
        truth = track.fine[track.fix_idx()]
        acc = np.round(rng.uniform(*p.spoof_accuracy_range_m, n), ACCURACY_DECIMALS)
        acc = np.maximum(acc, 10.0**-ACCURACY_DECIMALS)
        raw_en = np.repeat(truth[:, None, :], p.raw_per_fix, axis=1)
        hint_en, hacc = _hints(truth, rng, p, outliers=False)
        return _draft(track, truth, raw_en, acc, hint_en, hacc)

    if s is Scenario.REPLAY:
        # device sits at the origin; the replayed recording is from elsewhere
        device = _Track(lat0, lon0, n, p.raw_per_fix, dt_s)
        hint_en, hacc = _hints(device.fine[device.fix_idx()], rng, p, outliers=False)
        dist = rng.uniform(*p.replay_offset_km) * 1000.0
        bearing = rng.uniform(0.0, 2 * math.pi)
        shift = np.array([dist * math.sin(bearing), dist * math.cos(bearing)])
        kind = "walking" if rng.uniform() < 0.5 else "driving"
        track, fix_en, _, acc = _honest(kind, lat0, lon0, n, dt_s, rng, p)
        fix_en = fix_en + shift
        raw_en = np.repeat(fix_en[:, None, :], p.raw_per_fix, axis=1)
        return _draft(track, fix_en, raw_en, acc, hint_en, hacc)

    if s is Scenario.NET_MISMATCH:
        kind = "walking" if rng.uniform() < 0.5 else "driving"
        track, fix_en, raw_en, acc = _honest(kind, lat0, lon0, n, dt_s, rng, p)
        truth = track.fine[track.fix_idx()]
        hint_en, hacc = _hints(truth, rng, p, outliers=False)
        lo, hi = p.mismatch_factor
        hint_en = hint_en + _ring(1, np.array([lo * hacc]), np.array([hi * hacc]), rng)
        return _draft(track, fix_en, raw_en, acc, hint_en, hacc)

    if s in (Scenario.TELEPORTATION, Scenario.COMPOUND):
        return _teleport_draft(s is Scenario.COMPOUND, lat0, lon0, n, dt_s, rng, p)

    raise ValidationError(f"unknown scenario {scenario!r}")


def _teleport_draft(
    compound: bool, lat0: float, lon0: float, n: int, dt_s: float, rng: np.random.Generator, p: ScenarioParams
) -> _Draft:
    track, fix_en, raw_en, acc = _honest("walking", lat0, lon0, n, dt_s, rng, p)
    truth = track.fine[track.fix_idx()]
    hint_en, hacc = _hints(truth, rng, p, outliers=False)
    if compound:
        lo, hi = p.mismatch_factor
        hint_en = hint_en + _ring(1, np.array([lo * hacc]), np.array([hi * hacc]), rng)
        acc = np.maximum(np.round(rng.uniform(*p.spoof_accuracy_range_m, n), ACCURACY_DECIMALS), 1e-4)
        fix_en = truth.copy()
        raw_en = np.repeat(truth[:, None, :], p.raw_per_fix, axis=1)
    prefix = int(np.clip(round(rng.uniform(*p.teleport_prefix_range) * n), 1, n - 1))
    lat, lon = track.to_latlon(fix_en)
    rlat, rlon = track.to_latlon(raw_en)
    hlat, hlon = track.to_latlon(hint_en)
    jump = rng.uniform(*p.teleport_jump_km) * 1000.0
    mlat, mlon = destination(float(lat[prefix - 1]), float(lon[prefix - 1]), rng.uniform(0, 2 * math.pi), jump)
    lat[prefix:] = mlat
    lon[prefix:] = mlon
    rlat[prefix:] = mlat
    rlon[prefix:] = mlon
    if not compound:
        acc[prefix:] = p.mock_accuracy_m
    return _Draft(lat, lon, acc, rlat, rlon, hlat, hlon, hacc)


def generate_trace(
    scenario: Scenario | str,
    seed: int,
    *,
    n_fixes: int = 60,
    fix_interval_ms: int = 1000,
    params: ScenarioParams = DEFAULT_PARAMS,
    session_id: str | None = None,
) -> Trace:
    try:
        scenario = Scenario(scenario)
    except ValueError:
        raise ValidationError(f"unknown scenario {scenario!r}") from None
    if n_fixes < 2:
        raise ValidationError("a trace needs at least two fixes")
    rng = _rng(seed)
    d = _scenario_draft(scenario, n_fixes, fix_interval_ms / 1000.0, rng, params)
    t0 = T0_MS + int(rng.integers(0, 10**9))
    sid = session_id or f"{scenario.value}-{seed:016x}"

    lat = np.round(d.lat, COORD_DECIMALS).tolist()
    lon = np.round(d.lon, COORD_DECIMALS).tolist()
    acc = d.acc.tolist()
    rlat = np.round(d.raw_lat, COORD_DECIMALS).tolist()
    rlon = np.round(d.raw_lon, COORD_DECIMALS).tolist()
    hlat = np.round(d.hint_lat, COORD_DECIMALS).tolist()
    hlon = np.round(d.hint_lon, COORD_DECIMALS).tolist()
    fixes = []
    make_raw = RawSample._make
    for i in range(n_fixes):
        raw = tuple(map(make_raw, zip(rlat[i], rlon[i], repeat(acc[i]))))
        fixes.append(
            Fix(
                sid,
                t0 + i * fix_interval_ms,
                lat[i],
                lon[i],
                acc[i],
                NetworkHint(hlat[i], hlon[i], d.hint_acc),
                raw,
            )
        )
    return Trace(tuple(fixes), scenario.label, scenario, seed)


def iter_corpus(cfg: CorpusConfig) -> Iterator[Trace]:
    """Traces grouped by scenario in canonical order."""
    for si, scenario in enumerate(SCENARIOS):
        for ti in range(cfg.traces_per_scenario):
            seed = trace_seed(cfg.master_seed, si, ti)
            yield generate_trace(
                scenario,
                seed,
                n_fixes=cfg.fixes_per_trace,
                fix_interval_ms=cfg.fix_interval_ms,
                params=cfg.params,
                session_id=f"{scenario.value}-{ti:05d}",
            )


def generate_corpus(cfg: CorpusConfig | None = None) -> list[Trace]:
    return list(iter_corpus(cfg or CorpusConfig()))
