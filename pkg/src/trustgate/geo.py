"""Core location types and great-circle arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

EARTH_RADIUS_M = 6_371_000.0


class ValidationError(ValueError):
    """Raised when a location value or sequence violates its invariants."""


def _check_coords(lat: float, lon: float) -> None:
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
        raise ValidationError(f"coordinates out of range: lat={lat!r}, lon={lon!r}")


def _check_accuracy(accuracy: float) -> None:
    if not 0.0 < accuracy < math.inf:
        raise ValidationError(f"accuracy must be a positive finite number, got {accuracy!r}")


class Label(str, Enum):
    LEGITIMATE = "legitimate"
    SPOOFED = "spoofed"


class Scenario(str, Enum):
    WALKING = "walking"
    DRIVING = "driving"
    STATIONARY = "stationary"
    TRAIN = "train"
    TELEPORTATION = "teleportation"
    DRIFT = "drift"
    ACCURACY = "accuracy"
    REPLAY = "replay"
    NET_MISMATCH = "net_mismatch"
    COMPOUND = "compound"

    @property
    def label(self) -> Label:
        return Label.LEGITIMATE if self in LEGITIMATE_SCENARIOS else Label.SPOOFED


LEGITIMATE_SCENARIOS = (Scenario.WALKING, Scenario.DRIVING, Scenario.STATIONARY, Scenario.TRAIN)
SPOOFED_SCENARIOS = (
    Scenario.TELEPORTATION,
    Scenario.DRIFT,
    Scenario.ACCURACY,
    Scenario.REPLAY,
    Scenario.NET_MISMATCH,
    Scenario.COMPOUND,
)
SCENARIOS = LEGITIMATE_SCENARIOS + SPOOFED_SCENARIOS


@dataclass(frozen=True, slots=True)
class NetworkHint:
    """Coarse cell/Wi-Fi position with its uncertainty radius in meters."""

    lat: float
    lon: float
    accuracy: float

    def __post_init__(self) -> None:
        _check_coords(self.lat, self.lon)
        _check_accuracy(self.accuracy)


class RawSample(NamedTuple):
    """One receiver sample; validated by the owning :class:`Fix`."""

    lat: float
    lon: float
    accuracy: float


@dataclass(frozen=True, slots=True)
class Fix:
    """One client location report.

    ``t`` is integer milliseconds since the epoch. ``raw_fixes`` holds the
    receiver samples accumulated since the previous report, if the client
    exposes them.
    """

    session_id: str
    t: int
    lat: float
    lon: float
    accuracy: float
    net_hint: NetworkHint | None = None
    raw_fixes: tuple[RawSample, ...] | None = None

    def __post_init__(self) -> None:
        _check_coords(self.lat, self.lon)
        _check_accuracy(self.accuracy)
        if isinstance(self.t, bool) or not isinstance(self.t, int):
            raise ValidationError(f"timestamp must be integer milliseconds, got {self.t!r}")
        if self.raw_fixes is not None:
            raw = tuple(r if isinstance(r, RawSample) else RawSample(*r) for r in self.raw_fixes)
            for lat, lon, acc in raw:
                if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0 and 0.0 < acc < math.inf):
                    raise ValidationError(f"invalid raw sample ({lat!r}, {lon!r}, {acc!r})")
            object.__setattr__(self, "raw_fixes", raw)


@dataclass(frozen=True)
class Trace:
    """One session's fixes in time order.

    ``label`` and ``scenario`` are None for unlabeled ingested traces; a
    scenario alone implies its label. ``seed`` is set only for generated
    traces.
    """

    fixes: tuple[Fix, ...]
    label: Label | None = None
    scenario: Scenario | None = None
    seed: int | None = None
    session_id: str = field(init=False)

    def __post_init__(self) -> None:
        fixes = tuple(self.fixes)
        object.__setattr__(self, "fixes", fixes)
        scenario = None if self.scenario is None else Scenario(self.scenario)
        label = None if self.label is None else Label(self.label)
        if scenario is not None:
            if label is None:
                label = scenario.label
            elif scenario.label is not label:
                raise ValidationError(
                    f"scenario {scenario.value!r} is {scenario.label.value}, not {label.value}"
                )
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "scenario", scenario)
        if len(fixes) < 2:
            raise ValidationError("a trace needs at least two fixes")
        sid = fixes[0].session_id
        for prev, cur in zip(fixes, fixes[1:]):
            if cur.session_id != sid:
                raise ValidationError(f"mixed session ids in trace: {sid!r}, {cur.session_id!r}")
            if cur.t <= prev.t:
                raise ValidationError(
                    f"timestamps must strictly increase in session {sid!r}: {prev.t} -> {cur.t}"
                )
        object.__setattr__(self, "session_id", sid)

    def __len__(self) -> int:
        return len(self.fixes)


def haversine_distance(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters on a sphere of radius ``EARTH_RADIUS_M``."""
    _check_coords(lat1, lon1)
    _check_coords(lat2, lon2)
    return _haversine(lat1, lon1, lat2, lon2)


def _haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    # unchecked; callers hold validated Fix values
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp * 0.5) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl * 0.5) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def fix_distance(a: Fix | NetworkHint | RawSample, b: Fix | NetworkHint | RawSample) -> float:
    return _haversine(a.lat, a.lon, b.lat, b.lon)


def speed_between(prev: Fix, cur: Fix) -> float:
    """Implied ground speed in m/s between two consecutive fixes."""
    dt_ms = cur.t - prev.t
    if dt_ms <= 0:
        raise ValidationError(f"non-increasing timestamps: {prev.t} -> {cur.t}")
    return _haversine(prev.lat, prev.lon, cur.lat, cur.lon) / (dt_ms / 1000.0)


def destination(lat: float, lon: float, bearing_rad: float, distance_m: float) -> tuple[float, float]:
    """Point reached by travelling ``distance_m`` along a great circle from (lat, lon)."""
    p1 = math.radians(lat)
    l1 = math.radians(lon)
    d = distance_m / EARTH_RADIUS_M
    sin_p2 = math.sin(p1) * math.cos(d) + math.cos(p1) * math.sin(d) * math.cos(bearing_rad)
    p2 = math.asin(max(-1.0, min(1.0, sin_p2)))
    l2 = l1 + math.atan2(
        math.sin(bearing_rad) * math.sin(d) * math.cos(p1),
        math.cos(d) - math.sin(p1) * sin_p2,
    )
    lon2 = (math.degrees(l2) + 540.0) % 360.0 - 180.0
    return math.degrees(p2), lon2
