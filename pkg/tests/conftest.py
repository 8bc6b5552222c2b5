from __future__ import annotations

import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trustgate.geo import EARTH_RADIUS_M, Fix, NetworkHint, RawSample, Trace, destination

settings.register_profile("default", max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=400, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

T0 = 1_700_000_000_000


def chord_distance(lat1, lon1, lat2, lon2) -> float:
    """Great-circle distance via the 3-D chord between unit vectors.

    Independent of the haversine formulation used by the package.
    """

    def unit(lat, lon):
        p, l = math.radians(lat), math.radians(lon)
        return np.array([math.cos(p) * math.cos(l), math.cos(p) * math.sin(l), math.sin(p)])

    c = float(np.linalg.norm(unit(lat1, lon1) - unit(lat2, lon2)))
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, c / 2.0))


def fix(i: int, lat: float, lon: float, acc: float = 15.0, *, sid: str = "s", dt_ms: int = 1000, hint=None, raw=None) -> Fix:
    return Fix(sid, T0 + i * dt_ms, lat, lon, acc, hint, raw)


def walk(
    n: int,
    speed: float = 1.4,
    *,
    lat0: float = 35.0,
    lon0: float = 139.0,
    acc: float = 15.0,
    dt_ms: int = 1000,
    sid: str = "s",
    hints: bool = False,
    raw: bool = False,
    scatter_m: float = 5.0,
) -> list[Fix]:
    """Straight northbound track at constant speed.

    With ``raw``, each fix carries five samples on a ring of ``scatter_m``
    around it; with ``hints``, the hint sits on the fix with a 30 m radius.
    """
    out = []
    lat, lon = lat0, lon0
    for i in range(n):
        if i:
            lat, lon = destination(lat, lon, 0.0, speed * dt_ms / 1000.0)
        h = NetworkHint(lat, lon, 30.0) if hints else None
        r = None
        if raw:
            r = tuple(
                RawSample(*destination(lat, lon, 2 * math.pi * k / 5, scatter_m), acc) for k in range(5)
            )
        out.append(Fix(sid, T0 + i * dt_ms, lat, lon, acc, h, r))
    return out


def trace_of(fixes, label=None, scenario=None) -> Trace:
    return Trace(tuple(fixes), label, scenario)


@pytest.fixture
def honest_walk() -> list[Fix]:
    return walk(30)
