"""Weight profiles and trust-score composition."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .geo import Fix, ValidationError
from .signals import (
    ALL_SIGNALS,
    DEFAULT_SIGNAL_CONFIG,
    S1,
    S2,
    S3,
    S4,
    S5,
    SignalConfig,
    SignalId,
    SignalVector,
    context_for,
    evaluate_all,
    signal_matrix,
)

WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class WeightProfile:
    name: str
    weights: Mapping[SignalId, float]

    def __post_init__(self) -> None:
        weights = {SignalId(k): float(v) for k, v in dict(self.weights).items()}
        if not weights:
            raise ValidationError(f"profile {self.name!r} has no signals")
        for sid, w in weights.items():
            if not 0.0 <= w <= 1.0:
                raise ValidationError(f"profile {self.name!r}: weight {sid.value}={w} outside [0, 1]")
        total = sum(weights.values())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"profile {self.name!r}: weights sum to {total!r}, not 1")
        ordered = {sid: weights[sid] for sid in ALL_SIGNALS if sid in weights}
        object.__setattr__(self, "weights", MappingProxyType(ordered))

    @property
    def signals(self) -> frozenset[SignalId]:
        return frozenset(self.weights)

    def to_dict(self) -> dict[str, float]:
        return {sid.value: w for sid, w in self.weights.items()}


ALL_FIVE = WeightProfile("all_five", {S1: 0.30, S2: 0.10, S3: 0.15, S4: 0.25, S5: 0.20})
NO_NETWORK = WeightProfile("no_network", {S1: 0.35, S2: 0.15, S3: 0.20, S4: 0.30})
NO_FIXES = WeightProfile("no_fixes", {S1: 0.40, S2: 0.15, S3: 0.20, S5: 0.25})
V1 = WeightProfile("v1", {S1: 0.50, S2: 0.20, S3: 0.30})

DEFAULT_PROFILES: tuple[WeightProfile, ...] = (ALL_FIVE, NO_NETWORK, NO_FIXES, V1)


def redistribute_proportional(base: WeightProfile, subset: Iterable[SignalId]) -> WeightProfile:
    """Restrict ``base`` to ``subset`` and rescale the surviving weights to sum to 1."""
    keep = frozenset(SignalId(s) for s in subset)
    if not keep:
        raise ValidationError("cannot redistribute weights over an empty signal set")
    missing = keep - base.signals
    if missing:
        raise ValidationError(
            f"signals {sorted(s.value for s in missing)} are not in profile {base.name!r}"
        )
    if keep == base.signals:
        return base
    total = sum(base.weights[s] for s in keep)
    if total <= 0.0:
        raise ValidationError(f"subset has zero total weight in profile {base.name!r}")
    name = f"{base.name}|{'+'.join(s.value for s in ALL_SIGNALS if s in keep)}"
    weights = {s: base.weights[s] / total for s in keep}
    # pin the largest weight so the floating sum is 1 to machine precision
    top = max(weights, key=weights.__getitem__)
    weights[top] = 1.0 - sum(w for s, w in weights.items() if s != top)
    return WeightProfile(name, weights)


def select_profile(
    available: Iterable[SignalId], profiles: Sequence[WeightProfile] = DEFAULT_PROFILES
) -> WeightProfile:
    """Exact-match lookup, else proportional fallback from the first (full) profile."""
    avail = frozenset(available)
    if not avail:
        raise ValidationError("no signals available to score")
    for profile in profiles:
        if profile.signals == avail:
            return profile
    return redistribute_proportional(profiles[0], avail)


@dataclass(frozen=True)
class TrustScore:
    value: float
    contributing: SignalVector
    profile: WeightProfile


def compose(signals: SignalVector, profile: WeightProfile) -> TrustScore:
    if signals.keys() != profile.weights.keys():
        raise ValidationError(
            f"profile {profile.name!r} covers {sorted(s.value for s in profile.weights)} "
            f"but signals present are {sorted(s.value for s in signals)}"
        )
    t = 0.0
    for sid, w in profile.weights.items():
        t += w * signals[sid]
    # rounding can push a convex combination a hair past the bounds
    t = 0.0 if t < 0.0 else 1.0 if t > 1.0 else t
    return TrustScore(t, signals, profile)


def compose_columns(sig: np.ndarray, profile: WeightProfile) -> np.ndarray:
    """Row-wise :func:`compose` over a ``(rows, 5)`` signal array."""
    t = np.zeros(len(sig))
    for sid, w in profile.weights.items():
        t = t + w * sig[:, ALL_SIGNALS.index(sid)]
    return np.clip(t, 0.0, 1.0)


@dataclass(frozen=True)
class Scorer:
    """Signals plus profile selection, with optional signals masked off.

    ``disabled`` simulates a client that cannot supply some inputs: those
    signals are dropped before a profile is chosen.
    """

    signal_config: SignalConfig = DEFAULT_SIGNAL_CONFIG
    profiles: tuple[WeightProfile, ...] = DEFAULT_PROFILES
    disabled: frozenset[SignalId] = field(default_factory=frozenset)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def signals(self, cur: Fix, history: Sequence[Fix]) -> SignalVector:
        vec = evaluate_all(cur, context_for(cur, history), self.signal_config)
        for sid in self.disabled:
            vec.pop(sid, None)
        return vec

    def profile_for(self, available: frozenset[SignalId]) -> WeightProfile:
        profile = self._cache.get(available)
        if profile is None:
            profile = self._cache[available] = select_profile(available, self.profiles)
        return profile

    def score(self, cur: Fix, history: Sequence[Fix]) -> TrustScore:
        vec = self.signals(cur, history)
        return compose(vec, self.profile_for(frozenset(vec)))

    def trust_from_matrix(self, sig: np.ndarray) -> np.ndarray:
        """Trust per row of a :func:`signal_matrix`; row 0 (no history) is NaN."""
        avail = ~np.isnan(sig)
        for sid in self.disabled:
            avail[:, ALL_SIGNALS.index(sid)] = False
        out = np.full(len(sig), np.nan)
        keys = np.packbits(avail, axis=1, bitorder="little")[:, 0]
        for key in np.unique(keys[1:]):
            rows = np.flatnonzero(keys == key)
            rows = rows[rows > 0]
            present = frozenset(s for j, s in enumerate(ALL_SIGNALS) if key >> j & 1)
            out[rows] = compose_columns(sig[rows], self.profile_for(present))
        return out

    def batch_trust(self, fixes: Sequence[Fix]) -> list[float | None]:
        """Same values as scoring each fix against its session history in turn."""
        t = self.trust_from_matrix(signal_matrix(fixes, self.signal_config))
        return [None] + t[1:].tolist()

    def without(self, *signals: SignalId) -> Scorer:
        return Scorer(self.signal_config, self.profiles, self.disabled | frozenset(signals))


V1_DISABLED = frozenset({S4, S5})
