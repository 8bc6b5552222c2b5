"""Three-level gate, session latch and the step-up oracle."""

from __future__ import annotations

import threading
from collections import deque
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geo import Fix, Label, Trace, ValidationError
from .scorer import Scorer, TrustScore


@dataclass(frozen=True)
class Thresholds:
    theta_p: float = 0.7
    theta_s: float = 0.3

    def __post_init__(self) -> None:
        if not (0.0 < self.theta_p <= 1.0 and 0.0 <= self.theta_s < 1.0):
            raise ValidationError(f"thresholds out of range: {self}")
        if not self.theta_s < self.theta_p:
            raise ValidationError(f"theta_s must be below theta_p: {self}")


DEFAULT_THRESHOLDS = Thresholds()


class GateAction(str, Enum):
    PROCEED = "proceed"
    STEP_UP = "step_up"
    DENY = "deny"
    UNSCORED_PROCEED = "unscored_proceed"


class Latch(str, Enum):
    NONE = "none"
    STEP_UP = "step_up"
    DENY = "deny"


class Mode(str, Enum):
    BINARY = "binary"
    GRADUATED = "graduated"


class Resolution(str, Enum):
    CLEARED = "cleared"
    DENIED = "denied"


class Disposition(str, Enum):
    ACCEPTED = "accepted"
    DENIED = "denied"
    STEPPED_UP_THEN_ACCEPTED = "stepped_up_then_accepted"
    STEPPED_UP_THEN_DENIED = "stepped_up_then_denied"

    @property
    def accepted(self) -> bool:
        return self in (Disposition.ACCEPTED, Disposition.STEPPED_UP_THEN_ACCEPTED)


def gate_eval(t: float, th: Thresholds = DEFAULT_THRESHOLDS) -> GateAction:
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"trust score {t!r} outside [0, 1]")
    if t >= th.theta_p:
        return GateAction.PROCEED
    if t >= th.theta_s:
        return GateAction.STEP_UP
    return GateAction.DENY


@dataclass
class SessionState:
    session_id: str
    window: int = 10
    latch: Latch = Latch.NONE
    history: deque = field(init=False)
    fix_count: int = 0

    def __post_init__(self) -> None:
        self.history = deque(maxlen=self.window)

    @property
    def last_t(self) -> int | None:
        return self.history[-1].t if self.history else None

    def restart(self) -> None:
        self.latch = Latch.NONE
        self.history.clear()
        self.fix_count = 0


def session_step(
    state: SessionState,
    fix: Fix,
    scorer: Scorer,
    th: Thresholds = DEFAULT_THRESHOLDS,
    *,
    precomputed: float | None = None,
) -> tuple[GateAction, TrustScore | float | None]:
    """Advance one session by one fix.

    A latched session answers with its latch and is not scored. The first
    fix of a session has no history and proceeds unscored. ``precomputed``
    lets batch callers pass a trust value they already derived for exactly
    this (fix, history) pair.
    """
    if fix.session_id != state.session_id:
        raise ValidationError(f"fix for {fix.session_id!r} sent to session {state.session_id!r}")
    last = state.last_t
    if last is not None and fix.t <= last:
        raise ValidationError(f"timestamp regression in {state.session_id!r}: {last} -> {fix.t}")

    try:
        if state.latch is not Latch.NONE:
            return GateAction(state.latch.value), None
        if not state.history:
            return GateAction.UNSCORED_PROCEED, None
        if precomputed is not None:
            score: TrustScore | float = precomputed
            t = precomputed
        else:
            score = scorer.score(fix, state.history)
            t = score.value
        action = gate_eval(t, th)
        if action is GateAction.STEP_UP:
            state.latch = Latch.STEP_UP
        elif action is GateAction.DENY:
            state.latch = Latch.DENY
        return action, score
    finally:
        state.history.append(fix)
        state.fix_count += 1


@dataclass(frozen=True)
class StepUpOracle:
    """Idealised stronger verifier: pass probability keyed by ground truth."""

    pass_prob: Mapping[Label, float] = field(
        default_factory=lambda: {Label.LEGITIMATE: 1.0, Label.SPOOFED: 0.0}
    )

    def __post_init__(self) -> None:
        probs = {Label(k): float(v) for k, v in dict(self.pass_prob).items()}
        for label in Label:
            p = probs.get(label)
            if p is None or not 0.0 <= p <= 1.0:
                raise ValidationError(f"oracle pass probability for {label.value} must be in [0, 1]")
        object.__setattr__(self, "pass_prob", probs)

    def attempt(self, label: Label, rng: np.random.Generator) -> bool:
        # always draw, so the stream position does not depend on the probability
        return bool(rng.random() < self.pass_prob[Label(label)])


DEFAULT_ORACLE = StepUpOracle()


def oracle_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Dedicated verifier stream for one trace, independent of trace generation."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def resolve_step_up(
    state: SessionState, oracle: StepUpOracle, label: Label, rng: np.random.Generator
) -> Resolution:
    if state.latch is not Latch.STEP_UP:
        raise ValidationError(f"session {state.session_id!r} is not step-up latched ({state.latch.value})")
    if oracle.attempt(label, rng):
        state.latch = Latch.NONE
        return Resolution.CLEARED
    state.latch = Latch.DENY
    return Resolution.DENIED


@dataclass(frozen=True)
class TraceOutcome:
    session_id: str
    label: Label
    mode: Mode
    actions: tuple[GateAction, ...]
    scores: tuple[float | None, ...]
    disposition: Disposition
    escalations: int = 0
    first_latch_index: int | None = None
    # graduated mode: latch after each fix, including any step-up resolution
    latches: tuple[Latch, ...] = ()

    @property
    def accepted(self) -> bool:
        return self.disposition.accepted

    @property
    def min_scored_t(self) -> float | None:
        scored = [t for t in self.scores if t is not None]
        return min(scored) if scored else None


def trust_series(trace: Trace, scorer: Scorer) -> list[float | None]:
    """Per-fix trust values with the history the session gate would see.

    Entry 0 is None (no history). Latching does not affect the history, so
    this is valid input for both gate modes.
    """
    window = scorer.signal_config.window
    history: deque = deque(maxlen=window)
    out: list[float | None] = []
    for fix in trace.fixes:
        out.append(scorer.score(fix, history).value if history else None)
        history.append(fix)
    return out


def run_trace(
    trace: Trace,
    th: Thresholds = DEFAULT_THRESHOLDS,
    mode: Mode | str = Mode.GRADUATED,
    oracle: StepUpOracle | None = DEFAULT_ORACLE,
    rng: np.random.Generator | None = None,
    *,
    scorer: Scorer | None = None,
    trust: Sequence[float | None] | None = None,
) -> TraceOutcome:
    """Gate one trace.

    With ``oracle=None``, or a trace without a label, step-up latches are
    left unresolved, as when replaying a capture with no verifier attached.
    """
    mode = Mode(mode)
    scorer = scorer or Scorer()
    if trust is None:
        trust = trust_series(trace, scorer)
    elif len(trust) != len(trace.fixes):
        raise ValidationError("precomputed trust series does not match the trace length")

    if mode is Mode.BINARY:
        actions: list[GateAction] = [GateAction.UNSCORED_PROCEED]
        first_bad = None
        for i, t in enumerate(trust[1:], start=1):
            ok = t >= th.theta_p
            actions.append(GateAction.PROCEED if ok else GateAction.DENY)
            if not ok and first_bad is None:
                first_bad = i
        return TraceOutcome(
            trace.session_id,
            trace.label,
            mode,
            tuple(actions),
            tuple(trust),
            Disposition.ACCEPTED if first_bad is None else Disposition.DENIED,
            0,
            first_bad,
        )

    if rng is None:
        rng = oracle_rng(0)
    state = SessionState(trace.session_id, window=scorer.signal_config.window)
    actions = []
    scored: list[float | None] = []
    escalations = 0
    first_latch = None
    latches: list[Latch] = []
    for fix, t in zip(trace.fixes, trust):
        action, score = session_step(state, fix, scorer, th, precomputed=t)
        actions.append(action)
        scored.append(t if score is not None else None)
        if score is not None and action is not GateAction.PROCEED and first_latch is None:
            first_latch = len(actions) - 1
        if action is GateAction.STEP_UP and score is not None:
            escalations += 1
            if oracle is not None and trace.label is not None:
                resolve_step_up(state, oracle, trace.label, rng)
        latches.append(state.latch)

    if state.latch is Latch.NONE:
        disposition = Disposition.STEPPED_UP_THEN_ACCEPTED if escalations else Disposition.ACCEPTED
    else:
        disposition = Disposition.STEPPED_UP_THEN_DENIED if escalations else Disposition.DENIED
    return TraceOutcome(
        trace.session_id,
        trace.label,
        mode,
        tuple(actions),
        tuple(scored),
        disposition,
        escalations,
        first_latch,
        tuple(latches),
    )


class SessionGate:
    """Per-session graduated gate for live fix streams.

    Each session is guarded by its own lock, so calls for one session are
    serialised while distinct sessions proceed independently.
    """

    def __init__(self, scorer: Scorer | None = None, thresholds: Thresholds = DEFAULT_THRESHOLDS):
        self.scorer = scorer or Scorer()
        self.thresholds = thresholds
        self._sessions: dict[str, tuple[threading.Lock, SessionState]] = {}
        self._registry_lock = threading.Lock()

    def _entry(self, session_id: str) -> tuple[threading.Lock, SessionState]:
        with self._registry_lock:
            entry = self._sessions.get(session_id)
            if entry is None:
                state = SessionState(session_id, window=self.scorer.signal_config.window)
                entry = self._sessions[session_id] = (threading.Lock(), state)
            return entry

    def submit(self, fix: Fix) -> tuple[GateAction, TrustScore | None]:
        lock, state = self._entry(fix.session_id)
        with lock:
            return session_step(state, fix, self.scorer, self.thresholds)

    def verify(self, session_id: str, passed: bool) -> Resolution:
        """Apply an external step-up verdict to a step-up latched session."""
        lock, state = self._entry(session_id)
        with lock:
            if state.latch is not Latch.STEP_UP:
                raise ValidationError(f"session {session_id!r} is not awaiting step-up")
            state.latch = Latch.NONE if passed else Latch.DENY
            return Resolution.CLEARED if passed else Resolution.DENIED

    def restart(self, session_id: str) -> None:
        lock, state = self._entry(session_id)
        with lock:
            state.restart()

    def latch(self, session_id: str) -> Latch:
        lock, state = self._entry(session_id)
        with lock:
            return state.latch
