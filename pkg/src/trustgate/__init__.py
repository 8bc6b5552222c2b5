"""Location trust scoring, a graduated access gate with session latching,
and a synthetic GPS-spoofing corpus with the studies built on it."""

from .gate import (
    DEFAULT_ORACLE,
    DEFAULT_THRESHOLDS,
    Disposition,
    GateAction,
    Latch,
    Mode,
    SessionGate,
    SessionState,
    StepUpOracle,
    Thresholds,
    TraceOutcome,
    gate_eval,
    run_trace,
    session_step,
)
from .geo import (
    Fix,
    Label,
    NetworkHint,
    RawSample,
    Scenario,
    Trace,
    ValidationError,
    haversine_distance,
)
from .scorer import ALL_FIVE, NO_FIXES, NO_NETWORK, V1, Scorer, TrustScore, WeightProfile, compose, select_profile
from .signals import SignalConfig, SignalContext, SignalId, evaluate_all
from .tracegen import CorpusConfig, ScenarioParams, generate_corpus, generate_trace

__version__ = "0.1.0"

__all__ = [
    "ALL_FIVE",
    "DEFAULT_ORACLE",
    "DEFAULT_THRESHOLDS",
    "NO_FIXES",
    "NO_NETWORK",
    "V1",
    "CorpusConfig",
    "Disposition",
    "Fix",
    "GateAction",
    "Label",
    "Latch",
    "Mode",
    "NetworkHint",
    "RawSample",
    "Scenario",
    "ScenarioParams",
    "Scorer",
    "SessionGate",
    "SessionState",
    "SignalConfig",
    "SignalContext",
    "SignalId",
    "StepUpOracle",
    "Thresholds",
    "Trace",
    "TraceOutcome",
    "TrustScore",
    "ValidationError",
    "WeightProfile",
    "compose",
    "evaluate_all",
    "gate_eval",
    "generate_corpus",
    "generate_trace",
    "haversine_distance",
    "run_trace",
    "select_profile",
    "session_step",
]
