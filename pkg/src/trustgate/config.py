"""Run configuration: one flat JSON document.

Top-level keys are the thresholds, oracle and corpus settings, the strict
flag, plus the signal constants (same names as :class:`SignalConfig`).
``profiles`` (name -> {signal: weight}) and ``scenario_params`` are the only
nested entries. Missing keys take their defaults; unknown keys are errors.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .gate import DEFAULT_THRESHOLDS, StepUpOracle, Thresholds
from .geo import Label, ValidationError
from .scorer import DEFAULT_PROFILES, Scorer, WeightProfile
from .signals import SignalConfig
from .tracegen import CorpusConfig, ScenarioParams

SCHEMA_VERSION = 1
CONFIG_ENV = "TRUSTGATE_CONFIG"

_SIGNAL_KEYS = frozenset(f.name for f in fields(SignalConfig))


@dataclass(frozen=True)
class Config:
    thresholds: Thresholds = DEFAULT_THRESHOLDS
    signals: SignalConfig = field(default_factory=SignalConfig)
    profiles: tuple[WeightProfile, ...] = DEFAULT_PROFILES
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    oracle: StepUpOracle = field(default_factory=StepUpOracle)
    oracle_seed: int = 0
    strict: bool = True

    def scorer(self) -> Scorer:
        return Scorer(self.signals, self.profiles)

    def with_thresholds(self, theta_p: float | None = None, theta_s: float | None = None) -> Config:
        th = Thresholds(
            self.thresholds.theta_p if theta_p is None else theta_p,
            self.thresholds.theta_s if theta_s is None else theta_s,
        )
        return replace(self, thresholds=th)

    def to_dict(self) -> dict:
        out: dict = {"schema_version": SCHEMA_VERSION}
        out["theta_p"] = self.thresholds.theta_p
        out["theta_s"] = self.thresholds.theta_s
        out.update(asdict(self.signals))
        out["profiles"] = {p.name: p.to_dict() for p in self.profiles}
        out["master_seed"] = self.corpus.master_seed
        out["traces_per_scenario"] = self.corpus.traces_per_scenario
        out["fixes_per_trace"] = self.corpus.fixes_per_trace
        out["fix_interval_ms"] = self.corpus.fix_interval_ms
        out["scenario_params"] = self.corpus.params.to_dict()
        out["oracle_pass_legitimate"] = self.oracle.pass_prob[Label.LEGITIMATE]
        out["oracle_pass_spoofed"] = self.oracle.pass_prob[Label.SPOOFED]
        out["oracle_seed"] = self.oracle_seed
        out["strict"] = self.strict
        return out


def config_from_dict(doc: dict) -> Config:
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    doc = dict(doc)
    version = doc.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported config schema_version {version!r}")

    sig = {k: doc.pop(k) for k in list(doc) if k in _SIGNAL_KEYS}
    base = Config()
    th = Thresholds(
        float(doc.pop("theta_p", base.thresholds.theta_p)),
        float(doc.pop("theta_s", base.thresholds.theta_s)),
    )
    profiles = base.profiles
    if "profiles" in doc:
        raw = doc.pop("profiles")
        if not isinstance(raw, dict) or not raw:
            raise ValidationError("profiles must be a non-empty object of name -> weights")
        profiles = tuple(WeightProfile(name, w) for name, w in raw.items())
    params = ScenarioParams.from_dict(doc.pop("scenario_params")) if "scenario_params" in doc else ScenarioParams()
    corpus = CorpusConfig(
        master_seed=_int(doc.pop("master_seed", base.corpus.master_seed), "master_seed"),
        traces_per_scenario=_int(doc.pop("traces_per_scenario", base.corpus.traces_per_scenario), "traces_per_scenario"),
        fixes_per_trace=_int(doc.pop("fixes_per_trace", base.corpus.fixes_per_trace), "fixes_per_trace"),
        fix_interval_ms=_int(doc.pop("fix_interval_ms", base.corpus.fix_interval_ms), "fix_interval_ms"),
        params=params,
    )
    oracle = StepUpOracle({
        Label.LEGITIMATE: float(doc.pop("oracle_pass_legitimate", base.oracle.pass_prob[Label.LEGITIMATE])),
        Label.SPOOFED: float(doc.pop("oracle_pass_spoofed", base.oracle.pass_prob[Label.SPOOFED])),
    })
    oracle_seed = _int(doc.pop("oracle_seed", 0), "oracle_seed")
    strict = doc.pop("strict", True)
    if not isinstance(strict, bool):
        raise ValidationError("strict must be true or false")
    if doc:
        raise ValidationError(f"unknown config keys {sorted(doc)}")
    return Config(th, SignalConfig.from_dict(sig), profiles, corpus, oracle, oracle_seed, strict)


def _int(v, name: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"{name} must be an integer, got {v!r}")
    return v


def load_config(path: str | Path | None = None) -> Config:
    """Load ``path``, else the file named by ``$TRUSTGATE_CONFIG``, else defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return Config()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    try:
        return config_from_dict(doc)
    except (ValidationError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: {exc}") from None
