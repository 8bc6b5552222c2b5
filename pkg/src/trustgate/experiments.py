"""Detection, ablation, threshold-sweep, robustness and timing studies.

Signals are computed once per trace (:class:`ScoredCorpus`); every study
then recombines the cached signal matrices under different weightings, so
a full 10,000-trace run stays in the tens of seconds.
"""

from __future__ import annotations

import io
import csv
import itertools
import math
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field, replace
from math import factorial

import numpy as np

from .gate import (
    DEFAULT_ORACLE,
    Mode,
    StepUpOracle,
    Thresholds,
    oracle_rng,
    run_trace,
)
from .geo import SCENARIOS, Fix, Label, RawSample, Scenario, Trace, ValidationError
from .metrics import (
    ScoredTrace,
    auc_pr,
    confusion,
    eer,
    far_fdr,
    precision_recall_f1,
)
from .scorer import ALL_FIVE, Scorer, WeightProfile, compose, compose_columns, redistribute_proportional
from .signals import ALL_SIGNALS, S4, S5, SignalConfig, SignalContext, SignalId, evaluate_all, signal_matrix

DEFAULT_SWEEP = (0.80, 0.90, 0.95)
DEGRADE_FACTOR = 4.0


# -- reports -------------------------------------------------------------------


@dataclass
class Table:
    columns: list[str]
    rows: list[list]

    def _fmt(self, v) -> str:
        if isinstance(v, float):
            return "nan" if math.isnan(v) else f"{v:.6f}"
        return str(v)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([self._fmt(v) for v in row])
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = ["| " + " | ".join(self.columns) + " |", "|" + "---|" * len(self.columns)]
        for row in self.rows:
            lines.append("| " + " | ".join(self._fmt(v) for v in row) + " |")
        return "\n".join(lines) + "\n"


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    tables: dict[str, Table]
    corpus_hash: str | None = None

    def to_markdown(self) -> str:
        parts = [f"# {self.experiment}\n"]
        if self.corpus_hash:
            parts.append(f"corpus sha256: `{self.corpus_hash}`\n")
        for key in sorted(self.config):
            parts.append(f"- {key}: {self.config[key]}")
        parts.append("")
        for name, table in self.tables.items():
            parts.append(f"## {name}\n")
            parts.append(table.to_markdown())
        return "\n".join(parts)


# -- cached corpus signals ------------------------------------------------------


@dataclass
class ScoredCorpus:
    traces: list[Trace]
    signals: list[np.ndarray]
    signal_config: SignalConfig = field(default_factory=SignalConfig)
    corpus_hash: str | None = None

    @classmethod
    def build(
        cls, traces: Sequence[Trace], signal_config: SignalConfig | None = None, corpus_hash: str | None = None
    ) -> ScoredCorpus:
        cfg = signal_config or SignalConfig()
        traces = list(traces)
        for tr in traces:
            if tr.label is None:
                raise ValidationError(f"trace {tr.session_id!r} has no ground-truth label")
        return cls(traces, [signal_matrix(tr.fixes, cfg) for tr in traces], cfg, corpus_hash)

    @property
    def labels(self) -> list[Label]:
        return [tr.label for tr in self.traces]

    def check_both_classes(self) -> None:
        labels = set(self.labels)
        if labels != {Label.LEGITIMATE, Label.SPOOFED}:
            raise ValidationError("corpus must contain both legitimate and spoofed traces")

    def trust(self, scorer: Scorer) -> list[np.ndarray]:
        """Per-trace trust arrays over scored fixes (first fix dropped)."""
        return [scorer.trust_from_matrix(sig)[1:] for sig in self.signals]

    def subset_trust(self, subset: frozenset[SignalId], base: WeightProfile = ALL_FIVE) -> list[np.ndarray]:
        """Trust under ``base`` proportionally redistributed over ``subset``.

        Rows missing some subset signal fall back to the available part of
        the subset; rows with none of it stay NaN.
        """
        profile = redistribute_proportional(base, subset)
        cols = [ALL_SIGNALS.index(s) for s in ALL_SIGNALS if s in subset]
        out = []
        for sig in self.signals:
            rows = sig[1:]
            t = compose_columns(rows, profile)
            missing = np.isnan(rows[:, cols]).any(axis=1)
            for i in np.flatnonzero(missing):
                avail = frozenset(s for s in subset if not math.isnan(rows[i, ALL_SIGNALS.index(s)]))
                if avail:
                    t[i] = compose({s: rows[i, ALL_SIGNALS.index(s)] for s in avail},
                                   redistribute_proportional(base, avail)).value
            out.append(t)
        return out


def _min_t(t: np.ndarray) -> float:
    finite = t[~np.isnan(t)]
    return float(finite.min()) if len(finite) else 1.0


def _mean_t(t: np.ndarray) -> float:
    finite = t[~np.isnan(t)]
    return float(finite.mean()) if len(finite) else float("nan")


def scored_traces(labels: Sequence[Label], trust: Sequence[np.ndarray]) -> list[ScoredTrace]:
    return [ScoredTrace(lab, _min_t(t)) for lab, t in zip(labels, trust)]


def _f1_at(labels, trust, theta: float) -> tuple[float, float, float, float]:
    """(precision, recall, F1, binary FDR) at ``theta`` on min-T."""
    scored = scored_traces(labels, trust)
    c = confusion(scored, theta)
    p, r, f1 = precision_recall_f1(c)
    fdr = c.fp / (c.fp + c.tn) if c.fp + c.tn else 0.0
    return p, r, f1, fdr


# -- detection -----------------------------------------------------------------


@dataclass
class DetectionResult:
    scenario_mean: dict[Scenario, float]
    v1_auc_pr: float
    v1_eer: float
    v2_auc_pr: float
    v2_eer: float
    # per class: mean/min/p25/max of per-trace mean T, plus min over all scored fixes
    class_stats: dict[Label, dict[str, float]]

    def report(self, corpus_hash: str | None = None) -> ExperimentReport:
        per_scenario = Table(
            ["label", "scenario", "mean_T"],
            [[s.label.value, s.value, self.scenario_mean[s]] for s in SCENARIOS if s in self.scenario_mean],
        )
        summary = Table(
            ["scorer", "auc_pr", "eer"],
            [["V1 (S1-S3)", self.v1_auc_pr, self.v1_eer], ["V2 (all available)", self.v2_auc_pr, self.v2_eer]],
        )
        dist = Table(
            ["class", "n", "mean", "min", "p25", "max", "min_fix_T"],
            [
                [lab.value, int(st["n"]), st["mean"], st["min"], st["p25"], st["max"], st["min_fix"]]
                for lab, st in self.class_stats.items()
            ],
        )
        return ExperimentReport(
            "detection",
            {"statistic": "suspicion = 1 - min T over scored fixes"},
            {"scenario_mean_trust": per_scenario, "classification": summary, "score_distribution": dist},
            corpus_hash,
        )


def run_detection(corpus: ScoredCorpus, scorer: Scorer | None = None) -> DetectionResult:
    corpus.check_both_classes()
    v2 = scorer or Scorer(corpus.signal_config)
    v1 = v2.without(S4, S5)
    labels = corpus.labels
    t2 = corpus.trust(v2)
    t1 = corpus.trust(v1)

    by_scenario: dict[Scenario, list[float]] = {}
    for tr, t in zip(corpus.traces, t2):
        if tr.scenario is not None:
            by_scenario.setdefault(tr.scenario, []).append(_mean_t(t))
    scenario_mean = {s: float(np.mean(v)) for s, v in by_scenario.items()}

    def ranking(trust):
        return [1.0 - _min_t(t) for t in trust]

    class_stats = {}
    for lab in (Label.LEGITIMATE, Label.SPOOFED):
        means = np.array([_mean_t(t) for t, l in zip(t2, labels) if l is lab])
        mins = [_min_t(t) for t, l in zip(t2, labels) if l is lab]
        class_stats[lab] = {
            "n": float(len(means)),
            "mean": float(means.mean()),
            "min": float(means.min()),
            "p25": float(np.percentile(means, 25)),
            "max": float(means.max()),
            "min_fix": float(min(mins)),
        }
    return DetectionResult(
        scenario_mean,
        auc_pr(ranking(t1), labels),
        eer(ranking(t1), labels),
        auc_pr(ranking(t2), labels),
        eer(ranking(t2), labels),
        class_stats,
    )


# -- ablation ------------------------------------------------------------------


def all_subsets(signals: Sequence[SignalId] = ALL_SIGNALS) -> list[frozenset[SignalId]]:
    return [frozenset(c) for k in range(1, len(signals) + 1) for c in itertools.combinations(signals, k)]


def shapley_values(
    value: Callable[[frozenset[SignalId]], float], players: Sequence[SignalId] = ALL_SIGNALS
) -> dict[SignalId, float]:
    """Exact Shapley values; ``value`` of the empty coalition must be defined."""
    n = len(players)
    out = {}
    for p in players:
        others = [q for q in players if q != p]
        total = 0.0
        for k in range(n):
            w = factorial(k) * factorial(n - k - 1) / factorial(n)
            for c in itertools.combinations(others, k):
                s = frozenset(c)
                total += w * (value(s | {p}) - value(s))
        out[p] = total
    return out


@dataclass
class AblationResult:
    subset_f1: dict[frozenset[SignalId], float]
    shapley: dict[SignalId, float]
    theta: float

    @property
    def best_pair(self) -> tuple[frozenset[SignalId], float]:
        pairs = [(s, f) for s, f in self.subset_f1.items() if len(s) == 2]
        return max(pairs, key=lambda sf: sf[1])

    @property
    def full_f1(self) -> float:
        return self.subset_f1[frozenset(ALL_SIGNALS)]

    def report(self, corpus_hash: str | None = None) -> ExperimentReport:
        def name(s):
            return "+".join(x.value for x in ALL_SIGNALS if x in s)

        subsets = Table(["signals", "size", "f1"], [[name(s), len(s), f] for s, f in self.subset_f1.items()])
        ranked = sorted(self.shapley.items(), key=lambda kv: (-kv[1], kv[0].value))
        importance = Table(["signal", "delta_f1"], [[s.value, v] for s, v in ranked])
        pair, f1 = self.best_pair
        best = Table(["best_pair", "f1", "all_five_f1"], [[name(pair), f1, self.full_f1]])
        return ExperimentReport(
            "ablation",
            {"theta": self.theta, "weights": "all-five profile, proportionally redistributed", "empty_set_f1": 0.0},
            {"subsets": subsets, "signal_importance": importance, "best_pair": best},
            corpus_hash,
        )


def run_ablation(corpus: ScoredCorpus, theta: float = 0.7) -> AblationResult:
    corpus.check_both_classes()
    labels = corpus.labels
    subset_f1 = {}
    for subset in all_subsets():
        subset_f1[subset] = _f1_at(labels, corpus.subset_trust(subset), theta)[2]

    def value(s):
        return subset_f1[s] if s else 0.0

    return AblationResult(subset_f1, shapley_values(value), theta)


# -- threshold sweep -----------------------------------------------------------


@dataclass
class SweepRow:
    theta_p: float
    mode: Mode
    far: float
    fdr: float
    precision: float
    recall: float
    f1: float
    step_up_volume: float


def run_sweep(
    corpus: ScoredCorpus,
    thetas: Iterable[float] = DEFAULT_SWEEP,
    oracle: StepUpOracle = DEFAULT_ORACLE,
    *,
    theta_s: float = 0.3,
    oracle_seed: int = 0,
    scorer: Scorer | None = None,
) -> list[SweepRow]:
    scorer = scorer or Scorer(corpus.signal_config)
    trust = [scorer.trust_from_matrix(sig) for sig in corpus.signals]
    series = [[None] + t[1:].tolist() for t in trust]
    rows = []
    for theta in thetas:
        th = Thresholds(theta, theta_s)
        for mode in (Mode.BINARY, Mode.GRADUATED):
            outcomes = [
                run_trace(tr, th, mode, oracle, oracle_rng(oracle_seed, i), scorer=scorer, trust=ts)
                for i, (tr, ts) in enumerate(zip(corpus.traces, series))
            ]
            m = far_fdr(outcomes)
            volume = sum(o.escalations > 0 for o in outcomes) / len(outcomes)
            rows.append(SweepRow(theta, mode, m.far, m.fdr, m.precision, m.recall, m.f1, volume))
    return rows


def sweep_report(rows: Sequence[SweepRow], corpus_hash: str | None = None, oracle_seed: int = 0) -> ExperimentReport:
    table = Table(
        ["theta_p", "mode", "far", "fdr", "precision", "recall", "f1", "step_up_volume"],
        [[r.theta_p, r.mode.value, r.far, r.fdr, r.precision, r.recall, r.f1, r.step_up_volume] for r in rows],
    )
    return ExperimentReport("sweep", {"oracle_seed": oracle_seed}, {"threshold_sweep": table}, corpus_hash)


# -- robustness ----------------------------------------------------------------


def degrade_gps(trace: Trace, factor: float = DEGRADE_FACTOR) -> Trace:
    """Inflate reported accuracy by ``factor`` and spread raw samples to match."""
    fixes = []
    for f in trace.fixes:
        raw = f.raw_fixes
        if raw is not None:
            raw = tuple(
                RawSample(
                    round(f.lat + factor * (r.lat - f.lat), 7),
                    round(f.lon + factor * (r.lon - f.lon), 7),
                    r.accuracy * factor,
                )
                for r in raw
            )
        fixes.append(replace(f, accuracy=f.accuracy * factor, raw_fixes=raw))
    return Trace(tuple(fixes), trace.label, trace.scenario, trace.seed)


def intermittent(trace: Trace) -> Trace:
    """Keep every other fix; each kept fix reports the raw samples since the last kept one."""
    fixes = []
    pending: list[RawSample] = []
    for i, f in enumerate(trace.fixes):
        if f.raw_fixes:
            pending.extend(f.raw_fixes)
        if i % 2 == 0:
            raw = tuple(pending) if f.raw_fixes is not None else None
            fixes.append(replace(f, raw_fixes=raw))
            pending = []
    if len(fixes) < 2:
        raise ValidationError(f"trace {trace.session_id!r} too short to thin")
    return Trace(tuple(fixes), trace.label, trace.scenario, trace.seed)


ROBUSTNESS_SCENARIOS = (
    "all_signals",
    "no_network",
    "no_gps_fixes",
    "v1_fallback",
    "degraded_gps",
    "intermittent_fixes",
)


@dataclass
class RobustnessRow:
    scenario: str
    mean_legit: float
    mean_spoofed: float
    f1: float
    fdr: float


def run_robustness(corpus: ScoredCorpus, theta_p: float = 0.7, scorer: Scorer | None = None) -> list[RobustnessRow]:
    corpus.check_both_classes()
    base = scorer or Scorer(corpus.signal_config)
    labels = corpus.labels
    degraded = ScoredCorpus.build([degrade_gps(t) for t in corpus.traces], corpus.signal_config)
    thinned = ScoredCorpus.build([intermittent(t) for t in corpus.traces], corpus.signal_config)
    variants = {
        "all_signals": (corpus, base),
        "no_network": (corpus, base.without(S5)),
        "no_gps_fixes": (corpus, base.without(S4)),
        "v1_fallback": (corpus, base.without(S4, S5)),
        "degraded_gps": (degraded, base),
        "intermittent_fixes": (thinned, base),
    }
    rows = []
    for name in ROBUSTNESS_SCENARIOS:
        c, scorer = variants[name]
        trust = c.trust(scorer)
        means = [_mean_t(t) for t in trust]
        legit = [m for m, l in zip(means, labels) if l is Label.LEGITIMATE]
        spoof = [m for m, l in zip(means, labels) if l is Label.SPOOFED]
        _, _, f1, fdr = _f1_at(labels, trust, theta_p)
        rows.append(RobustnessRow(name, float(np.mean(legit)), float(np.mean(spoof)), f1, fdr))
    return rows


def robustness_report(rows: Sequence[RobustnessRow], theta_p: float = 0.7, corpus_hash: str | None = None) -> ExperimentReport:
    table = Table(
        ["scenario", "mean_T_legit", "mean_T_spoofed", "f1", "fdr"],
        [[r.scenario, r.mean_legit, r.mean_spoofed, r.f1, r.fdr] for r in rows],
    )
    return ExperimentReport(
        "robustness",
        {"theta_p": theta_p, "fdr": "binary gate", "degrade_factor": DEGRADE_FACTOR},
        {"robustness": table},
        corpus_hash,
    )


# -- timing --------------------------------------------------------------------


@dataclass
class BenchResult:
    iterations: int
    median_us: float
    p99_us: float
    signals: int


def _bench_case(full: bool) -> tuple[Fix, SignalContext]:
    from .tracegen import generate_trace

    trace = generate_trace(Scenario.WALKING, 7, n_fixes=12)
    *history, cur = trace.fixes
    if not full:
        cur = replace(cur, net_hint=None, raw_fixes=None)
    return cur, SignalContext(history=history[-10:], net_hint=cur.net_hint, raw_fixes=cur.raw_fixes)


def bench_scoring(iterations: int = 100_000, *, full: bool = True, warmup: int = 2_000) -> BenchResult:
    """Wall-clock per evaluate_all + compose on one representative fix."""
    if iterations < 10_000:
        raise ValidationError("use at least 10,000 iterations")
    cur, ctx = _bench_case(full)
    scorer = Scorer()
    cfg = scorer.signal_config
    clock = time.perf_counter_ns
    n_signals = len(evaluate_all(cur, ctx, cfg))
    for _ in range(warmup):
        vec = evaluate_all(cur, ctx, cfg)
        compose(vec, scorer.profile_for(frozenset(vec)))
    samples = np.empty(iterations)
    for i in range(iterations):
        start = clock()
        vec = evaluate_all(cur, ctx, cfg)
        compose(vec, scorer.profile_for(frozenset(vec)))
        samples[i] = clock() - start
    samples /= 1000.0
    return BenchResult(iterations, float(np.median(samples)), float(np.percentile(samples, 99)), n_signals)


def bench_report(results: Sequence[BenchResult]) -> ExperimentReport:
    table = Table(
        ["signals", "iterations", "median_us", "p99_us"],
        [[r.signals, r.iterations, r.median_us, r.p99_us] for r in results],
    )
    return ExperimentReport("bench", {"clock": "time.perf_counter_ns", "threads": 1}, {"scoring_latency": table})
