"""Acceptance suite on the default 10,000-trace corpus.

Each test prints one ``[PASS]``/``[FAIL]`` line for its criterion, then
asserts. Run with ``pytest tests/test_acceptance.py -v``.
"""

from __future__ import annotations

import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trustgate.experiments import (
    ScoredCorpus,
    bench_scoring,
    run_ablation,
    run_detection,
    run_robustness,
    robustness_report,
    run_sweep,
    sweep_report,
)
from trustgate.gate import DEFAULT_ORACLE, GateAction, Latch, Mode, SessionState, session_step
from trustgate.geo import Label, Scenario
from trustgate.metrics import auc_pr, eer
from trustgate.scorer import Scorer
from trustgate.signals import S5
from trustgate.tracegen import CorpusConfig, generate_corpus
from trustgate.traceio import build_manifest, config_from_manifest, corpus_hash

from .conftest import fix
from .test_metrics import brute_auc_pr, brute_eer

THETAS = (0.80, 0.90, 0.95)


class Run:
    """Default corpus plus the timings of building it and sweeping it."""

    def __init__(self) -> None:
        start = time.perf_counter()
        self.cfg = CorpusConfig()
        self.traces = generate_corpus(self.cfg)
        self.hash = corpus_hash(self.traces)
        self.corpus = ScoredCorpus.build(self.traces, corpus_hash=self.hash)
        self.build_s = time.perf_counter() - start
        start = time.perf_counter()
        self.sweep = run_sweep(self.corpus, THETAS, DEFAULT_ORACLE)
        self.sweep_s = time.perf_counter() - start

    def row(self, theta, mode):
        return next(r for r in self.sweep if r.theta_p == theta and r.mode is mode)


@pytest.fixture(scope="session")
def run() -> Run:
    return Run()


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")

    return emit


def test_c01_graduated_fdr_zero(run, report):
    fdrs = {t: run.row(t, Mode.GRADUATED).fdr for t in THETAS}
    elapsed = run.build_s + run.sweep_s
    ok = all(v == 0.0 for v in fdrs.values()) and elapsed < 60.0
    report(1, ok, f"graduated FDR {fdrs}; generate+hash+score+sweep {elapsed:.1f}s (limit 60s)")
    assert len(run.traces) == 10_000
    assert ok


def test_c02_far_equivalence(run, report):
    pairs = {t: (run.row(t, Mode.BINARY).far, run.row(t, Mode.GRADUATED).far) for t in THETAS}
    ok = all(b == g for b, g in pairs.values())
    report(2, ok, f"(binary, graduated) FAR by theta_p {pairs}")
    assert ok


def test_c03_binary_fdr_grows(run, report):
    f = {t: run.row(t, Mode.BINARY).fdr for t in THETAS}
    ok = f[0.95] > f[0.90] >= f[0.80] == 0.0
    report(3, ok, f"binary FDR {f}")
    assert ok


@pytest.fixture(scope="session")
def detection(run):
    return run_detection(run.corpus)


def test_c04_detection_quality(detection, report):
    d = detection
    ok = d.v2_auc_pr >= 0.85 and d.v2_eer <= 0.12 and d.v1_auc_pr <= d.v2_auc_pr
    report(
        4,
        ok,
        f"V2 AUC-PR {d.v2_auc_pr:.4f} (>= 0.85), EER {d.v2_eer:.4f} (<= 0.12); V1 AUC-PR {d.v1_auc_pr:.4f}",
    )
    assert ok


def test_c05_score_separation(detection, report):
    legit = detection.class_stats[Label.LEGITIMATE]
    tele = detection.scenario_mean[Scenario.TELEPORTATION]
    drift = detection.scenario_mean[Scenario.DRIFT]
    ok = legit["mean"] >= 0.95 and legit["min_fix"] >= 0.85 and 0.35 <= tele <= 0.65 and drift >= 0.85
    report(
        5,
        ok,
        f"legit mean {legit['mean']:.4f}, legit min {legit['min_fix']:.4f}, "
        f"teleport mean {tele:.4f}, drift mean {drift:.4f}",
    )
    assert ok


# -- criterion 6: latch property over scored fix streams -------------------------

_latch_failures: list[str] = []


@st.composite
def _stream(draw):
    """A session whose fixes jump around so every gate branch is reachable."""
    n = draw(st.integers(3, 40))
    out = []
    lat, lon = 10.0, 10.0
    for i in range(n):
        step = draw(st.sampled_from([0.0, 1e-5, 1e-3, 5.0]))
        lat = max(-80.0, min(80.0, lat + step * draw(st.sampled_from([-1, 1]))))
        acc = draw(st.sampled_from([0.01, 0.5, 1.0, 15.0]))
        out.append(fix(i, lat, lon, acc))
    clear = draw(st.sets(st.integers(0, n)))
    return out, clear


@settings(max_examples=500, deadline=None)
@given(_stream())
def _check_latch(case):
    fixes, clear = case
    state = SessionState("s")
    scorer = Scorer()
    latched = None
    for i, f in enumerate(fixes):
        action, _ = session_step(state, f, scorer)
        if latched == "deny" and action is not GateAction.DENY:
            _latch_failures.append(f"deny latch escaped at {i}")
        if latched == "step_up" and action is not GateAction.STEP_UP:
            _latch_failures.append(f"step_up latch escaped at {i}")
        if action in (GateAction.STEP_UP, GateAction.DENY):
            latched = action.value
        if state.latch is Latch.STEP_UP and i in clear:
            state.latch = Latch.NONE
            latched = None


def test_c06_session_latch(run, report):
    _latch_failures.clear()
    _check_latch()
    # post-transition blocking on every generated teleport trace
    scorer = Scorer()
    blocked = total = 0
    for tr in run.traces:
        if tr.scenario is not Scenario.TELEPORTATION:
            continue
        state = SessionState(tr.session_id)
        denied_at = None
        for i, f in enumerate(tr.fixes):
            action, _ = session_step(state, f, scorer)
            if denied_at is None and action is GateAction.DENY:
                denied_at = i
            elif denied_at is not None:
                total += 1
                blocked += action is GateAction.DENY
    ok = not _latch_failures and total > 0 and blocked == total
    report(6, ok, f"latch escapes {len(_latch_failures)}; post-deny fixes blocked {blocked}/{total}")
    assert ok


def test_c07_ablation_structure(run, report):
    res = run_ablation(run.corpus)
    pair, pair_f1 = res.best_pair
    total = sum(res.shapley.values())
    negative = [s.value for s, v in res.shapley.items() if v < 0]
    ok = (
        len(res.subset_f1) == 31
        and abs(total - res.full_f1) <= 1e-9
        and S5 in pair
        and bool(negative)
        and res.full_f1 < pair_f1
    )
    names = "+".join(sorted(s.value for s in pair))
    report(
        7,
        ok,
        f"31 subsets={len(res.subset_f1) == 31}; |sum Shapley - F1(all)| {abs(total - res.full_f1):.1e}; "
        f"best pair {names} F1 {pair_f1:.4f} vs all five {res.full_f1:.4f}; negative {negative}",
    )
    assert ok


@pytest.fixture(scope="session")
def robustness(run):
    return run_robustness(run.corpus, 0.7)


def test_c08_robustness(robustness, report):
    fdr = {r.scenario: r.fdr for r in robustness}
    lowest = min(robustness, key=lambda r: r.mean_legit).scenario
    ok = all(v == 0.0 for v in fdr.values()) and lowest == "intermittent_fixes"
    means = {r.scenario: round(r.mean_legit, 4) for r in robustness}
    report(8, ok, f"FDR {fdr}; legit means {means}; lowest {lowest}")
    assert ok


_oracle_mismatch: list[tuple] = []


@settings(max_examples=2000, deadline=None)
@given(
    st.integers(2, 20).flatmap(
        lambda n: st.tuples(
            st.lists(st.sampled_from([0.0, 0.2, 0.5, 0.8, 1.0]) | st.floats(0, 1), min_size=n, max_size=n),
            st.lists(st.booleans(), min_size=n, max_size=n).filter(lambda y: 0 < sum(y) < len(y)),
        )
    )
)
def _check_metric_oracles(inst):
    scores, labels = inst
    if abs(auc_pr(scores, labels) - brute_auc_pr(scores, labels)) > 1e-9:
        _oracle_mismatch.append(("auc_pr", inst))
    if abs(eer(scores, labels) - brute_eer(scores, labels)) > 1e-9:
        _oracle_mismatch.append(("eer", inst))


def test_c09_metric_oracles(report):
    _oracle_mismatch.clear()
    _check_metric_oracles()
    ok = not _oracle_mismatch
    report(9, ok, f"2000 random instances (<= 20 points), mismatches beyond 1e-9: {len(_oracle_mismatch)}")
    assert ok


def test_c10_scoring_latency(report):
    start = time.perf_counter()
    res = bench_scoring(100_000)
    elapsed = time.perf_counter() - start
    ok = res.median_us < 50.0 and elapsed < 60.0
    report(10, ok, f"median {res.median_us:.2f} us, p99 {res.p99_us:.2f} us over {res.iterations} runs; {elapsed:.1f}s")
    assert ok


def test_c11_determinism(run, detection, robustness, report):
    manifest = build_manifest(run.cfg, run.hash, len(run.traces))
    again = generate_corpus(config_from_manifest(manifest))
    same_hash = corpus_hash(again) == run.hash
    rebuilt = ScoredCorpus.build(again, corpus_hash=run.hash)

    def tables(rep):
        return {k: t.to_csv() for k, t in rep.tables.items()}

    same_tables = (
        tables(run_detection(rebuilt).report(run.hash)) == tables(detection.report(run.hash))
        and tables(sweep_report(run_sweep(rebuilt, THETAS), run.hash)) == tables(sweep_report(run.sweep, run.hash))
        and tables(run_ablation(rebuilt).report()) == tables(run_ablation(run.corpus).report())
        and tables(robustness_report(run_robustness(rebuilt))) == tables(robustness_report(robustness))
    )
    ok = same_hash and same_tables
    report(11, ok, f"regenerated hash identical: {same_hash}; all result tables byte-identical: {same_tables}")
    assert ok
