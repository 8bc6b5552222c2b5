from __future__ import annotations

import itertools
from math import factorial

import pytest
from hypothesis import given
from hypothesis import strategies as st

from trustgate.experiments import (
    ROBUSTNESS_SCENARIOS,
    ScoredCorpus,
    all_subsets,
    bench_scoring,
    degrade_gps,
    intermittent,
    run_ablation,
    run_detection,
    run_robustness,
    run_sweep,
    shapley_values,
    sweep_report,
)
from trustgate.gate import Mode
from trustgate.geo import Label, Scenario, ValidationError
from trustgate.scorer import ALL_FIVE, compose, redistribute_proportional
from trustgate.signals import ALL_SIGNALS, S4, context_for, evaluate_all, scatter_ratio
from trustgate.tracegen import CorpusConfig, generate_corpus, generate_trace


@pytest.fixture(scope="module")
def corpus() -> ScoredCorpus:
    return ScoredCorpus.build(generate_corpus(CorpusConfig(master_seed=77, traces_per_scenario=30)))


# -- Shapley -------------------------------------------------------------------


def brute_shapley(value, players):
    """Average marginal contribution over all n! orderings."""
    out = {p: 0.0 for p in players}
    perms = list(itertools.permutations(players))
    for order in perms:
        seen = frozenset()
        for p in order:
            out[p] += value(seen | {p}) - value(seen)
            seen = seen | {p}
    return {p: v / len(perms) for p, v in out.items()}


@given(st.dictionaries(st.frozensets(st.sampled_from(ALL_SIGNALS[:4]), min_size=1), st.floats(0, 1)))
def test_shapley_matches_permutation_oracle(table):
    players = ALL_SIGNALS[:4]

    def value(s):
        return table.get(s, 0.0) if s else 0.0

    got = shapley_values(value, players)
    want = brute_shapley(value, players)
    for p in players:
        assert got[p] == pytest.approx(want[p], abs=1e-12)
    full = value(frozenset(players))
    assert sum(got.values()) == pytest.approx(full, abs=1e-9)


def test_shapley_additive_game():
    w = dict(zip(ALL_SIGNALS, [0.1, 0.2, 0.3, 0.4, 0.5]))
    vals = shapley_values(lambda s: sum(w[p] for p in s))
    assert vals == pytest.approx(w)


def test_all_subsets_count():
    subs = all_subsets()
    assert len(subs) == 31 == len(set(subs))
    assert factorial(5) == 120


# -- studies on a small corpus -------------------------------------------------


def test_detection_small(corpus):
    res = run_detection(corpus)
    assert set(res.scenario_mean) == set(Scenario)
    assert res.class_stats[Label.LEGITIMATE]["mean"] >= 0.95
    assert res.v2_auc_pr >= res.v1_auc_pr
    assert 0.0 <= res.v2_eer <= 1.0
    assert "classification" in res.report().tables


def test_detection_rejects_single_class():
    one = ScoredCorpus.build([generate_trace(Scenario.WALKING, 1)])
    with pytest.raises(ValidationError):
        run_detection(one)


def test_ablation_small(corpus):
    res = run_ablation(corpus)
    assert len(res.subset_f1) == 31
    assert sum(res.shapley.values()) == pytest.approx(res.full_f1, abs=1e-9)
    rep = res.report()
    assert len(rep.tables["subsets"].rows) == 31 and len(rep.tables["signal_importance"].rows) == 5


def test_subset_trust_uses_proportional_weights(corpus):
    # ablation weights are the all-five profile rescaled, not the tabled fallback rows
    subset = frozenset(ALL_SIGNALS) - {S4}
    profile = redistribute_proportional(ALL_FIVE, subset)
    tr, got = corpus.traces[0], corpus.subset_trust(subset)[0]
    fixes = tr.fixes
    for i in range(1, len(fixes)):
        vec = evaluate_all(fixes[i], context_for(fixes[i], fixes[max(0, i - 10):i]))
        expected = compose({s: vec[s] for s in subset}, profile).value
        assert got[i - 1] == pytest.approx(expected, abs=1e-12)


def test_sweep_small(corpus):
    rows = run_sweep(corpus)
    assert len(rows) == 6
    by = {(r.theta_p, r.mode): r for r in rows}
    for theta in (0.8, 0.9, 0.95):
        assert by[theta, Mode.BINARY].far == by[theta, Mode.GRADUATED].far
        assert by[theta, Mode.GRADUATED].fdr == 0.0
        assert by[theta, Mode.BINARY].step_up_volume == 0.0
    vols = [by[t, Mode.GRADUATED].step_up_volume for t in (0.8, 0.9, 0.95)]
    assert vols == sorted(vols)
    assert sweep_report(rows).tables["threshold_sweep"].to_csv() == sweep_report(run_sweep(corpus)).tables[
        "threshold_sweep"
    ].to_csv()


def test_robustness_small(corpus):
    rows = run_robustness(corpus)
    assert [r.scenario for r in rows] == list(ROBUSTNESS_SCENARIOS)
    assert all(r.fdr == 0.0 for r in rows)


def test_degrade_gps_scales_accuracy_and_scatter():
    tr = generate_trace(Scenario.WALKING, 3)
    d = degrade_gps(tr)
    for a, b in zip(tr.fixes, d.fixes):
        assert b.accuracy == pytest.approx(4 * a.accuracy)
        assert (b.lat, b.lon) == (a.lat, a.lon)
        # ratio is scale-free: 4x spread over 4x accuracy (coordinates rounded to 7 dp)
        assert scatter_ratio(b.raw_fixes) == pytest.approx(scatter_ratio(a.raw_fixes), rel=0.05)


def test_intermittent_keeps_every_other_fix():
    tr = generate_trace(Scenario.DRIVING, 3, n_fixes=11)
    th = intermittent(tr)
    assert [f.t for f in th.fixes] == [f.t for f in tr.fixes[::2]]
    assert len(th.fixes[1].raw_fixes) == 2 * len(tr.fixes[1].raw_fixes)
    assert th.label is tr.label


def test_bench_small():
    full = bench_scoring(10_000, full=True)
    lite = bench_scoring(10_000, full=False)
    assert full.signals == 5 and lite.signals == 3
    assert 0 < full.median_us <= full.p99_us
    assert full.median_us >= lite.median_us
    with pytest.raises(ValidationError):
        bench_scoring(100)
