from __future__ import annotations

import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trustgate.gate import (
    DEFAULT_ORACLE,
    Disposition,
    GateAction,
    Latch,
    Mode,
    Resolution,
    SessionGate,
    SessionState,
    StepUpOracle,
    Thresholds,
    gate_eval,
    oracle_rng,
    resolve_step_up,
    run_trace,
    session_step,
    trust_series,
)
from trustgate.geo import Fix, Label, ValidationError
from trustgate.scorer import V1, Scorer

from .conftest import T0, fix, trace_of, walk

V1_SCORER = Scorer().without(*[s for s in Scorer().profiles[0].weights if s not in V1.weights])
unit = st.floats(0, 1)
valid_thresholds = st.tuples(st.floats(0.01, 1.0), st.floats(0, 0.99)).filter(lambda p: p[1] < p[0]).map(
    lambda p: Thresholds(*p)
)


# -- gate_eval ---------------------------------------------------------------


@pytest.mark.parametrize("t,action", [(0.95, GateAction.PROCEED), (0.50, GateAction.STEP_UP), (0.22, GateAction.DENY)])
def test_gate_examples(t, action):
    assert gate_eval(t) is action


def test_gate_boundaries():
    assert gate_eval(0.7) is GateAction.PROCEED
    assert gate_eval(0.3) is GateAction.STEP_UP
    assert gate_eval(np.nextafter(0.3, 0)) is GateAction.DENY


@pytest.mark.parametrize("p,s", [(0.3, 0.7), (0.5, 0.5), (1.2, 0.3), (0.7, -0.1)])
def test_invalid_thresholds(p, s):
    with pytest.raises(ValidationError):
        Thresholds(p, s)


def test_gate_rejects_out_of_range_score():
    with pytest.raises(ValidationError):
        gate_eval(1.01)


@given(unit, valid_thresholds)
def test_exactly_one_branch(t, th):
    fired = [t >= th.theta_p, th.theta_s <= t < th.theta_p, t < th.theta_s]
    assert sum(fired) == 1
    expected = [GateAction.PROCEED, GateAction.STEP_UP, GateAction.DENY][fired.index(True)]
    assert gate_eval(t, th) is expected


@given(unit, st.floats(0.31, 1.0), st.floats(0.31, 1.0))
def test_raising_theta_p_never_promotes(t, a, b):
    lo, hi = sorted((a, b))
    if gate_eval(t, Thresholds(lo, 0.3)) is not GateAction.PROCEED:
        assert gate_eval(t, Thresholds(hi, 0.3)) is not GateAction.PROCEED


# -- sessions ------------------------------------------------------------------


def test_first_fix_unscored_but_kept():
    st_ = SessionState("s")
    action, score = session_step(st_, walk(1)[0], Scorer())
    assert action is GateAction.UNSCORED_PROCEED and score is None
    assert len(st_.history) == 1


def test_second_fix_honest_v1_proceeds():
    a = fix(0, 0.0, 0.0, 15.0)
    b = walk(2, speed=10.0, lat0=0.0, lon0=0.0)[1]
    st_ = SessionState("s")
    session_step(st_, a, Scorer())
    action, score = session_step(st_, b, Scorer())
    assert score.profile is V1 and score.value == pytest.approx(1.0)
    assert action is GateAction.PROCEED


def test_session_errors():
    st_ = SessionState("s")
    session_step(st_, fix(1, 0, 0), Scorer())
    with pytest.raises(ValidationError):
        session_step(st_, fix(1, 0, 0), Scorer())
    with pytest.raises(ValidationError):
        session_step(st_, fix(2, 0, 0, sid="x"), Scorer())


def test_deny_latch_blocks_honest_fixes():
    st_ = SessionState("s")
    st_.latch = Latch.DENY
    for f in walk(12):
        assert session_step(st_, f, Scorer())[0] is GateAction.DENY


def _run_stream(trust: list[float], clear_at: set[int], th: Thresholds):
    """Drive a session with precomputed scores; clear step-up latches at the given indices."""
    st_ = SessionState("s")
    actions, cleared = [], []
    for i, t in enumerate(trust):
        action, _ = session_step(st_, fix(i, 0, 0), Scorer(), th, precomputed=t if i else None)
        actions.append(action)
        did_clear = False
        if st_.latch is Latch.STEP_UP and i in clear_at:
            st_.latch = Latch.NONE
            did_clear = True
        cleared.append(did_clear)
    return actions, cleared


@given(st.lists(unit, min_size=2, max_size=40), st.sets(st.integers(0, 40)), valid_thresholds)
def test_latch_safety(trust, clear_at, th):
    actions, cleared = _run_stream(trust, clear_at, th)
    latched = None
    for i, a in enumerate(actions):
        if latched is not None:
            assert a.value == latched, f"fix {i} escaped the {latched} latch"
        if a in (GateAction.STEP_UP, GateAction.DENY):
            latched = a.value
        if cleared[i]:
            latched = None


@given(st.lists(unit, min_size=2, max_size=40), st.integers(1, 39))
def test_deny_absorbs_perfect_scores(prefix, k):
    trust = prefix[:k] + [0.0] + [1.0] * 20
    actions, _ = _run_stream(trust, set(range(100)), Thresholds())
    first = next(i for i, a in enumerate(actions) if a is GateAction.DENY or a is GateAction.STEP_UP)
    if actions[first] is GateAction.DENY:
        assert all(a is GateAction.DENY for a in actions[first:])


# -- oracle --------------------------------------------------------------------


def test_default_oracle_resolution():
    for label, expected in ((Label.LEGITIMATE, Resolution.CLEARED), (Label.SPOOFED, Resolution.DENIED)):
        st_ = SessionState("s", latch=Latch.STEP_UP)
        assert resolve_step_up(st_, DEFAULT_ORACLE, label, oracle_rng(1)) is expected


def test_resolve_requires_step_up_latch():
    with pytest.raises(ValidationError):
        resolve_step_up(SessionState("s"), DEFAULT_ORACLE, Label.LEGITIMATE, oracle_rng(1))


def test_oracle_half_probability_rate():
    oracle = StepUpOracle({Label.LEGITIMATE: 0.5, Label.SPOOFED: 0.5})
    rng = oracle_rng(123)
    rate = np.mean([oracle.attempt(Label.SPOOFED, rng) for _ in range(10_000)])
    assert abs(rate - 0.5) <= 0.02


def test_oracle_validation():
    with pytest.raises(ValidationError):
        StepUpOracle({Label.LEGITIMATE: 1.5, Label.SPOOFED: 0.0})
    with pytest.raises(ValidationError):
        StepUpOracle({Label.LEGITIMATE: 1.0})


# -- traces shaped like real-device captures ----------------------------------


def _teleport_trace() -> list[Fix]:
    """26 honest walking fixes, then a jump to a mock position across the globe."""
    honest = walk(26, lat0=35.68, lon0=139.77)
    mock = [Fix("s", T0 + i * 1000, 25.76, -80.19, 0.01) for i in range(26, 60)]
    return honest + mock


def _nearby_mock() -> list[Fix]:
    return walk(61, speed=1.0, acc=0.01)


def test_honest_walk_all_proceed():
    out = run_trace(trace_of(walk(30), Label.LEGITIMATE), scorer=V1_SCORER)
    assert out.actions[0] is GateAction.UNSCORED_PROCEED
    assert all(a is GateAction.PROCEED for a in out.actions[1:])
    assert out.disposition is Disposition.ACCEPTED


def test_teleport_denied_at_transition_and_latched():
    out = run_trace(trace_of(_teleport_trace(), Label.SPOOFED), scorer=V1_SCORER)
    k = out.first_latch_index
    assert k == 26
    # S1 = 0, S2 = 0.005, S3 = 0.9 under V1
    assert out.scores[k] == pytest.approx(0.5 * 0 + 0.2 * 0.005 + 0.3 * 0.9)
    assert out.actions[k] is GateAction.DENY
    assert all(a is GateAction.DENY for a in out.actions[k:])
    assert len(out.actions[k + 1:]) == 33
    assert out.disposition is Disposition.DENIED


def test_nearby_mock_threshold_flip():
    fixes = _nearby_mock()
    t = trust_series(trace_of(fixes), V1_SCORER)
    assert t[1] == pytest.approx(0.5 + 0.2 * 0.005 + 0.3)
    relaxed = run_trace(trace_of(fixes), Thresholds(0.7, 0.3), oracle=None, scorer=V1_SCORER)
    assert all(a is GateAction.PROCEED for a in relaxed.actions[1:])
    strict = run_trace(trace_of(fixes), Thresholds(0.9, 0.3), oracle=None, scorer=V1_SCORER)
    assert all(a is GateAction.STEP_UP for a in strict.actions[1:])
    assert len(strict.actions) - 1 == 60
    assert strict.latches[-1] is Latch.STEP_UP


def test_graduated_legitimate_cleared_by_oracle():
    # borderline honest trace: S2 = 0.25 puts every fix at T = 0.85 under V1
    fixes = walk(20, acc=0.5)
    out = run_trace(trace_of(fixes, Label.LEGITIMATE), Thresholds(0.9, 0.3), Mode.GRADUATED, scorer=V1_SCORER)
    assert out.disposition is Disposition.STEPPED_UP_THEN_ACCEPTED
    assert out.accepted
    assert out.escalations >= 1
    binary = run_trace(trace_of(fixes, Label.LEGITIMATE), Thresholds(0.9, 0.3), Mode.BINARY, scorer=V1_SCORER)
    assert binary.disposition is Disposition.DENIED


@given(st.lists(unit, min_size=2, max_size=30), st.floats(0.31, 1.0), st.sampled_from(list(Label)))
def test_far_equivalence_per_trace(trust, theta, label):
    # under the default oracle both modes accept a spoofed trace iff min T >= theta
    fixes = [fix(i, 0, 0) for i in range(len(trust))]
    series = [None] + trust[1:]
    tr = trace_of(fixes, label)
    th = Thresholds(theta, 0.3)
    b = run_trace(tr, th, Mode.BINARY, trust=series)
    g = run_trace(tr, th, Mode.GRADUATED, rng=oracle_rng(0), trust=series)
    if label is Label.SPOOFED:
        assert b.accepted == g.accepted == (min(trust[1:]) >= theta)
    else:
        # every step-up clears at once, so each fix is scored; only T < theta_s denies
        assert g.accepted == (min(trust[1:]) >= 0.3)


def test_run_trace_length_check():
    with pytest.raises(ValidationError):
        run_trace(trace_of(walk(3)), trust=[None, 1.0])


# -- concurrent gate -------------------------------------------------------------


def test_session_gate_isolates_sessions():
    gate = SessionGate(V1_SCORER)
    honest = walk(20, sid="a")
    bad = [Fix("b", f.t, f.lat, f.lon, 0.01) for f in walk(20, sid="b", speed=300.0)]
    results: dict[str, list] = {"a": [], "b": []}

    def feed(fixes, key):
        for f in fixes:
            results[key].append(gate.submit(f)[0])

    threads = [threading.Thread(target=feed, args=(honest, "a")), threading.Thread(target=feed, args=(bad, "b"))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(a is GateAction.PROCEED for a in results["a"][1:])
    assert all(a is GateAction.DENY for a in results["b"][1:])
    assert gate.latch("b") is Latch.DENY
    with pytest.raises(ValidationError):
        gate.verify("b", True)
    gate.restart("b")
    assert gate.latch("b") is Latch.NONE


def test_session_gate_verify_clears_step_up():
    gate = SessionGate(V1_SCORER)
    fixes = _nearby_mock()[:5]
    gate.thresholds = Thresholds(0.9, 0.3)
    gate.submit(fixes[0])
    assert gate.submit(fixes[1])[0] is GateAction.STEP_UP
    assert gate.submit(fixes[2])[0] is GateAction.STEP_UP
    assert gate.verify("s", True) is Resolution.CLEARED
    assert gate.submit(fixes[3])[0] is GateAction.STEP_UP  # rescored, still borderline
    assert gate.verify("s", False) is Resolution.DENIED
    assert gate.submit(fixes[4])[0] is GateAction.DENY
