import itertools

import pytest
from hypothesis import given, settings, strategies as st

from oracles import deauth_oracle, session_oracle
from zlab.authenticator import (
    AuthParams,
    BlacklistDecision,
    EmptySequence,
    LengthMismatch,
    Outcome,
    ProximityLevel,
    blacklist_alerts,
    blacklist_offside_typing,
    compare_window,
    escalate_threshold,
    first_deauth,
    proximity_level,
    proximity_schedule,
    run_session,
)
from zlab.interactions import Interaction, InteractionKind as K

P, F = Outcome.PASS, Outcome.FAIL


def labels(match_bits, start=0, step=1000):
    actual = [Interaction(K.TYPING, start + i * step, start + i * step + 500) for i in range(len(match_bits))]
    predicted = [K.TYPING if b else K.MKKM for b in match_bits]
    return actual, predicted


def forced(stream, w):
    """Disjoint windows of w labels that pass (all match) or fail (none match)."""
    bits = []
    for o in stream:
        bits += [o == "P"] * w
    return labels(bits)


def test_compare_window_boundaries():
    a = [K.TYPING] * 20
    for hits, want in ((13, P), (11, F), (12, P)):
        p = [K.TYPING] * hits + [K.MKKM] * (20 - hits)
        assert compare_window(a, p, 0.6) is want
    assert compare_window(a, [K.TYPING] * 12 + [K.MKKM] * 8, 0.6, strict=True) is F


def test_compare_window_errors():
    with pytest.raises(LengthMismatch):
        compare_window([K.TYPING], [], 0.6)
    with pytest.raises(LengthMismatch):
        run_session(labels([1])[0], [], AuthParams(w=1))
    with pytest.raises(EmptySequence):
        run_session([], [], AuthParams())


def test_forced_stream_deauths_at_first_fail_pair():
    actual, pred = forced("PFPFF", 3)
    v = run_session(actual, pred, AuthParams(w=3, g=2))
    assert v.deauth_window == 5
    assert v.deauth_time_ms == actual[-1].end


def test_all_pass_counts_windows():
    n, w = 47, 5
    for f in (0.0, 0.5):
        p = AuthParams(w=w, f=f)
        v = run_session(*labels([1] * n), p)
        assert v.deauth_window is None
        assert v.windows_elapsed == (n - w) // p.stride + 1


def test_trailing_partial_window_is_skipped():
    v = run_session(*labels([1] * 20 + [0] * 19), AuthParams(w=20))
    assert v.windows_elapsed == 1 and v.deauth_window is None


def test_evaluation_stops_at_deauth():
    v = run_session(*labels([0] * 100), AuthParams(w=10))
    assert v.windows_elapsed == 1
    v = run_session(*labels([0] * 100), AuthParams(w=10), stop_at_deauth=False)
    assert v.windows_elapsed == 10 and v.deauth_window == 1


@pytest.mark.parametrize("w,g", [(2, 1), (2, 2), (3, 1), (3, 2)])
def test_forced_streams_match_oracle(w, g):
    for n in range(0, 13):
        for stream in itertools.product("PF", repeat=n):
            if n == 0:
                continue
            v = run_session(*forced(stream, w), AuthParams(w=w, g=g))
            assert v.deauth_window == deauth_oracle(stream, g)


def test_label_streams_match_oracle_with_overlap():
    for w, m, g, f in itertools.product((2, 3), (0.5, 0.7), (1, 2), (0.0, 0.5)):
        for n in range(1, 10):
            for bits in itertools.product((0, 1), repeat=n):
                v = run_session(*labels(bits), AuthParams(w, m, g, f), stop_at_deauth=False)
                outs, deauth = session_oracle(bits, w, m, g, f)
                assert [o.value[0] for o in v.window_outcomes] == outs
                assert v.deauth_window == deauth


streams = st.lists(st.sampled_from([P, F]), max_size=30)


@settings(max_examples=200, deadline=None)
@given(streams, st.integers(1, 4), st.data())
def test_flipping_pass_to_fail_never_delays_deauth(outs, g, data):
    passes = [i for i, o in enumerate(outs) if o is P]
    if not passes:
        return
    i = data.draw(st.sampled_from(passes))
    flipped = list(outs)
    flipped[i] = F
    before, after = first_deauth(outs, g), first_deauth(flipped, g)
    assert after is not None if before is not None else True
    if before is not None:
        assert after <= before


@settings(max_examples=200, deadline=None)
@given(streams)
def test_grace_one_is_first_fail(outs):
    want = outs.index(F) + 1 if F in outs else None
    assert first_deauth(outs, 1) == want


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=5, max_size=40), st.permutations(list(K)))
def test_decisions_ignore_label_identity(pairs, perm):
    kinds = list(K)
    relabel = dict(zip(kinds, perm))
    actual = [Interaction(kinds[a], i * 10, i * 10 + 5) for i, (a, _) in enumerate(pairs)]
    pred = [kinds[b] for _, b in pairs]
    actual2 = [Interaction(relabel[it.kind], it.start, it.end) for it in actual]
    pred2 = [relabel[k] for k in pred]
    p = AuthParams(w=5, m=0.6, g=2)
    assert run_session(actual, pred, p).same_decisions(run_session(actual2, pred2, p))


def test_alert_fails_the_covering_window():
    actual, pred = labels([1] * 40)
    v = run_session(actual, pred, AuthParams(w=10), alerts=[actual[14].end])
    assert [o for o in v.window_outcomes] == [P, F]
    assert v.deauth_window == 2


@pytest.mark.parametrize("delta,level", [(-3, ProximityLevel.IMMEDIATE), (-5, ProximityLevel.IMMEDIATE),
                                         (-10, ProximityLevel.NEAR), (-15, ProximityLevel.NEAR),
                                         (-40, ProximityLevel.FAR)])
def test_proximity_levels(delta, level):
    assert proximity_level(-50 + delta, -50) is level


@pytest.mark.parametrize("m,level,want", [(0.7, ProximityLevel.NEAR, 0.8), (0.7, ProximityLevel.FAR, 0.9),
                                          (0.95, ProximityLevel.FAR, 1.0), (0.6, ProximityLevel.IMMEDIATE, 0.6)])
def test_escalation(m, level, want):
    assert escalate_threshold(m, level) == pytest.approx(want, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 1.0), st.sampled_from(list(ProximityLevel)))
def test_escalation_bounds(m, level):
    e = escalate_threshold(m, level)
    assert m - 1e-12 <= e <= 1.0


def test_far_reading_turns_borderline_pass_into_fail():
    actual, pred = labels([1] * 15 + [0] * 5)  # 75% matches
    base = run_session(actual, pred, AuthParams(w=20, m=0.7))
    far = run_session(actual, pred, AuthParams(w=20, m=0.7),
                      threshold_at=proximity_schedule([(0, -80.0)], -50.0, 0.7))
    assert base.window_outcomes == [P] and far.window_outcomes == [F]


def offside(n, start=0):
    return [Interaction(K.TYPING, start + i * 100, start + i * 100 + 50, True) for i in range(n)]


def test_blacklist_boundary():
    assert blacklist_offside_typing(offside(5), 5) is BlacklistDecision.TRIGGER_DEAUTH
    assert blacklist_offside_typing(offside(4), 5) is BlacklistDecision.PASS


def test_blacklist_runs_do_not_join_across_mkkm():
    seq = offside(3) + [Interaction(K.MKKM, 400, 900)] + offside(3, 1000)
    assert blacklist_offside_typing(seq, 5) is BlacklistDecision.PASS
    tail = [Interaction(K.MKKM, 1300, 1900)] + offside(5, 2000)
    assert blacklist_alerts(seq + tail, 5) == [2450]
