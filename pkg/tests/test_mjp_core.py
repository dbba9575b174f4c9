import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rebalance.errors import AbsorbingStateError, DomainError, NumericalError
from rebalance.mjp_core import (
    BalancingFunction,
    EventKind,
    JumpRecord,
    JumpTrace,
    LiftedState,
    RateMenu,
    RngStream,
    balancing_eval,
    balancing_eval_logratio,
    gillespie_step,
    minimal_flip_rate,
    rao_blackwell_average,
    superpose,
)

G = list(BalancingFunction)
M, B, S = BalancingFunction.METROPOLIS, BalancingFunction.BARKER, BalancingFunction.SQRT


@pytest.mark.parametrize("g,t,want", [(M, 1.0, 1.0), (B, 0.0, 0.0), (S, 4.0, 2.0), (B, 3.0, 1.5), (M, 0.25, 0.25)])
def test_balancing_examples(g, t, want):
    assert balancing_eval(g, t) == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("t", [-1.0, np.inf, np.nan])
def test_balancing_domain(t):
    with pytest.raises(DomainError):
        balancing_eval(S, t)


def test_balancing_parse():
    assert BalancingFunction.parse("Sqrt") is S
    assert BalancingFunction.parse(B) is B
    with pytest.raises(ValueError):
        BalancingFunction.parse("hastings")


def test_balancing_identities_random():
    t = np.random.default_rng(0).uniform(0, 1e6, 10_000) + 1e-300
    for g in G:
        gt = balancing_eval(g, t)
        assert np.all(np.abs(gt - t * balancing_eval(g, 1 / t)) <= 1e-10 * np.maximum(1, gt))


@given(st.floats(min_value=1e-8, max_value=1e8))
def test_balancing_identity_property(t):
    for g in G:
        assert balancing_eval(g, t) == pytest.approx(t * balancing_eval(g, 1 / t), rel=1e-12)


def test_logratio_examples():
    assert balancing_eval_logratio(M, 0.0) == 1.0
    assert balancing_eval_logratio(S, -2000.0) == 0.0
    assert abs(balancing_eval_logratio(B, 50.0) - 2.0) <= 1e-12
    assert balancing_eval_logratio(M, np.inf) == 1.0
    assert balancing_eval_logratio(B, np.inf) == 2.0
    for g in G:
        assert balancing_eval_logratio(g, -np.inf) == 0.0
    with pytest.raises(DomainError):
        balancing_eval_logratio(S, np.inf)
    with pytest.raises(DomainError):
        balancing_eval_logratio(M, np.nan)


@given(st.floats(min_value=-700, max_value=700))
def test_logratio_agrees_with_direct(x):
    for g in G:
        direct = balancing_eval(g, math.exp(x))
        assert balancing_eval_logratio(g, x) == pytest.approx(direct, rel=1e-12, abs=1e-300)


def test_minimal_flip_rate_examples():
    assert minimal_flip_rate(1.0, 1.0) == 0.0
    assert minimal_flip_rate(0.2, 0.7) == pytest.approx(0.5)
    assert minimal_flip_rate(0.7, 0.2) == 0.0
    with pytest.raises(DomainError):
        minimal_flip_rate(-1.0, 0.0)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_flip_exclusivity(f, b):
    assert min(minimal_flip_rate(f, b), minimal_flip_rate(b, f)) == 0.0
    # rates balance out: f + flip(f,b) == b + flip(b,f)
    assert f + minimal_flip_rate(f, b) == pytest.approx(b + minimal_flip_rate(b, f), rel=1e-15)


def test_rate_menu():
    m = RateMenu(((EventKind.JUMP, 0.5), (EventKind.FLIP, 0.25), (EventKind.REFRESH, 1.0)))
    assert m.total_rate == 1.75
    assert m.rate_of(EventKind.FLIP) == 0.25
    assert EventKind.BOUNCE not in m
    with pytest.raises(ValueError):
        RateMenu(((EventKind.JUMP, -1.0),))
    with pytest.raises(ValueError):
        RateMenu(((EventKind.JUMP, np.inf),))


def test_gillespie_selection_frequencies():
    m = RateMenu(((EventKind.JUMP, 1.0), (EventKind.FLIP, 1.0), (EventKind.REFRESH, 2.0)))
    rng = RngStream(3)
    counts = {k: 0 for k in m.kinds}
    n = 100_000
    for _ in range(n):
        counts[gillespie_step(m, rng)[1]] += 1
    assert counts[EventKind.JUMP] / n == pytest.approx(0.25, abs=0.01)
    assert counts[EventKind.FLIP] / n == pytest.approx(0.25, abs=0.01)
    assert counts[EventKind.REFRESH] / n == pytest.approx(0.5, abs=0.01)


def test_gillespie_single_event_holding_time():
    m = RateMenu(((EventKind.REFRESH, 5.0),))
    rng = RngStream(4)
    holds = [gillespie_step(m, rng) for _ in range(100_000)]
    assert all(k is EventKind.REFRESH for _, k in holds)
    assert np.mean([h for h, _ in holds]) == pytest.approx(0.2, abs=0.005)


def test_gillespie_errors():
    with pytest.raises(AbsorbingStateError):
        gillespie_step(RateMenu(((EventKind.JUMP, 0.0), (EventKind.FLIP, 0.0))), RngStream(0))
    with pytest.raises(NumericalError):
        gillespie_step(RateMenu(((EventKind.JUMP, 1e308), (EventKind.FLIP, 1e308))), RngStream(0))


def test_gillespie_draw_order_is_documented():
    # holding time from the first exponential draw, then the uniform selector
    m = RateMenu(((EventKind.JUMP, 1.0), (EventKind.FLIP, 3.0)))
    rng = RngStream(9, 2)
    ref = np.random.Generator(np.random.PCG64(np.random.SeedSequence(9, spawn_key=(2,))))
    for _ in range(100):
        h, k = gillespie_step(m, rng)
        assert h == ref.standard_exponential() / 4.0
        u = ref.random() * 4.0
        assert k is (EventKind.JUMP if u < 1.0 else EventKind.FLIP)


def test_gillespie_pure_given_rng_state():
    m = RateMenu(((EventKind.JUMP, 1.0), (EventKind.FLIP, 3.0)))
    a = [gillespie_step(m, RngStream(5)) for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_rng_stream_reproducible_and_distinct():
    a, b, c = RngStream(1, 0), RngStream(1, 0), RngStream(1, 1)
    xa, xb, xc = a.normal(8), b.normal(8), c.normal(8)
    assert np.array_equal(xa, xb)
    assert not np.array_equal(xa, xc)
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(2**64)


def _records(rates, values):
    return [JumpRecord(i, LiftedState([v], [0.0]), r, EventKind.JUMP, 0) for i, (r, v) in enumerate(zip(rates, values))]


def test_rao_blackwell_example():
    recs = _records([1.0, 2.0], [1.0, 0.0])
    assert rao_blackwell_average(recs, lambda s: s.q[0]) == pytest.approx(2 / 3, abs=1e-15)


@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=20), st.floats(-5, 5), st.floats(0.01, 100))
def test_rao_blackwell_constant_and_scale(rates, c, scale):
    recs = _records(rates, np.linspace(-1, 1, len(rates)))
    assert rao_blackwell_average(recs, lambda s: c) == pytest.approx(c, abs=1e-12)
    a = rao_blackwell_average(recs, lambda s: s.q[0])
    b = rao_blackwell_average(_records([r * scale for r in rates], np.linspace(-1, 1, len(rates))), lambda s: s.q[0])
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_rao_blackwell_errors():
    with pytest.raises(ValueError):
        rao_blackwell_average([], lambda s: 1.0)
    with pytest.raises(ValueError):
        rao_blackwell_average(_records([1.0, 0.0], [0, 0]), lambda s: 1.0)


def test_rao_blackwell_trace_matches_sequence():
    rng = np.random.default_rng(0)
    n = 50
    tr = JumpTrace(rng.normal(size=(n, 2)), rng.normal(size=(n, 2)), rng.uniform(0.5, 3, n),
                   np.zeros(n, np.int8), np.arange(n))
    a = rao_blackwell_average(tr, lambda s: s.q[..., 0] ** 2)
    b = rao_blackwell_average(list(tr), lambda s: s.q[0] ** 2)
    assert a == pytest.approx(b, rel=1e-12)
    v = rao_blackwell_average(tr, lambda s: s.q)
    assert v.shape == (2,) and v[0] == pytest.approx(rao_blackwell_average(list(tr), lambda s: s.q[0]))


def test_rao_blackwell_two_state_chain():
    # rates x1 -> x2 = 1, x2 -> x1 = 2; stationary P(x1) = 2/3
    n = 1_000_000
    state = np.arange(n) % 2  # alternating x1, x2 along the embedded chain
    tr = JumpTrace(state[:, None].astype(float), np.zeros((n, 1)), np.where(state == 0, 1.0, 2.0),
                   np.zeros(n, np.int8), np.zeros(n, np.int64))
    assert rao_blackwell_average(tr, lambda s: (s.q[:, 0] == 0).astype(float)) == pytest.approx(2 / 3, abs=0.01)


def test_superpose():
    def k1(s):
        return RateMenu(((EventKind.JUMP, float(np.sum(s.q ** 2))),))

    def k2(s):
        return RateMenu(((EventKind.FLIP, float(abs(s.p[0]))), (EventKind.REFRESH, 0.3)))

    rng = np.random.default_rng(1)
    for _ in range(100):
        s = LiftedState(rng.normal(size=2), rng.normal(size=2))
        assert superpose([k1])(s) == k1(s)
        assert superpose([k1, k2])(s).total_rate == pytest.approx(k1(s).total_rate + k2(s).total_rate, rel=1e-12)
    with pytest.raises(ValueError):
        superpose([])


def test_lifted_state():
    s = LiftedState([1.0, 2.0], [3.0, -4.0])
    assert s.flipped().flipped() == s
    assert np.array_equal(s.flipped().p, [-3.0, 4.0])
    with pytest.raises(ValueError):
        LiftedState([1.0], [np.nan])
    with pytest.raises(ValueError):
        LiftedState([1.0, 2.0], [1.0])


def test_trace_indexing():
    tr = JumpTrace(np.zeros((3, 1)), np.ones((3, 1)), np.array([1.0, 2.0, 3.0]), np.array([0, 2, 3], np.int8),
                   np.array([1, 2, 3]), start_index=10)
    r = tr[-1]
    assert r.jump_index == 12 and r.event is EventKind.REFRESH and r.total_rate == 3.0
    with pytest.raises(IndexError):
        tr[3]
