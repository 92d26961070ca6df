import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netgen import random_live_model
from pi3net.ergodicity import family_F
from pi3net.netcore import NetError
from pi3net.normalizer import (MonomialMismatch, MonomialValue, NotErgodic, normalizing_constant, split_xy,
                               steady_prob, sum_C, sum_D_closed, sum_D_open)
from pi3net.oracle import enumerate_reachable
from pi3net.qualitative import is_bounded
from pi3net.stochastic import weight
from reference import (ERGODIC_RATES, ERGODIC_RATES_2, OPEN_CONSTANT, OPEN_CONSTANT_2,
                       corrected_three_layer_formula, cycle, three_layer)

F = Fraction


def test_cycle_constant_and_probabilities():
    model = cycle()
    assert normalizing_constant(model.s, model.pf, model.m0) == F(3, 2)
    probs = [steady_prob(model.s, model.pf, model.m0, model.marking(m)) for m in ("r0=1", "r1=1")]
    assert probs == [F(1, 3), F(2, 3)]


def test_split_of_the_open_example():
    opened = three_layer("open")
    sp = split_xy(opened.s, opened.m0)
    assert sp.X == ("r0", "r1", "q0")
    assert sp.Y == ("q1", "q2", "q3", "p0", "p1", "p2")
    assert sp.top == ("p0", "p1", "p2")
    assert (sp.t, sp.u) == (1, 3)
    assert sp.delta == {"p0": 1, "p1": 1, "p2": 2}


def test_split_of_a_single_layer():
    model = cycle()
    sp = split_xy(model.s, model.m0)
    assert sp.X == () and sp.Y == ("r0", "r1")


def test_sum_C_outside_its_range_is_zero():
    model = three_layer("closed")
    m0 = model.marking("p0=1,r0=1")
    c_max = split_xy(model.s, m0).c_max
    assert sum_C(model.s, model.pf, m0, -1) == 0
    assert sum_C(model.s, model.pf, m0, c_max + 1) == 0


def test_sum_D_needs_the_matching_mode():
    closed, opened = three_layer("closed"), three_layer("open")
    with pytest.raises(NetError):
        sum_D_open(closed.s, closed.pf, closed.marking("p0=1,r0=1"), 0)
    with pytest.raises(NetError):
        sum_D_closed(opened.s, opened.pf, opened.m0, 0)


@pytest.mark.parametrize("rates,expected", [(ERGODIC_RATES, OPEN_CONSTANT), (ERGODIC_RATES_2, OPEN_CONSTANT_2)])
def test_open_example_constant(rates, expected):
    model = three_layer("open").with_rates(rates)
    value = normalizing_constant(model.s, model.pf, model.m0)
    assert value == expected
    assert value == corrected_three_layer_formula(model.pf.mu)


def test_non_ergodic_rates_are_refused():
    opened = three_layer("open")
    with pytest.raises(NotErgodic, match="zero_cin:p1"):
        normalizing_constant(opened.s, opened.pf, opened.m0)


def test_unreachable_marking_has_no_probability():
    model = cycle()
    with pytest.raises(NetError):
        steady_prob(model.s, model.pf, model.m0, model.marking("r0=2"))


def test_monomial_values():
    mu = {"a": F(1, 4), "b": F(9)}
    half = MonomialValue.power(mu, "a", F(1, 2))
    assert (half * half).rational() == F(1, 4)
    assert MonomialValue.power(mu, "b", F(5, 2)).coeff == 81
    assert (half + half).coeff == 2
    assert (half - half).coeff == 0
    assert (MonomialValue(0) + half).mono == half.mono
    assert (3 * half / 6).coeff == F(1, 2)
    with pytest.raises(MonomialMismatch):
        half + MonomialValue.power(mu, "b", F(1, 2))
    with pytest.raises(MonomialMismatch):
        half.rational()


def _closed_instance(seed):
    model = random_live_model(random.Random(seed))
    if model is None:
        return None, None
    ok, bound = is_bounded(model.s, model.m0)
    assert ok
    try:
        res = enumerate_reachable(model.net, model.m0, bound, limit=3000)
    except NetError:
        return None, None
    return model, res


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_closed_constant_matches_enumeration(seed):
    model, res = _closed_instance(seed)
    if model is None:
        return
    s, pf = model.s, model.pf
    total = normalizing_constant(s, pf, model.m0)
    assert total == sum((weight(pf, m) for m in res.markings), F(0))
    # the class with c tokens on the non-maximal places of layer N-1 factorizes
    if s.N >= 3:
        idx = [model.net.place_index[p] for p in s.pnegmax(s.N - 1)]
        by: dict = {}
        for m in res.markings:
            c = sum(m[i] for i in idx)
            by[c] = by.get(c, F(0)) + weight(pf, m)
        for c in range(max(by) + 2):
            assert sum_C(s, pf, model.m0, c) * sum_D_closed(s, pf, model.m0, c) == by.get(c, 0)
    probs = [steady_prob(s, pf, model.m0, m, total) for m in res.markings]
    assert sum(probs) == 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_open_constant_dominates_every_finite_search(seed):
    model = random_live_model(random.Random(seed), open_mode=True, max_tokens=2)
    if model is None:
        return
    s, pf = model.s, model.pf
    if any(weight(pf, g.vector) >= 1 for g in family_F(s)):
        with pytest.raises(NotErgodic):
            normalizing_constant(s, pf, model.m0)
        return
    value = normalizing_constant(s, pf, model.m0)
    res = enumerate_reachable(model.net, model.m0, sum(model.m0) + 4)
    found = sum((weight(pf, m) for m in res.markings), F(0))
    assert found <= value
    if not res.frontier_truncated:
        assert found == value
