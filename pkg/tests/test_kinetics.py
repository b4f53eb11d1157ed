from __future__ import annotations

import math
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cleavekit.kinetics import (
    Derived,
    Expression,
    KineticsError,
    MassAction,
    Table,
    Unresolved,
    kinetics_from_descriptor,
    sum_kinetics,
    validate_expression,
)


def test_mass_action_falling_factorial():
    k = MassAction(2.0)
    assert k((3, 1), (2, 1)) == 2.0 * 3 * 2 * 1
    assert k((1, 1), (2, 0)) == 0.0
    assert k((0, 0), (0, 0)) == 2.0


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_mass_action_rejects_bad_constant(bad):
    with pytest.raises(KineticsError):
        MassAction(bad)


def test_expression_with_star_species_and_params():
    e = Expression("a1*S*Estar/(b1+S)", ["S", "E*", "P", "E"], {"a1": 2.0, "b1": 1.0})
    assert e((3, 2, 0, 0), (1, 1, 0, 0)) == pytest.approx(2.0 * 3 * 2 / 4)


def test_expression_free_symbol_raises_on_use():
    e = Expression("k*A", ["A"])
    assert e.free_symbols == {"k"}
    with pytest.raises(KineticsError, match="unbound"):
        e((1,), (1,))


def test_expression_division_by_zero_and_negative():
    with pytest.raises(KineticsError, match="division by zero"):
        Expression("1/(A-1)", ["A"])((1,), (0,))
    with pytest.raises(KineticsError):
        Expression("A-5", ["A"])((1,), (0,))


@pytest.mark.parametrize("text", ["A**2", "f(A)", "A if A else 1", "[A]", "A.x", "True"])
def test_validate_expression_rejects(text):
    with pytest.raises(SyntaxError):
        validate_expression(text)


def test_table_and_unresolved():
    t = Table({(1,): 0.5, (2,): 1.5}, ref="lam")
    assert t((2,), (1,)) == 1.5
    assert t((7,), (1,)) == 0.0
    u = Unresolved("table", "lam")
    with pytest.raises(KineticsError):
        u((1,), (1,))


def test_derived_memo_and_clamp():
    calls = []

    def fn(x):
        calls.append(x)
        return -1e-15

    d = Derived(fn, ref="d")
    assert d((1,), (0,)) == 0.0
    assert d((1,), (0,)) == 0.0
    assert calls == [(1,)]
    with pytest.raises(KineticsError, match="negative"):
        Derived(lambda x: -1.0)((0,), (0,))


def test_derived_threadsafe():
    d = Derived(lambda x: float(sum(x)))
    out = []

    def work():
        out.append([d((i, i), (0, 0)) for i in range(200)])

    threads = [threading.Thread(target=work) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(o == [2.0 * i for i in range(200)] for o in out)


def test_sum_kinetics_mass_action_stays_mass_action():
    k = sum_kinetics([MassAction(1.0), MassAction(2.5)], (1, 0))
    assert isinstance(k, MassAction) and k.rate_constant == 3.5


@given(st.lists(st.floats(0.1, 10), min_size=1, max_size=4), st.tuples(st.integers(0, 6), st.integers(0, 6)))
def test_sum_kinetics_is_pointwise_sum(consts, x):
    parts = [MassAction(c) for c in consts] + [Expression("A+1", ["A", "B"])]
    src = (1, 0)
    k = sum_kinetics(parts, src)
    assert k(x, src) == pytest.approx(sum(p(x, src) for p in parts), rel=1e-12)


@given(st.floats(0.1, 10), st.tuples(st.integers(0, 2), st.integers(0, 2)), st.tuples(st.integers(0, 8), st.integers(0, 8)))
def test_mass_action_as_expression_agrees(c, y, x):
    k = MassAction(c)
    e = k.as_expression(y, ["A", "B*"])
    assert e(x, (5, 5)) == pytest.approx(k(x, y), rel=1e-12, abs=0)


def test_descriptor_round_trip():
    for k in (MassAction(1.5), Expression("2*A", ["A"]), Table({(1,): 2.0}, ref="t")):
        back = kinetics_from_descriptor(k.descriptor(), ["A"])
        assert back((1,), (1,)) == k((1,), (1,))
    assert isinstance(kinetics_from_descriptor({"kind": "derived", "ref": "r"}, ["A"]), Unresolved)
    with pytest.raises(KineticsError):
        kinetics_from_descriptor({"kind": "bogus"}, ["A"])
