from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cleavekit import fixtures as F
from cleavekit.balance import (
    BalanceError,
    Distribution,
    FactorizationError,
    NotConverged,
    balance_report,
    bd_split_rates,
    check_complex_balanced,
    check_detailed_balanced,
    check_stationary,
    complex_balanced_solve,
    cyclic_balance_solve,
    detect_constant_ratio,
    ma_equilibrium_solve,
    mass_action_factorization,
    normalization_certified,
    stationary_solve,
    verify_detailed_factorization,
    verify_factorization,
)
from cleavekit.cleave import cleave_full
from cleavekit.generate import random_weakly_reversible
from cleavekit.graph import deficiency, is_weakly_reversible
from cleavekit.kinetics import Expression, MassAction, Table
from cleavekit.network import build_network
from cleavekit.parser import parse
from cleavekit.statespace import component_from_states, irreducible_component

from helpers import edge_map
from oracles import dense_stationary, poisson_weights

TOL = 1e-9


def poisson(comp, c=None):
    return Distribution.from_weights(comp, poisson_weights(comp.states, c))


def max_rel(a, b, states):
    return max(abs(a(x) - b(x)) / max(abs(b(x)), 1e-300) for x in states)


def bd_oracle(a1, a2, a3, x_max):
    """Exact recursion for lambda1 and g in rationals."""
    a1, a2, a3 = Fraction(a1), Fraction(a2), Fraction(a3)
    s2 = (a2 + a3) ** 2
    lam = [Fraction(0)]
    for x in range(1, x_max + 1):
        lam.append(a1 * s2 * x / (s2 + a3 * lam[-1]))
    g = [Fraction(1)]
    for x in range(1, x_max + 1):
        g.append(g[-1] * (a2 + a3) / lam[x])
    return lam, g


# -- checkers --------------------------------------------------------------------------

def test_split_pair_verdicts():
    for name, complex_ok in (("split_pair_1", True), ("split_pair_2", False)):
        net = F.load(name)
        comp = component_from_states(net, [(1, 0), (0, 1)])
        pi = poisson(comp)
        assert check_stationary(net, pi).verdict
        rep = check_complex_balanced(net, pi)
        assert rep.verdict is complex_ok
        if not complex_ok:
            assert rep.max_residual > 0.1 and rep.worst is not None


def test_triangle_poisson_is_complex_balanced():
    net = F.load("triangle")
    comp = irreducible_component(net, (3, 0, 0))
    pi = poisson(comp)
    assert check_stationary(net, pi).verdict
    assert check_complex_balanced(net, pi).verdict
    assert check_complex_balanced(cleave_full(net).network, pi).verdict


def test_triangle_is_not_detailed_balanced():
    # Kolmogorov: forward cycle product 1*1*1 differs from reverse product 2*2*2
    net = F.load("triangle")
    fwd = math.prod(net.reactions[edge_map(net)[(a, b)]].kinetics.rate_constant for a, b in [
        (((1, 0, 0), 0), ((0, 1, 0), 0)), (((0, 1, 0), 0), ((0, 0, 1), 0)), (((0, 0, 1), 0), ((1, 0, 0), 0))])
    bwd = math.prod(net.reactions[edge_map(net)[(b, a)]].kinetics.rate_constant for a, b in [
        (((1, 0, 0), 0), ((0, 1, 0), 0)), (((0, 1, 0), 0), ((0, 0, 1), 0)), (((0, 0, 1), 0), ((1, 0, 0), 0))])
    assert fwd != bwd
    comp = irreducible_component(net, (3, 0, 0))
    assert not check_detailed_balanced(net, poisson(comp)).verdict


def test_point_mass_on_stuck_state_is_stationary():
    net = parse("A -> B : ma(1)")
    comp = irreducible_component(net, (0, 2))
    pi = Distribution(comp, {(0, 2): 1.0})
    assert check_stationary(net, pi).verdict
    assert check_complex_balanced(net, pi).verdict


def test_detailed_requires_reversibility():
    net = F.load("network_1")
    comp = irreducible_component(net, (1, 0, 0, 0), truncation=3)
    rep = check_detailed_balanced(net, Distribution.from_weights(comp, lambda x: 1.0))
    assert not rep.verdict and rep.reason == "not reversible"


def test_report_serializes():
    net = F.load("triangle")
    reps = balance_report(net, poisson(irreducible_component(net, (1, 1, 0))))
    d = reps["complex"].to_dict()
    assert d["verdict"] is True and d["states_checked"] == 6


def test_distribution_validation():
    comp = irreducible_component(F.load("triangle"), (1, 0, 0))
    with pytest.raises(ValueError):
        Distribution(comp, {(1, 0, 0): 0.5})
    with pytest.raises(ValueError):
        Distribution.from_weights(comp, lambda x: 0.0)
    pi = Distribution.from_weights(comp, {(1, 0, 0): 2.0, (0, 1, 0): 1.0, (0, 0, 1): 1.0})
    assert pi((1, 0, 0)) == 0.5 and pi((5, 5, 5)) == 0.0


# -- factorization ---------------------------------------------------------------------

def test_mass_action_factorization_gives_poisson():
    net = F.load("triangle")
    comp = irreducible_component(net, (3, 0, 0))
    pi = verify_factorization(net, comp, mass_action_factorization(net, np.ones(3)))
    assert max_rel(pi, poisson(comp), comp.states) < TOL


def test_phosphorylation_closed_form_factorization():
    net = F.load("phosphorylation")
    comp = irreducible_component(net, (1, 4, 0))
    pi = verify_factorization(net, comp, F.phosphorylation_factorization(net))
    params = F.phosphorylation_params(net)
    want = Distribution.from_weights(comp, lambda x: F.phosphorylation_pi_weight(params, x))
    assert max_rel(pi, want, comp.states) < TOL


def test_michaelis_menten_detailed_balance():
    net = F.load("michaelis_menten")
    comp = irreducible_component(net, (3, 2, 0, 0), truncation=30)
    pi = verify_factorization(net, comp, F.michaelis_menten_factorization(net))
    assert check_detailed_balanced(net, pi).verdict
    tables = verify_detailed_factorization(net, pi)
    assert len(tables) == 2


def test_michaelis_menten_mismatch_is_located():
    net = F.load("michaelis_menten", {"b4": 3})
    comp = irreducible_component(net, (3, 2, 0, 0), truncation=30)
    with pytest.raises(FactorizationError) as info:
        verify_factorization(net, comp, F.michaelis_menten_factorization(net))
    assert info.value.state is not None and info.value.where is not None


def test_factorization_kappa_imbalance():
    net = F.load("triangle")
    comp = irreducible_component(net, (2, 0, 0))
    fact = mass_action_factorization(net, np.ones(3))
    r = next(iter(fact.kappa))
    # scale one reaction consistently in kappa and in the rate: identity holds, balance breaks
    rates = [rx.kinetics.rate_constant for rx in net.reactions]
    rates[r] *= 2
    net2 = build_network(net.species, [(net.phi(rx.source), net.phi(rx.target), MassAction(k)) for rx, k in zip(net.reactions, rates)])
    fact2 = mass_action_factorization(net2, np.ones(3))
    with pytest.raises(FactorizationError) as info:
        verify_factorization(net2, comp, fact2)
    assert info.value.stage == "kappa-balance"


def test_normalization_not_certified_for_growing_weights():
    net = F.load("birth_death")
    comp = irreducible_component(net, (0,), truncation=20)
    ok, ratio = normalization_certified(comp, lambda x: 3.0 ** x[0])
    assert not ok and ratio > 0.5
    ok, _ = normalization_certified(comp, lambda x: 1.0 / math.factorial(x[0]))
    assert ok


# -- mass-action equilibria -------------------------------------------------------------

def test_triangle_equilibrium_is_all_ones():
    c = ma_equilibrium_solve(F.load("triangle"))
    assert c == pytest.approx([1, 1, 1], rel=1e-9)


def test_symmetric_pair_equilibrium():
    c = ma_equilibrium_solve(F.load("split_pair_1"))
    assert c == pytest.approx([1, 1], rel=1e-9)


def test_michaelis_menten_equilibrium_conditions():
    net = F.load("michaelis_menten")
    p = net.params
    key = {
        ((1, 1, 0, 0), (0, 0, 1, 1)): p["a1"],
        ((0, 0, 1, 1), (1, 1, 0, 0)): p["a2"],
        ((0, 0, 0, 0), (0, 0, 0, 1)): p["a3"],
        ((0, 0, 0, 1), (0, 0, 0, 0)): p["a4"],
    }
    alpha = [key[(net.phi(rx.source), net.phi(rx.target))] for rx in net.reactions]
    cs, ce_star, cp, ce = ma_equilibrium_solve(net, alpha=alpha)
    assert p["a1"] * cs * ce_star == pytest.approx(p["a2"] * cp * ce, rel=1e-9)
    assert p["a3"] == pytest.approx(p["a4"] * ce, rel=1e-9)


def test_equilibrium_needs_weak_reversibility_and_mass_action():
    with pytest.raises(BalanceError):
        ma_equilibrium_solve(F.load("birth_death"))
    with pytest.raises(BalanceError, match="mass action"):
        ma_equilibrium_solve(F.load("michaelis_menten"))


@pytest.mark.parametrize("draw", range(10))
def test_deficiency_zero_random_rates_have_equilibria(draw):
    rng = np.random.default_rng(100 + draw)
    net = F.load("triangle")
    assert deficiency(net) == 0
    alpha = rng.uniform(0.1, 10.0, size=len(net.reactions))
    c = ma_equilibrium_solve(net, alpha=alpha)
    comp = irreducible_component(net, (2, 1, 0))
    rates = build_network(net.species, [(net.phi(rx.source), net.phi(rx.target), MassAction(a)) for rx, a in zip(net.reactions, alpha)])
    sol = complex_balanced_solve(rates, comp)
    assert max_rel(sol.distribution, poisson(comp, c), comp.states) < 1e-8


def test_equilibrium_failure_is_not_converged():
    # deficiency one, rates off the balanced slice
    net = parse("2A <-> A + B : ma(1), ma(1)\nA + B <-> 2B : ma(1), ma(1)\n2A <-> 2B : ma(1), ma(5)")
    with pytest.raises(NotConverged):
        ma_equilibrium_solve(net)


# -- constant ratio ------------------------------------------------------------------------

def test_constant_ratio_mass_action():
    net = F.load("triangle")
    comp = irreducible_component(net, (3, 0, 0))
    alpha = detect_constant_ratio(net, comp)
    for r, rx in enumerate(net.reactions):
        assert alpha[r] == pytest.approx(rx.kinetics.rate_constant)


def test_constant_ratio_hill_type():
    net = build_network("ABC", [
        ((1, 0, 0), (0, 1, 0), Expression("A/(1+A)", "ABC")),
        ((1, 0, 0), (0, 0, 1), Expression("3*A/(1+A)", "ABC")),
        ((0, 1, 0), (1, 0, 0), MassAction(1.0)),
        ((0, 0, 1), (1, 0, 0), MassAction(1.0)),
    ])
    comp = irreducible_component(net, (3, 0, 0))
    alpha = detect_constant_ratio(net, comp)
    a = net.index_of((1, 0, 0))
    r0, r1 = net.out_reactions(a)
    assert alpha[r1] / alpha[r0] == pytest.approx(3.0 if net.reactions[r1].target == net.index_of((0, 0, 1)) else 1 / 3)
    assert detect_constant_ratio(F.load("michaelis_menten"), irreducible_component(F.load("michaelis_menten"), (3, 2, 0, 0), 10))


def test_constant_ratio_failure_is_located():
    net = build_network("ABC", [
        ((1, 0, 0), (0, 1, 0), Expression("A", "ABC")),
        ((1, 0, 0), (0, 0, 1), Expression("A*A", "ABC")),
        ((0, 1, 0), (1, 0, 0), MassAction(1.0)),
        ((0, 0, 1), (1, 0, 0), MassAction(1.0)),
    ])
    comp = irreducible_component(net, (3, 0, 0))
    with pytest.raises(BalanceError) as info:
        detect_constant_ratio(net, comp)
    assert info.value.stage == "constant-ratio" and info.value.state is not None


# -- cyclic networks ---------------------------------------------------------------------------

def test_single_cycle_matches_dense_oracle():
    net = parse("A -> B : ma(1)\nB -> A : ma(1)")
    comp = irreducible_component(net, (5, 0))
    sol = cyclic_balance_solve(net, comp)
    dense = dense_stationary(net, comp.states)
    assert max_rel(sol.distribution, dense.get, comp.states) < 1e-9
    assert max_rel(sol.distribution, poisson(comp), comp.states) < 1e-12


def test_cyclic_solution_satisfies_m_identity():
    net = F.birth_death_translated(1, 2, 1, 42)
    comp = irreducible_component(net, (0,), truncation=40)
    res = cleave_full(net)
    cyc = cyclic_balance_solve(res.network, comp)
    cn = res.network
    from cleavekit.graph import components

    ci = components(cn)
    for r, rx in enumerate(cn.reactions):
        k = ci.assignment[rx.source]
        ph = cn.phi(rx.source)
        for x in comp.interior_states:
            if x[0] >= ph[0]:
                z = (x[0] - ph[0],)
                assert cyc.distribution(x) * cn.rate(r, x) * cyc.m[k][z] * sum(cyc.g.values()) == pytest.approx(1.0, rel=1e-9)


def test_table_two_cycle_on_a_path_is_always_consistent():
    lam_ab = Table({(2, 0): 1.0, (1, 1): 1.0})
    lam_ba = Table({(1, 1): 1.0, (0, 2): 1.0})
    net = build_network("AB", [((1, 0), (0, 1), lam_ab), ((0, 1), (1, 0), lam_ba)])
    comp = irreducible_component(net, (2, 0))
    sol = cyclic_balance_solve(net, comp)
    assert check_complex_balanced(net, sol.distribution).verdict
    assert sol.distribution((1, 1)) == pytest.approx(1 / 3)


def test_cycle_product_violation_is_rejected():
    # the A+B <-> 2B cycle and the A <-> C cycle commute on states; the table rates
    # make the product around that square differ from 1
    net = parse("species A B C\nA + B -> 2B : table(f)\n2B -> A + B : table(b)\nA -> C : ma(1)\nC -> A : ma(1)",
                resolve=lambda kind, ref: {
                    "f": Table({(1, 1, 0): 1.0, (2, 1, 0): 1.0, (1, 1, 1): 5.0}),
                    "b": Table({(0, 2, 0): 1.0, (1, 2, 0): 1.0, (0, 2, 1): 1.0}),
                }[ref])
    comp = irreducible_component(net, (1, 1, 1), truncation=3)
    with pytest.raises(BalanceError) as info:
        cyclic_balance_solve(net, comp)
    assert info.value.stage == "cyclic-solve"


def test_cyclic_solve_requires_disjoint_cycles():
    net = F.load("triangle")
    with pytest.raises(BalanceError, match="disjoint cycles"):
        cyclic_balance_solve(net, irreducible_component(net, (1, 0, 0)))


# -- complex balanced pipeline ------------------------------------------------------------------

def test_triangle_pipeline_gives_poisson():
    net = F.load("triangle")
    comp = irreducible_component(net, (3, 0, 0))
    sol = complex_balanced_solve(net, comp)
    assert max_rel(sol.distribution, poisson(comp), comp.states) < TOL
    assert max_rel(sol.distribution, stationary_solve(net, comp), comp.states) < TOL
    assert sol.factorization is not None
    assert verify_factorization(net, comp, sol.factorization)


def test_phosphorylation_pipeline_on_balanced_slice():
    net = F.load("phosphorylation")
    p = F.phosphorylation_params(net)
    assert p[2] * p[4] == p[1] * p[5]
    comp = irreducible_component(net, (1, 4, 0))
    sol = complex_balanced_solve(net, comp)
    want = Distribution.from_weights(comp, lambda x: F.phosphorylation_pi_weight(p, x))
    assert max_rel(sol.distribution, want, comp.states) < TOL


def test_phosphorylation_pipeline_fails_off_slice():
    net = F.load("phosphorylation", {"a6": 9})
    comp = irreducible_component(net, (1, 4, 0))
    with pytest.raises(BalanceError) as info:
        complex_balanced_solve(net, comp)
    assert info.value.stage in {"cyclic-solve", "verify-original"}


def test_pipeline_requires_weak_reversibility():
    net = F.load("birth_death")
    with pytest.raises(BalanceError) as info:
        complex_balanced_solve(net, irreducible_component(net, (0,), truncation=5))
    assert info.value.stage == "weak-reversibility"


def test_birth_death_g_from_cyclic_solve():
    a1, a2, a3, L = 1, 2, 1, 60
    net = F.birth_death_translated(a1, a2, a3, L + 2)
    comp = irreducible_component(net, (0,), truncation=L)
    cyc = cyclic_balance_solve(cleave_full(net).network, comp)
    _, g = bd_oracle(a1, a2, a3, 50)
    for x in range(51):
        assert cyc.g[(x,)] / cyc.g[(0,)] == pytest.approx(float(g[x]), rel=1e-9)
    assert cyc.certified


def test_birth_death_stationary_matches_recursion():
    a1, a2, a3, L = 1, 2, 1, 60
    net = F.load("birth_death")
    comp = irreducible_component(net, (0,), truncation=L)
    st = stationary_solve(net, comp)
    _, g = bd_oracle(a1, a2, a3, L)
    total = float(sum(g))
    # deep in the tail the dense solve only has absolute accuracy
    for x in range(L + 1):
        assert st((x,)) == pytest.approx(float(g[x]) / total, rel=1e-6, abs=1e-14)


# -- birth-death recursion -----------------------------------------------------------------------

@pytest.mark.parametrize("alpha", [(1, 1, 1), (1, 2, 1), (0.3, 5, 2), (7, 0.1, 0.4)])
def test_bd_split_base_cases(alpha):
    split = bd_split_rates(*alpha, 10)
    assert split.lambda1[0] == 0
    assert split.lambda1[1] == alpha[0]
    assert split.lambda4[0] == split.lambda4[1] == 0
    for x in range(2, 11):
        assert 0 < split.lambda1[x] < alpha[0] * x
        assert split.lambda1[x] + split.lambda4[x] == pytest.approx(alpha[0] * x)


def test_bd_split_second_value():
    assert bd_split_rates(1, 1, 1, 2).lambda1[2] == pytest.approx(8 / 5, rel=1e-15)


@settings(max_examples=30)
@given(st.tuples(*(st.fractions(Fraction(1, 10), 10, max_denominator=10) for _ in range(3))))
def test_bd_split_matches_exact_recursion(alpha):
    lam, _ = bd_oracle(*alpha, 30)
    got = bd_split_rates(*(float(a) for a in alpha), 30).lambda1
    for x in range(31):
        assert got[x] == pytest.approx(float(lam[x]), rel=1e-12)


def test_bd_split_rejects_nonpositive():
    with pytest.raises(ValueError):
        bd_split_rates(0, 1, 1, 3)


# -- detailed balance factorization ------------------------------------------------------------------

def test_symmetric_pair_m_tables():
    net = F.load("split_pair_1")
    comp = component_from_states(net, [(1, 0), (0, 1)])
    tables = verify_detailed_factorization(net, poisson(comp))
    (tab,) = tables.values()
    # m = 1 / (pi(x) lambda(x)) = 1 / (1/2 * 3)
    assert tab == {(0, 0): pytest.approx(2 / 3)}


def test_perturbed_pi_breaks_symmetry():
    net = F.load("michaelis_menten")
    comp = irreducible_component(net, (3, 2, 0, 0), truncation=30)
    pi = verify_factorization(net, comp, F.michaelis_menten_factorization(net))
    bumped = dict(pi.prob)
    x = comp.interior_states[5]
    bumped[x] *= 1.01
    total = sum(bumped.values())
    bad = Distribution(comp, {k: v / total for k, v in bumped.items()})
    with pytest.raises(BalanceError, match="not symmetric"):
        verify_detailed_factorization(net, bad)
    assert not check_detailed_balanced(net, bad).verdict


# -- stationary oracle ---------------------------------------------------------------------------------

def test_two_state_pair_is_uniform():
    net = F.load("split_pair_1")
    comp = irreducible_component(net, (1, 0))
    st = stationary_solve(net, comp)
    assert st((1, 0)) == pytest.approx(0.5) and st((0, 1)) == pytest.approx(0.5)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_stationary_solve_matches_dense_null_space(seed):
    rng = np.random.default_rng(seed)
    net = random_weakly_reversible(rng)
    comp = irreducible_component(net, tuple(int(v) for v in rng.integers(0, 3, size=net.n_species)), truncation=4)
    st_ = stationary_solve(net, comp)
    dense = dense_stationary(net, comp.states)
    for x in comp.states:
        assert st_(x) == pytest.approx(dense[x], rel=1e-7, abs=1e-12)


# -- implication chain ------------------------------------------------------------------------------------

def fixture_distributions():
    out = []
    net = F.load("triangle")
    comp = irreducible_component(net, (3, 0, 0))
    out.append((net, poisson(comp)))
    out.append((net, Distribution.from_weights(comp, lambda x: 1.0 + x[0])))
    for name in ("split_pair_1", "split_pair_2"):
        net = F.load(name)
        out.append((net, poisson(component_from_states(net, [(1, 0), (0, 1)]))))
    net = F.load("michaelis_menten")
    comp = irreducible_component(net, (3, 2, 0, 0), truncation=30)
    out.append((net, verify_factorization(net, comp, F.michaelis_menten_factorization(net))))
    net = F.load("phosphorylation")
    comp = irreducible_component(net, (1, 4, 0))
    out.append((net, verify_factorization(net, comp, F.phosphorylation_factorization(net))))
    return out


def test_implication_chain_on_fixtures():
    for net, pi in fixture_distributions():
        reps = balance_report(net, pi)
        if reps["detailed"].verdict:
            assert reps["complex"].verdict
        if reps["complex"].verdict:
            assert reps["stationary"].verdict


def test_cleaved_network_has_same_complex_balance_verdicts():
    for net, pi in fixture_distributions():
        if not is_weakly_reversible(net):
            continue
        cn = cleave_full(net).network
        assert check_complex_balanced(net, pi).verdict == check_complex_balanced(cn, pi).verdict
