from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cleavekit import fixtures as F
from cleavekit.balance import Distribution, stationary_solve
from cleavekit.cleave import cleave_full
from cleavekit.generate import random_initial_state, random_weakly_reversible
from cleavekit.graph import conservation_laws
from cleavekit.kinetics import Table
from cleavekit.network import build_network
from cleavekit.parser import parse
from cleavekit.ssa import ExplosionError, SimConfig, replica_rng, simulate, tv_distance
from cleavekit.statespace import irreducible_component, leads_to

from oracles import poisson_weights


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig((0,), t_end=1.0, burn_in=1.0)
    with pytest.raises(ValueError):
        SimConfig((0,), t_end=1.0, replicas=0)
    with pytest.raises(ValueError):
        SimConfig((-1,), t_end=1.0)


def test_zero_rates_give_point_mass():
    net = build_network("AB", [((1, 0), (0, 1), Table({}))])
    emp = simulate(net, SimConfig((3, 2), t_end=10.0, replicas=3))
    assert emp.fractions == {(3, 2): 1.0}
    assert emp.events == 0 and emp.absorbed == 3
    assert emp.total_time == pytest.approx(30.0)


def test_absorbed_state_keeps_remaining_time():
    net = parse("A -> B : ma(1)")
    emp = simulate(net, SimConfig((1, 0), t_end=50.0, seed=3))
    assert emp.absorbed == 1 and emp.events == 1
    assert emp((0, 1)) > 0.9
    assert sum(emp.fractions.values()) == pytest.approx(1.0, abs=1e-12)


def test_triangle_long_run_matches_poisson():
    net = F.load("triangle")
    comp = irreducible_component(net, (3, 0, 0))
    want = stationary_solve(net, comp)
    emp = simulate(net, SimConfig((3, 0, 0), t_end=20_000.0, burn_in=10.0, seed=11))
    assert sum(emp.fractions.values()) == pytest.approx(1.0, abs=1e-12)
    assert tv_distance(emp, want) < 0.02
    assert tv_distance(emp, poisson_weights(comp.states)) < 0.02


def test_birth_death_long_run():
    net = F.load("birth_death")
    comp = irreducible_component(net, (0,), truncation=60)
    want = stationary_solve(net, comp)
    emp = simulate(net, SimConfig((0,), t_end=20_000.0, burn_in=50.0, seed=5))
    assert tv_distance(emp, want) <= 0.03


def test_tv_distance_arithmetic():
    a = {(0,): 0.5, (1,): 0.5}
    assert tv_distance(a, a) == 0.0
    assert tv_distance({(0,): 1.0}, {(1,): 1.0}) == 1.0
    assert tv_distance(a, {(0,): 0.25, (1,): 0.75}) == pytest.approx(0.25)


def test_tv_accepts_distributions():
    net = F.load("split_pair_1")
    comp = irreducible_component(net, (1, 0))
    pi = Distribution(comp, {(1, 0): 0.5, (0, 1): 0.5})
    assert tv_distance(pi, {(1, 0): 1.0}) == pytest.approx(0.5)


def test_same_seed_same_result():
    net = F.load("phosphorylation")
    cfg = SimConfig((1, 4, 0), t_end=200.0, seed=42, replicas=2)
    a, b = simulate(net, cfg), simulate(net, cfg)
    assert a.to_dict() == b.to_dict()
    c = simulate(net, SimConfig((1, 4, 0), t_end=200.0, seed=43, replicas=2))
    assert c.to_dict() != a.to_dict()


def test_replica_streams_are_independent_of_count():
    a = replica_rng(9, 1).random(4)
    b = replica_rng(9, 1).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, replica_rng(9, 2).random(4))


def test_explosion_is_reported():
    net = parse("2A -> 3A : ma(1)")
    with pytest.raises(ExplosionError):
        simulate(net, SimConfig((2,), t_end=10.0, max_events=10_000))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trajectories_respect_laws_and_reachability(seed):
    rng = np.random.default_rng(seed)
    net = random_weakly_reversible(rng)
    x0 = random_initial_state(rng, net, high=2)
    laws = [[float(v) for v in w] for w in conservation_laws(net)]
    totals = [float(np.dot(w, x0)) for w in laws]
    seen = []
    simulate(net, SimConfig(x0, t_end=2.0, seed=seed, max_events=5000), on_event=seen.append)
    for x in seen:
        assert min(x) >= 0
        for w, t in zip(laws, totals):
            assert float(np.dot(w, x)) == pytest.approx(t)
    for x in seen[:: max(1, len(seen) // 10)]:
        assert leads_to(net, x0, x, bound=12) or sum(x) > 12


@pytest.mark.parametrize("name, x0", [("triangle", (2, 1, 0)), ("network_1", (1, 0, 0, 0)), ("phosphorylation", (1, 4, 0)), ("split_pair_2", (1, 0))])
def test_original_and_cleaved_occupancies_agree(name, x0):
    net = F.load(name)
    cn = cleave_full(net).network
    cfg = SimConfig(x0, t_end=20_000.0, burn_in=10.0, seed=7)
    assert tv_distance(simulate(net, cfg), simulate(cn, cfg)) <= 0.03
