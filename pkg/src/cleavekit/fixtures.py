"""Bundled example networks and their closed-form companions."""

from __future__ import annotations

import json
import math
from importlib import resources
from typing import Mapping

from .balance import Factorization, bd_split_rates
from .graph import components
from .kinetics import MassAction, Table
from .network import ReactionNetwork, build_network
from .parser import parse

State = tuple[int, ...]

NAMES = (
    "triangle",
    "split_pair_1",
    "split_pair_2",
    "birth_death",
    "phosphorylation",
    "phosphorylation_original",
    "michaelis_menten",
    "network_1",
)


def source(name: str) -> str:
    return resources.files("cleavekit.data").joinpath(f"{name}.crn").read_text()


def load(name: str, params: Mapping[str, float] | None = None) -> ReactionNetwork:
    """Parse a bundled fixture, optionally overriding its parameters."""
    if name not in NAMES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(NAMES)}")
    return parse(source(name), params=params)


def expected() -> dict:
    return json.loads(resources.files("cleavekit.data").joinpath("expected.json").read_text())


# -- birth-death ------------------------------------------------------------------

def birth_death_translated(a1: float, a2: float, a3: float, x_max: int) -> ReactionNetwork:
    """``A <-> 0 -> 2A -> A`` with the recursion's split of ``a1 x`` into ``A -> 0`` and ``2A -> A``."""
    split = bd_split_rates(a1, a2, a3, x_max)
    lam1 = Table({(x,): v for x, v in enumerate(split.lambda1) if v > 0}, ref="lambda1")
    lam4 = Table({(x,): v for x, v in enumerate(split.lambda4) if v > 0}, ref="lambda4")
    return build_network(
        ["A"],
        [
            ((1,), (0,), lam1),
            ((0,), (1,), MassAction(a2)),
            ((0,), (2,), MassAction(a3)),
            ((2,), (1,), lam4),
        ],
    )


def birth_death_g(a1: float, a2: float, a3: float, x_max: int) -> list[float]:
    """``g(x) = (a2 + a3)^x / prod_{u=1}^{x} lambda1(u)`` with ``g(0) = 1``."""
    split = bd_split_rates(a1, a2, a3, x_max)
    g = [1.0]
    for x in range(1, x_max + 1):
        g.append(g[-1] * (a2 + a3) / split.lambda1[x])
    return g


# -- phosphorylation ------------------------------------------------------------------

def phosphorylation_params(net: ReactionNetwork) -> tuple[float, ...]:
    return tuple(net.params[f"a{i}"] for i in range(1, 7))


def phosphorylation_pi_weight(params: tuple[float, ...], x: State) -> float:
    """Unnormalized ``(a1 a3)^xA (a3 a4)^xB (a2 a4)^xC / (xA! (xA-1)! xB! xC!)``."""
    a1, a2, a3, a4, _, _ = params
    xa, xb, xc = x
    if xa < 1:
        return 0.0
    logw = (
        xa * math.log(a1 * a3)
        + xb * math.log(a3 * a4)
        + xc * math.log(a2 * a4)
        - math.lgamma(xa + 1)
        - math.lgamma(xa)
        - math.lgamma(xb + 1)
        - math.lgamma(xc + 1)
    )
    return math.exp(logw)


def phosphorylation_factorization(net: ReactionNetwork) -> Factorization:
    """The two-class factorization with kappa_1..kappa_6 for the weakly reversible form."""
    a1, a2, a3, a4, a5, a6 = phosphorylation_params(net)
    logp = (math.log(a1 * a3), math.log(a3 * a4), math.log(a2 * a4))

    def dot(x):
        return sum(v * lp for v, lp in zip(x, logp))

    def g(x):
        return phosphorylation_pi_weight((a1, a2, a3, a4, a5, a6), x)

    def m_first(z):
        xa, xb, xc = z
        return math.exp(math.lgamma(xa + 2) + math.lgamma(xa + 1) + math.lgamma(xb + 1) + math.lgamma(xc + 1) - dot(z))

    def m_second(z):
        xa, xb, xc = z
        return math.exp(2 * math.lgamma(xa + 1) + math.lgamma(xb + 1) + math.lgamma(xc + 1) - dot(z))

    kappa_of = {
        ((2, 0, 0), 0, (1, 1, 0), 0): a1**2 * a3**2 * a4,   # 2A -> A+B
        ((1, 1, 0), 0, (2, 0, 0), 0): a1**2 * a3**2 * a4,   # A+B -> 2A
        ((1, 1, 0), 0, (1, 0, 1), 0): a1 * a2 * a3**2 * a4,
        ((1, 0, 1), 0, (1, 1, 0), 0): a1 * a2 * a3**2 * a4,
        ((1, 1, 0), 2, (1, 0, 1), 2): a1 * a3**2 * a4 * a5,
        ((1, 0, 1), 2, (1, 1, 0), 2): a1 * a2 * a3 * a4 * a6,
    }
    kappa = {}
    for r, rx in enumerate(net.reactions):
        s, t = net.complexes[rx.source], net.complexes[rx.target]
        kappa[r] = kappa_of[(s.stoich, s.copy_tag, t.stoich, t.copy_tag)]
    ci = components(net)
    k_first = ci.assignment[net.index_of((2, 0, 0))]
    k_second = ci.assignment[net.index_of((1, 1, 0), 2)]
    return Factorization(g, {k_first: m_first, k_second: m_second}, kappa)


# -- Michaelis-Menten --------------------------------------------------------------------

def _rising(b: float, n: int) -> float:
    """``log prod_{i=0}^{n} (b + i)``."""
    return math.lgamma(b + n + 1) - math.lgamma(b)


def michaelis_menten_c(p: Mapping[str, float]) -> tuple[float, float, float, float]:
    """A positive ``c`` (order S, E*, P, E) with ``a1 cS cE* = a2 cP cE`` and ``a3 = a4 cE``."""
    c_e = p["a3"] / p["a4"]
    return (1.0, 1.0, p["a1"] / (p["a2"] * c_e), c_e)


def michaelis_menten_factorization(net: ReactionNetwork, beta3: float | None = None) -> Factorization:
    """``g``, ``m_k`` and ``kappa`` for the enzyme network, scaled by ``c^x``.

    ``beta3`` defaults to the network's ``b3``; the factorization only holds
    for the network when ``b3 = b4``.
    """
    p = net.params
    b1, b2 = p["b1"], p["b2"]
    b3 = p["b3"] if beta3 is None else beta3
    logc = [math.log(v) for v in michaelis_menten_c(p)]

    def base(x):
        s, _, pp, _ = x
        return _rising(b1, s) + _rising(b2, pp) - sum(math.lgamma(v + 1) for v in x)

    def cx(x):
        return sum(v * lc for v, lc in zip(x, logc))

    def g(x):
        return math.exp(cx(x) + base(x))

    def m_enzyme(z):
        return math.exp(-base(z) - cx(z))

    def m_supply(z):
        return (b3 + z[3]) * math.exp(-base(z) - cx(z))

    c = michaelis_menten_c(p)
    ci = components(net)
    k_enzyme = ci.assignment[net.index_of((1, 1, 0, 0))]
    k_supply = ci.assignment[net.index_of((0, 0, 0, 0))]
    kappa = {}
    for r, rx in enumerate(net.reactions):
        y = net.phi(rx.source)
        cy = math.prod(ci_ ** yi for ci_, yi in zip(c, y))
        key = (y, net.phi(rx.target))
        alpha = {
            ((1, 1, 0, 0), (0, 0, 1, 1)): p["a1"],
            ((0, 0, 1, 1), (1, 1, 0, 0)): p["a2"],
            ((0, 0, 0, 0), (0, 0, 0, 1)): p["a3"],
            ((0, 0, 0, 1), (0, 0, 0, 0)): p["a4"],
        }[key]
        kappa[r] = alpha * cy
    return Factorization(g, {k_enzyme: m_enzyme, k_supply: m_supply}, kappa)
