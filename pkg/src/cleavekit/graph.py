"""Structural analysis of the reaction digraph."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import islice
from typing import Sequence

import networkx as nx

from .network import ReactionNetwork, essential

DEFAULT_CYCLE_CAP = 10_000


@dataclass(frozen=True)
class ComponentIndex:
    """``assignment[c]`` is the 1-based component id of complex ``c``.

    Ids are ordered by the canonically smallest complex of each component.
    """

    assignment: tuple[int, ...]
    strong: tuple[bool, ...]

    @property
    def count(self) -> int:
        return len(self.strong)

    def members(self, k: int) -> list[int]:
        return [c for c, a in enumerate(self.assignment) if a == k]


@dataclass(frozen=True)
class CycleInventory:
    """Elementary cycles as lists of reaction indices, each rotated to start at its smallest complex."""

    cycles: tuple[tuple[int, ...], ...]
    cap_exceeded: bool = False

    def __len__(self) -> int:
        return len(self.cycles)


def digraph(net: ReactionNetwork) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(range(len(net.complexes)))
    g.add_edges_from((r.source, r.target) for r in net.reactions)
    return g


def components(net: ReactionNetwork) -> ComponentIndex:
    g = digraph(net)
    rank = {c: i for i, c in enumerate(net.canonical_order())}
    comps = sorted((sorted(cc, key=rank.get) for cc in nx.weakly_connected_components(g)), key=lambda cc: rank[cc[0]])
    assignment = [0] * len(net.complexes)
    strong = []
    for k, cc in enumerate(comps, start=1):
        for c in cc:
            assignment[c] = k
        strong.append(nx.is_strongly_connected(g.subgraph(cc)))
    return ComponentIndex(tuple(assignment), tuple(strong))


def is_weakly_reversible(net: ReactionNetwork) -> bool:
    return all(components(net).strong)


def is_reversible(net: ReactionNetwork) -> bool:
    return all(net.reaction_index(r.target, r.source) is not None for r in net.reactions)


def canonical_rotation(nodes: Sequence, key=None) -> tuple:
    """Rotate a cyclic sequence so it starts at its minimum element."""
    nodes = list(nodes)
    if not nodes:
        return ()
    keyed = nodes if key is None else [key(v) for v in nodes]
    i = min(range(len(nodes)), key=lambda j: keyed[j])
    return tuple(nodes[i:] + nodes[:i])


def enumerate_cycles(net: ReactionNetwork, cap: int = DEFAULT_CYCLE_CAP) -> CycleInventory:
    """All elementary cycles (Johnson's algorithm via networkx), capped at ``cap``."""
    if cap < 1:
        raise ValueError("cap must be positive")
    rank = {c: i for i, c in enumerate(net.canonical_order())}
    found = list(islice(nx.simple_cycles(digraph(net)), cap + 1))
    exceeded = len(found) > cap
    cycles = set()
    for nodes in found[:cap]:
        nodes = canonical_rotation(nodes, key=rank.get)
        cycles.add(tuple(net.reaction_index(nodes[i], nodes[(i + 1) % len(nodes)]) for i in range(len(nodes))))

    def sort_key(cyc):
        return (len(cyc), [rank[net.reactions[r].source] for r in cyc])

    return CycleInventory(tuple(sorted(cycles, key=sort_key)), exceeded)


def cycle_nodes(net: ReactionNetwork, cycle: Sequence[int]) -> tuple[int, ...]:
    return tuple(net.reactions[r].source for r in cycle)


def exact_rank(rows: Sequence[Sequence[int]]) -> int:
    """Rank over the rationals by Gaussian elimination in exact fractions."""
    m = [[Fraction(v) for v in row] for row in rows]
    if not m:
        return 0
    ncols = len(m[0])
    rank = 0
    for col in range(ncols):
        pivot = next((i for i in range(rank, len(m)) if m[i][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        p = m[rank][col]
        for i in range(len(m)):
            if i != rank and m[i][col] != 0:
                f = m[i][col] / p
                m[i] = [a - f * b for a, b in zip(m[i], m[rank])]
        rank += 1
        if rank == len(m):
            break
    return rank


def stoichiometric_rank(net: ReactionNetwork) -> int:
    return exact_rank([net.jump(r) for r in range(len(net.reactions))])


def deficiency(net: ReactionNetwork, essential_only: bool = False) -> int:
    """``|C| - l - s`` on the network as given, or on its essential network."""
    if essential_only:
        net = essential(net)
    d = len(net.complexes) - components(net).count - stoichiometric_rank(net)
    assert d >= 0, "deficiency must be non-negative"
    return d


def conservation_laws(net: ReactionNetwork) -> list[tuple[Fraction, ...]]:
    """Basis of the left null space of the jump matrix (vectors w with w . jump = 0)."""
    n = net.n_species
    jumps = [net.jump(r) for r in range(len(net.reactions))]
    # Null space of J (rows = jumps, columns = species) via reduced row echelon form.
    m = [[Fraction(v) for v in row] for row in jumps]
    pivots = []
    r = 0
    for col in range(n):
        pivot = next((i for i in range(r, len(m)) if m[i][col] != 0), None)
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        p = m[r][col]
        m[r] = [v / p for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][col] != 0:
                f = m[i][col]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(col)
        r += 1
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fcol in free:
        v = [Fraction(0)] * n
        v[fcol] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -m[i][fcol]
        basis.append(tuple(v))
    return basis
