"""Cleaving a weakly reversible network into disjoint cycles.

One-node cleaving splits a complex ``z`` with ``p > 1`` incoming reactions
``y_i -> z`` into copies ``(z, i)``.  Copy ``(z, i)`` inherits the incoming
reaction from ``y_i`` and an outgoing reaction to ``y'`` whenever ``y_i -> z -> y'``
lies on a common cycle, i.e. ``y' = y_i`` or ``y_i`` is reachable from ``y'``
without passing through ``z``.  Its rate is

    lambda_{(z,i) -> y'}(x) = lambda_{z -> y'}(x) * rho_{z, y_i -> z}(x) * G_x[y', y_i]

where ``rho`` is the embedded jump chain on the linkage class of ``z``
evaluated at shifted states and ``G_x = (I - Q_x)^{-1}`` is its Green's
function with ``z`` made absorbing (``Q_x`` is ``rho`` restricted to the class
without ``z``).  ``G_x[y', y_i]`` is the expected number of visits to ``y_i``
before hitting ``z`` when started from ``y'``, which is the closed-walk sum of
the construction evaluated exactly by one linear solve.

Iterating, then cutting non-simple cycles and merging similar ones, yields a
network of pairwise non-similar simple cycles that projects onto the input.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np

from .graph import CycleInventory, canonical_rotation, components, digraph, enumerate_cycles, is_weakly_reversible
from .kinetics import Derived, sum_kinetics
from .network import Complex, Reaction, ReactionNetwork

State = tuple[int, ...]
MAX_STEPS = 5_000


class CleavingError(ValueError):
    pass


@dataclass(frozen=True)
class Projection:
    """``complex_map[c]`` / ``reaction_map[r]``: original index of a cleaved complex / reaction."""

    complex_map: tuple[int, ...]
    reaction_map: tuple[int, ...]

    @staticmethod
    def identity(net: ReactionNetwork) -> "Projection":
        return Projection(tuple(range(len(net.complexes))), tuple(range(len(net.reactions))))

    def then(self, step: "Projection") -> "Projection":
        """Compose with a later step whose maps point into this projection's domain."""
        return Projection(
            tuple(self.complex_map[c] for c in step.complex_map),
            tuple(self.reaction_map[r] for r in step.reaction_map),
        )


@dataclass
class CleavingResult:
    network: ReactionNetwork
    original: ReactionNetwork
    projection: Projection
    cycles: CycleInventory
    trace: list[str] = field(default_factory=list)
    history: list[ReactionNetwork] = field(default_factory=list)

    def projected_cycle(self, cycle: Sequence[int]) -> tuple[int, ...]:
        return tuple(self.projection.complex_map[self.network.reactions[r].source] for r in cycle)

    def psi_table(self) -> list[dict]:
        net, orig = self.network, self.original
        return [
            {"cleaved": net.label(c), "original": orig.label(self.projection.complex_map[c])}
            for c in range(len(net.complexes))
        ]


# -- embedded jump chain -----------------------------------------------------

def _shift(x: Sequence[int], plus: Sequence[int], minus: Sequence[int]) -> State:
    return tuple(a + b - c for a, b, c in zip(x, plus, minus))


def rho(net: ReactionNetwork, z3: int, r: int | None, x: Sequence[int]) -> float:
    """``rho_{z3, z1 -> z2}(x)``: jump probability of ``z1 -> z2`` at ``x + phi(z1) - phi(z3)``.

    ``r`` is the reaction index of ``z1 -> z2`` (``None`` if it is not a reaction),
    with 0/0 taken as 0.
    """
    if r is None:
        return 0.0
    z1 = net.reactions[r].source
    s = _shift(x, net.phi(z1), net.phi(z3))
    if min(s, default=0) < 0:
        return 0.0
    total = sum(net.rate(q, s) for q in net.out_reactions(z1))
    return net.rate(r, s) / total if total > 0 else 0.0


@dataclass(frozen=True)
class EmbeddedDTMC:
    """Jump chain on the linkage class of ``z`` at lattice state ``x``."""

    nodes: tuple[int, ...]
    z: int
    x: State
    P: np.ndarray


def embedded_dtmc(net: ReactionNetwork, z: int, x: Sequence[int]) -> EmbeddedDTMC:
    ci = components(net)
    nodes = tuple(ci.members(ci.assignment[z]))
    pos = {c: i for i, c in enumerate(nodes)}
    x = tuple(x)
    P = np.zeros((len(nodes), len(nodes)))
    phz = net.phi(z)
    for u in nodes:
        s = _shift(x, net.phi(u), phz)
        if min(s, default=0) < 0:
            continue
        outs = net.out_reactions(u)
        rates = [net.rate(q, s) for q in outs]
        tot = sum(rates)
        if tot > 0:
            for q, v in zip(outs, rates):
                P[pos[u], pos[net.reactions[q].target]] = v / tot
    return EmbeddedDTMC(nodes, z, x, P)


class _CleaveKernel:
    """Rates of the new outgoing reactions of all copies of ``z`` at one state."""

    def __init__(self, net: ReactionNetwork, z: int, in_reactions: list[int], out_reactions: list[int]):
        self.net = net
        self.z = z
        self.in_reactions = in_reactions
        self.out_reactions = out_reactions
        ci = components(net)
        self.nodes = [c for c in ci.members(ci.assignment[z]) if c != z]
        self.pos = {c: i for i, c in enumerate(self.nodes)}
        self.src_cols = [self.pos[net.reactions[r].source] for r in in_reactions]
        self.tgt_rows = [self.pos[net.reactions[r].target] for r in out_reactions]
        phz = net.phi(z)
        # per node: shift phi(u) - phi(z), out reactions, and the Q column (or -1 for z)
        self.plan = []
        for u in self.nodes:
            outs = net.out_reactions(u)
            cols = [-1 if net.reactions[r].target == z else self.pos[net.reactions[r].target] for r in outs]
            delta = tuple(a - b for a, b in zip(net.phi(u), phz))
            self.plan.append((delta, outs, cols))
        self._memo: dict[State, np.ndarray] = {}
        self._lock = threading.Lock()

    def values(self, x: State) -> np.ndarray:
        with self._lock:
            hit = self._memo.get(x)
        if hit is not None:
            return hit
        val = self._compute(x)
        with self._lock:
            self._memo.setdefault(x, val)
        return val

    def _compute(self, x: State) -> np.ndarray:
        net, z = self.net, self.z
        p, q = len(self.in_reactions), len(self.out_reactions)
        phz = net.phi(z)
        if any(a < b for a, b in zip(x, phz)):
            return np.zeros((p, q))
        m = len(self.nodes)
        Q = np.zeros((m, m))
        to_z = np.zeros(m)
        rate = net.rate
        for i, (delta, outs, cols) in enumerate(self.plan):
            s = tuple([a + d for a, d in zip(x, delta)])
            rates = [rate(r, s) for r in outs]
            tot = sum(rates)
            if tot <= 0:
                continue
            for c, v in zip(cols, rates):
                if c < 0:
                    to_z[i] += v / tot
                else:
                    Q[i, c] += v / tot
        rhs = np.zeros((m, p))
        for k, col in enumerate(self.src_cols):
            rhs[col, k] = 1.0
        try:
            G = np.linalg.solve(np.eye(m) - Q, rhs)
        except np.linalg.LinAlgError as exc:
            raise CleavingError(f"absorbing chain is singular at {x}") from exc
        out_rates = np.array([net.rate(r, x) for r in self.out_reactions])
        # G[y', column i] * rho_{z, y_i -> z}(x) * lambda_{z -> y'}(x)
        vals = G[self.tgt_rows, :].T * to_z[self.src_cols][:, None] * out_rates[None, :]
        vals[vals < 0] = 0.0
        return vals


def _fresh_tags(net: ReactionNetwork, stoich: State, count: int) -> list[int]:
    used = max((c.copy_tag for c in net.complexes if c.stoich == stoich), default=0)
    return [used + 1 + i for i in range(count)]


def one_node_cleave(net: ReactionNetwork, z: int, check: bool = True, step_id: int = 0) -> tuple[ReactionNetwork, Projection]:
    """Split ``z`` into one copy per incoming reaction.

    Returns the new network and the one-step projection onto ``net``.
    """
    ins = net.in_reactions(z)
    if len(ins) <= 1:
        raise CleavingError(f"{net.label(z)} has {len(ins)} incoming reaction(s); nothing to cleave")
    if check and not is_weakly_reversible(net):
        raise CleavingError("network is not weakly reversible")
    rank = {c: i for i, c in enumerate(net.canonical_order())}
    ins = sorted(ins, key=lambda r: rank[net.reactions[r].source])
    outs = sorted(net.out_reactions(z), key=lambda r: rank[net.reactions[r].target])
    g = digraph(net)
    g.remove_node(z)
    reach_from = {}
    for r in outs:
        t = net.reactions[r].target
        reach_from[t] = nx.descendants(g, t) | {t}

    keep = [c for c in range(len(net.complexes)) if c != z]
    new_index = {c: i for i, c in enumerate(keep)}
    zc = net.complexes[z]
    tags = _fresh_tags(net, zc.stoich, len(ins))
    complexes = [net.complexes[c] for c in keep]
    copy_index = []
    for t in tags:
        copy_index.append(len(complexes))
        complexes.append(Complex(zc.stoich, t, zc.base_label))
    cmap = list(keep) + [z] * len(ins)

    reactions: list[Reaction] = []
    rmap: list[int] = []
    for i, r in enumerate(net.reactions):
        if r.source != z and r.target != z:
            reactions.append(Reaction(new_index[r.source], new_index[r.target], r.kinetics))
            rmap.append(i)
    for k, r in enumerate(ins):
        rx = net.reactions[r]
        reactions.append(Reaction(new_index[rx.source], copy_index[k], rx.kinetics))
        rmap.append(r)
    kernel = _CleaveKernel(net, z, ins, outs)
    for k, r_in in enumerate(ins):
        yi = net.reactions[r_in].source
        for j, r in enumerate(outs):
            t = net.reactions[r].target
            if yi not in reach_from[t]:
                continue
            ref = f"cleave{step_id}:({zc.base_label},{tags[k]})->{net.label(t)}"
            fn = (lambda x, k=k, j=j: float(kernel.values(x)[k, j]))
            reactions.append(Reaction(copy_index[k], new_index[t], Derived(fn, ref=ref)))
            rmap.append(r)
    out = ReactionNetwork(net.species, complexes, reactions, net.params)
    return out, Projection(tuple(cmap), tuple(rmap))


def _pick(net: ReactionNetwork, candidates: Sequence[int]) -> int:
    return min(candidates, key=lambda c: (-len(net.in_reactions(c)), net.complexes[c].key))


def cleave_iterate(net: ReactionNetwork) -> CleavingResult:
    """Cleave until every complex has exactly one incoming reaction.

    Each round records the complexes that currently have a single incoming
    reaction (``C'``), cleaves the complex with the most incoming reactions,
    and then cleaves every uncleaved member of ``C'`` that gained incoming
    reactions, again most-incoming first.
    """
    if not is_weakly_reversible(net):
        raise CleavingError("network is not weakly reversible")
    current = net
    proj = Projection.identity(net)
    trace: list[str] = []
    history = [net]
    steps = 0
    while True:
        multi = [c for c in range(len(current.complexes)) if len(current.in_reactions(c)) > 1]
        if not multi:
            break
        single = {c for c in range(len(current.complexes)) if len(current.in_reactions(c)) == 1}
        # origin[c]: index at round start of an uncleaved complex, None for copies made this round
        origin: list[int | None] = list(range(len(current.complexes)))
        z = _pick(current, multi)
        while z is not None:
            steps += 1
            if steps > MAX_STEPS:
                raise CleavingError("cleaving did not terminate within the step limit")
            p = len(current.in_reactions(z))
            label = current.label(z)
            current, step = one_node_cleave(current, z, check=False, step_id=steps)
            proj = proj.then(step)
            origin = [origin[c] if j < len(step.complex_map) - p else None for j, c in enumerate(step.complex_map)]
            trace.append(f"step {steps}: cleave {label} into {p} copies -> {len(current.complexes)} complexes, {len(current.reactions)} reactions")
            history.append(current)
            cand = [
                c for c in range(len(current.complexes))
                if origin[c] is not None and origin[c] in single and len(current.in_reactions(c)) > 1
            ]
            z = _pick(current, cand) if cand else None
    if any(len(current.out_reactions(c)) != 1 for c in range(len(current.complexes))):
        raise CleavingError("iteration ended without a disjoint-cycle graph")
    return CleavingResult(current, net, proj, enumerate_cycles(current), trace, history)


# -- completion ----------------------------------------------------------------

def _cycles_of(net: ReactionNetwork) -> list[list[int]]:
    """Node lists of a graph where every complex has in- and out-degree one."""
    seen = set()
    out = []
    for start in range(len(net.complexes)):
        if start in seen:
            continue
        cyc = []
        c = start
        while c not in seen:
            seen.add(c)
            cyc.append(c)
            outs = net.out_reactions(c)
            if len(outs) != 1:
                raise CleavingError("graph is not a union of disjoint cycles")
            c = net.reactions[outs[0]].target
        if c != start:
            raise CleavingError("graph is not a union of disjoint cycles")
        out.append(cyc)
    return out


def _with_result(res: CleavingResult, net: ReactionNetwork, proj: Projection, note: str | None) -> CleavingResult:
    trace = list(res.trace) + ([note] if note else [])
    return CleavingResult(net, res.original, proj, enumerate_cycles(net), trace, list(res.history) + [net])


def cut_adhere(res: CleavingResult) -> CleavingResult:
    """Split every cycle that visits two copies of one original complex."""
    net, proj = res.network, res.projection
    cuts = 0
    while True:
        psi = proj.complex_map
        target = None
        for cyc in _cycles_of(net):
            first: dict[int, int] = {}
            for j, c in enumerate(cyc):
                if psi[c] in first:
                    target = (cyc, first[psi[c]], j)
                    break
                first[psi[c]] = j
            if target:
                break
        if target is None:
            break
        cyc, i, j = target
        L = len(cyc)
        a, b = cyc[j - 1], cyc[j]            # y_k -> y0'
        c, d = cyc[i - 1 if i > 0 else L - 1], cyc[i]  # y_{k+k'} -> y0
        e1, e2 = net.reaction_index(a, b), net.reaction_index(c, d)
        reactions = list(net.reactions)
        reactions[e1] = Reaction(a, d, net.reactions[e1].kinetics)
        reactions[e2] = Reaction(c, b, net.reactions[e2].kinetics)
        net = net.replace(reactions=reactions)
        cuts += 1
    if cuts == 0:
        return res
    return _with_result(res, net, proj, f"cut-adhere: {cuts} cut(s)")


def combine_similar(res: CleavingResult) -> CleavingResult:
    """Merge cycles with identical projections, summing kinetics reaction-wise."""
    net, proj = res.network, res.projection
    psi = proj.complex_map
    groups: dict[tuple, list[list[int]]] = {}
    for cyc in _cycles_of(net):
        key_nodes = canonical_rotation(cyc, key=lambda c: (psi[c], c))
        key = tuple(psi[c] for c in key_nodes)
        if len(set(key)) != len(key):
            raise CleavingError("combine_similar needs simple cycles; run cut_adhere first")
        groups.setdefault(key, []).append(list(key_nodes))
    if all(len(g) == 1 for g in groups.values()):
        return res
    keep_nodes: list[int] = []
    merged: dict[int, list] = {}
    for key, members in groups.items():
        rep = members[0]
        keep_nodes.extend(rep)
        for pos, node in enumerate(rep):
            nxt = rep[(pos + 1) % len(rep)]
            parts = []
            for m in members:
                parts.append(net.reactions[net.reaction_index(m[pos], m[(pos + 1) % len(m)])].kinetics)
            merged[net.reaction_index(node, nxt)] = parts
    keep_nodes.sort()
    remap = {c: i for i, c in enumerate(keep_nodes)}
    complexes = [net.complexes[c] for c in keep_nodes]
    reactions, rmap = [], []
    for r in sorted(merged):
        rx = net.reactions[r]
        src = net.phi(rx.source)
        k = sum_kinetics(merged[r], src, ref=f"combined:{net.label(rx.source)}->{net.label(rx.target)}")
        reactions.append(Reaction(remap[rx.source], remap[rx.target], k))
        rmap.append(proj.reaction_map[r])
    new = ReactionNetwork(net.species, complexes, reactions, net.params)
    new_proj = Projection(tuple(psi[c] for c in keep_nodes), tuple(rmap))
    removed = len(net.complexes) - len(keep_nodes)
    return _with_result(res, new, new_proj, f"combine-similar: removed {removed} complexes")


def _renumber(res: CleavingResult) -> CleavingResult:
    """Give copies of each stoichiometry consecutive tags 1..k in cycle order."""
    net = res.network
    order = [c for cyc in _cycles_of(net) for c in cyc]
    counters: dict[State, int] = {}
    tags = {}
    for c in order:
        s = net.complexes[c].stoich
        counters[s] = counters.get(s, 0) + 1
        tags[c] = counters[s]
    complexes = [Complex(cx.stoich, tags[i], cx.base_label) for i, cx in enumerate(net.complexes)]
    new = ReactionNetwork(net.species, complexes, net.reactions, net.params)
    return CleavingResult(new, res.original, res.projection, res.cycles, res.trace, res.history[:-1] + [new])


def check_cycle_projection(res: CleavingResult, original_cycles: CycleInventory | None = None) -> None:
    """Every cleaved cycle projects to a cycle, and projected cycles biject with the original cycles."""
    net, orig = res.network, res.original
    psi = res.projection.complex_map
    keys = []
    for cyc in _cycles_of(net):
        proj_nodes = [psi[c] for c in cyc]
        if len(set(proj_nodes)) != len(proj_nodes):
            raise CleavingError(f"cycle {[net.label(c) for c in cyc]} does not project to a simple cycle")
        for a, b in zip(proj_nodes, proj_nodes[1:] + proj_nodes[:1]):
            if orig.reaction_index(a, b) is None:
                raise CleavingError("projected edge is not an original reaction")
        keys.append(canonical_rotation(proj_nodes))
    if len(set(keys)) != len(keys):
        raise CleavingError("similar cycles remain")
    cycles = original_cycles or enumerate_cycles(orig)
    if cycles.cap_exceeded:
        return
    orig_keys = {
        canonical_rotation([orig.reactions[r].source for r in cyc]) for cyc in cycles.cycles
    }
    if set(keys) != orig_keys:
        raise CleavingError(
            f"projected cycles ({len(keys)}) do not match the original cycles ({len(orig_keys)})"
        )


def is_disjoint_cycles(net: ReactionNetwork) -> bool:
    return all(len(net.in_reactions(c)) == 1 and len(net.out_reactions(c)) == 1 for c in range(len(net.complexes)))


def cleave_full(net: ReactionNetwork) -> CleavingResult:
    """Iterate, cut-adhere and combine; the result is checked before it is returned."""
    if not is_weakly_reversible(net):
        raise CleavingError("network is not weakly reversible")
    res = cleave_iterate(net)
    if res.network is net:
        already = is_disjoint_cycles(net)
    else:
        already = False
    res = cut_adhere(res)
    res = combine_similar(res)
    if not already and res.network is not net:
        res = _renumber(res)
    check_cycle_projection(res)
    return res
