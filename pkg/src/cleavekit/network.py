"""Species, complexes (with copy tags), reactions and the reaction network.

A complex is identified by its stoichiometric vector together with a copy
tag.  Tag 0 marks an original complex; cleaving creates copies with positive
tags that share the stoichiometry of their base.  Networks are immutable once
built.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .kinetics import Kinetics, KineticsError, MassAction, kinetics_from_descriptor, sum_kinetics

State = tuple[int, ...]


class NetworkError(ValueError):
    """Structural problem with a network (dangling reference, parallel edge, ...)."""


class RateSumError(NetworkError):
    """Parts of a split reaction do not add up to the original rate."""


@dataclass(frozen=True)
class Species:
    id: str
    index: int


@dataclass(frozen=True, order=True)
class Complex:
    stoich: tuple[int, ...]
    copy_tag: int = 0
    base_label: str = field(default="", compare=False)

    @property
    def key(self) -> tuple[tuple[int, ...], int]:
        return (self.stoich, self.copy_tag)


def format_stoich(stoich: Sequence[int], species: Sequence[str]) -> str:
    terms = []
    for n, s in zip(stoich, species):
        if n == 1:
            terms.append(s)
        elif n > 1:
            terms.append(f"{n}{s}")
    return " + ".join(terms) if terms else "0"


@dataclass(frozen=True)
class Reaction:
    source: int
    target: int
    kinetics: Kinetics


class ReactionNetwork:
    """Reaction digraph with stoichiometry map and per-reaction kinetics.

    ``complexes`` and ``reactions`` are tuples; reactions refer to complexes
    by index.  ``params`` records named constants used by expression kinetics
    so that printing and serialization can reproduce them.
    """

    def __init__(
        self,
        species: Sequence[str],
        complexes: Sequence[Complex],
        reactions: Sequence[Reaction],
        params: Mapping[str, float] | None = None,
    ):
        self.species: tuple[str, ...] = tuple(species)
        if len(set(self.species)) != len(self.species):
            raise NetworkError("duplicate species id")
        n = len(self.species)
        labelled = []
        for c in complexes:
            if len(c.stoich) != n:
                raise NetworkError(f"complex {c} has stoich of length {len(c.stoich)}, expected {n}")
            if any(v < 0 for v in c.stoich):
                raise NetworkError(f"complex {c} has a negative stoichiometric coefficient")
            if c.copy_tag < 0:
                raise NetworkError("copy tags must be non-negative")
            label = c.base_label or format_stoich(c.stoich, self.species)
            labelled.append(Complex(tuple(int(v) for v in c.stoich), int(c.copy_tag), label))
        self.complexes: tuple[Complex, ...] = tuple(labelled)
        keys = [c.key for c in self.complexes]
        if len(set(keys)) != len(keys):
            raise NetworkError("duplicate complex (stoich, copy_tag)")
        self.reactions: tuple[Reaction, ...] = tuple(reactions)
        seen = set()
        for r in self.reactions:
            if not (0 <= r.source < len(keys) and 0 <= r.target < len(keys)):
                raise NetworkError(f"reaction endpoint out of range: {r}")
            if r.source == r.target:
                raise NetworkError(f"self-loop at {self.label(r.source)}")
            if (r.source, r.target) in seen:
                raise NetworkError(f"parallel reaction {self.label(r.source)} -> {self.label(r.target)}")
            seen.add((r.source, r.target))
        used = {r.source for r in self.reactions} | {r.target for r in self.reactions}
        if len(used) != len(self.complexes):
            raise NetworkError("every complex must take part in at least one reaction")
        self.params: dict[str, float] = dict(params or {})
        self._index = {k: i for i, k in enumerate(keys)}
        self._edge = {(r.source, r.target): i for i, r in enumerate(self.reactions)}
        self._out: list[list[int]] = [[] for _ in self.complexes]
        self._in: list[list[int]] = [[] for _ in self.complexes]
        for i, r in enumerate(self.reactions):
            self._out[r.source].append(i)
            self._in[r.target].append(i)
        self.stoich_matrix = np.array([c.stoich for c in self.complexes], dtype=np.int64).reshape(len(keys), n)

    # -- lookup -------------------------------------------------------------
    @property
    def n_species(self) -> int:
        return len(self.species)

    def species_list(self) -> list[Species]:
        return [Species(s, i) for i, s in enumerate(self.species)]

    def phi(self, c: int) -> State:
        return self.complexes[c].stoich

    def index_of(self, stoich: Sequence[int], copy_tag: int = 0) -> int:
        try:
            return self._index[(tuple(stoich), copy_tag)]
        except KeyError:
            raise NetworkError(f"no complex {tuple(stoich)}@{copy_tag}") from None

    def reaction_index(self, source: int, target: int) -> int | None:
        return self._edge.get((source, target))

    def out_reactions(self, c: int) -> list[int]:
        return list(self._out[c])

    def in_reactions(self, c: int) -> list[int]:
        return list(self._in[c])

    def label(self, c: int) -> str:
        cx = self.complexes[c]
        return cx.base_label if cx.copy_tag == 0 else f"({cx.base_label},{cx.copy_tag})"

    def reaction_label(self, r: int) -> str:
        rx = self.reactions[r]
        return f"{self.label(rx.source)} -> {self.label(rx.target)}"

    def jump(self, r: int) -> State:
        rx = self.reactions[r]
        return tuple(b - a for a, b in zip(self.phi(rx.source), self.phi(rx.target)))

    def canonical_order(self) -> list[int]:
        """Complex indices sorted by (stoich, copy_tag)."""
        return sorted(range(len(self.complexes)), key=lambda i: self.complexes[i].key)

    # -- dynamics -----------------------------------------------------------
    def rate(self, r: int, x: Sequence[int]) -> float:
        """Rate of reaction ``r`` at ``x``; zero unless ``x >= phi(source)``."""
        rx = self.reactions[r]
        src = self.complexes[rx.source].stoich
        for xi, yi in zip(x, src):
            if xi < yi:
                return 0.0
        return rx.kinetics(tuple(x), src)

    def rates(self, x: Sequence[int]) -> np.ndarray:
        return np.array([self.rate(r, x) for r in range(len(self.reactions))])

    def jumps(self) -> np.ndarray:
        return np.array([self.jump(r) for r in range(len(self.reactions))], dtype=np.int64).reshape(
            len(self.reactions), self.n_species
        )

    # -- misc ---------------------------------------------------------------
    def __repr__(self) -> str:
        return f"ReactionNetwork({len(self.species)} species, {len(self.complexes)} complexes, {len(self.reactions)} reactions)"

    def replace(
        self,
        complexes: Sequence[Complex] | None = None,
        reactions: Sequence[Reaction] | None = None,
    ) -> "ReactionNetwork":
        return ReactionNetwork(
            self.species,
            self.complexes if complexes is None else complexes,
            self.reactions if reactions is None else reactions,
            self.params,
        )


def build_network(
    species: Sequence[str],
    reactions: Iterable[tuple[Sequence[int] | tuple, Sequence[int] | tuple, Kinetics]],
    params: Mapping[str, float] | None = None,
) -> ReactionNetwork:
    """Assemble a network from ``(source, target, kinetics)`` triples.

    Endpoints are stoich vectors or ``(stoich, copy_tag)`` pairs.  Complexes are
    created in first-appearance order.
    """
    index: dict = {}
    complexes: list[Complex] = []
    rx: list[Reaction] = []

    def key_of(spec) -> tuple[tuple[int, ...], int]:
        if len(spec) == 2 and isinstance(spec[1], int) and not isinstance(spec[0], int):
            return tuple(int(v) for v in spec[0]), int(spec[1])
        return tuple(int(v) for v in spec), 0

    def ensure(spec) -> int:
        k = key_of(spec)
        if k not in index:
            index[k] = len(complexes)
            complexes.append(Complex(k[0], k[1]))
        return index[k]

    for s, t, k in reactions:
        rx.append(Reaction(ensure(s), ensure(t), k))
    return ReactionNetwork(species, complexes, rx, params)


def _merge_parallel(
    species: Sequence[str],
    complexes: Sequence[Complex],
    edges: Sequence[tuple[int, int, Kinetics]],
    params: Mapping[str, float],
    ref: str,
) -> ReactionNetwork:
    """Build a network, summing kinetics of edges that coincide."""
    groups: dict[tuple[int, int], list[Kinetics]] = defaultdict(list)
    order: list[tuple[int, int]] = []
    for s, t, k in edges:
        if (s, t) not in groups:
            order.append((s, t))
        groups[(s, t)].append(k)
    used = sorted({i for e in order for i in e})
    remap = {old: new for new, old in enumerate(used)}
    cx = [complexes[i] for i in used]
    rx = [
        Reaction(remap[s], remap[t], sum_kinetics(groups[(s, t)], complexes[s].stoich, ref=f"{ref}:{s}->{t}"))
        for s, t in order
    ]
    return ReactionNetwork(species, cx, rx, params)


def essential(net: ReactionNetwork) -> ReactionNetwork:
    """Merge complexes with equal stoichiometry into tag 0 and sum parallel kinetics."""
    if all(c.copy_tag == 0 for c in net.complexes):
        return net
    stoichs = sorted({c.stoich for c in net.complexes})
    pos = {s: i for i, s in enumerate(stoichs)}
    complexes = [Complex(s, 0) for s in stoichs]
    edges = []
    for r in net.reactions:
        s, t = pos[net.phi(r.source)], pos[net.phi(r.target)]
        if s == t:
            raise NetworkError("copies of one complex are linked; essential network would contain a self-loop")
        edges.append((s, t, r.kinetics))
    return _merge_parallel(net.species, complexes, edges, net.params, ref="essential")


def translate_add_species(
    net: ReactionNetwork,
    reaction_ids: Iterable[int],
    delta: Sequence[int] | Mapping[str, int],
    collisions: str = "copy",
) -> ReactionNetwork:
    """Add ``delta`` to both sides of the listed reactions.

    Jump vectors and kinetics are untouched.  Translated complexes reuse any
    existing complex with the same stoichiometry and copy tag.  When a
    translated reaction lands on an existing untranslated one, ``collisions``
    decides: ``"copy"`` moves the untranslated reactions involved onto fresh
    copies of their complexes (so every reaction survives and the multiset of
    jump vectors is unchanged), ``"merge"`` sums the two kinetics.
    """
    if collisions not in ("copy", "merge"):
        raise NetworkError(f"collisions must be 'copy' or 'merge', not {collisions!r}")
    if isinstance(delta, Mapping):
        unknown = set(delta) - set(net.species)
        if unknown:
            raise NetworkError(f"unknown species {sorted(unknown)}")
        delta = tuple(int(delta.get(s, 0)) for s in net.species)
    delta = tuple(int(v) for v in delta)
    if len(delta) != net.n_species or any(v < 0 for v in delta):
        raise NetworkError("delta must be a non-negative vector over the species")
    ids = set(reaction_ids)
    bad = [r for r in ids if not (isinstance(r, int) and 0 <= r < len(net.reactions))]
    if bad:
        raise NetworkError(f"unknown reaction id(s) {bad}")
    if not any(delta):
        return net

    complexes = list(net.complexes)
    pos = {c.key: i for i, c in enumerate(complexes)}

    def intern(key) -> int:
        if key not in pos:
            pos[key] = len(complexes)
            complexes.append(Complex(key[0], key[1]))
        return pos[key]

    def shifted(c: int) -> int:
        cx = net.complexes[c]
        return intern((tuple(a + b for a, b in zip(cx.stoich, delta)), cx.copy_tag))

    moved = {i: (shifted(r.source), shifted(r.target)) for i, r in enumerate(net.reactions) if i in ids}
    landed = set(moved.values())
    clashing = [i for i, r in enumerate(net.reactions) if i not in ids and (r.source, r.target) in landed]
    fresh: dict[int, int] = {}
    if collisions == "copy" and clashing:
        top: dict = {}
        for cx in complexes:
            top[cx.stoich] = max(top.get(cx.stoich, 0), cx.copy_tag)
        for i in clashing:
            for c in (net.reactions[i].source, net.reactions[i].target):
                if c not in fresh:
                    st = complexes[c].stoich
                    # the untagged complex counts as copy 1
                    top[st] = max(top[st], 1) + 1
                    fresh[c] = intern((st, top[st]))

    edges = []
    for i, r in enumerate(net.reactions):
        k = r.kinetics
        if i in moved:
            s, t = moved[i]
            if isinstance(k, MassAction):
                # keep the original monomial; only the source complex moves
                k = k.as_expression(net.phi(r.source), net.species)
        elif fresh and i in clashing:
            s, t = fresh[r.source], fresh[r.target]
        else:
            s, t = r.source, r.target
        edges.append((s, t, k))
    return _merge_parallel(net.species, complexes, edges, net.params, ref="translate")


def split_reaction(
    net: ReactionNetwork,
    reaction_id: int,
    parts: Sequence[tuple[object, object, Kinetics]],
    states: Iterable[Sequence[int]] | None = None,
    rtol: float = 1e-9,
) -> ReactionNetwork:
    """Replace one reaction by several with the same jump vector.

    Each part is ``(source, target, kinetics)``; endpoints are stoich vectors or
    ``(stoich, copy_tag)`` pairs.  When ``states`` is given the parts must sum to
    the original rate at every one of them.
    """
    if not (0 <= reaction_id < len(net.reactions)):
        raise NetworkError(f"unknown reaction id {reaction_id}")
    jump = net.jump(reaction_id)

    def key_of(spec) -> tuple[tuple[int, ...], int]:
        if len(spec) == 2 and isinstance(spec[1], int) and not isinstance(spec[0], int):
            return tuple(int(v) for v in spec[0]), int(spec[1])
        return tuple(int(v) for v in spec), 0

    complexes = list(net.complexes)
    pos = {c.key: i for i, c in enumerate(complexes)}

    def ensure(spec) -> int:
        k = key_of(spec)
        if len(k[0]) != net.n_species:
            raise NetworkError(f"complex {k} has the wrong length")
        if k not in pos:
            pos[k] = len(complexes)
            complexes.append(Complex(k[0], k[1]))
        return pos[k]

    new_edges = []
    for s, t, k in parts:
        si, ti = ensure(s), ensure(t)
        pj = tuple(b - a for a, b in zip(complexes[si].stoich, complexes[ti].stoich))
        if pj != jump:
            raise NetworkError(f"part {key_of(s)} -> {key_of(t)} has jump {pj}, expected {jump}")
        new_edges.append((si, ti, k))

    edges = [(r.source, r.target, r.kinetics) for i, r in enumerate(net.reactions) if i != reaction_id]
    existing = {(s, t) for s, t, _ in edges}
    for s, t, _ in new_edges:
        if (s, t) in existing:
            raise NetworkError("split part coincides with an existing reaction")
        existing.add((s, t))
    edges[reaction_id:reaction_id] = new_edges
    out = _merge_parallel(net.species, complexes, edges, net.params, ref="split")

    if states is not None:
        for x in states:
            x = tuple(int(v) for v in x)
            want = net.rate(reaction_id, x)
            got = 0.0
            for s, t, k in new_edges:
                src = complexes[s].stoich
                if all(a >= b for a, b in zip(x, src)):
                    got += k(x, src)
            if abs(got - want) > rtol * max(abs(want), 1e-300) and abs(got - want) > 1e-300:
                raise RateSumError(f"parts sum to {got} but original rate is {want} at {x}")
    return out


# -- serialization -------------------------------------------------------------

def to_dict(net: ReactionNetwork) -> dict:
    return {
        "species": list(net.species),
        "params": dict(net.params),
        "complexes": [
            {"base_label": c.base_label, "copy_tag": c.copy_tag, "stoich": list(c.stoich)} for c in net.complexes
        ],
        "reactions": [
            {"source": r.source, "target": r.target, "kinetics": r.kinetics.descriptor()} for r in net.reactions
        ],
    }


def from_dict(d: Mapping) -> ReactionNetwork:
    species = list(d["species"])
    params = dict(d.get("params", {}))
    complexes = [Complex(tuple(c["stoich"]), int(c.get("copy_tag", 0)), c.get("base_label", "")) for c in d["complexes"]]
    try:
        reactions = [
            Reaction(int(r["source"]), int(r["target"]), kinetics_from_descriptor(r["kinetics"], species, params))
            for r in d["reactions"]
        ]
    except (KeyError, TypeError) as exc:
        raise NetworkError(f"malformed reaction entry: {exc}") from exc
    except KineticsError as exc:
        raise NetworkError(str(exc)) from exc
    return ReactionNetwork(species, complexes, reactions, params)


def to_json(net: ReactionNetwork, **kw) -> str:
    return json.dumps(to_dict(net), **kw)


def from_json(text: str) -> ReactionNetwork:
    return from_dict(json.loads(text))
