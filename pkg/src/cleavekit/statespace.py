"""Reachability, truncated irreducible components and shifted sets."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .graph import components, conservation_laws
from .network import ReactionNetwork

State = tuple[int, ...]
DEFAULT_TRUNCATION = 30


class StateSpaceError(ValueError):
    pass


class Reach(enum.Enum):
    REACHABLE = "reachable"
    UNREACHABLE = "unreachable"
    BOUND_EXHAUSTED = "bound exhausted"

    def __bool__(self) -> bool:
        return self is Reach.REACHABLE


def _caps(net: ReactionNetwork, bound: int | Sequence[int] | None) -> tuple[int, ...] | None:
    if bound is None:
        return None
    if isinstance(bound, int):
        return (bound,) * net.n_species
    caps = tuple(int(b) for b in bound)
    if len(caps) != net.n_species:
        raise StateSpaceError("one cap per species expected")
    return caps


def successors(net: ReactionNetwork, x: State) -> list[tuple[int, State]]:
    """``(reaction, next state)`` for every reaction with positive rate at ``x``."""
    out = []
    for r in range(len(net.reactions)):
        if net.rate(r, x) > 0:
            j = net.jump(r)
            out.append((r, tuple(a + b for a, b in zip(x, j))))
    return out


def predecessors(net: ReactionNetwork, x: State) -> list[tuple[int, State]]:
    """``(reaction, w)`` with ``w + jump = x``, ``w >= 0`` and positive rate at ``w``."""
    out = []
    for r in range(len(net.reactions)):
        j = net.jump(r)
        w = tuple(a - b for a, b in zip(x, j))
        if min(w, default=0) >= 0 and net.rate(r, w) > 0:
            out.append((r, w))
    return out


def _inside(x: State, caps: tuple[int, ...] | None) -> bool:
    return caps is None or all(v <= c for v, c in zip(x, caps))


def leads_to(
    net: ReactionNetwork,
    x: Sequence[int],
    x_target: Sequence[int],
    bound: int | Sequence[int] | None = DEFAULT_TRUNCATION,
    max_states: int = 1_000_000,
) -> Reach:
    """Breadth-first search for a firing sequence from ``x`` to ``x_target``.

    States with a coordinate above ``bound`` are not explored.  If the target
    is not found and anything was pruned, the answer is ``BOUND_EXHAUSTED``.
    """
    caps = _caps(net, bound)
    start, goal = tuple(x), tuple(x_target)
    if start == goal:
        return Reach.REACHABLE
    seen = {start}
    queue = deque([start])
    pruned = False
    while queue:
        cur = queue.popleft()
        for _, nxt in successors(net, cur):
            if nxt == goal:
                return Reach.REACHABLE
            if nxt in seen:
                continue
            if not _inside(nxt, caps) or len(seen) >= max_states:
                pruned = True
                continue
            seen.add(nxt)
            queue.append(nxt)
    return Reach.BOUND_EXHAUSTED if pruned else Reach.UNREACHABLE


@dataclass(frozen=True)
class IrreducibleComponent:
    """Finite (possibly truncated) closed communicating class.

    ``interior`` holds the states whose balance equations only involve states
    of the component (or states certainly outside the class).  ``closed`` is
    true when no transition leaves ``states``, in which case every state is
    interior.
    """

    states: tuple[State, ...]
    interior: frozenset
    closed: bool
    truncation: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {x: i for i, x in enumerate(self.states)})

    def __len__(self) -> int:
        return len(self.states)

    def __contains__(self, x) -> bool:
        return tuple(x) in self._index  # type: ignore[attr-defined]

    def index(self, x: Sequence[int]) -> int:
        return self._index[tuple(x)]  # type: ignore[attr-defined]

    @property
    def interior_states(self) -> list[State]:
        return [x for x in self.states if x in self.interior]

    def to_dict(self) -> dict:
        return {
            "states": [list(x) for x in self.states],
            "interior": [list(x) for x in self.interior_states],
            "closed": self.closed,
            "truncation": self.truncation,
        }


def irreducible_component(
    net: ReactionNetwork,
    x0: Sequence[int],
    truncation: int | Sequence[int] | None = DEFAULT_TRUNCATION,
    max_states: int = 500_000,
) -> IrreducibleComponent:
    """Communicating class of ``x0`` inside the box ``x <= truncation``.

    Conservation laws are respected automatically since only reachable states
    are visited.  Raises if the untruncated reachable set fits in the box and
    the class still leaks (``x0`` is transient), or if no state is interior.
    Under truncation a leaking state is treated as boundary.
    """
    caps = _caps(net, truncation)
    start = tuple(int(v) for v in x0)
    if len(start) != net.n_species or min(start, default=0) < 0:
        raise StateSpaceError(f"invalid initial state {start}")
    if not _inside(start, caps):
        raise StateSpaceError(f"initial state {start} exceeds the truncation")
    succ: dict[State, list[State]] = {}
    seen = {start}
    queue = deque([start])
    pruned = False
    while queue:
        cur = queue.popleft()
        nxts = []
        for _, nxt in successors(net, cur):
            if not _inside(nxt, caps):
                pruned = True
                continue
            nxts.append(nxt)
            if nxt not in seen:
                if len(seen) >= max_states:
                    raise StateSpaceError("state space exceeds max_states; lower the truncation")
                seen.add(nxt)
                queue.append(nxt)
        succ[cur] = nxts
    # backward search from x0 inside the forward set
    pred: dict[State, list[State]] = {x: [] for x in seen}
    for x, nx_ in succ.items():
        for y in nx_:
            pred[y].append(x)
    back = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for w in pred[cur]:
            if w not in back:
                back.add(w)
                queue.append(w)
    states = sorted(back)
    members = set(states)
    leaks = [x for x in states if any(y not in members for y in succ[x])]
    # with pruning, a path back to x0 may run outside the box, so a leak is
    # only conclusive when the whole reachable set fitted
    if leaks and not pruned:
        raise StateSpaceError(f"the class of {start} is not closed (leaves at {leaks[0]}); x0 is transient")
    escapes = bool(leaks) or any(not _inside(nxt, caps) for x in states for _, nxt in successors(net, x))
    closed = not escapes
    if closed:
        interior = frozenset(states)
    else:
        interior = frozenset(
            x
            for x in states
            if all(y in members for _, y in successors(net, x)) and all(w in members for _, w in predecessors(net, x))
        )
    if not interior:
        raise StateSpaceError("truncation leaves no interior state")
    laws = [[str(v) for v in law] for law in conservation_laws(net)]
    desc = {"caps": list(caps) if caps else None, "conservation_laws": laws, "pruned": pruned}
    return IrreducibleComponent(tuple(states), interior, closed, desc)


def component_from_states(net: ReactionNetwork, states: Iterable[Sequence[int]]) -> IrreducibleComponent:
    """Wrap an explicit state list, marking interior states by the neighbourhood rule."""
    st = sorted({tuple(int(v) for v in x) for x in states})
    members = set(st)
    closed = all(y in members for x in st for _, y in successors(net, x))
    if closed:
        interior = frozenset(st)
    else:
        interior = frozenset(
            x
            for x in st
            if all(y in members for _, y in successors(net, x)) and all(w in members for _, w in predecessors(net, x))
        )
    return IrreducibleComponent(tuple(st), interior, closed, {"explicit": True})


@dataclass(frozen=True)
class ShiftedSet:
    component: int
    states: frozenset


def shifted_sets(net: ReactionNetwork, comp: IrreducibleComponent) -> list[ShiftedSet]:
    """``Gamma_k = {x - phi(y) : x in Gamma, y in L_k} ∩ Z^n_{>=0}`` per linkage class.

    For a closed component the set is checked to be the same for every single
    choice of ``y`` in the class.
    """
    ci = components(net)
    out = []
    for k in range(1, ci.count + 1):
        per_y = []
        for y in ci.members(k):
            phi = net.phi(y)
            per_y.append(
                frozenset(
                    tuple(a - b for a, b in zip(x, phi)) for x in comp.states if all(a >= b for a, b in zip(x, phi))
                )
            )
        if comp.closed and any(s != per_y[0] for s in per_y):
            raise StateSpaceError(f"shifted set of class {k} depends on the chosen complex")
        out.append(ShiftedSet(k, frozenset().union(*per_y)))
    return out
