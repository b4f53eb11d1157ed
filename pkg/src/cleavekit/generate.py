"""Random small weakly reversible mass-action networks for property tests."""

from __future__ import annotations

import itertools

import numpy as np

from .kinetics import MassAction
from .network import ReactionNetwork, build_network

SPECIES = ("A", "B", "C", "D")


def random_weakly_reversible(
    rng: np.random.Generator,
    max_species: int = 4,
    max_complexes: int = 6,
    max_molecularity: int = 2,
    extra_edge_prob: float = 0.35,
    rate_range: tuple[float, float] = (0.5, 3.0),
) -> ReactionNetwork:
    """Draw a weakly reversible mass-action network.

    Complexes are distinct stoichiometric vectors of molecularity at most
    ``max_molecularity``.  They are split into linkage classes of size >= 2;
    each class gets a random Hamiltonian cycle plus random chords.
    """
    n = int(rng.integers(1, max_species + 1))
    pool = [v for v in itertools.product(range(max_molecularity + 1), repeat=n) if sum(v) <= max_molecularity]
    m = int(rng.integers(2, min(max_complexes, len(pool)) + 1))
    picks = rng.choice(len(pool), size=m, replace=False)
    cx = [pool[i] for i in picks]
    # split into classes of size >= 2
    n_classes = int(rng.integers(1, m // 2 + 1))
    order = list(rng.permutation(m))
    sizes = [2] * n_classes
    for _ in range(m - 2 * n_classes):
        sizes[int(rng.integers(n_classes))] += 1
    edges = set()
    start = 0
    for size in sizes:
        members = order[start : start + size]
        start += size
        for i in range(size):
            edges.add((members[i], members[(i + 1) % size]))
        for a in members:
            for b in members:
                if a != b and rng.random() < extra_edge_prob:
                    edges.add((a, b))
    lo, hi = rate_range
    reactions = [(cx[a], cx[b], MassAction(float(np.round(rng.uniform(lo, hi), 3)))) for a, b in sorted(edges)]
    species = SPECIES[:n] if n <= len(SPECIES) else tuple(f"S{i}" for i in range(n))
    return build_network(species, reactions)


def random_initial_state(rng: np.random.Generator, net: ReactionNetwork, high: int = 3) -> tuple[int, ...]:
    return tuple(int(v) for v in rng.integers(0, high + 1, size=net.n_species))
