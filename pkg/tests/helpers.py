"""Shared test helpers."""

from __future__ import annotations

import itertools


def edge_map(net):
    return {(net.complexes[r.source].key, net.complexes[r.target].key): i for i, r in enumerate(net.reactions)}


def same_network(a, b, states, rtol=1e-9) -> float:
    """Assert equal graphs (by complex keys) and return the worst relative rate gap on ``states``."""
    ea, eb = edge_map(a), edge_map(b)
    assert set(ea) == set(eb), f"edges differ: {set(ea) ^ set(eb)}"
    worst = 0.0
    for key, ra in ea.items():
        rb = eb[key]
        for x in states:
            va, vb = a.rate(ra, x), b.rate(rb, x)
            m = max(abs(va), abs(vb))
            if m > 0:
                worst = max(worst, abs(va - vb) / m)
    assert worst <= rtol, f"rates differ by {worst}"
    return worst


def box(n, cap):
    return list(itertools.product(range(cap + 1), repeat=n))
