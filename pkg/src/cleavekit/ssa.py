"""Direct-method Gillespie simulation with time-weighted occupancy."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .network import ReactionNetwork

State = tuple[int, ...]
_BLOCK = 1 << 16


class SimulationError(RuntimeError):
    pass


class ExplosionError(SimulationError):
    """The event budget ran out before ``t_end``; the chain may be explosive."""


@dataclass(frozen=True)
class SimConfig:
    initial: State
    t_end: float
    burn_in: float = 0.0
    seed: int = 0
    replicas: int = 1
    max_events: int = 50_000_000

    def __post_init__(self) -> None:
        if not (self.t_end > self.burn_in >= 0):
            raise ValueError("need t_end > burn_in >= 0")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if min(self.initial, default=0) < 0:
            raise ValueError("initial state must be non-negative")


@dataclass
class EmpiricalDistribution:
    fractions: dict
    total_time: float
    events: int
    absorbed: int = 0

    def __call__(self, x) -> float:
        return self.fractions.get(tuple(x), 0.0)

    def to_dict(self) -> dict:
        return {
            "states": [list(x) for x in sorted(self.fractions)],
            "fractions": [self.fractions[x] for x in sorted(self.fractions)],
            "total_time": self.total_time,
            "events": self.events,
            "absorbed_replicas": self.absorbed,
        }


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by ``(seed, replica)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), int(replica)])))


def simulate(
    net: ReactionNetwork,
    cfg: SimConfig,
    on_event: Callable[[State], None] | None = None,
) -> EmpiricalDistribution:
    """Pool time-weighted occupancy over ``[burn_in, t_end]`` from ``cfg.replicas`` runs.

    ``on_event`` (optional) is called with every state the chain enters.
    """
    n_r = len(net.reactions)
    jumps = [net.jump(r) for r in range(n_r)]
    cache: dict[State, tuple[list[float], float, list[int]]] = {}

    def propensities(x: State):
        hit = cache.get(x)
        if hit is None:
            cum, idx, tot = [], [], 0.0
            for r in range(n_r):
                v = net.rate(r, x)
                if v > 0:
                    tot += v
                    cum.append(tot)
                    idx.append(r)
            hit = (cum, tot, idx)
            cache[x] = hit
        return hit

    occupancy: dict[State, float] = {}
    events = 0
    absorbed = 0
    t_end, burn = float(cfg.t_end), float(cfg.burn_in)
    for rep in range(cfg.replicas):
        rng = replica_rng(cfg.seed, rep)
        exps = rng.standard_exponential(_BLOCK)
        unis = rng.random(_BLOCK)
        k = 0
        x = tuple(int(v) for v in cfg.initial)
        t = 0.0
        if on_event:
            on_event(x)
        while True:
            cum, tot, idx = propensities(x)
            if tot <= 0:
                lo = max(t, burn)
                if t_end > lo:
                    occupancy[x] = occupancy.get(x, 0.0) + (t_end - lo)
                absorbed += 1
                break
            if k == _BLOCK:
                exps = rng.standard_exponential(_BLOCK)
                unis = rng.random(_BLOCK)
                k = 0
            t_next = t + exps[k] / tot
            u = unis[k] * tot
            k += 1
            hi = t_next if t_next < t_end else t_end
            lo = t if t > burn else burn
            if hi > lo:
                occupancy[x] = occupancy.get(x, 0.0) + (hi - lo)
            if t_next >= t_end:
                break
            j = bisect.bisect_right(cum, u)
            if j >= len(idx):
                j = len(idx) - 1
            jump = jumps[idx[j]]
            x = tuple(a + b for a, b in zip(x, jump))
            t = t_next
            events += 1
            if events > cfg.max_events:
                raise ExplosionError(f"more than {cfg.max_events} events before t_end; possible explosion")
            if on_event:
                on_event(x)
    total = sum(occupancy.values())
    fractions = {s: v / total for s, v in occupancy.items()}
    return EmpiricalDistribution(fractions, total, events, absorbed)


def _as_map(d) -> Mapping:
    if hasattr(d, "fractions"):
        return d.fractions
    if hasattr(d, "prob"):
        return d.prob
    return d


def tv_distance(a, b) -> float:
    """Half the L1 distance over the union of supports."""
    ma, mb = _as_map(a), _as_map(b)
    keys = set(ma) | set(mb)
    return 0.5 * sum(abs(ma.get(k, 0.0) - mb.get(k, 0.0)) for k in keys)
