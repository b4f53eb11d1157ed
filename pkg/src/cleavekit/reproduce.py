"""End-to-end runs of the bundled examples against stored expected values."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from . import fixtures as F
from .balance import (
    BalanceError,
    Distribution,
    FactorizationError,
    bd_split_rates,
    check_complex_balanced,
    check_detailed_balanced,
    check_stationary,
    complex_balanced_solve,
    cyclic_balance_solve,
    stationary_solve,
    verify_factorization,
)
from .cleave import cleave_full
from .graph import canonical_rotation, deficiency, enumerate_cycles
from .network import ReactionNetwork
from .ssa import SimConfig, simulate, tv_distance
from .statespace import irreducible_component

State = tuple[int, ...]


@dataclass
class Check:
    name: str
    ok: bool
    value: object = None
    expected: object = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "ok": self.ok, "value": _plain(self.value), "expected": _plain(self.expected), "detail": self.detail}


@dataclass
class Reproduction:
    name: str
    checks: list[Check] = field(default_factory=list)
    data: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def add(self, name: str, ok: bool, value=None, expected=None, detail: str = "") -> Check:
        c = Check(name, bool(ok), value, expected, detail)
        self.checks.append(c)
        return c

    def close(self, name: str, value: float, expected: float, tol: float) -> Check:
        err = abs(value - expected) / max(abs(expected), 1e-300)
        return self.add(name, err <= tol, value, expected, f"rel err {err:.3g} (tol {tol:g})")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ok": self.ok,
            "seconds": self.seconds,
            "checks": [c.to_dict() for c in self.checks],
            "data": _plain(self.data),
        }


def _plain(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def falling(x: Sequence[int], y: Sequence[int]) -> float:
    """``prod x_i! / (x_i - y_i)!``, zero when ``x < y``."""
    out = 1.0
    for a, b in zip(x, y):
        if a < b:
            return 0.0
        for k in range(b):
            out *= a - k
    return out


def effective_constant(net: ReactionNetwork, r: int, states: Sequence[State], rtol: float = 1e-9) -> float:
    """Rate constant of reaction ``r`` when its rate is mass action on ``states``.

    Raises ``ValueError`` if ``rate / (x!/(x-y)!)`` varies by more than ``rtol``.
    """
    y = net.phi(net.reactions[r].source)
    vals = [net.rate(r, x) / falling(x, y) for x in states if falling(x, y) > 0]
    if not vals:
        raise ValueError(f"{net.reaction_label(r)} fires at none of the states")
    lo, hi = min(vals), max(vals)
    if hi - lo > rtol * max(abs(hi), 1e-300):
        raise ValueError(f"{net.reaction_label(r)} is not mass action on these states ({lo} .. {hi})")
    return vals[0]


def _max_rel(a: Callable[[State], float], b: Callable[[State], float], states) -> float:
    return max(abs(a(x) - b(x)) / max(abs(b(x)), 1e-300) for x in states)


# -- examples ---------------------------------------------------------------------

def triangle(exp: dict, seed: int = 0) -> Reproduction:
    rep = Reproduction("triangle")
    tol = exp["tol"]
    net = F.load("triangle")
    res = cleave_full(net)
    orig_cycles = enumerate_cycles(net)
    rep.add("cycle count", len(res.cycles) == exp["cycles"], len(res.cycles), exp["cycles"])
    rep.add("bijection with original cycles", len(orig_cycles) == len(res.cycles), len(orig_cycles), len(res.cycles))
    comp = irreducible_component(net, tuple(exp["x0"]))
    cn = res.network
    three, two = [], []
    for cyc in res.cycles.cycles:
        consts = [effective_constant(cn, r, comp.states) for r in cyc]
        orig_k = [net.reactions[res.projection.reaction_map[r]].kinetics.rate_constant for r in cyc]
        if len(cyc) == 3:
            three.append((orig_k[0], consts))
        else:
            two.extend(consts)
    fwd = next(c for k, c in three if k == 1)
    bwd = next(c for k, c in three if k == 2)
    for name, vals, key in (("3-cycle forward", fwd, "three_cycle_forward"), ("3-cycle reverse", bwd, "three_cycle_reverse"), ("2-cycles", two, "two_cycle")):
        target = float(Fraction(exp[key]))
        worst = max(abs(v - target) / target for v in vals)
        rep.add(f"{name} constant", worst <= tol, vals, exp[key], f"rel err {worst:.3g}")
    sol = complex_balanced_solve(net, comp)
    poisson = Distribution.from_weights(comp, lambda x: 1.0 / math.prod(math.factorial(v) for v in x))
    err = _max_rel(sol.distribution, poisson, comp.states)
    rep.add("pi proportional to 1/x!", err <= tol, err, 0.0, f"{len(comp)} states")
    st = stationary_solve(net, comp)
    err = _max_rel(sol.distribution, st, comp.states)
    rep.add("matches stationary solve", err <= tol, err, 0.0)
    rep.data["trace"] = res.trace
    rep.data["cycles"] = [[cn.reaction_label(r) for r in cyc] for cyc in res.cycles.cycles]
    return rep


def split_pair(exp: dict, seed: int = 0) -> Reproduction:
    rep = Reproduction("split-pair")
    for name in ("split_pair_1", "split_pair_2"):
        net = F.load(name)
        comp = irreducible_component(net, tuple(exp["states"][0]))
        rep.add(f"{name} component", sorted(comp.states) == sorted(tuple(s) for s in exp["states"]), [list(s) for s in comp.states])
        pi = Distribution.from_weights(comp, lambda x: 1.0 / math.prod(math.factorial(v) for v in x))
        st = check_stationary(net, pi, exp["tol"])
        cb = check_complex_balanced(net, pi, exp["tol"])
        want = exp[name]
        rep.add(f"{name} stationary", st.verdict == want["stationary"], st.verdict, want["stationary"], f"residual {st.max_residual:.3g}")
        rep.add(f"{name} complex balanced", cb.verdict == want["complex_balanced"], cb.verdict, want["complex_balanced"], f"residual {cb.max_residual:.3g}")
    return rep


def birth_death(exp: dict, seed: int = 0) -> Reproduction:
    rep = Reproduction("birth-death")
    a1, a2, a3 = (float(v) for v in exp["alpha"])
    x_max, L, tol = exp["x_max"], exp["truncation"], exp["tol"]
    split = bd_split_rates(a1, a2, a3, L + 2)
    rep.add("lambda1(1) = alpha1", split.lambda1[1] == a1, split.lambda1[1], a1)
    s2 = (a2 + a3) ** 2
    rec = max(abs(split.lambda1[x] - a1 * s2 * x / (s2 + a3 * split.lambda1[x - 1])) for x in range(2, L + 3))
    rep.add("recursion", rec == 0.0, rec, 0.0, "max |lambda1(x) - recursion(lambda1(x-1))|")
    net = F.birth_death_translated(a1, a2, a3, L + 2)
    comp = irreducible_component(net, (0,), truncation=L)
    res = cleave_full(net)
    cyc = cyclic_balance_solve(res.network, comp)
    g = F.birth_death_g(a1, a2, a3, x_max)
    err = max(abs(cyc.g[(x,)] / cyc.g[(0,)] - g[x]) / g[x] for x in range(x_max + 1))
    rep.add(f"g up to x = {x_max}", err <= tol, err, 0.0)
    rep.add("normalization certified", cyc.certified, cyc.tail_ratio, "<= 0.5", "tail ratio")
    orig = F.load("birth_death", {"a1": a1, "a2": a2, "a3": a3})
    ocomp = irreducible_component(orig, (0,), truncation=L)
    st = stationary_solve(orig, ocomp)
    err = max(abs(cyc.distribution((x,)) - st((x,))) for x in range(L + 1))
    rep.add("matches stationary solve", err <= tol, err, 0.0, "max abs difference")
    emp = simulate(orig, SimConfig((0,), t_end=float(exp["t_end"]), burn_in=float(exp["burn_in"]), seed=seed))
    tv = tv_distance(emp, cyc.distribution)
    rep.add("SSA events", emp.events >= exp["min_events"], emp.events, exp["min_events"])
    rep.add("SSA total variation", tv <= exp["tv_max"], tv, exp["tv_max"], f"seed {seed}")
    rep.data["lambda1"] = list(split.lambda1[: x_max + 1])
    rep.data["lambda4"] = list(split.lambda4[: x_max + 1])
    rep.data["cycles"] = [[res.network.reaction_label(r) for r in c] for c in res.cycles.cycles]
    return rep


def phosphorylation(exp: dict, seed: int = 0) -> Reproduction:
    rep = Reproduction("phosphorylation")
    tol = exp["tol"]
    net = F.load("phosphorylation")
    comp = irreducible_component(net, tuple(exp["x0"]))
    rep.add("component size", len(comp) == exp["states"], len(comp), exp["states"])
    d, de = deficiency(net), deficiency(net, essential_only=True)
    rep.add("deficiency", d == exp["deficiency"], d, exp["deficiency"])
    rep.add("essential deficiency", de == exp["essential_deficiency"], de, exp["essential_deficiency"])
    sol = complex_balanced_solve(net, comp)
    params = F.phosphorylation_params(net)
    want = Distribution.from_weights(comp, lambda x: F.phosphorylation_pi_weight(params, x))
    err = _max_rel(sol.distribution, want, comp.states)
    rep.add("pi matches closed form", err <= tol, err, 0.0)
    try:
        verify_factorization(net, comp, F.phosphorylation_factorization(net), tol)
        rep.add("closed-form factorization", True)
    except FactorizationError as exc:
        rep.add("closed-form factorization", False, detail=str(exc))
    bad = F.load("phosphorylation", {"a6": params[5] * 1.5})
    try:
        complex_balanced_solve(bad, irreducible_component(bad, tuple(exp["x0"])))
        rep.add("rejects a3 a5 != a2 a6", False, detail="solver succeeded")
    except BalanceError as exc:
        rep.add("rejects a3 a5 != a2 a6", True, detail=str(exc))
    return rep


def michaelis_menten(exp: dict, seed: int = 0) -> Reproduction:
    rep = Reproduction("michaelis-menten")
    tol = exp["tol"]
    net = F.load("michaelis_menten")
    comp = irreducible_component(net, tuple(exp["x0"]), truncation=exp["truncation"])
    d = deficiency(net)
    rep.add("deficiency", d == exp["deficiency"], d, exp["deficiency"])
    pi = verify_factorization(net, comp, F.michaelis_menten_factorization(net), tol)
    rep.add("factorization verified", True, detail=f"{len(comp)} states, {len(comp.interior)} interior")
    db = check_detailed_balanced(net, pi, tol)
    rep.add("detailed balanced", db.verdict, db.max_residual, f"<= {tol:g}")
    bad = F.load("michaelis_menten", exp["mismatch"])
    bcomp = irreducible_component(bad, tuple(exp["x0"]), truncation=exp["truncation"])
    try:
        verify_factorization(bad, bcomp, F.michaelis_menten_factorization(bad), tol)
        rep.add("b3 != b4 rejected", False, detail="factorization accepted")
    except FactorizationError as exc:
        rep.add("b3 != b4 rejected", exc.state is not None, list(exc.state or ()), None, str(exc))
    return rep


def network_1(exp: dict, seed: int = 0) -> Reproduction:
    rep = Reproduction("network-1")
    net = F.load("network_1")
    res = cleave_full(net)
    got = {canonical_rotation([net.label(c) for c in res.projected_cycle(cyc)]) for cyc in res.cycles.cycles}
    want = {canonical_rotation(c) for c in exp["cycles"]}
    rep.add("projected cycles", got == want, sorted(got), sorted(want))
    rep.add("all 3-cycles", all(len(c) == 3 for c in res.cycles.cycles), [len(c) for c in res.cycles.cycles])
    rep.data["cycles"] = [[res.network.reaction_label(r) for r in c] for c in res.cycles.cycles]
    return rep


EXAMPLES: dict[str, tuple[str, Callable[[dict, int], Reproduction]]] = {
    "triangle": ("triangle", triangle),
    "split-pair": ("split_pair", split_pair),
    "birth-death": ("birth_death", birth_death),
    "phosphorylation": ("phosphorylation", phosphorylation),
    "michaelis-menten": ("michaelis_menten", michaelis_menten),
    "network-1": ("network_1", network_1),
}


def run(name: str, seed: int = 0) -> Reproduction:
    if name not in EXAMPLES:
        raise KeyError(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}")
    key, fn = EXAMPLES[name]
    t = time.perf_counter()
    rep = fn(F.expected()[key], seed)
    rep.seconds = time.perf_counter() - t
    return rep
