"""Stationary, complex balanced and detailed balanced distributions.

Verdicts are based on relative residuals ``|lhs - rhs| / max(|lhs|, |rhs|)``
evaluated at the interior states of a component.  ``pi`` is zero off its
support and rates are zero off the non-negative lattice.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse
import scipy.sparse.linalg

from .cleave import CleavingError, CleavingResult, cleave_full, is_disjoint_cycles
from .graph import ComponentIndex, components, conservation_laws, is_reversible, is_weakly_reversible
from .kinetics import MassAction
from .network import ReactionNetwork
from .statespace import IrreducibleComponent

State = tuple[int, ...]
TOL = 1e-9
SOLVE_TOL = 1e-6
TAIL_RATIO = 0.5


class BalanceError(ValueError):
    """A solver stage failed.  ``stage`` names the stage."""

    def __init__(self, stage: str, message: str, state: State | None = None, where: str | None = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.state = state
        self.where = where


class FactorizationError(BalanceError):
    pass


class NotConverged(BalanceError):
    pass


def _rel(a: float, b: float) -> float:
    m = max(abs(a), abs(b))
    return 0.0 if m == 0 else abs(a - b) / m


def _add(x: Sequence[int], y: Sequence[int], sign: int = 1) -> State:
    return tuple(a + sign * b for a, b in zip(x, y))


# -- distributions ---------------------------------------------------------------

@dataclass
class Distribution:
    support: IrreducibleComponent
    prob: dict

    def __post_init__(self) -> None:
        total = sum(self.prob.values())
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"probabilities sum to {total}")
        if any(p < 0 for p in self.prob.values()):
            raise ValueError("negative probability")

    def __call__(self, x: Sequence[int]) -> float:
        return self.prob.get(tuple(x), 0.0)

    @classmethod
    def from_weights(cls, comp: IrreducibleComponent, weights: Mapping | Callable) -> "Distribution":
        w = weights if callable(weights) else (lambda x: weights.get(x, 0.0))
        vals = np.array([float(w(x)) for x in comp.states])
        if not np.all(np.isfinite(vals)) or vals.sum() <= 0:
            raise ValueError("weights must be finite with positive total")
        vals = vals / vals.sum()
        prob = {x: float(v) for x, v in zip(comp.states, vals)}
        # fix the last ulp so the sum is 1 to 1e-12
        return cls(comp, prob)

    def as_array(self) -> np.ndarray:
        return np.array([self.prob.get(x, 0.0) for x in self.support.states])

    def to_dict(self) -> dict:
        return {"states": [list(x) for x in self.support.states], "prob": [self.prob.get(x, 0.0) for x in self.support.states]}


@dataclass
class BalanceReport:
    property: str
    verdict: bool
    max_residual: float
    worst: tuple | None
    states_checked: int
    tol: float
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "verdict": self.verdict,
            "max_residual": self.max_residual,
            "worst": None if self.worst is None else {"where": self.worst[0], "state": list(self.worst[1])},
            "states_checked": self.states_checked,
            "tol": self.tol,
            "reason": self.reason,
        }

    def __bool__(self) -> bool:
        return self.verdict


class _Worst:
    def __init__(self) -> None:
        self.value = 0.0
        self.where: tuple | None = None

    def update(self, res: float, where: str, x: State) -> None:
        if self.where is None or res > self.value:
            self.value, self.where = res, (where, x)


def _interior(comp: IrreducibleComponent) -> list[State]:
    xs = comp.interior_states
    if not xs:
        raise BalanceError("check", "component has no interior state")
    return xs


def check_stationary(net: ReactionNetwork, pi: Distribution, tol: float = TOL) -> BalanceReport:
    """Global balance: outflow of ``pi`` at ``x`` equals inflow, for interior ``x``."""
    xs = _interior(pi.support)
    jumps = [net.jump(r) for r in range(len(net.reactions))]
    worst = _Worst()
    for x in xs:
        out = pi(x) * sum(net.rate(r, x) for r in range(len(net.reactions)))
        inflow = 0.0
        for r, j in enumerate(jumps):
            w = _add(x, j, -1)
            if min(w, default=0) < 0:
                continue
            p = pi(w)
            if p:
                inflow += p * net.rate(r, w)
        worst.update(_rel(out, inflow), "global", x)
    return BalanceReport("stationary", worst.value <= tol, worst.value, worst.where, len(xs), tol)


def check_complex_balanced(net: ReactionNetwork, pi: Distribution, tol: float = TOL) -> BalanceReport:
    """Per-complex flux balance at every interior state."""
    xs = _interior(pi.support)
    worst = _Worst()
    for eta in range(len(net.complexes)):
        ph = net.phi(eta)
        outs = net.out_reactions(eta)
        ins = net.in_reactions(eta)
        for x in xs:
            lhs = pi(x) * sum(net.rate(r, x) for r in outs)
            rhs = 0.0
            for r in ins:
                w = _add(_add(x, net.phi(net.reactions[r].source)), ph, -1)
                if min(w, default=0) < 0:
                    continue
                p = pi(w)
                if p:
                    rhs += p * net.rate(r, w)
            worst.update(_rel(lhs, rhs), net.label(eta), x)
    return BalanceReport("complex", worst.value <= tol, worst.value, worst.where, len(xs), tol)


def check_detailed_balanced(net: ReactionNetwork, pi: Distribution, tol: float = TOL) -> BalanceReport:
    """Flux across every reversible pair balances at every interior state."""
    xs = _interior(pi.support)
    if not is_reversible(net):
        return BalanceReport("detailed", False, math.inf, None, 0, tol, reason="not reversible")
    worst = _Worst()
    for r, rx in enumerate(net.reactions):
        back = net.reaction_index(rx.target, rx.source)
        for x in xs:
            w = _add(_add(x, net.phi(rx.target)), net.phi(rx.source), -1)
            lhs = pi(x) * net.rate(r, x)
            rhs = pi(w) * net.rate(back, w) if min(w, default=0) >= 0 else 0.0
            worst.update(_rel(lhs, rhs), net.reaction_label(r), x)
    return BalanceReport("detailed", worst.value <= tol, worst.value, worst.where, len(xs), tol)


def balance_report(net: ReactionNetwork, pi: Distribution, tol: float = TOL) -> dict[str, BalanceReport]:
    return {
        "stationary": check_stationary(net, pi, tol),
        "complex": check_complex_balanced(net, pi, tol),
        "detailed": check_detailed_balanced(net, pi, tol),
    }


# -- normalization ------------------------------------------------------------------

def tail_ratio(comp: IrreducibleComponent, g: Mapping[State, float] | Callable) -> float:
    """Mass above half the truncation level over mass below it (level = max coordinate)."""
    caps = comp.truncation.get("caps") if comp.truncation else None
    top = max((max(x) for x in comp.states), default=0) if not caps else max(caps)
    half = top // 2
    gf = g if callable(g) else (lambda x: g.get(x, 0.0))
    low = sum(gf(x) for x in comp.states if max(x, default=0) <= half)
    high = sum(gf(x) for x in comp.states if max(x, default=0) > half)
    return high / low if low > 0 else math.inf


def normalization_certified(comp: IrreducibleComponent, g) -> tuple[bool, float]:
    """A closed component is always certified; a truncated one passes the tail-ratio test."""
    if comp.closed:
        return True, 0.0
    ratio = tail_ratio(comp, g)
    return ratio <= TAIL_RATIO, ratio


# -- factorization ------------------------------------------------------------------

def _as_fn(f) -> Callable[[State], float]:
    if callable(f):
        return f
    return lambda x: f[tuple(x)]


@dataclass
class Factorization:
    """``lambda_{y->y'}(x) = kappa[r] / (m[k](x - phi(y)) * g(x))`` with ``k`` the class of ``y``."""

    g: Callable[[State], float] | Mapping
    m: dict
    kappa: dict

    def to_dict(self, net: ReactionNetwork, comp: IrreducibleComponent) -> dict:
        g = _as_fn(self.g)
        ci = components(net)
        m_tables = {}
        for k, mk in self.m.items():
            f = _as_fn(mk)
            table = {}
            for r, rx in enumerate(net.reactions):
                if ci.assignment[rx.source] != k:
                    continue
                for x in comp.states:
                    z = _add(x, net.phi(rx.source), -1)
                    if min(z, default=0) >= 0 and z not in table:
                        try:
                            table[z] = f(z)
                        except (KeyError, ValueError, ZeroDivisionError):
                            pass
            m_tables[str(k)] = [[list(z), v] for z, v in sorted(table.items())]
        return {
            "g": [[list(x), g(x)] for x in comp.states],
            "m": m_tables,
            "kappa": {net.reaction_label(r): v for r, v in sorted(self.kappa.items())},
        }


def verify_factorization(
    net: ReactionNetwork, comp: IrreducibleComponent, fact: Factorization, tol: float = TOL
) -> Distribution:
    """Check the factorization identity and kappa balance, then return ``g`` normalized.

    Raises :class:`FactorizationError` naming the offending state and reaction.
    """
    ci = components(net)
    g = _as_fn(fact.g)
    for r, rx in enumerate(net.reactions):
        k = ci.assignment[rx.source]
        if k not in fact.m:
            raise FactorizationError("factorization", f"no m for class {k}")
        if r not in fact.kappa:
            raise FactorizationError("factorization", f"no kappa for {net.reaction_label(r)}")
        mk = _as_fn(fact.m[k])
        phy = net.phi(rx.source)
        for x in comp.states:
            if any(a < b for a, b in zip(x, phy)):
                continue
            lam = net.rate(r, x)
            pred = fact.kappa[r] / (mk(_add(x, phy, -1)) * g(x))
            res = _rel(lam, pred)
            if not res <= tol:
                raise FactorizationError(
                    "factorization",
                    f"rate identity fails for {net.reaction_label(r)} at {x}: rate {lam!r} vs {pred!r} (rel {res:.3g})",
                    state=x,
                    where=net.reaction_label(r),
                )
    for eta in range(len(net.complexes)):
        out = sum(fact.kappa[r] for r in net.out_reactions(eta))
        inn = sum(fact.kappa[r] for r in net.in_reactions(eta))
        res = _rel(out, inn)
        if not res <= tol:
            raise FactorizationError("kappa-balance", f"kappa imbalance at {net.label(eta)} (rel {res:.3g})", where=net.label(eta))
    ok, ratio = normalization_certified(comp, g)
    if not ok:
        raise FactorizationError("normalization", f"normalization not certified (tail ratio {ratio:.3g})")
    pi = Distribution.from_weights(comp, g)
    rep = check_complex_balanced(net, pi, tol)
    if not rep.verdict:
        raise FactorizationError("complex-balance", f"normalized g is not complex balanced (residual {rep.max_residual:.3g})")
    return pi


# -- mass action ----------------------------------------------------------------------

def _mass_action_constants(net: ReactionNetwork, alpha=None) -> np.ndarray:
    if alpha is not None:
        if isinstance(alpha, Mapping):
            return np.array([float(alpha[r]) for r in range(len(net.reactions))])
        return np.asarray(alpha, dtype=float)
    vals = []
    for rx in net.reactions:
        if not isinstance(rx.kinetics, MassAction):
            raise BalanceError("mass-action", "network kinetics are not mass action; pass alpha explicitly")
        vals.append(rx.kinetics.rate_constant)
    return np.array(vals)


def _complex_residuals(net: ReactionNetwork, alpha: np.ndarray, logc: np.ndarray) -> np.ndarray:
    Y = net.stoich_matrix.astype(float)
    e = Y @ logc
    # ratios are invariant under a common factor; shifting keeps the largest monomial at 1
    mono = np.exp(e - e.max()) if e.size else e
    flux = np.array([alpha[r] * mono[rx.source] for r, rx in enumerate(net.reactions)])
    res = np.zeros(len(net.complexes))
    scale = np.zeros(len(net.complexes))
    for r, rx in enumerate(net.reactions):
        res[rx.source] += flux[r]
        res[rx.target] -= flux[r]
        scale[rx.source] += flux[r]
        scale[rx.target] += flux[r]
    return res / np.where(scale > 0, scale, 1.0)


def _tree_constant_guess(net: ReactionNetwork, alpha: np.ndarray) -> np.ndarray | None:
    """Log-linear fit of ``c^y`` to the kernel of each linkage class Laplacian."""
    ci = components(net)
    n = net.n_species
    rows, rhs = [], []
    for k in range(1, ci.count + 1):
        nodes = ci.members(k)
        pos = {c: i for i, c in enumerate(nodes)}
        A = np.zeros((len(nodes), len(nodes)))
        for r, rx in enumerate(net.reactions):
            if rx.source in pos:
                A[pos[rx.source], pos[rx.source]] -= alpha[r]
                A[pos[rx.target], pos[rx.source]] += alpha[r]
        ker = scipy.linalg.null_space(A)
        if ker.shape[1] != 1:
            return None
        v = ker[:, 0] * np.sign(ker[:, 0].sum())
        if np.any(v <= 0):
            return None
        for c in nodes:
            row = np.zeros(n + ci.count)
            row[:n] = net.phi(c)
            row[n + k - 1] = -1.0
            rows.append(row)
            rhs.append(math.log(v[pos[c]]))
    sol, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    return sol[:n]


def _monomials_representable(net: ReactionNetwork, logc: np.ndarray) -> bool:
    # an underflowed monomial makes its residual vacuous
    e = net.stoich_matrix.astype(float) @ logc
    return bool(np.all(np.isfinite(e))) and (e.size == 0 or float(np.ptp(e)) < 600.0)


def _canonical_logc(net: ReactionNetwork, logc: np.ndarray) -> np.ndarray:
    """Remove the component of ``log c`` along conservation laws (they leave balance unchanged)."""
    laws = conservation_laws(net)
    if not laws:
        return logc
    W = np.array([[float(v) for v in w] for w in laws]).T
    coef, *_ = np.linalg.lstsq(W, logc, rcond=None)
    return logc - W @ coef


def ma_equilibrium_solve(net: ReactionNetwork, alpha=None, tol: float = TOL, seed: int = 0) -> np.ndarray:
    """Positive ``c`` with ``sum_out alpha c^y = sum_in alpha c^y`` at every complex.

    Multi-start least squares on ``log c``; the representative orthogonal to
    the conservation laws is returned.  Raises :class:`NotConverged` if no start
    reaches ``tol`` (this says nothing about existence).
    """
    if not is_weakly_reversible(net):
        raise BalanceError("mass-action", "network is not weakly reversible")
    a = _mass_action_constants(net, alpha)
    n = net.n_species
    rng = np.random.default_rng(seed)
    starts = [np.zeros(n)]
    tree = _tree_constant_guess(net, a)
    if tree is not None:
        starts.insert(0, tree)
    starts += [rng.normal(size=n) for _ in range(8)]
    best = None
    for u0 in starts:
        sol = scipy.optimize.least_squares(
            lambda u: _complex_residuals(net, a, u), u0, method="lm" if len(net.complexes) >= n else "trf",
            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000,
        )
        res = np.max(np.abs(_complex_residuals(net, a, sol.x)), initial=0.0)
        if not _monomials_representable(net, sol.x):
            res = np.inf
        if best is None or res < best[0]:
            best = (res, sol.x)
        if res <= tol:
            return np.exp(_canonical_logc(net, sol.x))
    raise NotConverged("mass-action", f"no complex balanced equilibrium found (best residual {best[0]:.3g})")


def mass_action_factorization(net: ReactionNetwork, c: np.ndarray, alpha=None) -> Factorization:
    """``g = c^x/x!``, ``m_k = x!/c^x``, ``kappa = alpha c^y``."""
    a = _mass_action_constants(net, alpha)
    logc = np.log(np.asarray(c, dtype=float))

    def logfact(x):
        return sum(math.lgamma(v + 1) for v in x)

    def g(x):
        return math.exp(float(np.dot(x, logc)) - logfact(x))

    def m(x):
        return math.exp(logfact(x) - float(np.dot(x, logc)))

    ci = components(net)
    kappa = {r: float(a[r] * math.exp(float(np.dot(net.phi(rx.source), logc)))) for r, rx in enumerate(net.reactions)}
    return Factorization(g, {k: m for k in range(1, ci.count + 1)}, kappa)


# -- constant ratio ---------------------------------------------------------------------

def detect_constant_ratio(net: ReactionNetwork, comp: IrreducibleComponent, tol: float = SOLVE_TOL) -> dict[int, float]:
    """Per-source proportionality constants ``alpha`` with ``lambda_r = alpha_r * lambda_y``.

    For each source the first outgoing reaction's constant is its mass-action
    constant (or 1 for other kinetics); the others are scaled by the observed
    rate ratio, which must not vary across states.
    """
    out: dict[int, float] = {}
    for y in range(len(net.complexes)):
        rs = net.out_reactions(y)
        if not rs:
            continue
        r0 = rs[0]
        base = net.reactions[r0].kinetics.rate_constant if isinstance(net.reactions[r0].kinetics, MassAction) else 1.0
        out[r0] = base
        phy = net.phi(y)
        for r in rs[1:]:
            ref = None
            for x in comp.states:
                if any(a < b for a, b in zip(x, phy)):
                    continue
                v0, v = net.rate(r0, x), net.rate(r, x)
                if v0 <= 0 or v <= 0:
                    continue
                ratio = v / v0
                if ref is None:
                    ref = (ratio, x)
                elif _rel(ratio, ref[0]) > tol:
                    raise BalanceError(
                        "constant-ratio",
                        f"rate ratio of {net.reaction_label(r)} to {net.reaction_label(r0)} is {ref[0]:.6g} at {ref[1]} but {ratio:.6g} at {x}",
                        state=x,
                        where=net.label(y),
                    )
            out[r] = base * (ref[0] if ref else 1.0)
    return out


# -- cyclic networks ---------------------------------------------------------------------

@dataclass
class CyclicSolution:
    distribution: Distribution
    g: dict
    m: dict
    max_residual: float
    certified: bool
    tail_ratio: float


def _propagate(
    states: Sequence[State], edges: list[tuple[State, State, float]], stage: str, tol: float
) -> tuple[dict, float]:
    """Solve ``L[b] - L[a] = d`` on a graph by spanning tree, then check every edge.

    Returns log values and the worst edge residual (absolute in log space).
    """
    adj: dict = {x: [] for x in states}
    for a, b, d in edges:
        adj[a].append((b, d))
        adj[b].append((a, -d))
    logv: dict = {}
    for root in states:
        if root in logv:
            continue
        logv[root] = 0.0
        queue = deque([root])
        while queue:
            cur = queue.popleft()
            for nxt, d in adj[cur]:
                if nxt not in logv:
                    logv[nxt] = logv[cur] + d
                    queue.append(nxt)
    worst = 0.0
    worst_at = None
    for a, b, d in edges:
        err = abs(logv[b] - logv[a] - d)
        if err > worst:
            worst, worst_at = err, (a, b)
    # relative residual of the flux identity is expm1 of the log error
    rel = math.expm1(worst)
    if rel > tol:
        raise BalanceError(stage, f"closure inconsistency between states {worst_at[0]} and {worst_at[1]} (rel {rel:.3g})", state=worst_at[0])
    return logv, rel


def _cycle_of(net: ReactionNetwork) -> tuple[dict[int, int], dict[int, int]]:
    """``prev[c]`` incoming reaction, ``cycle_id[c]`` component id (1-based)."""
    ci = components(net)
    prev = {c: net.in_reactions(c)[0] for c in range(len(net.complexes))}
    return prev, {c: ci.assignment[c] for c in range(len(net.complexes))}


def cyclic_balance_solve(net: ReactionNetwork, comp: IrreducibleComponent, tol: float = SOLVE_TOL) -> CyclicSolution:
    """Complex balanced distribution of a disjoint-cycle network.

    Along a cycle ``... -> y_{i-1} -> y_i -> y_{i+1} -> ...`` complex balance at ``y_i``
    and state ``x >= phi(y_i)`` reads ``pi(w) lambda_in(w) = pi(x) lambda_out(x)`` with
    ``w = x - phi(y_i) + phi(y_{i-1})``.  These ratios are propagated over a
    spanning tree of states and then checked everywhere.
    """
    if not is_disjoint_cycles(net):
        raise BalanceError("cyclic-solve", "network is not a union of disjoint cycles")
    members = set(comp.states)
    edges = []
    for eta in range(len(net.complexes)):
        r_in = net.in_reactions(eta)[0]
        r_out = net.out_reactions(eta)[0]
        src = net.phi(net.reactions[r_in].source)
        ph = net.phi(eta)
        for x in comp.states:
            if any(a < b for a, b in zip(x, ph)):
                continue
            w = _add(_add(x, src), ph, -1)
            lo = net.rate(r_out, x)
            if w not in members:
                if comp.closed:
                    raise BalanceError("cyclic-solve", f"flux into {net.label(eta)} at {x} comes from {w} outside the component", state=x)
                continue
            li = net.rate(r_in, w)
            if lo <= 0 or li <= 0:
                raise BalanceError("cyclic-solve", f"zero rate at {x} for {net.label(eta)} (kinetics violate the positivity condition)", state=x)
            edges.append((w, x, math.log(li) - math.log(lo)))
    logv, worst = _propagate(comp.states, edges, "cyclic-solve", tol)
    top = max(logv.values())
    g = {x: math.exp(logv[x] - top) for x in comp.states}
    # m_k(z) = 1 / (pi(z + phi(y)) lambda_{y->y'}(z + phi(y))), checked per class
    ci = components(net)
    m: dict[int, dict] = {}
    for r, rx in enumerate(net.reactions):
        k = ci.assignment[rx.source]
        tab = m.setdefault(k, {})
        ph = net.phi(rx.source)
        for x in comp.states:
            if any(a < b for a, b in zip(x, ph)):
                continue
            z = _add(x, ph, -1)
            val = 1.0 / (g[x] * net.rate(r, x))
            if z in tab and _rel(tab[z], val) > tol:
                if comp.closed or x in comp.interior:
                    raise BalanceError("cyclic-solve", f"m_{k} inconsistent at {z}", state=x)
            tab.setdefault(z, val)
    ok, ratio = normalization_certified(comp, g)
    pi = Distribution.from_weights(comp, g)
    return CyclicSolution(pi, g, m, worst, ok, ratio)


# -- pipeline -------------------------------------------------------------------------

@dataclass
class CBSolution:
    distribution: Distribution
    factorization: Factorization | None
    cleaving: CleavingResult
    cyclic: CyclicSolution
    report: BalanceReport
    factorization_note: str = ""
    stages: list[str] = field(default_factory=list)


def reconstruct_factorization(
    net: ReactionNetwork, comp: IrreducibleComponent, g: Mapping[State, float], tol: float = SOLVE_TOL
) -> Factorization:
    """Fit ``m_k`` and ``kappa`` so that ``lambda_r(x) g(x) m_k(x - phi(y)) = kappa_r``.

    The unknowns form a bipartite graph (one ``kappa`` per reaction, one ``m_k(z)``
    per shifted state); values are propagated along a spanning tree and
    every equation is then checked, followed by kappa balance.
    """
    ci = components(net)
    nodes: set = set()
    edges = []
    for r, rx in enumerate(net.reactions):
        k = ci.assignment[rx.source]
        ph = net.phi(rx.source)
        for x in comp.states:
            if any(a < b for a, b in zip(x, ph)):
                continue
            lam = net.rate(r, x)
            if lam <= 0:
                raise BalanceError("factorization", f"zero rate for {net.reaction_label(r)} at {x}", state=x)
            a, b = ("kappa", r), ("m", k, _add(x, ph, -1))
            nodes.update((a, b))
            # log kappa - log m = log lam + log g
            edges.append((b, a, math.log(lam) + math.log(g[x])))
    order = sorted(nodes, key=lambda v: (v[0] != "kappa", repr(v)))
    logv, _ = _propagate(order, edges, "factorization", tol)
    kappa = {r: math.exp(logv[("kappa", r)]) for r in range(len(net.reactions)) if ("kappa", r) in logv}
    m: dict[int, dict] = {}
    for v, lv in logv.items():
        if v[0] == "m":
            m.setdefault(v[1], {})[v[2]] = math.exp(lv)
    for eta in range(len(net.complexes)):
        out = sum(kappa[r] for r in net.out_reactions(eta))
        inn = sum(kappa[r] for r in net.in_reactions(eta))
        if _rel(out, inn) > tol:
            raise BalanceError("factorization", f"fitted kappa not balanced at {net.label(eta)} (rel {_rel(out, inn):.3g})", where=net.label(eta))
    return Factorization(dict(g), m, kappa)


def complex_balanced_solve(net: ReactionNetwork, comp: IrreducibleComponent, tol: float = TOL) -> CBSolution:
    """Cleave, solve on the cycles, pull back and verify on the original network.

    Raises :class:`BalanceError` with ``stage`` set to the failing stage.
    A missing factorization is not an error; the reason is kept in
    ``factorization_note``.
    """
    stages = []
    if not is_weakly_reversible(net):
        raise BalanceError("weak-reversibility", "network is not weakly reversible")
    try:
        res = cleave_full(net)
    except CleavingError as exc:
        raise BalanceError("cleave", str(exc)) from exc
    stages.append(f"cleave: {len(res.cycles)} cycles")
    cyc = cyclic_balance_solve(res.network, comp, tol=max(tol, SOLVE_TOL))
    stages.append(f"cyclic-solve: closure residual {cyc.max_residual:.3g}")
    if not cyc.certified:
        raise BalanceError("normalization", f"normalization not certified (tail ratio {cyc.tail_ratio:.3g})")
    pi = cyc.distribution
    report = check_complex_balanced(net, pi, tol)
    stages.append(f"verify-original: residual {report.max_residual:.3g}")
    if not report.verdict:
        raise BalanceError("verify-original", f"pulled-back distribution is not complex balanced for the original network (residual {report.max_residual:.3g} at {report.worst})")
    fact, note = None, ""
    try:
        fact = reconstruct_factorization(net, comp, cyc.g)
        stages.append("factorization: ok")
    except BalanceError as exc:
        note = str(exc)
        stages.append(f"factorization: unavailable ({exc})")
    return CBSolution(pi, fact, res, cyc, report, note, stages)


# -- detailed balance ---------------------------------------------------------------------

def verify_detailed_factorization(net: ReactionNetwork, pi: Distribution, tol: float = TOL) -> dict:
    """``m_{y->y'}(z) = 1/(lambda_{y->y'}(z + phi(y)) pi(z + phi(y)))``, checked symmetric in the pair."""
    if not is_reversible(net):
        raise BalanceError("detailed", "network is not reversible")
    tables = {}
    for r, rx in enumerate(net.reactions):
        back = net.reaction_index(rx.target, rx.source)
        if r > back:
            continue
        pair = []
        for rr in (r, back):
            ph = net.phi(net.reactions[rr].source)
            tab = {}
            for x in pi.support.states:
                if any(a < b for a, b in zip(x, ph)):
                    continue
                v = net.rate(rr, x) * pi(x)
                if v > 0:
                    tab[_add(x, ph, -1)] = 1.0 / v
            pair.append(tab)
        fwd, bwd = pair
        for z in set(fwd) & set(bwd):
            if _rel(fwd[z], bwd[z]) > tol:
                raise BalanceError("detailed", f"m not symmetric for {net.reaction_label(r)} at {z} (rel {_rel(fwd[z], bwd[z]):.3g})", state=z, where=net.reaction_label(r))
        tables[(rx.source, rx.target)] = {**bwd, **fwd}
    return tables


# -- oracle ---------------------------------------------------------------------------------

def generator_matrix(net: ReactionNetwork, comp: IrreducibleComponent) -> scipy.sparse.csr_matrix:
    """Generator restricted to ``comp``; transitions leaving it are dropped."""
    idx = {x: i for i, x in enumerate(comp.states)}
    rows, cols, vals = [], [], []
    jumps = [net.jump(r) for r in range(len(net.reactions))]
    diag = np.zeros(len(comp.states))
    for x, i in idx.items():
        for r, j in enumerate(jumps):
            y = _add(x, j)
            if y not in idx:
                continue
            v = net.rate(r, x)
            if v > 0:
                rows.append(i)
                cols.append(idx[y])
                vals.append(v)
                diag[i] += v
    n = len(idx)
    Q = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return Q - scipy.sparse.diags(diag)


def stationary_solve(net: ReactionNetwork, comp: IrreducibleComponent) -> Distribution:
    """Solve ``pi Q = 0, sum pi = 1`` on the truncated component."""
    n = len(comp.states)
    if n == 1:
        return Distribution(comp, {comp.states[0]: 1.0})
    Q = generator_matrix(net, comp)
    A = Q.T.tolil()
    A[n - 1, :] = np.ones(n)
    b = np.zeros(n)
    b[-1] = 1.0
    A = A.tocsc()
    with np.errstate(all="ignore"):
        try:
            p = scipy.sparse.linalg.spsolve(A, b)
        except RuntimeError as exc:  # pragma: no cover
            raise BalanceError("stationary", f"singular generator: {exc}") from exc
    if not np.all(np.isfinite(p)):
        cond = np.linalg.cond(A.toarray()) if n <= 2000 else math.inf
        raise BalanceError("stationary", f"singular or ill-conditioned system (condition estimate {cond:.3g})")
    resid = np.abs(Q.T @ p).max()
    if resid > 1e-8 * max(1.0, np.abs(Q).max()):
        cond = np.linalg.cond(A.toarray()) if n <= 2000 else math.inf
        raise BalanceError("stationary", f"ill-conditioned system (residual {resid:.3g}, condition estimate {cond:.3g})")
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    return Distribution(comp, {x: float(v) for x, v in zip(comp.states, p)})


# -- birth-death recursion ---------------------------------------------------------------------

@dataclass(frozen=True)
class BDSplit:
    lambda1: tuple[float, ...]
    lambda4: tuple[float, ...]


def bd_split_rates(a1: float, a2: float, a3: float, x_max: int) -> BDSplit:
    """Split ``a1 * x`` into ``lambda1(x) + lambda4(x)`` by the completion recursion."""
    if min(a1, a2, a3) <= 0:
        raise ValueError("rates must be positive")
    s2 = (a2 + a3) ** 2
    lam1 = [0.0]
    for x in range(1, x_max + 1):
        # x = 1 is written out so that lambda1(1) = a1 holds exactly
        lam1.append(float(a1) if x == 1 else a1 * s2 * x / (s2 + a3 * lam1[x - 1]))
    lam4 = [a1 * x - lam1[x] for x in range(x_max + 1)]
    assert lam1[0] == 0 and lam4[0] == 0 and lam4[1] == 0
    for x in range(2, x_max + 1):
        assert 0 < lam1[x] < a1 * x, "recursion left (0, a1 x)"
    return BDSplit(tuple(lam1), tuple(lam4))
