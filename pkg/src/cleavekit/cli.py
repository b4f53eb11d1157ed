"""Command line interface: analyze, cleave, balance, simulate and reproduce.

Exit codes: 0 ok, 2 input/parse error, 3 analysis error, 4 a balance verdict
(or a reproduced value) is false, 5 a solver did not converge.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

from . import __version__
from .balance import (
    TOL,
    BalanceError,
    Distribution,
    NotConverged,
    balance_report,
    complex_balanced_solve,
    stationary_solve,
)
from .cleave import CleavingError, cleave_full
from .graph import (
    components,
    conservation_laws,
    deficiency,
    enumerate_cycles,
    is_reversible,
    is_weakly_reversible,
)
from .kinetics import KineticsError
from .network import NetworkError, ReactionNetwork, to_dict
from .parser import ParseError, parse
from .ssa import ExplosionError, SimConfig, SimulationError, simulate
from .statespace import StateSpaceError, irreducible_component

EXIT_OK, EXIT_PARSE, EXIT_ANALYSIS, EXIT_VERDICT, EXIT_SOLVER = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class RunManifest:
    subcommand: str
    input_sha256: str | None
    config: dict
    version: str = __version__
    timings: dict = field(default_factory=dict)

    def to_dict(self, with_timings: bool = True) -> dict:
        d = asdict(self)
        if not with_timings:
            d.pop("timings")
        return d


class _Timer:
    def __init__(self) -> None:
        self.t0 = time.perf_counter()
        self.marks: dict[str, float] = {}
        self._last = self.t0

    def mark(self, name: str) -> None:
        now = time.perf_counter()
        self.marks[name] = now - self._last
        self._last = now

    def done(self) -> dict:
        return {**self.marks, "total": time.perf_counter() - self.t0}


# -- helpers --------------------------------------------------------------------------

def _read_network(path: str) -> tuple[ReactionNetwork, str]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"{path}: {exc.strerror}") from exc
    text = raw.decode("utf-8")
    try:
        net = parse(text, base_dir=os.path.dirname(os.path.abspath(path)))
    except ParseError as exc:
        s = exc.span
        raise CliError(EXIT_PARSE, f"{path}:{s.line}:{s.col_start}-{s.col_end}: {exc.message}") from exc
    except (NetworkError, KineticsError) as exc:
        raise CliError(EXIT_PARSE, f"{path}: {exc}") from exc
    return net, hashlib.sha256(raw).hexdigest()


def parse_init(text: str, net: ReactionNetwork) -> tuple[int, ...]:
    """``A=3,B=0`` (missing species are 0) or a bare list ``3,0,0``."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if parts and all("=" not in p for p in parts):
        vals = [int(p) for p in parts]
        if len(vals) != net.n_species:
            raise CliError(EXIT_PARSE, f"--init needs {net.n_species} counts, got {len(vals)}")
        return tuple(vals)
    x = [0] * net.n_species
    for p in parts:
        name, _, val = p.partition("=")
        name = name.strip()
        if name not in net.species:
            raise CliError(EXIT_PARSE, f"--init: unknown species {name!r}")
        try:
            x[net.species.index(name)] = int(val)
        except ValueError:
            raise CliError(EXIT_PARSE, f"--init: bad count {val!r} for {name}") from None
    if min(x, default=0) < 0:
        raise CliError(EXIT_PARSE, "--init: counts must be non-negative")
    return tuple(x)


def _config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


def _emit(args: argparse.Namespace, payload: dict, text_lines: Sequence[str]) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print("\n".join(text_lines))


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finite(v: float):
    return v if math.isfinite(v) else None


# -- analyze --------------------------------------------------------------------------

def analyze_report(net: ReactionNetwork, cycle_cap: int = 10_000) -> dict:
    ci = components(net)
    inv = enumerate_cycles(net, cap=cycle_cap)
    return {
        "species": list(net.species),
        "complexes": [net.label(c) for c in range(len(net.complexes))],
        "reactions": [net.reaction_label(r) for r in range(len(net.reactions))],
        "components": [
            {"id": k, "members": [net.label(c) for c in ci.members(k)], "strongly_connected": ci.strong[k - 1]}
            for k in range(1, ci.count + 1)
        ],
        "weakly_reversible": is_weakly_reversible(net),
        "reversible": is_reversible(net),
        "cycle_count": len(inv),
        "cycle_cap_exceeded": inv.cap_exceeded,
        "cycles": [[net.label(net.reactions[r].source) for r in cyc] for cyc in inv.cycles],
        "deficiency": deficiency(net),
        "essential_deficiency": deficiency(net, essential_only=True),
        "conservation_laws": [[str(v) for v in law] for law in conservation_laws(net)],
    }


def cmd_analyze(args: argparse.Namespace) -> int:
    timer = _Timer()
    net, digest = _read_network(args.file)
    timer.mark("parse")
    try:
        rep = analyze_report(net, args.cycle_cap)
    except (NetworkError, ValueError) as exc:
        raise CliError(EXIT_ANALYSIS, str(exc)) from exc
    timer.mark("analyze")
    manifest = RunManifest("analyze", digest, _config(args), timings=timer.done())
    lines = [
        f"species: {' '.join(rep['species'])}",
        f"complexes: {len(rep['complexes'])}  reactions: {len(rep['reactions'])}",
        "components:",
        *[f"  {c['id']}: {{{', '.join(c['members'])}}}  {'strong' if c['strongly_connected'] else 'not strong'}" for c in rep["components"]],
        f"weakly reversible: {rep['weakly_reversible']}  reversible: {rep['reversible']}",
        f"cycles: {rep['cycle_count']}{' (cap exceeded)' if rep['cycle_cap_exceeded'] else ''}",
        f"deficiency: {rep['deficiency']}  (essential network: {rep['essential_deficiency']})",
    ]
    _emit(args, {"manifest": manifest.to_dict(), "report": rep}, lines)
    return EXIT_OK


# -- cleave ---------------------------------------------------------------------------

def cmd_cleave(args: argparse.Namespace) -> int:
    timer = _Timer()
    net, digest = _read_network(args.file)
    timer.mark("parse")
    try:
        res = cleave_full(net)
    except CleavingError as exc:
        raise CliError(EXIT_ANALYSIS, str(exc)) from exc
    timer.mark("cleave")
    cn = res.network
    cycles = [
        {
            "reactions": [cn.reaction_label(r) for r in cyc],
            "projected": [net.label(c) for c in res.projected_cycle(cyc)],
        }
        for cyc in res.cycles.cycles
    ]
    body = {
        "network": to_dict(cn),
        "psi": res.psi_table(),
        "reaction_map": [
            {"cleaved": cn.reaction_label(r), "original": net.reaction_label(res.projection.reaction_map[r])}
            for r in range(len(cn.reactions))
        ],
        "cycles": cycles,
        "trace": res.trace,
    }
    manifest = RunManifest("cleave", digest, _config(args), timings=timer.done())
    if args.out:
        _write_json(args.out, {"manifest": manifest.to_dict(), **body})
    lines = []
    if args.trace:
        lines += res.trace
    lines.append(f"{len(cycles)} disjoint cycle(s), {len(cn.complexes)} complexes")
    for c in cycles:
        lines.append("  " + " -> ".join(c["projected"] + c["projected"][:1]))
    _emit(args, {"manifest": manifest.to_dict(), **body}, lines)
    return EXIT_OK


# -- balance --------------------------------------------------------------------------

def _load_pi(path: str, comp) -> Distribution:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_PARSE, f"{path}: {exc}") from exc
    d = d.get("distribution", d)
    if "prob" not in d and "fractions" in d:
        d = {"states": d["states"], "prob": d["fractions"]}
    try:
        weights = {tuple(int(v) for v in s): float(p) for s, p in zip(d["states"], d["prob"])}
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_PARSE, f"{path}: expected 'states' and 'prob' lists") from exc
    outside = [s for s, p in weights.items() if p > 0 and s not in comp]
    if outside:
        raise CliError(EXIT_ANALYSIS, f"{path}: state {list(outside[0])} is not in the component")
    try:
        return Distribution.from_weights(comp, weights)
    except ValueError as exc:
        raise CliError(EXIT_ANALYSIS, f"{path}: {exc}") from exc


def cmd_balance(args: argparse.Namespace) -> int:
    timer = _Timer()
    net, digest = _read_network(args.file)
    x0 = parse_init(args.init, net)
    timer.mark("parse")
    try:
        comp = irreducible_component(net, x0, truncation=args.truncate)
    except StateSpaceError as exc:
        raise CliError(EXIT_ANALYSIS, str(exc)) from exc
    timer.mark("component")
    tol = args.tol
    stages: list[str] = []
    fact = None
    source = "given"
    if args.pi:
        pi = _load_pi(args.pi, comp)
    else:
        pi = None
        if is_weakly_reversible(net):
            try:
                sol = complex_balanced_solve(net, comp, tol)
                pi, fact, stages = sol.distribution, sol.factorization, sol.stages
                source = "complex-balanced solve"
            except NotConverged as exc:
                raise CliError(EXIT_SOLVER, str(exc)) from exc
            except BalanceError as exc:
                stages.append(str(exc))
                if exc.stage in ("cleave", "weak-reversibility"):
                    raise CliError(EXIT_ANALYSIS, str(exc)) from exc
                if exc.stage == "normalization":
                    raise CliError(EXIT_SOLVER, str(exc)) from exc
        else:
            stages.append("not weakly reversible: no complex balanced solve")
        if pi is None:
            try:
                pi = stationary_solve(net, comp)
            except BalanceError as exc:
                raise CliError(EXIT_SOLVER, str(exc)) from exc
            source = "stationary solve"
    timer.mark("solve")
    try:
        reports = balance_report(net, pi, tol)
    except BalanceError as exc:
        raise CliError(EXIT_ANALYSIS, str(exc)) from exc
    timer.mark("check")
    manifest = RunManifest("balance", digest, _config(args), timings=timer.done())
    payload = {
        "manifest": manifest.to_dict(),
        "component": {"size": len(comp), "interior": len(comp.interior), "closed": comp.closed},
        "distribution_source": source,
        "stages": stages,
        "reports": {k: _report_dict(v) for k, v in reports.items()},
        "distribution": pi.to_dict(),
        "factorization": fact.to_dict(net, comp) if fact is not None else None,
    }
    lines = [f"component: {len(comp)} states ({len(comp.interior)} interior, {'closed' if comp.closed else 'truncated'})"]
    lines.append(f"distribution: {source}")
    lines += [f"  {s}" for s in stages]
    for name, rep in reports.items():
        where = f" worst at {rep.worst[1]} ({rep.worst[0]})" if rep.worst and not rep.verdict else ""
        reason = f" [{rep.reason}]" if rep.reason else ""
        lines.append(f"{name:<18} {str(rep.verdict):<5} max residual {rep.max_residual:.3g}{where}{reason}")
    _emit(args, payload, lines)
    return EXIT_OK if reports["complex"].verdict else EXIT_VERDICT


def _report_dict(rep) -> dict:
    d = rep.to_dict()
    d["max_residual"] = _finite(d["max_residual"])
    return d


# -- simulate -------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    timer = _Timer()
    net, digest = _read_network(args.file)
    x0 = parse_init(args.init, net)
    timer.mark("parse")
    try:
        cfg = SimConfig(x0, t_end=args.time, burn_in=args.burn, seed=args.seed, replicas=args.replicas, max_events=args.max_events)
    except ValueError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from exc
    try:
        emp = simulate(net, cfg)
    except ExplosionError as exc:
        raise CliError(EXIT_SOLVER, str(exc)) from exc
    except (SimulationError, KineticsError) as exc:
        raise CliError(EXIT_ANALYSIS, str(exc)) from exc
    timer.mark("simulate")
    manifest = RunManifest("simulate", digest, _config(args), timings=timer.done())
    if args.out:
        # wall-clock timings and the file's own path are left out so equal runs give equal files
        m = manifest.to_dict(with_timings=False)
        m["config"] = {k: v for k, v in m["config"].items() if k != "out"}
        _write_json(args.out, {"manifest": m, "histogram": emp.to_dict()})
    top = sorted(emp.fractions.items(), key=lambda kv: -kv[1])[:10]
    lines = [f"{emp.events} events over {emp.total_time:g} time units ({cfg.replicas} replica(s), seed {cfg.seed})"]
    lines += [f"  {list(x)}  {p:.6f}" for x, p in top]
    _emit(args, {"manifest": manifest.to_dict(), "histogram": emp.to_dict()}, lines)
    return EXIT_OK


# -- reproduce ------------------------------------------------------------------------

def cmd_reproduce(args: argparse.Namespace) -> int:
    from .reproduce import EXAMPLES, run

    names = list(EXAMPLES) if args.name == "all" else [args.name]
    timer = _Timer()
    results = []
    for name in names:
        try:
            results.append(run(name, seed=args.seed))
        except (BalanceError, CleavingError, StateSpaceError) as exc:
            raise CliError(EXIT_ANALYSIS, f"{name}: {exc}") from exc
        timer.mark(name)
    manifest = RunManifest("reproduce", None, _config(args), timings=timer.done())
    lines = []
    for rep in results:
        lines.append(f"{rep.name}: {'ok' if rep.ok else 'MISMATCH'} ({rep.seconds:.2f} s)")
        for c in rep.checks:
            lines.append(f"  [{'ok' if c.ok else 'FAIL'}] {c.name}" + (f": {c.detail}" if c.detail else ""))
    _emit(args, {"manifest": manifest.to_dict(), "results": [r.to_dict() for r in results]}, lines)
    return EXIT_OK if all(r.ok for r in results) else EXIT_VERDICT


# -- entry point ----------------------------------------------------------------------

def _global_options(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--json", action="store_true", default=d(False), help="print JSON instead of text")
    p.add_argument("--tol", type=float, default=d(TOL), help="residual tolerance for verdicts (default %(default)s)")
    p.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    from .reproduce import EXAMPLES

    parser = argparse.ArgumentParser(prog="cleavekit", description="Cleave reaction networks into cycles and check balance properties.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("analyze", help="components, reversibility, cycles and deficiency")
    p.add_argument("file")
    p.add_argument("--cycle-cap", type=int, default=10_000)
    _global_options(p, suppress=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("cleave", help="cleave into disjoint cycles")
    p.add_argument("file")
    p.add_argument("--out", help="write the cleaved network, psi table and cycles as JSON")
    p.add_argument("--trace", action="store_true", help="print every cleaving step")
    _global_options(p, suppress=True)
    p.set_defaults(func=cmd_cleave)

    p = sub.add_parser("balance", help="solve for and check balanced distributions on a component")
    p.add_argument("file")
    p.add_argument("--init", required=True, help='initial state, e.g. "A=3,B=0"')
    p.add_argument("--truncate", type=int, default=30, help="cap on every species count (default 30)")
    p.add_argument("--pi", help="check this distribution (JSON with states/prob) instead of solving")
    _global_options(p, suppress=True)
    p.set_defaults(func=cmd_balance)

    p = sub.add_parser("simulate", help="exact stochastic simulation, time-weighted histogram")
    p.add_argument("file")
    p.add_argument("--init", required=True)
    p.add_argument("--time", type=float, required=True, help="end time")
    p.add_argument("--burn", type=float, default=0.0, help="burn-in time excluded from the histogram")
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--max-events", type=int, default=50_000_000, help="event budget per run; exceeding it means possible explosion")
    p.add_argument("--out", help="write the histogram as JSON")
    _global_options(p, suppress=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", help="run a bundled example and compare with stored values")
    p.add_argument("name", choices=[*EXAMPLES, "all"])
    _global_options(p, suppress=True)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
