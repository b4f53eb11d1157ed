"""Text format for reaction networks.

One reaction per line::

    # comment
    species A B C            # optional, fixes the species order
    param a1 = 2.5           # named constant usable in expr(...)
    A <-> B : ma(3), ma(3)
    S + E* -> P + E : expr(a1*S*Estar/(b1+S))
    A + B @2 -> A + C @2 : ma(1)   # copy tag 2 on both complexes
    A -> 0 : table(rates.json)

``<->`` takes exactly two rates (forward, backward), ``->`` exactly one.
``0`` is the empty complex.  Rate forms are ``ma(number)``, ``expr(...)``,
``table(path)`` and ``derived(name)``; the last two are opaque references
unless a resolver is supplied.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass
from typing import Callable, Mapping

from .kinetics import Expression, Kinetics, MassAction, Table, Unresolved, validate_expression
from .network import Complex, NetworkError, Reaction, ReactionNetwork, format_stoich


@dataclass(frozen=True)
class SourceSpan:
    line: int
    col_start: int
    col_end: int

    def __post_init__(self) -> None:
        if self.col_start > self.col_end:
            raise ValueError("span start after end")

    def __str__(self) -> str:
        return f"line {self.line}, columns {self.col_start}-{self.col_end}"


class ParseError(ValueError):
    def __init__(self, message: str, span: SourceSpan):
        super().__init__(f"{message} ({span})")
        self.message = message
        self.span = span


_SPECIES_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_*]*")
_NUMBER_RE = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")
_TERM_RE = re.compile(r"\s*(\d+)?\s*([A-Za-z_][A-Za-z0-9_*]*)\s*$")


@dataclass
class _RawComplex:
    terms: list[tuple[int, str]]
    tag: int
    span: SourceSpan


@dataclass
class _RawRate:
    kind: str
    arg: str
    span: SourceSpan
    arg_col: int


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def _parse_complex(text: str, lineno: int, col0: int) -> _RawComplex:
    """``text`` is the raw slice; ``col0`` its 1-based starting column."""
    stripped = text.strip()
    lead = len(text) - len(text.lstrip())
    start = col0 + lead
    span = SourceSpan(lineno, start, start + max(len(stripped), 1) - 1)
    if not stripped:
        raise ParseError("missing complex", span)
    tag = 0
    body = stripped
    if "@" in stripped:
        at = stripped.index("@")
        tag_txt = stripped[at + 1 :].strip()
        if not tag_txt.isdigit():
            c = start + at + 1
            raise ParseError("copy tag must be a non-negative integer", SourceSpan(lineno, c, c + max(len(stripped) - at - 2, 0)))
        tag = int(tag_txt)
        body = stripped[:at].rstrip()
    if body == "0":
        return _RawComplex([], tag, span)
    terms = []
    offset = 0
    for piece in body.split("+"):
        pcol = start + offset
        m = _TERM_RE.match(piece)
        if not m or not piece.strip():
            inner = len(piece) - len(piece.lstrip())
            s = pcol + inner
            raise ParseError(f"malformed term '{piece.strip()}'", SourceSpan(lineno, s, s + max(len(piece.strip()), 1) - 1))
        coef = int(m.group(1)) if m.group(1) else 1
        if coef == 0:
            s = pcol + m.start(1)
            raise ParseError("zero coefficient", SourceSpan(lineno, s, s + len(m.group(1)) - 1))
        terms.append((coef, m.group(2)))
        offset += len(piece) + 1
    return _RawComplex(terms, tag, span)


def _split_rates(text: str, lineno: int, col0: int) -> list[_RawRate]:
    parts: list[tuple[str, int]] = []
    depth = 0
    last = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ParseError("unbalanced ')'", SourceSpan(lineno, col0 + i, col0 + i))
        elif ch == "," and depth == 0:
            parts.append((text[last:i], col0 + last))
            last = i + 1
    if depth != 0:
        c = col0 + len(text.rstrip()) - 1
        raise ParseError("unbalanced '('", SourceSpan(lineno, c, c))
    parts.append((text[last:], col0 + last))
    rates = []
    for raw, c in parts:
        lead = len(raw) - len(raw.lstrip())
        s = raw.strip()
        start = c + lead
        span = SourceSpan(lineno, start, start + max(len(s), 1) - 1)
        m = re.match(r"([A-Za-z_]+)\s*\((.*)\)$", s, re.S)
        if not m:
            raise ParseError(f"expected rate like ma(1.0), got '{s}'", span)
        rates.append(_RawRate(m.group(1), m.group(2), span, start + s.index("(") + 1))
    return rates


def parse(
    text: str,
    params: Mapping[str, float] | None = None,
    base_dir: str | None = None,
    resolve: Callable[[str, str], Kinetics] | None = None,
) -> ReactionNetwork:
    """Parse the text format into a :class:`ReactionNetwork`.

    ``params`` supplies or overrides named constants.  ``table(path)`` is loaded
    relative to ``base_dir`` when the file exists; otherwise it stays an opaque
    reference.  ``resolve(kind, ref)`` may bind ``table``/``derived`` references.
    """
    species: list[str] = []
    declared = False
    file_params: dict[str, float] = {}
    pending = []
    seen: dict[tuple, SourceSpan] = {}

    def register(name: str, span: SourceSpan) -> None:
        if name == "0" or not _SPECIES_RE.fullmatch(name):
            raise ParseError(f"invalid species id '{name}'", span)
        if name not in species:
            if declared:
                raise ParseError(f"species '{name}' not declared", span)
            species.append(name)

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw_line)
        if not line.strip():
            continue
        lead = len(line) - len(line.lstrip())
        head = line.strip().split(None, 1)[0]
        if head == "species" and ":" not in line:
            if species:
                raise ParseError("species declaration must precede reactions", SourceSpan(lineno, lead + 1, lead + 7))
            names = line.strip()[len("species") :].replace(",", " ").split()
            col = lead + 1 + len("species")
            for nm in names:
                c = line.index(nm, col - 1) + 1
                register(nm, SourceSpan(lineno, c, c + len(nm) - 1))
                col = c + len(nm)
            declared = True
            continue
        if head == "param" and ":" not in line:
            m = re.match(r"\s*param\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\S+)\s*$", line)
            if not m:
                raise ParseError("expected 'param name = value'", SourceSpan(lineno, lead + 1, len(line.rstrip())))
            try:
                val = float(m.group(2))
            except ValueError:
                c = m.start(2) + 1
                raise ParseError(f"invalid number '{m.group(2)}'", SourceSpan(lineno, c, c + len(m.group(2)) - 1)) from None
            file_params[m.group(1)] = val
            continue
        colon = line.find(":")
        if colon < 0:
            raise ParseError("expected ':' followed by rate(s)", SourceSpan(lineno, lead + 1, len(line.rstrip())))
        lhs = line[:colon]
        if "<->" in lhs:
            arrow, a = "<->", lhs.index("<->")
        elif "->" in lhs:
            arrow, a = "->", lhs.index("->")
        else:
            raise ParseError("missing arrow '->' or '<->'", SourceSpan(lineno, lead + 1, max(len(lhs.rstrip()), lead + 1)))
        left = _parse_complex(lhs[:a], lineno, 1)
        right = _parse_complex(lhs[a + len(arrow) :], lineno, a + len(arrow) + 1)
        for cx in (left, right):
            for _, nm in cx.terms:
                register(nm, cx.span)
        rates = _split_rates(line[colon + 1 :], lineno, colon + 2)
        need = 2 if arrow == "<->" else 1
        if len(rates) != need:
            bad = rates[-1].span if rates else SourceSpan(lineno, colon + 1, colon + 1)
            raise ParseError(f"'{arrow}' takes exactly {need} rate(s), got {len(rates)}", bad)
        pending.append((left, right, rates[0]))
        if arrow == "<->":
            pending.append((right, left, rates[1]))

    all_params = dict(file_params)
    all_params.update(params or {})
    n = len(species)
    index: dict[tuple, int] = {}
    complexes: list[Complex] = []
    reactions: list[Reaction] = []

    def ensure(cx: _RawComplex) -> int:
        vec = [0] * n
        for coef, nm in cx.terms:
            vec[species.index(nm)] += coef
        key = (tuple(vec), cx.tag)
        if key not in index:
            index[key] = len(complexes)
            complexes.append(Complex(key[0], key[1]))
        return index[key]

    for left, right, rate in pending:
        s, t = ensure(left), ensure(right)
        if s == t:
            raise ParseError("reaction from a complex to itself", left.span)
        if (s, t) in seen:
            raise ParseError(f"duplicate reaction (first defined at {seen[(s, t)]})", left.span)
        seen[(s, t)] = left.span
        reactions.append(Reaction(s, t, _make_kinetics(rate, species, all_params, base_dir, resolve)))
    try:
        return ReactionNetwork(species, complexes, reactions, all_params)
    except NetworkError as exc:  # pragma: no cover - guarded above
        raise ParseError(str(exc), SourceSpan(1, 1, 1)) from exc


def _make_kinetics(rate: _RawRate, species, params, base_dir, resolve) -> Kinetics:
    kind, arg = rate.kind, rate.arg.strip()
    arg_span = SourceSpan(rate.span.line, rate.arg_col, rate.arg_col + max(len(rate.arg), 1) - 1)
    if kind == "ma":
        if not _NUMBER_RE.fullmatch(arg):
            if arg in params:
                val = params[arg]
            else:
                raise ParseError(f"ma() needs a number, got '{arg}'", arg_span)
        else:
            val = float(arg)
        if not (val > 0 and math.isfinite(val)):
            raise ParseError(f"rate constant must be positive, got {arg}", arg_span)
        return MassAction(val)
    if kind == "expr":
        try:
            validate_expression(rate.arg)
        except SyntaxError as exc:
            off = (exc.offset or 1) - 1
            c = rate.arg_col + max(0, min(off, len(rate.arg) - 1))
            raise ParseError(f"bad expression: {exc.msg}", SourceSpan(rate.span.line, c, c)) from None
        return Expression(arg, species, params)
    if kind in ("table", "derived"):
        if not arg:
            raise ParseError(f"{kind}() needs a reference", arg_span)
        if resolve is not None:
            k = resolve(kind, arg)
            if k is not None:
                return k
        if kind == "table" and base_dir is not None:
            path = os.path.join(base_dir, arg)
            if os.path.exists(path):
                return load_table(path, ref=arg)
        return Unresolved(kind, arg)
    raise ParseError(f"unknown kinetics keyword '{kind}'", SourceSpan(rate.span.line, rate.span.col_start, rate.span.col_start + len(kind) - 1))


def load_table(path: str, ref: str | None = None) -> Table:
    """Read a JSON list of ``[state, rate]`` pairs."""
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["entries"]
    return Table({tuple(s): float(r) for s, r in data}, ref=ref or os.path.basename(path))


def _fmt_number(v: float) -> str:
    return repr(float(v)) if not float(v).is_integer() else str(int(v)) if abs(v) < 1e15 else repr(float(v))


def _fmt_rate(k: Kinetics) -> str:
    d = k.descriptor()
    if d["kind"] == "mass_action":
        return f"ma({_fmt_number(d['rate_constant'])})"
    if d["kind"] == "expression":
        return f"expr({d['text']})"
    if d["kind"] == "table":
        return f"table({d.get('ref') or 'inline'})"
    return f"derived({d.get('ref', 'derived')})"


def _fmt_complex(net: ReactionNetwork, c: int) -> str:
    cx = net.complexes[c]
    body = format_stoich(cx.stoich, net.species)
    return body if cx.copy_tag == 0 else f"{body} @{cx.copy_tag}"


def print_network(net: ReactionNetwork) -> str:
    """Render ``net`` in the text format, in canonical (stoich, copy_tag) order.

    Reverse pairs are fused into ``<->`` lines.  Table and derived kinetics are
    written as opaque references.
    """
    if not net.reactions and not net.species:
        return ""
    rank = {c: i for i, c in enumerate(net.canonical_order())}
    lines = []
    if net.species:
        lines.append("species " + " ".join(net.species))
    for name in sorted(net.params):
        lines.append(f"param {name} = {_fmt_number(net.params[name])}")
    done = set()
    order = sorted(range(len(net.reactions)), key=lambda r: (rank[net.reactions[r].source], rank[net.reactions[r].target]))
    entries = []
    for r in order:
        if r in done:
            continue
        rx = net.reactions[r]
        back = net.reaction_index(rx.target, rx.source)
        if back is not None:
            a, b = (r, back) if rank[rx.source] < rank[rx.target] else (back, r)
            done.update((a, b))
            ra, rb = net.reactions[a], net.reactions[b]
            entries.append(
                ((rank[ra.source], rank[ra.target]),
                 f"{_fmt_complex(net, ra.source)} <-> {_fmt_complex(net, ra.target)} : {_fmt_rate(ra.kinetics)}, {_fmt_rate(rb.kinetics)}")
            )
        else:
            done.add(r)
            entries.append(
                ((rank[rx.source], rank[rx.target]),
                 f"{_fmt_complex(net, rx.source)} -> {_fmt_complex(net, rx.target)} : {_fmt_rate(rx.kinetics)}")
            )
    lines.extend(text for _, text in sorted(entries))
    return "\n".join(lines) + "\n"
