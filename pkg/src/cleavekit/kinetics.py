"""Rate functions attached to reactions.

Every kinetics object maps an integer state ``x`` (a tuple of species counts)
to a non-negative float.  Gating on the source complex (rate is zero unless
``x >= phi(source)``) is applied by :meth:`ReactionNetwork.rate`, so the
classes here only describe the raw rate law.
"""

from __future__ import annotations

import ast
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

State = tuple[int, ...]


class KineticsError(ValueError):
    """Raised when a rate law cannot be evaluated (unbound symbol, 1/0, negative rate)."""


class Kinetics:
    """Base class. Subclasses implement ``__call__(x, source)``."""

    kind: str = "abstract"

    def __call__(self, x: State, source: State) -> float:  # pragma: no cover
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class MassAction(Kinetics):
    """Stochastic mass action: ``alpha * prod_i x_i! / (x_i - y_i)!``."""

    rate_constant: float
    kind: str = field(default="mass_action", init=False, repr=False)

    def __post_init__(self) -> None:
        if not (self.rate_constant > 0 and math.isfinite(self.rate_constant)):
            raise KineticsError(f"mass-action constant must be positive, got {self.rate_constant}")

    def __call__(self, x: State, source: State) -> float:
        val = float(self.rate_constant)
        for xi, yi in zip(x, source):
            for j in range(yi):
                val *= xi - j
        return val if val > 0 else 0.0

    def descriptor(self) -> dict:
        return {"kind": "mass_action", "rate_constant": self.rate_constant}

    def as_expression(self, source: State, species: Sequence[str]) -> "Expression":
        """The same rate law written out for ``source``, independent of where it is attached."""
        factors = [repr(float(self.rate_constant))]
        for name, yi in zip(species, source):
            v = _py_name(name)
            factors += [v if j == 0 else f"({v}-{j})" for j in range(yi)]
        return Expression("*".join(factors), species)


_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div)
_ALLOWED_UNARY = (ast.UAdd, ast.USub)


def validate_expression(text: str) -> tuple[ast.Expression, list[tuple[str, int, int]]]:
    """Parse ``text`` as arithmetic and return the tree plus ``(name, col, end_col)`` uses.

    Raises ``SyntaxError`` (with ``offset``) on anything beyond + - * / and parentheses.
    """
    tree = ast.parse(text.strip() or "()", mode="eval")
    names: list[tuple[str, int, int]] = []
    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.Load)) or isinstance(node, _ALLOWED_BINOPS + _ALLOWED_UNARY):
            continue
        if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
            continue
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, _ALLOWED_UNARY):
            continue
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            continue
        if isinstance(node, ast.Name):
            names.append((node.id, node.col_offset, node.end_col_offset or node.col_offset + len(node.id)))
            continue
        err = SyntaxError(f"unsupported construct in expression: {type(node).__name__}")
        err.offset = getattr(node, "col_offset", 0) + 1
        err.end_offset = getattr(node, "end_col_offset", None)
        raise err
    return tree, names


def _py_name(species_id: str) -> str:
    return species_id.replace("*", "star")


class Expression(Kinetics):
    """Arithmetic rate law over species counts and named parameters.

    Species ids containing ``*`` are referenced with ``star`` instead
    (``E*`` is written ``Estar``).  Unbound names raise at evaluation time.
    """

    kind = "expression"

    def __init__(self, text: str, species: Sequence[str], params: Mapping[str, float] | None = None):
        self.text = text.strip()
        self.species = tuple(species)
        self.params = dict(params or {})
        tree, names = validate_expression(self.text)
        self._code = compile(tree, "<rate>", "eval")
        index = {_py_name(s): i for i, s in enumerate(self.species)}
        index.update({s: i for i, s in enumerate(self.species) if s.isidentifier()})
        self._slots: list[tuple[str, int]] = []
        self._consts: dict[str, float] = {}
        self.free_symbols: set[str] = set()
        for name, _, _ in names:
            if name in index:
                self._slots.append((name, index[name]))
            elif name in self.params:
                self._consts[name] = float(self.params[name])
            else:
                self.free_symbols.add(name)
        self._slots = sorted(set(self._slots))

    def __call__(self, x: State, source: State) -> float:
        if self.free_symbols:
            raise KineticsError(f"unbound symbol(s) {sorted(self.free_symbols)} in '{self.text}'")
        env = dict(self._consts)
        for name, i in self._slots:
            env[name] = x[i]
        try:
            val = eval(self._code, {"__builtins__": {}}, env)  # validated arithmetic only
        except ZeroDivisionError as exc:
            raise KineticsError(f"division by zero evaluating '{self.text}' at {x}") from exc
        val = float(val)
        if val < 0 or not math.isfinite(val):
            raise KineticsError(f"rate '{self.text}' evaluates to {val} at {x}")
        return val

    def descriptor(self) -> dict:
        return {"kind": "expression", "text": self.text}

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Expression)
            and self.text == other.text
            and self.species == other.species
            and self.params == other.params
        )

    def __hash__(self) -> int:
        return hash((self.text, self.species))

    def __repr__(self) -> str:
        return f"Expression({self.text!r})"


class Table(Kinetics):
    """Explicit state -> rate map; states absent from the table have rate 0."""

    kind = "table"

    def __init__(self, entries: Mapping[State, float], ref: str | None = None):
        self.entries = {tuple(int(v) for v in k): float(r) for k, r in entries.items()}
        for k, r in self.entries.items():
            if r < 0 or not math.isfinite(r):
                raise KineticsError(f"table rate at {k} must be finite and >= 0, got {r}")
        self.ref = ref

    def __call__(self, x: State, source: State) -> float:
        return self.entries.get(tuple(x), 0.0)

    def descriptor(self) -> dict:
        d: dict = {"kind": "table", "entries": [[list(k), v] for k, v in sorted(self.entries.items())]}
        if self.ref:
            d["ref"] = self.ref
        return d

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Table) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(tuple(sorted(self.entries.items())))

    def __repr__(self) -> str:
        return f"Table({self.ref or len(self.entries)})"


class Derived(Kinetics):
    """Lazily evaluated rate rule, memoized per state.

    ``fn`` receives the state only.  The memo is guarded by a lock so one
    instance can be evaluated from several threads.
    """

    kind = "derived"

    def __init__(self, fn: Callable[[State], float], ref: str = "derived"):
        self.fn = fn
        self.ref = ref
        self._memo: dict[State, float] = {}
        self._lock = threading.Lock()

    def __call__(self, x: State, source: State) -> float:
        x = tuple(x)
        with self._lock:
            hit = self._memo.get(x)
        if hit is not None:
            return hit
        val = float(self.fn(x))
        if val < 0:
            if val > -1e-12:
                val = 0.0
            else:
                raise KineticsError(f"derived rate {self.ref} is negative ({val}) at {x}")
        with self._lock:
            self._memo.setdefault(x, val)
        return val

    def descriptor(self) -> dict:
        return {"kind": "derived", "ref": self.ref}

    def __repr__(self) -> str:
        return f"Derived({self.ref})"


class Unresolved(Kinetics):
    """Placeholder for an opaque reference read back from text or JSON."""

    def __init__(self, kind: str, ref: str):
        self.kind = kind
        self.ref = ref

    def __call__(self, x: State, source: State) -> float:
        raise KineticsError(f"{self.kind} kinetics '{self.ref}' is not bound to data")

    def descriptor(self) -> dict:
        return {"kind": self.kind, "ref": self.ref}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Unresolved) and (self.kind, self.ref) == (other.kind, other.ref)

    def __hash__(self) -> int:
        return hash((self.kind, self.ref))

    def __repr__(self) -> str:
        return f"Unresolved({self.kind}:{self.ref})"


def sum_kinetics(parts: Sequence[Kinetics], source: State, ref: str = "sum") -> Kinetics:
    """Pointwise sum of rate laws sharing one source stoichiometry."""
    parts = list(parts)
    if len(parts) == 1:
        return parts[0]
    if all(isinstance(p, MassAction) for p in parts):
        return MassAction(sum(p.rate_constant for p in parts))
    src = tuple(source)
    return Derived(lambda x: sum(p(x, src) for p in parts), ref=ref)


def kinetics_from_descriptor(d: Mapping, species: Sequence[str], params: Mapping[str, float] | None = None) -> Kinetics:
    kind = d.get("kind")
    if kind == "mass_action":
        return MassAction(float(d["rate_constant"]))
    if kind == "expression":
        return Expression(d["text"], species, params)
    if kind == "table":
        if "entries" in d:
            return Table({tuple(s): r for s, r in d["entries"]}, ref=d.get("ref"))
        return Unresolved("table", d.get("ref", "?"))
    if kind == "derived":
        return Unresolved("derived", d.get("ref", "?"))
    raise KineticsError(f"unknown kinetics kind {kind!r}")
