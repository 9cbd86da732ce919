"""Invariant terms: constructors, text syntax, three-valued evaluation, simplification.

Terms are immutable trees. The text syntax mirrors the constructor calls,
for example::

    IMPLIES(AND(OR(TimeInterval(800,950),TimeInterval(1000,1050)),Owner("A")),
            OccupyBox(143,4056,1536,2612))
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, FrozenSet, Iterator, Optional, Tuple, Union


class Invariant:
    """Base class of all terms."""

    __slots__ = ()

    def children(self) -> Tuple["Invariant", ...]:
        return ()

    def __str__(self) -> str:
        return serialize_invariant(self)


# -- connectives --------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class And(Invariant):
    lhs: Invariant
    rhs: Invariant

    def children(self):
        return (self.lhs, self.rhs)


@dataclass(frozen=True, slots=True)
class Or(Invariant):
    lhs: Invariant
    rhs: Invariant

    def children(self):
        return (self.lhs, self.rhs)


@dataclass(frozen=True, slots=True)
class Not(Invariant):
    t: Invariant

    def children(self):
        return (self.t,)


@dataclass(frozen=True, slots=True)
class Implies(Invariant):
    lhs: Invariant
    rhs: Invariant

    def children(self):
        return (self.lhs, self.rhs)


# -- atoms --------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TrueAtom(Invariant):
    pass


@dataclass(frozen=True, slots=True)
class FalseAtom(Invariant):
    pass


TRUE = TrueAtom()
FALSE = FalseAtom()


@dataclass(frozen=True, slots=True)
class TimePoint(Invariant):
    t: int


@dataclass(frozen=True, slots=True)
class TimeInterval(Invariant):
    t1: int
    t2: int

    def __post_init__(self):
        if self.t1 > self.t2:
            t1, t2 = self.t2, self.t1
            object.__setattr__(self, "t1", t1)
            object.__setattr__(self, "t2", t2)

    def contains(self, t: int) -> bool:
        return self.t1 <= t <= self.t2


@dataclass(frozen=True, slots=True)
class EventAtom(Invariant):
    label: str


@dataclass(frozen=True, slots=True)
class OwnerAtom(Invariant):
    label: str


@dataclass(frozen=True, slots=True)
class OccupyPoint(Invariant):
    x: int
    y: int


@dataclass(frozen=True, slots=True, order=True)
class OccupyBox(Invariant):
    """Axis-aligned lattice rectangle; corners are normalized per axis."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        x1, x2 = sorted((self.x1, self.x2))
        y1, y2 = sorted((self.y1, self.y2))
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "x2", x2)
        object.__setattr__(self, "y2", y2)

    @property
    def corners(self) -> Tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def lattice_size(self) -> int:
        return (self.x2 - self.x1 + 1) * (self.y2 - self.y1 + 1)

    def contains(self, x: int, y: int) -> bool:
        return self.x1 <= x <= self.x2 and self.y1 <= y <= self.y2


@dataclass(frozen=True, slots=True)
class Occupy3DBox(Invariant):
    x1: int
    y1: int
    z1: int
    x2: int
    y2: int
    z2: int

    def __post_init__(self):
        for lo, hi in (("x1", "x2"), ("y1", "y2"), ("z1", "z2")):
            a, b = getattr(self, lo), getattr(self, hi)
            if a > b:
                object.__setattr__(self, lo, b)
                object.__setattr__(self, hi, a)


@dataclass(frozen=True, slots=True)
class Edge(Invariant):
    source: str
    target: str


@dataclass(frozen=True, slots=True)
class Transition(Invariant):
    source: str
    event: str
    target: str


TEMPORAL_ATOMS = (TimePoint, TimeInterval)
SPATIAL_ATOMS = (OccupyPoint, OccupyBox, Occupy3DBox)


def node_count(inv: Invariant) -> int:
    return 1 + sum(node_count(c) for c in inv.children())


def walk(inv: Invariant) -> Iterator[Invariant]:
    """Pre-order traversal."""
    stack = [inv]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children()))


def transform(inv: Invariant, fn: Callable[[Invariant], Optional[Invariant]]) -> Invariant:
    """Bottom-up rewrite; ``fn`` returns a replacement or None to keep the node."""
    if isinstance(inv, (And, Or, Implies)):
        inv = type(inv)(transform(inv.lhs, fn), transform(inv.rhs, fn))
    elif isinstance(inv, Not):
        inv = Not(transform(inv.t, fn))
    out = fn(inv)
    return inv if out is None else out


# -- text syntax --------------------------------------------------------------


class InvariantSyntaxError(ValueError):
    def __init__(self, position: int, expected: str, found: str = ""):
        self.position = position
        self.expected = expected
        self.found = found
        where = "end of input" if found == "" else repr(found)
        super().__init__(f"at {position}: expected {expected}, found {where}")


class ArityError(ValueError):
    def __init__(self, name: str, expected: int, got: int, position: int):
        self.name = name
        self.expected = expected
        self.got = got
        self.position = position
        super().__init__(f"{name} takes {expected} argument(s), got {got} (at {position})")


# name -> (class, argument kinds); "t" = subterm, "i" = integer, "s" = string
_CONSTRUCTORS = {
    "AND": (And, "tt"),
    "OR": (Or, "tt"),
    "NOT": (Not, "t"),
    "IMPLIES": (Implies, "tt"),
    "TRUE": (TrueAtom, ""),
    "FALSE": (FalseAtom, ""),
    "TimePoint": (TimePoint, "i"),
    "TimeInterval": (TimeInterval, "ii"),
    "Event": (EventAtom, "s"),
    "Owner": (OwnerAtom, "s"),
    "OccupyPoint": (OccupyPoint, "ii"),
    "OccupyBox": (OccupyBox, "iiii"),
    "Occupy3DBox": (Occupy3DBox, "iiiiii"),
    "Edge": (Edge, "ss"),
    "Transition": (Transition, "sss"),
}
_NAMES = {cls: name for name, (cls, _) in _CONSTRUCTORS.items()}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            raise InvariantSyntaxError(self.pos, repr(ch), self.peek())
        self.pos += 1

    def ident(self) -> Tuple[str, int]:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
            self.pos += 1
        if start == self.pos:
            raise InvariantSyntaxError(start, "constructor name", self.peek())
        return self.text[start:self.pos], start

    def integer(self) -> int:
        self.skip_ws()
        start = self.pos
        if self.pos < len(self.text) and self.text[self.pos] in "+-":
            self.pos += 1
        digits = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if digits == self.pos:
            self.pos = start
            raise InvariantSyntaxError(start, "integer", self.peek())
        return int(self.text[start:self.pos])

    def string(self) -> str:
        self.skip_ws()
        if self.peek() != '"':
            raise InvariantSyntaxError(self.pos, "string literal", self.peek())
        self.pos += 1
        out = []
        while True:
            if self.pos >= len(self.text):
                raise InvariantSyntaxError(self.pos, "closing '\"'")
            ch = self.text[self.pos]
            if ch == '"':
                self.pos += 1
                return "".join(out)
            if ch == "\\":
                self.pos += 1
                if self.pos >= len(self.text):
                    raise InvariantSyntaxError(self.pos, "escaped character")
                ch = self.text[self.pos]
                if ch not in '"\\':
                    raise InvariantSyntaxError(self.pos, "'\"' or '\\\\' after backslash", ch)
            out.append(ch)
            self.pos += 1

    def term(self) -> Invariant:
        name, start = self.ident()
        if name not in _CONSTRUCTORS:
            raise InvariantSyntaxError(start, "constructor name", name)
        cls, kinds = _CONSTRUCTORS[name]
        self.expect("(")
        args = []
        if self.peek() != ")":
            while True:
                kind = kinds[len(args)] if len(args) < len(kinds) else self._guess_kind()
                args.append(self.argument(kind))
                if self.peek() == ",":
                    self.pos += 1
                    continue
                break
        self.expect(")")
        if len(args) != len(kinds):
            raise ArityError(name, len(kinds), len(args), start)
        if cls is TrueAtom:
            return TRUE
        if cls is FalseAtom:
            return FALSE
        return cls(*args)

    def _guess_kind(self) -> str:
        # surplus argument: consume whatever it is so ArityError can report the count
        ch = self.peek()
        if ch == '"':
            return "s"
        if ch.isdigit() or ch in "+-":
            return "i"
        return "t"

    def argument(self, kind: str):
        if kind == "t":
            return self.term()
        if kind == "i":
            return self.integer()
        return self.string()


def parse_invariant(text: str) -> Invariant:
    """Parse one term. Whitespace between tokens is ignored."""
    p = _Parser(text)
    inv = p.term()
    p.skip_ws()
    if p.pos != len(text):
        raise InvariantSyntaxError(p.pos, "end of input", text[p.pos])
    return inv


def parse_model(text: str) -> list:
    """One term per line; blank lines and ``#`` comments are skipped.

    Returns (line number, term) pairs so callers can report locations.
    """
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        out.append((lineno, parse_invariant(stripped)))
    return out


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def serialize_invariant(inv: Invariant) -> str:
    name = _NAMES[type(inv)]
    if isinstance(inv, (And, Or, Implies)):
        args = [serialize_invariant(inv.lhs), serialize_invariant(inv.rhs)]
    elif isinstance(inv, Not):
        args = [serialize_invariant(inv.t)]
    elif isinstance(inv, (TrueAtom, FalseAtom)):
        args = []
    elif isinstance(inv, TimePoint):
        args = [str(inv.t)]
    elif isinstance(inv, TimeInterval):
        args = [str(inv.t1), str(inv.t2)]
    elif isinstance(inv, (EventAtom, OwnerAtom)):
        args = [_quote(inv.label)]
    elif isinstance(inv, OccupyPoint):
        args = [str(inv.x), str(inv.y)]
    elif isinstance(inv, OccupyBox):
        args = [str(v) for v in inv.corners]
    elif isinstance(inv, Occupy3DBox):
        args = [str(v) for v in (inv.x1, inv.y1, inv.z1, inv.x2, inv.y2, inv.z2)]
    elif isinstance(inv, Edge):
        args = [_quote(inv.source), _quote(inv.target)]
    elif isinstance(inv, Transition):
        args = [_quote(inv.source), _quote(inv.event), _quote(inv.target)]
    else:  # pragma: no cover
        raise TypeError(f"not an invariant: {inv!r}")
    return f"{name}({','.join(args)})"


# -- evaluation ---------------------------------------------------------------


class Truth(enum.Enum):
    FALSE = 0
    UNKNOWN = 1
    TRUE = 2

    @classmethod
    def of(cls, value: bool) -> "Truth":
        return cls.TRUE if value else cls.FALSE

    def __invert__(self) -> "Truth":
        return Truth(2 - self.value)

    def __and__(self, other: "Truth") -> "Truth":
        return Truth(min(self.value, other.value))

    def __or__(self, other: "Truth") -> "Truth":
        return Truth(max(self.value, other.value))


@dataclass(frozen=True)
class AtomContext:
    time: int
    point: Optional[Tuple[int, int]] = None
    owners: FrozenSet[str] = field(default_factory=frozenset)
    events: FrozenSet[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "owners", frozenset(self.owners))
        object.__setattr__(self, "events", frozenset(self.events))
        if self.point is not None:
            object.__setattr__(self, "point", tuple(self.point))


def holds_at(inv: Invariant, ctx: AtomContext) -> Truth:
    """Kleene three-valued truth of ``inv`` in ``ctx``."""
    if isinstance(inv, And):
        return holds_at(inv.lhs, ctx) & holds_at(inv.rhs, ctx)
    if isinstance(inv, Or):
        return holds_at(inv.lhs, ctx) | holds_at(inv.rhs, ctx)
    if isinstance(inv, Not):
        return ~holds_at(inv.t, ctx)
    if isinstance(inv, Implies):
        return ~holds_at(inv.lhs, ctx) | holds_at(inv.rhs, ctx)
    if isinstance(inv, TrueAtom):
        return Truth.TRUE
    if isinstance(inv, FalseAtom):
        return Truth.FALSE
    if isinstance(inv, TimePoint):
        return Truth.of(ctx.time == inv.t)
    if isinstance(inv, TimeInterval):
        return Truth.of(inv.contains(ctx.time))
    if isinstance(inv, OwnerAtom):
        return Truth.of(inv.label in ctx.owners)
    if isinstance(inv, EventAtom):
        return Truth.of(inv.label in ctx.events)
    if isinstance(inv, OccupyBox):
        if ctx.point is None:
            return Truth.UNKNOWN
        return Truth.of(inv.contains(*ctx.point))
    if isinstance(inv, OccupyPoint):
        if ctx.point is None:
            return Truth.UNKNOWN
        return Truth.of(ctx.point == (inv.x, inv.y))
    # graph atoms and 3D boxes have no pointwise truth
    return Truth.UNKNOWN


# -- simplification -----------------------------------------------------------


def _rewrite(inv: Invariant) -> Optional[Invariant]:
    if isinstance(inv, And):
        a, b = inv.lhs, inv.rhs
        if a == FALSE or b == FALSE:
            return FALSE
        if a == TRUE:
            return b
        if b == TRUE or a == b:
            return a
    elif isinstance(inv, Or):
        a, b = inv.lhs, inv.rhs
        if a == TRUE or b == TRUE:
            return TRUE
        if a == FALSE:
            return b
        if b == FALSE or a == b:
            return a
    elif isinstance(inv, Not):
        t = inv.t
        if isinstance(t, Not):
            return t.t
        if t == TRUE:
            return FALSE
        if t == FALSE:
            return TRUE
    elif isinstance(inv, Implies):
        a, b = inv.lhs, inv.rhs
        if a == FALSE or b == TRUE:
            return TRUE
        if a == TRUE:
            return b
        if b == FALSE:
            return Not(a)
    return None


def _simplify_node(inv: Invariant) -> Optional[Invariant]:
    changed = False
    while True:
        out = _rewrite(inv)
        if out is None:
            return inv if changed else None
        inv, changed = out, True


def simplify(inv: Invariant) -> Invariant:
    """Apply the identity, absorption and negation laws until nothing changes.

    Every law strictly shrinks the term, so the loop terminates and the
    result never has more nodes than the input.
    """
    while True:
        out = transform(inv, _simplify_node)
        if out == inv:
            return out
        inv = out


TermLike = Union[Invariant, str]


def as_invariant(term: TermLike) -> Invariant:
    return parse_invariant(term) if isinstance(term, str) else term
