"""Formulas over connective signatures: representation, parsing, printing, enumeration."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence

__all__ = [
    "Connective",
    "Signature",
    "Formula",
    "Var",
    "App",
    "FormulaError",
    "ParseError",
    "UnknownConnectiveError",
    "NOT",
    "AND",
    "OR",
    "IMP",
    "IFF",
    "DIA",
    "KNOW",
    "parse_formula",
    "render_formula",
    "vars_of",
    "ordered_vars",
    "depth",
    "subformulas",
    "enumerate_formulas",
    "count_formulas",
]


@dataclass(frozen=True)
class Connective:
    """A connective with its display token and fixity.

    Binary connectives are infix, unary ones prefix. `prec` orders binding
    strength (higher binds tighter) and `assoc` is "left" or "right".
    """

    id: str
    arity: int
    token: str
    prec: int = 0
    assoc: str = "left"

    def __post_init__(self) -> None:
        if self.arity < 0:
            raise ValueError(f"negative arity for {self.id}")
        if self.arity > 2:
            raise ValueError(f"connective {self.id}: only arity 1 and 2 have a surface syntax")


NOT = Connective("not", 1, "!", prec=5)
DIA = Connective("dia", 1, "<>", prec=5)
KNOW = Connective("know", 1, "K", prec=5)
AND = Connective("and", 2, "&", prec=4, assoc="left")
OR = Connective("or", 2, "|", prec=3, assoc="left")
IMP = Connective("imp", 2, "->", prec=2, assoc="right")
IFF = Connective("iff", 2, "<->", prec=1, assoc="left")

_GRAMMAR = {c.token: c for c in (NOT, DIA, KNOW, AND, OR, IMP, IFF)}


@dataclass(frozen=True)
class Signature:
    connectives: tuple[Connective, ...]

    def __post_init__(self) -> None:
        ids = [c.id for c in self.connectives]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate connective id in signature")
        keys = [(c.token, c.arity) for c in self.connectives]
        if len(set(keys)) != len(keys):
            raise ValueError("two connectives share a token and fixity")

    def by_token(self, token: str, arity: int) -> Connective | None:
        for c in self.connectives:
            if c.token == token and c.arity == arity:
                return c
        return None

    def by_id(self, id: str) -> Connective:
        for c in self.connectives:
            if c.id == id:
                return c
        raise KeyError(id)

    def __contains__(self, c: object) -> bool:
        return c in self.connectives


class Formula:
    """Base class of formulas. Instances are immutable and hash-cached."""

    __slots__ = ()

    def __str__(self) -> str:
        return render_formula(self)


@dataclass(frozen=True, eq=False, slots=True)
class Var(Formula):
    name: str
    _hash: int = field(init=False, repr=False, compare=False)
    _text: str = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_hash", hash(("var", self.name)))
        object.__setattr__(self, "_text", self.name)

    def __eq__(self, other: object) -> bool:
        return self is other or (type(other) is Var and other.name == self.name)

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Var({self.name!r})"


@dataclass(frozen=True, eq=False, slots=True)
class App(Formula):
    connective: Connective
    args: tuple[Formula, ...]
    _hash: int = field(init=False, repr=False, compare=False)
    _text: str | None = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.args) != self.connective.arity:
            raise ValueError(
                f"{self.connective.id} expects {self.connective.arity} arguments, got {len(self.args)}"
            )
        object.__setattr__(self, "_hash", hash((self.connective.id, *self.args)))
        object.__setattr__(self, "_text", None)

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        return (
            type(other) is App
            and other._hash == self._hash
            and other.connective == self.connective
            and other.args == self.args
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"App({self.connective.id}, {list(self.args)!r})"


class FormulaError(ValueError):
    """Raised on malformed formula text; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ParseError(FormulaError):
    pass


class UnknownConnectiveError(FormulaError):
    pass


_TOKEN = re.compile(r"\s*(?:(<->|->|<>|[!&|()])|([a-z][a-z0-9_]*)|(K)(?![A-Za-z0-9_]))")


def _lex(text: str) -> list[tuple[str, str, int]]:
    tokens: list[tuple[str, str, int]] = []
    pos = 0
    raw = text.encode("utf-8")
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            offset = len(text[:pos].encode("utf-8"))
            raise ParseError(f"unexpected character {text[pos]!r}", offset)
        op, ident, k = m.groups()
        start = m.start(1) if op else m.start(2) if ident else m.start(3)
        offset = len(text[:start].encode("utf-8"))
        if op:
            tokens.append(("op", op, offset))
        elif ident:
            tokens.append(("var", ident, offset))
        else:
            tokens.append(("op", "K", offset))
        pos = m.end()
    tokens.append(("end", "", len(raw)))
    return tokens


class _Parser:
    def __init__(self, text: str, sig: Signature) -> None:
        self.tokens = _lex(text)
        self.pos = 0
        self.sig = sig

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def connective(self, token: str, arity: int, offset: int) -> Connective:
        c = self.sig.by_token(token, arity)
        if c is None:
            raise UnknownConnectiveError(f"connective {token!r} is not in the signature", offset)
        return c

    def binary(self, min_prec: int) -> Formula:
        left = self.unary()
        while True:
            kind, text, offset = self.peek()
            g = _GRAMMAR.get(text) if kind == "op" else None
            if g is None or g.arity != 2 or g.prec < min_prec:
                return left
            self.take()
            c = self.connective(text, 2, offset)
            right = self.binary(g.prec if g.assoc == "right" else g.prec + 1)
            left = App(c, (left, right))

    def unary(self) -> Formula:
        kind, text, offset = self.take()
        if kind == "var":
            return Var(text)
        if kind == "op" and text == "(":
            inner = self.binary(0)
            kind2, text2, offset2 = self.take()
            if text2 != ")":
                raise ParseError("expected ')'", offset2)
            return inner
        if kind == "op" and text in _GRAMMAR and _GRAMMAR[text].arity == 1:
            c = self.connective(text, 1, offset)
            return App(c, (self.unary(),))
        if kind == "end":
            raise ParseError("unexpected end of input", offset)
        raise ParseError(f"unexpected token {text!r}", offset)


def parse_formula(text: str, sig: Signature) -> Formula:
    """Parse ASCII formula syntax into a Formula over `sig`."""
    if not text.strip():
        raise ParseError("empty formula", 0)
    parser = _Parser(text, sig)
    f = parser.binary(0)
    kind, tok, offset = parser.peek()
    if kind != "end":
        raise ParseError(f"unexpected token {tok!r}", offset)
    return f


def _prec(f: Formula) -> int:
    if isinstance(f, App):
        return f.connective.prec
    return 99


def render_formula(f: Formula) -> str:
    """Render with minimal parentheses; the result parses back to `f`."""
    text = f._text
    if text is not None:
        return text
    assert isinstance(f, App)
    c = f.connective
    if c.arity == 1:
        arg = f.args[0]
        inner = render_formula(arg)
        if isinstance(arg, App) and arg.connective.arity == 2:
            inner = f"({inner})"
        sep = " " if c.token[-1].isalpha() else ""
        text = f"{c.token}{sep}{inner}"
    elif c.arity == 2:
        left, right = f.args
        ls, rs = render_formula(left), render_formula(right)
        lp, rp = _prec(left), _prec(right)
        if lp < c.prec or (lp == c.prec and c.assoc == "right"):
            ls = f"({ls})"
        if rp < c.prec or (rp == c.prec and c.assoc == "left"):
            rs = f"({rs})"
        text = f"{ls} {c.token} {rs}"
    else:
        text = c.token
    object.__setattr__(f, "_text", text)
    return text


def ordered_vars(f: Formula) -> tuple[str, ...]:
    """Variable names of `f` in order of first occurrence (left to right)."""
    seen: dict[str, None] = {}
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, Var):
            seen.setdefault(g.name)
        else:
            stack.extend(reversed(g.args))
    return tuple(seen)


def vars_of(f: Formula) -> frozenset[str]:
    return frozenset(ordered_vars(f))


def depth(f: Formula) -> int:
    if isinstance(f, Var):
        return 0
    return 1 + max((depth(a) for a in f.args), default=-1)


def subformulas(f: Formula) -> Iterator[Formula]:
    """All subformulas, children before parents, without repeats."""
    seen: set[Formula] = set()

    def walk(g: Formula) -> Iterator[Formula]:
        if g in seen:
            return
        if isinstance(g, App):
            for a in g.args:
                yield from walk(a)
        seen.add(g)
        yield g

    yield from walk(f)


def enumerate_formulas(sig: Signature, vars: Sequence[str], max_depth: int) -> Iterator[Formula]:
    """Every formula of depth <= max_depth over `vars`, each exactly once.

    Order is depth-major. Within one depth, formulas are grouped by connective
    in signature order, and argument tuples follow the lexicographic order of
    their positions in the enumeration so far.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be non-negative")
    if not vars:
        raise ValueError("at least one variable is required")
    layers: list[list[Formula]] = [[Var(v) for v in sorted(set(vars))]]
    yield from layers[0]
    for d in range(1, max_depth + 1):
        below = [f for layer in layers for f in layer]
        cut = len(below) - len(layers[-1])
        layer: list[Formula] = []
        for c in sig.connectives:
            for idx in itertools.product(range(len(below)), repeat=c.arity):
                if c.arity and max(idx) >= cut:
                    f = App(c, tuple(below[i] for i in idx))
                    if d < max_depth:
                        layer.append(f)
                    yield f
        layers.append(layer)


def count_formulas(sig: Signature, n_vars: int, max_depth: int) -> int:
    """Number of formulas of depth <= max_depth, by the standard recurrence."""
    total = n_vars
    for _ in range(max_depth):
        total = n_vars + sum(total ** c.arity for c in sig.connectives)
    return total
