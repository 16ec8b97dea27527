"""The labelled tableau language.

Indices are two-sorted: renameable indices are plain ints, reserved constants
(signs of logical values and the like) are `Reserved` values and are never
renamed. A label is a function symbol applied to indices; an expression is a
labelled formula, a relational atom, or an equality atom, each optionally
carrying the tableau negation `~`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Collection, Iterable, Mapping, Union

from .syntax import App, Formula, render_formula

__all__ = [
    "Reserved",
    "IndexTerm",
    "Label",
    "Expression",
    "TaggedFormula",
    "RelAtom",
    "EqAtom",
    "ExpressionSet",
    "index_key",
    "expr_key",
    "canonical_order",
    "complement",
    "indices_of",
    "renameable_indices",
    "is_b_inconsistent",
    "find_complementary_pair",
    "are_similar",
    "apply_renaming",
    "fresh_index",
    "canonical_form",
    "canonical_renaming",
    "render_index",
    "render_label",
    "render_expression",
]


@dataclass(frozen=True, order=True)
class Reserved:
    """A reserved index constant. `rank` fixes its place in the canonical order."""

    rank: int
    name: str

    def __repr__(self) -> str:
        return f"Reserved({self.name!r})"


IndexTerm = Union[int, Reserved]


def index_key(i: IndexTerm) -> tuple:
    if type(i) is int:
        return (0, i)
    return (1, i.rank, i.name)


def render_index(i: IndexTerm, compact: bool = False) -> str:
    if type(i) is int:
        return str(i)
    if compact and i.name == "1/2":
        return "h"
    return i.name


class Label:
    """A function symbol applied to indices. Immutable; hash and sort key are cached."""

    __slots__ = ("fsym", "args", "_hash", "_key")

    def __init__(self, fsym: str, args: tuple[IndexTerm, ...]) -> None:
        if not args:
            raise ValueError("labels need at least one index")
        self.fsym = fsym
        self.args = tuple(args)
        self._hash = hash((fsym, self.args))
        self._key = (fsym, tuple(index_key(i) for i in self.args))

    def __eq__(self, other: object) -> bool:
        return self is other or (
            type(other) is Label and self.fsym == other.fsym and self.args == other.args
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Label({self.fsym!r}, {self.args!r})"

    @property
    def symbol(self) -> tuple[str, int]:
        return (self.fsym, len(self.args))

    def key(self) -> tuple:
        return self._key


class Expression:
    """Common base of the three expression kinds."""

    __slots__ = ()
    negated: bool

    def indices(self) -> tuple[IndexTerm, ...]:
        raise NotImplementedError

    def rename(self, b: Mapping[int, int]) -> "Expression":
        raise NotImplementedError

    def negate(self) -> "Expression":
        raise NotImplementedError

    def complement(self) -> "Expression":
        return self.negate()

    def __str__(self) -> str:
        return render_expression(self)


def _rn(i: IndexTerm, b: Mapping[int, int]) -> IndexTerm:
    return b.get(i, i) if type(i) is int else i


class TaggedFormula(Expression):
    """A formula with a label, optionally under the tableau negation."""

    __slots__ = ("formula", "negated", "label", "_hash", "_key", "_comp")

    def __init__(self, formula: Formula, negated: bool, label: Label) -> None:
        self.formula = formula
        self.negated = negated
        self.label = label
        self._hash = hash((formula, negated, label))
        text = formula._text
        self._key = (0, text if text is not None else render_formula(formula), label._key, negated)
        self._comp = None

    def __eq__(self, other: object) -> bool:
        return self is other or (
            type(other) is TaggedFormula
            and self._hash == other._hash
            and self.negated == other.negated
            and self.label == other.label
            and self.formula == other.formula
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"TaggedFormula({self.formula!r}, {self.negated}, {self.label!r})"

    def indices(self) -> tuple[IndexTerm, ...]:
        return self.label.args

    def rename(self, b: Mapping[int, int]) -> "TaggedFormula":
        args = tuple(_rn(i, b) for i in self.label.args)
        return TaggedFormula(self.formula, self.negated, Label(self.label.fsym, args))

    def negate(self) -> "TaggedFormula":
        return TaggedFormula(self.formula, not self.negated, self.label)

    def complement(self) -> "TaggedFormula":
        """The negated twin, built once and cached."""
        c = self._comp
        if c is None:
            c = self._comp = TaggedFormula(self.formula, not self.negated, self.label)
            c._comp = self
        return c


class RelAtom(Expression):
    """A relational atom r^psym(i, j, ...), optionally under the tableau negation."""

    __slots__ = ("psym", "negated", "args", "_hash", "_key")

    def __init__(self, psym: str, negated: bool, args: tuple[IndexTerm, ...]) -> None:
        if len(args) < 2:
            raise ValueError("relational atoms have arity >= 2")
        self.psym = psym
        self.negated = negated
        self.args = tuple(args)
        self._hash = hash(("rel", psym, negated, self.args))
        self._key = (1, psym, tuple(index_key(i) for i in self.args), negated)

    def __eq__(self, other: object) -> bool:
        return self is other or (
            type(other) is RelAtom
            and self._hash == other._hash
            and self.psym == other.psym
            and self.negated == other.negated
            and self.args == other.args
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"RelAtom({self.psym!r}, {self.negated}, {self.args!r})"

    def indices(self) -> tuple[IndexTerm, ...]:
        return self.args

    def rename(self, b: Mapping[int, int]) -> "RelAtom":
        return RelAtom(self.psym, self.negated, tuple(_rn(i, b) for i in self.args))

    def negate(self) -> "RelAtom":
        return RelAtom(self.psym, not self.negated, self.args)


class EqAtom(Expression):
    """An equality atom between two indices, optionally under the tableau negation."""

    __slots__ = ("negated", "left", "right", "_hash", "_key")

    def __init__(self, negated: bool, left: IndexTerm, right: IndexTerm) -> None:
        self.negated = negated
        self.left = left
        self.right = right
        self._hash = hash(("eq", negated, left, right))
        self._key = (2, "", (index_key(left), index_key(right)), negated)

    def __eq__(self, other: object) -> bool:
        return self is other or (
            type(other) is EqAtom
            and self.negated == other.negated
            and self.left == other.left
            and self.right == other.right
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"EqAtom({self.negated}, {self.left!r}, {self.right!r})"

    def indices(self) -> tuple[IndexTerm, ...]:
        return (self.left, self.right)

    def rename(self, b: Mapping[int, int]) -> "EqAtom":
        return EqAtom(self.negated, _rn(self.left, b), _rn(self.right, b))

    def negate(self) -> "EqAtom":
        return EqAtom(not self.negated, self.left, self.right)


ExpressionSet = frozenset
"""Expression sets are plain frozensets; `canonical_order` gives the fixed iteration order."""


def expr_key(e: Expression) -> tuple:
    return e._key


def canonical_order(xs: Iterable[Expression]) -> list[Expression]:
    return sorted(xs, key=expr_key)


def complement(e: Expression) -> Expression:
    return e.negate()


def indices_of(x: Expression | Iterable[Expression]) -> set[IndexTerm]:
    """The index-choosing function: every index occurring in `x`."""
    if isinstance(x, Expression):
        return set(x.indices())
    out: set[IndexTerm] = set()
    for e in x:
        out.update(e.indices())
    return out


def renameable_indices(xs: Iterable[Expression]) -> set[int]:
    return {i for e in xs for i in e.indices() if type(i) is int}


def find_complementary_pair(xs: Collection[Expression]) -> tuple[Expression, Expression] | None:
    """The canonically first (positive, negated) complementary pair, if any."""
    found = [e for e in xs if e.negated and e.negate() in xs]
    if not found:
        return None
    neg = min(found, key=expr_key)
    return (neg.negate(), neg)


def is_b_inconsistent(xs: Collection[Expression]) -> bool:
    return any(e.negated and e.negate() in xs for e in xs)


def apply_renaming(xs: Iterable[Expression], b: Mapping[int, int]) -> frozenset:
    """Rename renameable indices by `b`; indices outside its domain are kept."""
    return frozenset(e.rename(b) for e in xs)


def fresh_index(xs: Iterable[Expression]) -> int:
    """One more than the largest renameable index in use, or 1."""
    return max(renameable_indices(xs), default=0) + 1


# --- similarity ------------------------------------------------------------


def _shape(e: Expression) -> tuple:
    """Expression key with renameable indices erased; invariant under renaming."""
    idx = tuple(index_key(i) if type(i) is not int else None for i in e.indices())
    if type(e) is TaggedFormula:
        return (0, render_formula(e.formula), e.label.fsym, idx, e.negated)
    if type(e) is RelAtom:
        return (1, e.psym, idx, e.negated)
    return (2, "", idx, e.negated)


def _occurrences(xs: Iterable[Expression], tags: Mapping[Expression, int] | None):
    """Map each renameable index to its occurrences (shape, position, expression)."""
    occ: dict[int, list[tuple[tuple, int, Expression]]] = {}
    for e in xs:
        shape = (tags.get(e, 0) if tags else 0, _shape(e))
        for pos, i in enumerate(e.indices()):
            if type(i) is int:
                occ.setdefault(i, []).append((shape, pos, e))
    return occ


def _refine(occ, colors: dict[int, int]) -> dict[int, int]:
    """Colour refinement: split indices by the colours of their co-occurring indices."""
    while True:
        sig = {}
        for i, lst in occ.items():
            sig[i] = (
                colors[i],
                tuple(
                    sorted(
                        (shape, pos, tuple(colors[j] if type(j) is int else -1 for j in e.indices()))
                        for shape, pos, e in lst
                    )
                ),
            )
        ranks = {s: n for n, s in enumerate(sorted(set(sig.values())))}
        new = {i: ranks[s] for i, s in sig.items()}
        if len(set(new.values())) == len(set(colors.values())):
            return new
        colors = new


def _initial_colors(occ) -> dict[int, int]:
    sig = {i: tuple(sorted((shape, pos) for shape, pos, _ in lst)) for i, lst in occ.items()}
    ranks = {s: n for n, s in enumerate(sorted(set(sig.values())))}
    return {i: ranks[s] for i, s in sig.items()}


def are_similar(
    xs: Collection[Expression],
    ys: Collection[Expression],
    lv: Collection[Reserved] = (),
) -> dict[int, int] | None:
    """A bijection b on renameable indices with apply_renaming(xs, b) == ys, if one exists.

    Reserved constants are always fixed, so `lv` only documents which
    constants the caller considers value signs.
    """
    if len(xs) != len(ys):
        return None
    if sorted(map(_shape, xs)) != sorted(map(_shape, ys)):
        return None
    ox, oy = _occurrences(xs, None), _occurrences(ys, None)
    if len(ox) != len(oy):
        return None
    sigx = {i: tuple(sorted((s, p) for s, p, _ in lst)) for i, lst in ox.items()}
    sigy = {i: tuple(sorted((s, p) for s, p, _ in lst)) for i, lst in oy.items()}
    if sorted(sigx.values()) != sorted(sigy.values()):
        return None
    candidates = {i: [j for j in oy if sigy[j] == sigx[i]] for i in ox}
    order = sorted(ox, key=lambda i: (len(candidates[i]), i))
    yset = ys if isinstance(ys, (set, frozenset)) else set(ys)
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def consistent(i: int) -> bool:
        for _, _, e in ox[i]:
            if all(type(j) is not int or j in mapping for j in e.indices()):
                if e.rename(mapping) not in yset:
                    return False
        return True

    def search(k: int) -> bool:
        if k == len(order):
            return True
        i = order[k]
        for j in candidates[i]:
            if j in used:
                continue
            mapping[i] = j
            used.add(j)
            if consistent(i) and search(k + 1):
                return True
            del mapping[i]
            used.discard(j)
        return False

    if search(0):
        return dict(sorted(mapping.items()))
    return None


def canonical_form(
    xs: Iterable[Expression],
    lv: Collection[Reserved] = (),
    tags: Mapping[Expression, int] | None = None,
) -> frozenset:
    """A representative of the similarity class of `xs`.

    Two sets get equal canonical forms exactly when they are similar. Indices
    are relabelled 1, 2, ... in the order of their occurrence signatures; ties
    left after colour refinement are broken by individualisation, keeping the
    lexicographically least result. `tags` (expression -> int) are preserved
    by the relabelling; sequences are canonicalised by tagging each expression
    with the step at which it appeared.
    """
    xs = list(xs)
    return frozenset(e.rename(canonical_renaming(xs, lv, tags)) for e in xs)


def canonical_renaming(
    xs: Iterable[Expression],
    lv: Collection[Reserved] = (),
    tags: Mapping[Expression, int] | None = None,
) -> dict[int, int]:
    """The relabelling that canonical_form applies to `xs`."""
    xs = list(xs)
    occ = _occurrences(xs, tags)
    if not occ:
        return {}
    colors = _refine(occ, _initial_colors(occ))

    best: tuple | None = None
    best_map: dict[int, int] | None = None

    def encode(mapping: dict[int, int]) -> tuple:
        return tuple(
            sorted(((tags.get(e, 0) if tags else 0), expr_key(e.rename(mapping))) for e in xs)
        )

    def search(colors: dict[int, int]) -> None:
        nonlocal best, best_map
        classes: dict[int, list[int]] = {}
        for i, c in colors.items():
            classes.setdefault(c, []).append(i)
        target = next((c for c in sorted(classes) if len(classes[c]) > 1), None)
        if target is None:
            mapping = {i: c + 1 for i, c in colors.items()}
            code = encode(mapping)
            if best is None or code < best:
                best, best_map = code, mapping
            return
        for i in sorted(classes[target]):
            forced = {j: (c, j != i) for j, c in colors.items()}
            search(_refine(occ, _compress(forced)))

    search(colors)
    assert best_map is not None
    return best_map


def _compress(colors: dict[int, tuple]) -> dict[int, int]:
    ranks = {c: n for n, c in enumerate(sorted(set(colors.values())))}
    return {i: ranks[c] for i, c in colors.items()}


# --- rendering -------------------------------------------------------------


def render_label(label: Label, compact: bool = False) -> str:
    return f"{label.fsym}({', '.join(render_index(i, compact) for i in label.args)})"


def render_expression(
    e: Expression, implicit: Collection[str] = (), compact: bool = False
) -> str:
    """Trace rendering; labels whose symbol is in `implicit` are omitted."""
    neg = "~" if e.negated else ""
    if type(e) is TaggedFormula:
        body = render_formula(e.formula)
        shown = e.label.fsym not in implicit
        if (e.negated or shown) and isinstance(e.formula, App) and e.formula.connective.arity == 2:
            body = f"({body})"
        if not shown:
            return f"{neg}{body}"
        return f"{neg}{body} @ {render_label(e.label, compact)}"
    if type(e) is RelAtom:
        args = ",".join(render_index(i, compact) for i in e.args)
        return f"{neg}r^{e.psym}({args})"
    assert type(e) is EqAtom
    body = f"{render_index(e.left, compact)} == {render_index(e.right, compact)}"
    return f"!({body})" if e.negated else body
