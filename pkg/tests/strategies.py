"""Hypothesis strategies shared by the property suites."""

from __future__ import annotations

from hypothesis import strategies as st

from tabkit.logics import V0, V1, VH
from tabkit.syntax import NOT, App, Var
from tabkit.tablang import EqAtom, Label, RelAtom, TaggedFormula

FORMULAS = [Var("p"), Var("q"), App(NOT, (Var("p"),))]
VALUES = [V0, VH, V1]

indices = st.integers(min_value=1, max_value=6)


@st.composite
def expressions(draw):
    kind = draw(st.integers(0, 9))
    neg = draw(st.booleans())
    if kind < 4:
        return TaggedFormula(draw(st.sampled_from(FORMULAS)), neg, Label("w", (draw(indices),)))
    if kind < 7:
        label = Label("w", (draw(indices), draw(st.sampled_from(VALUES))))
        return TaggedFormula(draw(st.sampled_from(FORMULAS)), neg, label)
    if kind < 9:
        return RelAtom(draw(st.sampled_from(["K", "D"])), neg, (draw(indices), draw(indices)))
    return EqAtom(neg, draw(indices), draw(indices))


expression_sets = st.frozensets(expressions(), max_size=8)


@st.composite
def renamings(draw, xs):
    """A random bijection on the renameable indices of `xs` (into 1..12)."""
    idx = sorted({i for e in xs for i in e.indices() if type(i) is int})
    targets = draw(st.permutations(list(range(1, 13))))
    return dict(zip(idx, targets))


@st.composite
def sets_with_renaming(draw):
    xs = draw(expression_sets)
    return xs, draw(renamings(xs))


@st.composite
def inconsistent_sets(draw):
    xs = draw(expression_sets)
    e = draw(expressions())
    return frozenset(xs | {e, e.negate()})
