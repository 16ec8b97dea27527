"""Rule schemas: a finite, guarded presentation of tableau rules.

A schema has premise templates, guards, and one or more alternatives. Matching
the premises against an expression set yields substitutions; instantiating a
substitution yields a `RuleInstance` (the input set plus one output per
alternative) or nothing when the rule does not apply.
"""

from __future__ import annotations

import bisect
import itertools
import json
import random
from dataclasses import dataclass, field
from typing import Any, Collection, Iterable, Iterator, Mapping, Sequence, Union

from .syntax import App, Connective, Formula, Var, ordered_vars, render_formula
from .tablang import (
    EqAtom,
    Expression,
    IndexTerm,
    Label,
    RelAtom,
    Reserved,
    TaggedFormula,
    apply_renaming,
    are_similar,
    expr_key,
    index_key,
    is_b_inconsistent,
    render_expression,
    render_index,
    renameable_indices,
)

__all__ = [
    "Meta",
    "Pat",
    "LabelT",
    "TF",
    "Rel",
    "Eq",
    "EachVar",
    "Mark",
    "MarkFact",
    "Alt",
    "PerVar",
    "Fresh",
    "AbsentInstance",
    "Distinct",
    "ValueIn",
    "Marked",
    "RuleSchema",
    "RuleInstance",
    "Substitution",
    "ExpressionIndex",
    "match_core",
    "instantiate",
    "applicable_instances",
    "AuditEntry",
    "AuditReport",
    "audit_rule_schema",
    "render_substitution",
]


# --- patterns and templates --------------------------------------------------


@dataclass(frozen=True)
class Meta:
    """Formula metavariable."""

    name: str


@dataclass(frozen=True)
class Pat:
    """Formula pattern with a fixed head connective."""

    connective: Connective
    args: tuple["FormulaPattern", ...]


FormulaPattern = Union[Meta, Pat]
IndexPattern = Union[str, Reserved]  # str = index or value metavariable

VAR_SLOT = "$v"  # bound to each variable in turn by EachVar / PerVar


@dataclass(frozen=True)
class LabelT:
    fsym: str
    args: tuple[IndexPattern, ...]


@dataclass(frozen=True)
class TF:
    formula: FormulaPattern
    label: LabelT
    negated: bool = False


@dataclass(frozen=True)
class Rel:
    psym: str
    args: tuple[IndexPattern, ...]
    negated: bool = False


@dataclass(frozen=True)
class Eq:
    left: IndexPattern
    right: IndexPattern
    negated: bool = False


Template = Union[TF, Rel, Eq]


@dataclass(frozen=True)
class EachVar:
    """Inside an alternative: one copy of `template` per variable of the formula bound to `meta`."""

    meta: str
    template: TF


@dataclass(frozen=True)
class Mark:
    """Provenance note recorded on the branch when an alternative is taken."""

    name: str
    formulas: tuple[str, ...] = ()
    indices: tuple[str, ...] = ()


@dataclass(frozen=True)
class MarkFact:
    name: str
    formulas: tuple[Formula, ...]
    indices: tuple[IndexTerm, ...]

    def rename(self, b: Mapping[int, int]) -> "MarkFact":
        return MarkFact(
            self.name,
            self.formulas,
            tuple(b.get(i, i) if type(i) is int else i for i in self.indices),
        )

    def __str__(self) -> str:
        parts = [render_formula(f) for f in self.formulas]
        parts += [render_index(i) for i in self.indices]
        return f"{self.name}({', '.join(parts)})"


@dataclass(frozen=True)
class Alt:
    templates: tuple[Union[Template, EachVar], ...]
    marks: tuple[Mark, ...] = ()


@dataclass(frozen=True)
class PerVar:
    """Expands into one alternative per variable of `meta`, in first-occurrence order."""

    meta: str
    templates: tuple[Template, ...]


@dataclass(frozen=True)
class Fresh:
    var: str


@dataclass(frozen=True)
class AbsentInstance:
    """Fails when some extension of the substitution puts all templates in the input.

    Metavariables in `distinct` pairs must take different values in the extension.
    """

    templates: tuple[Template, ...]
    distinct: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Distinct:
    """Bound values differ; with `ordered`, the first must precede the second."""

    a: str
    b: str
    ordered: bool = False


@dataclass(frozen=True)
class ValueIn:
    var: str
    values: frozenset


@dataclass(frozen=True)
class Marked:
    """The branch history carries the instantiated mark."""

    mark: Mark


Guard = Union[Fresh, AbsentInstance, Distinct, ValueIn, Marked]
_NO_MARKS: frozenset = frozenset()
Substitution = Mapping[str, Any]


def _template_metas(t) -> set[str]:
    out: set[str] = set()

    def fp(p: FormulaPattern) -> None:
        if isinstance(p, Meta):
            out.add(p.name)
        else:
            for a in p.args:
                fp(a)

    def ip(args: Iterable[IndexPattern]) -> None:
        out.update(a for a in args if isinstance(a, str))

    if isinstance(t, TF):
        fp(t.formula)
        ip(t.label.args)
    elif isinstance(t, Rel):
        ip(t.args)
    elif isinstance(t, Eq):
        ip((t.left, t.right))
    elif isinstance(t, EachVar):
        out.add(t.meta)
        out |= _template_metas(t.template) - {VAR_SLOT}
    elif isinstance(t, Mark):
        out.update(t.formulas)
        out.update(t.indices)
    return out


@dataclass(frozen=True)
class RuleSchema:
    name: str
    premises: tuple[Template, ...]
    alternatives: tuple[Union[Alt, PerVar], ...]
    guards: tuple[Guard, ...] = ()
    fresh: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.alternatives:
            raise ValueError(f"{self.name}: a rule needs at least one alternative")
        bound: set[str] = set()
        for p in self.premises:
            bound |= _template_metas(p)
        bound |= set(self.fresh)
        for alt in self.alternatives:
            if isinstance(alt, Alt):
                if not alt.templates:
                    raise ValueError(f"{self.name}: empty alternative")
                used = set().union(*(_template_metas(t) for t in alt.templates + alt.marks))
            else:
                used = {alt.meta}.union(*(_template_metas(t) for t in alt.templates)) - {VAR_SLOT}
            if not used <= bound:
                raise ValueError(f"{self.name}: unbound metavariables {sorted(used - bound)}")
        plain = [a for a in self.alternatives if isinstance(a, Alt)]
        if len(set(plain)) != len(plain):
            raise ValueError(f"{self.name}: duplicate alternatives")
        for g in self.guards:
            if isinstance(g, (Distinct,)):
                need = {g.a, g.b}
            elif isinstance(g, (ValueIn, Fresh)):
                need = {g.var}
            elif isinstance(g, Marked):
                need = _template_metas(g.mark)
            else:
                need = set()
            if not need <= bound:
                raise ValueError(f"{self.name}: guard uses unbound {sorted(need - bound)}")

    @property
    def _simple(self) -> tuple[tuple[Template, ...], ...] | None:
        """Alternatives as plain template lists when there are no guards, fresh or per-variable parts."""
        try:
            return self.__dict__["_simple_cache"]
        except KeyError:
            pass
        out = None
        if not self.guards and not self.fresh and all(
            isinstance(a, Alt) and not a.marks and not any(isinstance(t, EachVar) for t in a.templates)
            for a in self.alternatives
        ):
            out = tuple(a.templates for a in self.alternatives)
        object.__setattr__(self, "_simple_cache", out)
        return out

    @property
    def _matchers(self) -> tuple:
        try:
            return self.__dict__["_matchers_cache"]
        except KeyError:
            out = tuple(_matcher(t) for t in self.premises)
            object.__setattr__(self, "_matchers_cache", out)
            return out

    @property
    def branching(self) -> bool:
        return len(self.alternatives) > 1 or any(isinstance(a, PerVar) for a in self.alternatives)

    def symbols(self) -> tuple[set[tuple[str, int]], set[tuple[str, int]], set[Reserved]]:
        """Label symbols, predicate symbols and reserved constants used anywhere."""
        labels: set[tuple[str, int]] = set()
        preds: set[tuple[str, int]] = set()
        consts: set[Reserved] = set()
        templates: list = list(self.premises)
        for alt in self.alternatives:
            for t in alt.templates:
                templates.append(t.template if isinstance(t, EachVar) else t)
        for g in self.guards:
            if isinstance(g, AbsentInstance):
                templates.extend(g.templates)
            if isinstance(g, ValueIn):
                consts |= set(g.values)
        for t in templates:
            if isinstance(t, TF):
                labels.add((t.label.fsym, len(t.label.args)))
                consts |= {a for a in t.label.args if isinstance(a, Reserved)}
            elif isinstance(t, Rel):
                preds.add((t.psym, len(t.args)))
                consts |= {a for a in t.args if isinstance(a, Reserved)}
            elif isinstance(t, Eq):
                consts |= {a for a in (t.left, t.right) if isinstance(a, Reserved)}
        return labels, preds, consts


# --- matching ------------------------------------------------------------------


def _bind(sigma: dict, name: str, value: Any) -> dict | None:
    old = sigma.get(name)
    if old is None:
        new = dict(sigma)
        new[name] = value
        return new
    return sigma if old == value else None


def _match_formula(p: FormulaPattern, f: Formula, sigma: dict) -> dict | None:
    if type(p) is Meta:
        return _bind(sigma, p.name, f)
    if type(f) is not App or f.connective != p.connective:
        return None
    for sp, sf in zip(p.args, f.args):
        sigma = _match_formula(sp, sf, sigma)
        if sigma is None:
            return None
    return sigma


def _match_indices(ps: Sequence[IndexPattern], xs: Sequence[IndexTerm], sigma: dict) -> dict | None:
    if len(ps) != len(xs):
        return None
    for p, x in zip(ps, xs):
        if type(p) is str:
            sigma = _bind(sigma, p, x)
            if sigma is None:
                return None
        elif p != x:
            return None
    return sigma


def _match(t: Template, e: Expression, sigma: dict) -> dict | None:
    """Extend sigma so that t instantiates to e, or None."""
    return _matcher(t)(e, sigma)


_MATCHERS: dict = {}


def _matcher(t: Template):
    """A specialised matching function for one template, generated once and cached."""
    m = _MATCHERS.get(t)
    if m is None:
        m = _MATCHERS[t] = _compile_matcher(t)
    return m


def _compile_matcher(t: Template):
    consts: dict[str, Any] = {}
    lines: list[str] = []
    bound: set[str] = set()

    def const(v: Any) -> str:
        name = f"c{len(consts)}"
        consts[name] = v
        return name

    def bind(meta: str, expr: str) -> None:
        if meta in bound:
            lines.append(f"if s[{meta!r}] != {expr}: return None")
        else:
            bound.add(meta)
            lines.append(f"v = s.get({meta!r})")
            lines.append(f"if v is None: s[{meta!r}] = {expr}")
            lines.append(f"elif v != {expr}: return None")

    def indices(ps: Sequence[IndexPattern], expr: str) -> None:
        lines.append(f"a = {expr}")
        lines.append(f"if len(a) != {len(ps)}: return None")
        for k, p in enumerate(ps):
            if isinstance(p, str):
                bind(p, f"a[{k}]")
            else:
                lines.append(f"if a[{k}] != {const(p)}: return None")

    def formula(p: FormulaPattern, expr: str, depth: int) -> None:
        if isinstance(p, Meta):
            bind(p.name, expr)
            return
        var = f"f{depth}_{len(lines)}"
        lines.append(f"{var} = {expr}")
        lines.append(f"if type({var}) is not App or {var}.connective.id != {p.connective.id!r}: return None")
        for k, sub in enumerate(p.args):
            formula(sub, f"{var}.args[{k}]", depth + 1)

    if isinstance(t, TF):
        lines.append(
            f"if type(e) is not TaggedFormula or e.negated is not {t.negated} "
            f"or e.label.fsym != {t.label.fsym!r}: return None"
        )
        lines.append("s = dict(s0)")
        indices(t.label.args, "e.label.args")
        formula(t.formula, "e.formula", 0)
    elif isinstance(t, Rel):
        lines.append(
            f"if type(e) is not RelAtom or e.negated is not {t.negated} or e.psym != {t.psym!r}: return None"
        )
        lines.append("s = dict(s0)")
        indices(t.args, "e.args")
    else:
        lines.append(f"if type(e) is not EqAtom or e.negated is not {t.negated}: return None")
        lines.append("s = dict(s0)")
        indices((t.left, t.right), "(e.left, e.right)")
    lines.append("return s")
    src = "def m(e, s0):\n" + "".join(f"    {ln}\n" for ln in lines)
    env = {"App": App, "TaggedFormula": TaggedFormula, "RelAtom": RelAtom, "EqAtom": EqAtom, **consts}
    exec(src, env)
    return env["m"]


def _bucket_keys(e: Expression) -> tuple:
    if type(e) is TaggedFormula:
        base = (0, e.negated, e.label.fsym, len(e.label.args))
        f = e.formula
        head = f.connective.id if type(f) is App else None
        return (base, base + ("h", head), base + ("f", f))
    if type(e) is RelAtom:
        base = (1, e.negated, e.psym, len(e.args))
        return (base, base + ("a", e.args[0]))
    return ((2, e.negated),)


def _lookup_key(t: Template, sigma: Mapping) -> tuple:
    if type(t) is TF:
        base = (0, t.negated, t.label.fsym, len(t.label.args))
        p = t.formula
        if type(p) is Meta:
            bound = sigma.get(p.name)
            return base if bound is None else base + ("f", bound)
        if sigma and _ground(p, sigma):
            return base + ("f", _inst_formula(p, sigma))
        return base + ("h", p.connective.id)
    if type(t) is Rel:
        base = (1, t.negated, t.psym, len(t.args))
        a0 = t.args[0]
        if type(a0) is str:
            a0 = sigma.get(a0)
        return base if a0 is None else base + ("a", a0)
    return (2, t.negated)


class ExpressionIndex:
    """Buckets of expressions in canonical order, keyed for premise lookup."""

    def __init__(self, xs: Iterable[Expression] = ()) -> None:
        self.members: set[Expression] = set()
        self.buckets: dict[tuple, list] = {}
        items = sorted(set(xs), key=expr_key)
        for e in items:
            self.members.add(e)
            for k in _bucket_keys(e):
                self.buckets.setdefault(k, []).append((e._key, e))

    def add(self, e: Expression) -> None:
        self.members.add(e)
        item = (e._key, e)
        for k in _bucket_keys(e):
            bisect.insort(self.buckets.setdefault(k, []), item)

    def remove(self, e: Expression) -> None:
        self.members.discard(e)
        item = (e._key, e)
        for k in _bucket_keys(e):
            lst = self.buckets[k]
            del lst[bisect.bisect_left(lst, item)]

    def __contains__(self, e: object) -> bool:
        return e in self.members

    def candidates(self, t: Template, sigma: Mapping) -> Sequence:
        return self.buckets.get(_lookup_key(t, sigma), ())


def _join(
    templates: Sequence[Template], index: ExpressionIndex, sigma: dict, matchers: Sequence | None = None
) -> Iterator[tuple[dict, tuple[Expression, ...]]]:
    """All extensions of sigma mapping every template into the index, in canonical order."""
    n = len(templates)
    chosen: list[Expression] = []
    matchers = [_matcher(t) for t in templates] if matchers is None else matchers

    def rec(k: int, s: dict) -> Iterator[tuple[dict, tuple[Expression, ...]]]:
        if k == n:
            yield s, tuple(chosen)
            return
        t = templates[k]
        m = matchers[k]
        for _, e in tuple(index.candidates(t, s)):
            s2 = m(e, s)
            if s2 is not None:
                chosen.append(e)
                yield from rec(k + 1, s2)
                chosen.pop()

    yield from rec(0, sigma)


def match_core(schema: RuleSchema, xs: Collection[Expression] | ExpressionIndex) -> list[dict]:
    """Every substitution mapping the premises into `xs`, in canonical order.

    Guards that depend on the substitution alone (Distinct, ValueIn) are
    applied here, so premise-symmetric matches appear once.
    """
    index = xs if isinstance(xs, ExpressionIndex) else ExpressionIndex(xs)
    local = [g for g in schema.guards if type(g) in (Distinct, ValueIn)]
    return [
        s for s, _ in _join(schema.premises, index, {}, schema._matchers)
        if all(_local_guard(g, s) for g in local)
    ]


def _local_guard(g: Distinct | ValueIn, sigma: Mapping) -> bool:
    if type(g) is ValueIn:
        return sigma[g.var] in g.values
    a, b = sigma[g.a], sigma[g.b]
    return a != b and (not g.ordered or _precedes(a, b))


def _ground(p: FormulaPattern, sigma: Mapping) -> bool:
    if type(p) is Meta:
        return p.name in sigma
    return all(_ground(a, sigma) for a in p.args)


# --- instantiation -------------------------------------------------------------


def _inst_formula(p: FormulaPattern, sigma: Mapping) -> Formula:
    if type(p) is Meta:
        return sigma[p.name]
    return App(p.connective, tuple(_inst_formula(a, sigma) for a in p.args))


def _inst_index(p: IndexPattern, sigma: Mapping) -> IndexTerm:
    return sigma[p] if type(p) is str else p


def _inst(t: Template, sigma: Mapping) -> Expression:
    if type(t) is TF:
        label = Label(t.label.fsym, tuple(_inst_index(a, sigma) for a in t.label.args))
        return TaggedFormula(_inst_formula(t.formula, sigma), t.negated, label)
    if type(t) is Rel:
        return RelAtom(t.psym, t.negated, tuple(_inst_index(a, sigma) for a in t.args))
    return EqAtom(t.negated, _inst_index(t.left, sigma), _inst_index(t.right, sigma))


def _inst_mark(m: Mark, sigma: Mapping) -> MarkFact:
    return MarkFact(m.name, tuple(sigma[f] for f in m.formulas), tuple(sigma[i] for i in m.indices))


def _expand(alt: Union[Alt, PerVar], sigma: Mapping) -> list[tuple[frozenset, frozenset]]:
    """Instantiated alternatives as (expressions, marks) pairs."""
    if isinstance(alt, PerVar):
        out = []
        for v in ordered_vars(sigma[alt.meta]):
            s = {**sigma, VAR_SLOT: Var(v)}
            out.append((frozenset(_inst(t, s) for t in alt.templates), frozenset()))
        return out
    exprs: list[Expression] = []
    for t in alt.templates:
        if isinstance(t, EachVar):
            for v in ordered_vars(sigma[t.meta]):
                exprs.append(_inst(t.template, {**sigma, VAR_SLOT: Var(v)}))
        else:
            exprs.append(_inst(t, sigma))
    return [(frozenset(exprs), frozenset(_inst_mark(m, sigma) for m in alt.marks))]


def _precedes(a: Any, b: Any) -> bool:
    if isinstance(a, Formula):
        return render_formula(a) < render_formula(b)
    return index_key(a) < index_key(b)


def _check_guards(
    schema: RuleSchema, sigma: Mapping, index: ExpressionIndex, marks: Collection[MarkFact]
) -> bool | None:
    """True if all guards hold, False if one fails for good, None if only a Marked guard fails."""
    pending = False
    for g in schema.guards:
        if type(g) is Distinct:
            a, b = sigma[g.a], sigma[g.b]
            if a == b or (g.ordered and not _precedes(a, b)):
                return False
        elif type(g) is ValueIn:
            if sigma[g.var] not in g.values:
                return False
        elif type(g) is AbsentInstance:
            for s, _ in _join(g.templates, index, dict(sigma)):
                if all(s[x] != s[y] for x, y in g.distinct):
                    return False
        elif type(g) is Marked:
            if _inst_mark(g.mark, sigma) not in marks:
                pending = True
    return None if pending else True


@dataclass(frozen=True, eq=False)
class RuleInstance:
    """One application of a schema: the input and one output per alternative."""

    schema: RuleSchema
    substitution: Mapping[str, Any]
    input: frozenset
    outputs: tuple[frozenset, ...]
    deltas: tuple[frozenset, ...]
    marks: tuple[frozenset, ...]
    core: tuple[Expression, ...]
    fresh: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        assert not is_b_inconsistent(self.input), "rule input must be b-consistent"
        assert all(self.input < out for out in self.outputs), "outputs must extend the input"
        assert len(set(self.outputs)) == len(self.outputs), "outputs must be pairwise distinct"
        assert set(self.core) <= self.input, "core must lie inside the input"

    @property
    def delta_key(self) -> tuple:
        return tuple(tuple(sorted(e._key for e in d)) for d in self.deltas)


def _instantiate(
    schema: RuleSchema,
    sigma: Mapping,
    index: ExpressionIndex,
    marks: Collection[MarkFact],
    next_fresh: int,
    fresh_binding: Mapping[str, int] | None = None,
) -> tuple[list[tuple[frozenset, frozenset]] | None, dict | None, bool]:
    """Deltas and marks per alternative, the full substitution, and whether absence is final."""
    members = index.members
    simple = schema._simple
    if simple is not None:
        alts = []
        for templates in simple:
            new = frozenset(e for e in (_inst(t, sigma) for t in templates) if e not in members)
            if not new:
                return None, None, True
            alts.append((new, _NO_MARKS))
        if len(alts) > 1 and len(set(d for d, _ in alts)) < len(alts):
            alts = [a for n, a in enumerate(alts) if a not in alts[:n]]
        return alts, dict(sigma), True
    ok = _check_guards(schema, sigma, index, marks)
    if ok is not True:
        return None, None, ok is False
    full = dict(sigma)
    if schema.fresh:
        if fresh_binding is not None:
            for v in schema.fresh:
                full[v] = fresh_binding[v]
        else:
            for n, v in enumerate(schema.fresh):
                full[v] = next_fresh + n
    for g in schema.guards:
        if type(g) is Fresh and any(full[g.var] in e.indices() for e in members):
            return None, None, True
    alts: list[tuple[frozenset, frozenset]] = []
    seen: set[frozenset] = set()
    for alt in schema.alternatives:
        for exprs, mk in _expand(alt, full):
            new = frozenset(e for e in exprs if e not in members)
            if not new:
                return None, None, True
            if new not in seen:
                seen.add(new)
                alts.append((new, mk))
    return alts, full, True


def instantiate(
    schema: RuleSchema,
    sigma: Mapping,
    xs: Collection[Expression],
    marks: Collection[MarkFact] = frozenset(),
    *,
    fresh_binding: Mapping[str, int] | None = None,
) -> RuleInstance | None:
    """The instance of `schema` under `sigma` on input `xs`, or None if it does not apply.

    Fresh metavariables are bound to successive indices from fresh_index(xs)
    unless `fresh_binding` fixes them (they must still be unused in `xs`).
    """
    xs = frozenset(xs)
    if is_b_inconsistent(xs):
        return None
    core = []
    for t in schema.premises:
        try:
            e = _inst(t, sigma)
        except KeyError:
            return None
        if e not in xs:
            return None
        core.append(e)
    index = ExpressionIndex(xs)
    nxt = max(renameable_indices(xs), default=0) + 1
    alts, full, _ = _instantiate(schema, sigma, index, frozenset(marks), nxt, fresh_binding)
    if alts is None:
        return None
    assert full is not None
    fresh = {v: full[v] for v in schema.fresh}
    if fresh_binding is not None and any(fresh[v] in renameable_indices(xs) for v in fresh):
        return None
    return RuleInstance(
        schema=schema,
        substitution={k: full[k] for k in sorted(full)},
        input=xs,
        outputs=tuple(xs | d for d, _ in alts),
        deltas=tuple(d for d, _ in alts),
        marks=tuple(m for _, m in alts),
        core=tuple(core),
        fresh=fresh,
    )


def applicable_instances(
    rules: Sequence[RuleSchema],
    xs: Collection[Expression],
    marks: Collection[MarkFact] = frozenset(),
) -> list[RuleInstance]:
    """All instances of all schemas on `xs`, schemas in order, matches in canonical order."""
    xs = frozenset(xs)
    if is_b_inconsistent(xs):
        return []
    index = ExpressionIndex(xs)
    out: list[RuleInstance] = []
    seen: set[tuple] = set()
    for schema in rules:
        for sigma in match_core(schema, index):
            inst = instantiate(schema, sigma, xs, marks)
            if inst is None:
                continue
            key = (schema.name, inst.delta_key)
            if key not in seen:
                seen.add(key)
                out.append(inst)
    return out


def render_substitution(sigma: Mapping[str, Any], compact: bool = False) -> dict[str, str]:
    out = {}
    for k in sorted(sigma):
        if k == VAR_SLOT:
            continue
        v = sigma[k]
        out[k] = render_formula(v) if isinstance(v, Formula) else render_index(v, compact)
    return out


# --- audit -----------------------------------------------------------------------


@dataclass(frozen=True)
class AuditEntry:
    schema: str
    condition: str
    sample: str
    verdict: str  # "pass", "violation" or "skipped"
    witness: str = ""

    def to_json(self) -> dict:
        return {
            "schema": self.schema,
            "condition": self.condition,
            "sample": self.sample,
            "verdict": self.verdict,
            "witness": self.witness,
        }


@dataclass
class AuditReport:
    entries: list[AuditEntry] = field(default_factory=list)

    def add(self, *args: Any, **kw: Any) -> None:
        self.entries.append(AuditEntry(*args, **kw))

    def extend(self, other: "AuditReport") -> None:
        self.entries.extend(other.entries)

    @property
    def violations(self) -> list[AuditEntry]:
        return [e for e in self.entries if e.verdict == "violation"]

    def count(self, condition: str | None = None, verdict: str = "pass") -> int:
        return sum(
            1 for e in self.entries if e.verdict == verdict and condition in (None, e.condition)
        )

    def to_json(self) -> list[dict]:
        return [e.to_json() for e in self.entries]

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False)


def _render_set(xs: Iterable[Expression]) -> str:
    return "{" + ", ".join(render_expression(e) for e in sorted(xs, key=expr_key)) + "}"


def _random_renaming(xs: Iterable[Expression], rng: random.Random, extra: Iterable[int] = ()) -> dict:
    idx = sorted(renameable_indices(xs) | set(extra))
    targets = rng.sample(range(1, 3 * len(idx) + 10), len(idx))
    return dict(zip(idx, targets))


def _rename_sigma(sigma: Mapping, b: Mapping[int, int], keep: Collection[str]) -> dict:
    return {
        k: (b.get(v, v) if type(v) is int else v) for k, v in sigma.items() if k not in keep
    }


def _subsumed(schema: RuleSchema, inst: RuleInstance, zs: Collection[Expression]) -> bool:
    """Some alternative already lies in zs under an injective choice of the fresh indices."""
    if not schema.fresh:
        return any(d <= zs for d in inst.deltas)
    zidx = sorted(renameable_indices(zs))
    for choice in itertools.permutations(zidx, len(schema.fresh)):
        b = {inst.fresh[v]: c for v, c in zip(schema.fresh, choice)}
        if any(apply_renaming(d, b) <= zs for d in inst.deltas):
            return True
    return False


def audit_rule_schema(
    schema: RuleSchema,
    sample_inputs: Sequence[Union[Collection[Expression], tuple[Collection[Expression], Collection[MarkFact]]]],
    lv: Collection[Reserved] = (),
    *,
    seed: int = 0,
    expansions: int = 2,
    pool: Sequence[Expression] = (),
) -> AuditReport:
    """Check the rule axioms and the (CF), (CS), (CC), (CE) conditions on sampled inputs.

    Samples may be bare sets or (set, marks) pairs. `pool` supplies expressions
    used to build supersets for the expansion check; by default the samples
    themselves are pooled.
    """
    rng = random.Random(seed)
    report = AuditReport()
    name = schema.name
    report.add(name, "CF", "schema", "pass", "alternatives are finite template lists")
    premises = set(schema.premises)
    for n, alt in enumerate(schema.alternatives):
        if isinstance(alt, Alt) and set(alt.templates) <= premises:
            report.add(name, "proper-extension", "schema", "violation",
                       f"alternative {n} only repeats premises")
    norm: list[tuple[frozenset, frozenset]] = []
    for s in sample_inputs:
        if isinstance(s, tuple) and len(s) == 2 and not isinstance(s[0], Expression):
            norm.append((frozenset(s[0]), frozenset(s[1])))
        else:
            norm.append((frozenset(s), frozenset()))
    pool = sorted(set(pool) or {e for xs, _ in norm for e in xs}, key=expr_key)

    for xs, marks in norm:
        if is_b_inconsistent(xs):
            continue
        for sigma in match_core(schema, xs):
            inst = instantiate(schema, sigma, xs, marks)
            if inst is None:
                continue
            sample = _render_set(xs)
            _audit_instance(schema, inst, marks, lv, rng, report, sample)
            for _ in range(expansions):
                _audit_expansion(schema, inst, marks, lv, rng, report, sample, pool)
    return report


def _audit_instance(schema, inst, marks, lv, rng, report, sample) -> None:
    name = schema.name
    xs = inst.input
    ok_a = all(xs < o for o in inst.outputs)
    report.add(name, "proper-extension", sample, "pass" if ok_a else "violation",
               "" if ok_a else "an output does not properly extend the input")
    ok_b = not is_b_inconsistent(xs)
    report.add(name, "consistent-input", sample, "pass" if ok_b else "violation")
    ok_c = len(set(inst.outputs)) == len(inst.outputs)
    report.add(name, "distinct-outputs", sample, "pass" if ok_c else "violation")

    # (CS): rename the input and look for an instance with similar outputs
    b = _random_renaming(xs, rng)
    ys = apply_renaming(xs, b)
    ymarks = frozenset(m.rename(b) for m in marks)
    sigma2 = _rename_sigma(inst.substitution, b, schema.fresh)
    inst2 = instantiate(schema, sigma2, ys, ymarks)
    if inst2 is None or len(inst2.outputs) != len(inst.outputs):
        report.add(name, "CS", sample, "violation", f"no matching instance under renaming {b}")
    elif not all(are_similar(o1, o2, lv) is not None for o1, o2 in zip(inst.outputs, inst2.outputs)):
        report.add(name, "CS", sample, "violation", f"outputs not similar under renaming {b}")
    else:
        report.add(name, "CS", sample, "pass")

    # (CC): the core plus the already-present parts of the alternatives
    full_alts = [d for alt in schema.alternatives for d, _ in _expand(alt, inst.substitution)]
    core = frozenset(inst.core) | frozenset(e for d in full_alts for e in d if e in xs)
    sigma_core = {k: v for k, v in inst.substitution.items() if k not in schema.fresh}
    zi = instantiate(schema, sigma_core, core, marks, fresh_binding=inst.fresh or None)
    if zi is None or [core | d for d in inst.deltas] != list(zi.outputs):
        report.add(name, "CC", sample, "violation", f"core {_render_set(core)} does not reproduce the deltas")
        return
    for e in sorted(core, key=expr_key):
        smaller = core - {e}
        for s in match_core(schema, smaller):
            zj = instantiate(schema, s, smaller, marks, fresh_binding=inst.fresh or None)
            if zj is not None and list(zj.outputs) == [smaller | d for d in inst.deltas]:
                report.add(name, "CC", sample, "violation", f"core not minimal: drop {render_expression(e)}")
                return
    report.add(name, "CC", sample, "pass")


def _audit_expansion(schema, inst, marks, lv, rng, report, sample, pool) -> None:
    name = schema.name
    xs = inst.input
    full_alts = [d for alt in schema.alternatives for d, _ in _expand(alt, inst.substitution)]
    avoid = set().union(*full_alts)
    extra_n = rng.randint(1, 3)
    candidates = [e for e in pool if e not in xs and e not in avoid]
    if not candidates:
        return
    base = sorted(renameable_indices(xs)) or [1]
    hi = max(base) + 2
    zs = set(xs)
    for _ in range(extra_n):
        e = rng.choice(candidates)
        idx = sorted(renameable_indices([e]))
        b = {i: rng.choice(base + [hi, hi + 1]) for i in idx}
        e2 = e.rename(b)
        if e2 not in avoid and e2.negate() not in zs:
            zs.add(e2)
    zs = frozenset(zs)
    if zs == xs or is_b_inconsistent(zs):
        return
    if _subsumed(schema, inst, zs):
        report.add(name, "CE", sample, "skipped", "superset already contains an output")
        return
    sigma = {k: v for k, v in inst.substitution.items() if k not in schema.fresh}
    zi = instantiate(schema, sigma, zs, marks)
    if zi is None or len(zi.outputs) != len(inst.outputs):
        report.add(name, "CE", sample, "violation", f"no instance on superset {_render_set(zs)}")
        return
    core = frozenset(inst.core) | frozenset(e for d in full_alts for e in d if e in xs)
    for d_x, d_z in zip(inst.deltas, zi.deltas):
        if are_similar(core | d_x, core | d_z, lv) is None:
            report.add(name, "CE", sample, "violation", f"outputs differ on superset {_render_set(zs)}")
            return
    report.add(name, "CE", sample, "pass")
