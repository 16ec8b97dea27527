"""Finite structures, satisfaction, bounded consequence oracles and soundness audits.

A structure is a family of named domains, named relations and a two-valued
valuation given as the set of (element, variable) pairs valued 1. Each bundled
logic reads such structures in its own way:

- classical: one domain "W1" of worlds; p is true at w iff (w, p) is valued.
- subS: "W1" = {w}, "W2" a set of non-empty content sets, "C" their atoms;
  every variable is valued at exactly one member of "W2", its content.
- kd3: worlds "W1", values "W2" = {0, 1/2, 1}, pairs "W3" = W1 x W2 and
  relations "RK" (reflexive), "RD" and "LE"; p has value n at w iff ((w, n), p)
  is valued.

K◇3 oracles and audits run on numpy arrays holding every valuation of a frame
batch at once; values are encoded as 0, 1, 2 for 0, 1/2, 1.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Collection, Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

from .engine import Branch, BranchStatus, Limits, Refuted, saturate, start_set
from .logics import VALUES, LogicDefinition, SymbolBinding
from .rules import (
    AuditReport,
    EachVar,
    Marked,
    MarkFact,
    Meta,
    Pat,
    Rel,
    TF,
    _inst_mark,
    _inst,
    instantiate,
)
from .syntax import (
    AND,
    DIA,
    IFF,
    IMP,
    KNOW,
    NOT,
    OR,
    App,
    Formula,
    Var,
    enumerate_formulas,
    ordered_vars,
    render_formula,
)
from .tablang import (
    EqAtom,
    Expression,
    Label,
    RelAtom,
    Reserved,
    TaggedFormula,
    expr_key,
    index_key,
    is_b_inconsistent,
    render_expression,
)

__all__ = [
    "SymbolBinding",
    "FiniteStructure",
    "IndexAssignment",
    "EnumerationBounds",
    "Holds",
    "CounterModel",
    "Extraction",
    "evaluate",
    "satisfies",
    "content_of",
    "in_family",
    "enumerate_models",
    "consequence_bounded",
    "truth_table_valid",
    "is_suitable",
    "generate_structure",
    "extend_to_model",
    "extract_countermodel",
    "audit_rules_sound",
    "audit_models_sound",
    "sample_rule_instances",
    "open_complete_unions",
    "structure_to_json",
]

HALF = Fraction(1, 2)
VALUE_ORDER = (Fraction(0), HALF, Fraction(1))
ATOMS = ("a", "b", "c", "d", "e")


# --- structures ------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteStructure:
    """A finite general semantic structure; `family` names the logic reading it."""

    domains: Mapping[str, frozenset]
    relations: Mapping[str, frozenset]
    valuation: frozenset
    designated_domain: str
    family: str = "generic"

    def __post_init__(self) -> None:
        if self.designated_domain not in self.domains:
            raise ValueError(f"designated domain {self.designated_domain!r} is not a domain")
        for name, d in self.domains.items():
            if not d:
                raise ValueError(f"domain {name!r} is empty")
        if set(self.domains) & set(self.relations):
            raise ValueError("domain and relation names must be disjoint")
        carrier = self.carrier
        for name, rel in self.relations.items():
            for t in rel:
                if not all(x in carrier for x in t):
                    raise ValueError(f"relation {name!r} has a coordinate outside the domains")
        for el, _ in self.valuation:
            if el not in carrier:
                raise ValueError(f"valued element {el!r} is outside the domains")

    @property
    def carrier(self) -> frozenset:
        """All elements of all domains together with the coordinates of tuple elements."""
        out: set = set()
        for d in self.domains.values():
            for x in d:
                out.add(x)
                if isinstance(x, tuple):
                    out.update(x)
        return frozenset(out)

    def _view(self) -> Any:
        try:
            return self.__dict__["_view_cache"]
        except KeyError:
            pass
        match self.family:
            case "classical":
                v: Any = _ClassicalView(self)
            case "subS":
                v = _SubSView(self)
            case "kd3":
                v = _Kd3View(self)
            case _:
                raise ValueError(f"no evaluator for structures of family {self.family!r}")
        object.__setattr__(self, "_view_cache", v)
        return v


@dataclass(frozen=True)
class IndexAssignment:
    """f′: indices (renameable and reserved) to structure elements."""

    mapping: Mapping[Any, Any]

    def __getitem__(self, i: Any) -> Any:
        return self.mapping[i]

    def to_json(self) -> dict:
        return {_json_index(i): _json_el(x) for i, x in sorted(self.mapping.items(), key=lambda kv: index_key(kv[0]))}


@dataclass(frozen=True)
class EnumerationBounds:
    worlds: int = 3
    atoms: int = 3

    def __post_init__(self) -> None:
        if self.worlds < 1 or self.atoms < 1:
            raise ValueError("enumeration bounds must be at least 1")
        if self.atoms > len(ATOMS):
            raise ValueError(f"at most {len(ATOMS)} content atoms are supported")

    def to_json(self) -> dict:
        return {"worlds": self.worlds, "atoms": self.atoms}


@dataclass(frozen=True)
class Holds:
    """No countermodel within `bounds`; not a validity claim beyond them."""

    bounds: EnumerationBounds
    models_checked: int
    verdict: str = "holds-within-bounds"


@dataclass(frozen=True)
class CounterModel:
    model: FiniteStructure
    point: Any
    verdict: str = "countermodel"


@dataclass(frozen=True)
class Extraction:
    model: FiniteStructure
    point: Any
    verified: bool
    failures: tuple[str, ...] = ()


# --- evaluation -----------------------------------------------------------------------


class _ClassicalView:
    def __init__(self, m: FiniteStructure) -> None:
        self.worlds = m.domains["W1"]
        self.true = {(w, p) for w, p in m.valuation if w in self.worlds}

    def value(self, w: Any, f: Formula) -> bool:
        match f:
            case Var(name=p):
                return (w, p) in self.true
            case App(connective=c, args=args):
                if c == NOT:
                    return not self.value(w, args[0])
                a = self.value(w, args[0])
                if c == AND:
                    return a and self.value(w, args[1])
                if c == OR:
                    return a or self.value(w, args[1])
                if c == IMP:
                    return (not a) or self.value(w, args[1])
                if c == IFF:
                    return a == self.value(w, args[1])
        raise ValueError(f"classical evaluation does not cover {render_formula(f)}")


class _SubSView:
    def __init__(self, m: FiniteStructure) -> None:
        self.worlds = m.domains["W1"]
        self.sets = m.domains.get("W2", frozenset())
        self.true = {(w, p) for w, p in m.valuation if w in self.worlds}
        contents: dict[str, list] = {}
        for el, p in m.valuation:
            if el in self.sets:
                contents.setdefault(p, []).append(el)
        bad = sorted(p for p, us in contents.items() if len(us) != 1)
        if bad:
            raise ValueError(f"variables without exactly one content: {bad}")
        self.contents = {p: us[0] for p, us in contents.items()}
        self.everything = frozenset().union(*self.sets) if self.sets else frozenset()
        self._memo: dict[Formula, frozenset] = {}

    def content(self, f: Formula) -> frozenset:
        try:
            return self._memo[f]
        except KeyError:
            pass
        family = [self.contents[p] for p in ordered_vars(f) if p in self.contents]
        out = frozenset.intersection(*family) if family else self.everything
        self._memo[f] = out
        return out

    def value(self, w: Any, f: Formula) -> bool:
        match f:
            case Var(name=p):
                return (w, p) in self.true
            case App(connective=c, args=args):
                if c == NOT:
                    return not self.value(w, args[0])
                if c == AND:
                    return self.value(w, args[0]) and self.value(w, args[1])
                if c == IMP:
                    a, b = args
                    return (not self.value(w, a) or self.value(w, b)) and bool(
                        self.content(a) & self.content(b)
                    )
        raise ValueError(f"subS evaluation does not cover {render_formula(f)}")


class _Kd3View:
    def __init__(self, m: FiniteStructure) -> None:
        self.worlds = m.domains["W1"]
        self.succ_k = _successors(m.relations.get("RK", ()), self.worlds)
        self.succ_d = _successors(m.relations.get("RD", ()), self.worlds)
        self.val: dict[tuple, Fraction] = {}
        for el, p in m.valuation:
            if isinstance(el, tuple) and len(el) == 2 and el[0] in self.worlds:
                w, n = el
                if (w, p) in self.val and self.val[(w, p)] != n:
                    raise ValueError(f"{p} has two values at world {w!r}")
                self.val[(w, p)] = Fraction(n)
        self._memo: dict[tuple, Fraction] = {}

    def value(self, w: Any, f: Formula) -> Fraction:
        key = (w, f)
        try:
            return self._memo[key]
        except KeyError:
            pass
        match f:
            case Var(name=p):
                # unvalued pairs default to 0, as in the extension of generated structures
                out = self.val.get((w, p), VALUE_ORDER[0])
            case App(connective=c, args=args):
                if c == NOT:
                    out = 1 - self.value(w, args[0])
                elif c == KNOW:
                    out = min((self.value(u, args[0]) for u in self.succ_k[w]), default=Fraction(1))
                elif c == DIA:
                    out = max((self.value(u, args[0]) for u in self.succ_d[w]), default=Fraction(0))
                else:
                    a, b = self.value(w, args[0]), self.value(w, args[1])
                    if c == AND:
                        out = min(a, b)
                    elif c == OR:
                        out = max(a, b)
                    elif c == IMP:
                        out = min(Fraction(1), 1 - a + b)
                    elif c == IFF:
                        out = 1 - abs(a - b)
                    else:
                        raise ValueError(f"kd3 evaluation does not cover {c.id}")
        self._memo[key] = out
        return out


def _successors(rel: Iterable[tuple], worlds: Collection) -> dict:
    out: dict = {w: [] for w in worlds}
    for a, b in sorted(rel, key=_el_key):
        if a in out:
            out[a].append(b)
    return out


def _family(model: FiniteStructure, logic: LogicDefinition | None) -> str:
    if logic is not None and model.family not in ("generic", "generated", logic.evaluator):
        raise ValueError(f"structure of family {model.family!r} cannot be read by {logic.name}")
    return logic.evaluator if logic is not None else model.family


def evaluate(model: FiniteStructure, point: Any, f: Formula, logic: LogicDefinition | None = None):
    """Truth value of `f` at a world: a bool, or for kd3 the value V(w, f)."""
    fam = _family(model, logic)
    if model.family != fam:
        model = FiniteStructure(model.domains, model.relations, model.valuation, model.designated_domain, fam)
    if point not in model.domains[model.designated_domain]:
        raise ValueError(f"point {point!r} is not in the designated domain")
    return model._view().value(point, f)


def satisfies(model: FiniteStructure, element: Any, f: Formula, domain: str | None = None) -> bool:
    """M, x ⊨ f for an element of any domain the family gives a satisfaction relation on."""
    view = model._view()
    domain = domain or model.designated_domain
    match model.family, domain:
        case "classical" | "subS", "W1":
            return view.value(element, f)
        case "subS", "C":
            return element in view.content(f)
        case "kd3", "W1":
            return view.value(element, f) == 1
        case "kd3", "W3":
            w, n = element
            return view.value(w, f) == n
    raise ValueError(f"no satisfaction relation on domain {domain!r} for {model.family}")


def content_of(model: FiniteStructure, w: Any, f: Formula) -> frozenset:
    """s(f): the intersection of the contents of f's variables."""
    if model.family != "subS":
        raise ValueError("content is only defined for subS structures")
    if w not in model.domains[model.designated_domain]:
        raise ValueError(f"point {w!r} is not in the designated domain")
    return model._view().content(f)


def in_family(model: FiniteStructure, logic: LogicDefinition) -> bool:
    """Whether the structure meets the logic's frame and valuation conditions."""
    try:
        view = FiniteStructure(
            model.domains, model.relations, model.valuation, model.designated_domain, logic.evaluator
        )._view()
    except ValueError:
        return False
    match logic.evaluator:
        case "subS":
            return len(model.domains["W1"]) == 1 and all(view.sets)
        case "kd3":
            return all((w, w) in model.relations.get("RK", ()) for w in view.worlds)
    return True


# --- model construction helpers ------------------------------------------------------------


def classical_model(true_vars: Iterable[str], world: Any = 1) -> FiniteStructure:
    return FiniteStructure(
        {"W1": frozenset([world])}, {}, frozenset((world, p) for p in true_vars), "W1", "classical"
    )


def subs_model(
    true_vars: Iterable[str], contents: Mapping[str, Iterable[Any]], world: Any = 1
) -> FiniteStructure:
    sets = {p: frozenset(u) for p, u in contents.items()}
    w2 = frozenset(sets.values())
    atoms = frozenset().union(*w2) if w2 else frozenset()
    domains = {"W1": frozenset([world]), "W2": w2}
    if atoms:
        domains["C"] = atoms
    val = frozenset((world, p) for p in true_vars) | frozenset((u, p) for p, u in sets.items())
    return FiniteStructure(domains, {}, val, "W1", "subS")


def kd3_model(
    worlds: Iterable[Any],
    rk: Iterable[tuple],
    rd: Iterable[tuple],
    values: Mapping[tuple[Any, str], Fraction],
) -> FiniteStructure:
    """A K◇3 model; `values` maps (world, variable) to 0, 1/2 or 1."""
    ws = frozenset(worlds)
    pairs = frozenset((w, n) for w in ws for n in VALUE_ORDER)
    le = frozenset((a, b) for a in VALUE_ORDER for b in VALUE_ORDER if a <= b)
    val = set()
    for (w, p), n in values.items():
        n = Fraction(n)
        val.add(((w, n), p))
        if n == 1:
            val.add((w, p))
    return FiniteStructure(
        {"W1": ws, "W2": frozenset(VALUE_ORDER), "W3": pairs},
        {"RK": frozenset(rk), "RD": frozenset(rd), "LE": le},
        frozenset(val),
        "W1",
        "kd3",
    )


def _subsets(universe: Sequence[Any]) -> list[frozenset]:
    return [
        frozenset(c)
        for r in range(1, len(universe) + 1)
        for c in itertools.combinations(universe, r)
    ]


def enumerate_models(
    logic: LogicDefinition, variables: Sequence[str], bounds: EnumerationBounds | None = None
) -> Iterator[FiniteStructure]:
    """Every model of the logic's family within bounds, over the given variables.

    Contents range over non-empty subsets of the first `atoms` atoms; K◇3
    frames over 1..`worlds` worlds with reflexive R^K and arbitrary R^◇.
    """
    bounds = bounds or EnumerationBounds()
    vs = list(variables)
    match logic.evaluator:
        case "classical":
            for bits in itertools.product((False, True), repeat=len(vs)):
                yield classical_model(p for p, b in zip(vs, bits) if b)
        case "subS":
            for k in range(1, bounds.atoms + 1):
                subsets = _subsets(ATOMS[:k])
                for contents in itertools.product(subsets, repeat=len(vs)):
                    for bits in itertools.product((False, True), repeat=len(vs)):
                        yield subs_model((p for p, b in zip(vs, bits) if b), dict(zip(vs, contents)))
        case "kd3":
            for k in range(1, bounds.worlds + 1):
                ws = range(1, k + 1)
                off = [(a, b) for a in ws for b in ws if a != b]
                full = [(a, b) for a in ws for b in ws]
                for kbits in itertools.product((0, 1), repeat=len(off)):
                    rk = [(w, w) for w in ws] + [p for p, b in zip(off, kbits) if b]
                    for dbits in itertools.product((0, 1), repeat=len(full)):
                        rd = [p for p, b in zip(full, dbits) if b]
                        for vals in itertools.product(VALUE_ORDER, repeat=k * len(vs)):
                            it = iter(vals)
                            values = {(w, p): next(it) for p in vs for w in ws}
                            yield kd3_model(ws, rk, rd, values)
        case other:
            raise ValueError(f"no model enumerator for {other!r}")


# --- K◇3 batch evaluation -----------------------------------------------------------------


def _needs(formulas: Iterable[Formula], rel_symbols: Iterable[str] = ()) -> tuple[bool, bool]:
    need_k = need_d = False
    rs = set(rel_symbols)
    for f in formulas:
        stack = [f]
        while stack:
            g = stack.pop()
            if isinstance(g, App):
                need_k |= g.connective == KNOW
                need_d |= g.connective == DIA
                stack.extend(g.args)
    return need_k or "K" in rs, need_d or "<>" in rs


@lru_cache(maxsize=None)
def _frames(k: int, need_k: bool, need_d: bool) -> tuple[np.ndarray, np.ndarray]:
    """Frames over k worlds up to renaming of worlds, as boolean (F, k, k) arrays.

    Only relations a formula can observe vary: without K, R^K is the identity;
    without ◇, R^◇ is empty. Isomorphic frames are dropped since every check
    quantifies over all points, valuations and index assignments.
    """
    off = [(a, b) for a in range(k) for b in range(k) if a != b]
    full = [(a, b) for a in range(k) for b in range(k)]
    nk = len(off) if need_k else 0
    nd = len(full) if need_d else 0
    codes = np.arange(1 << (nk + nd), dtype=np.int64)
    fk, fd = codes >> nd, codes & ((1 << nd) - 1)
    best = codes.copy()
    for perm in itertools.permutations(range(k)):
        pk = np.zeros_like(fk)
        for b, (x, y) in enumerate(off[:nk]):
            pk |= ((fk >> b) & 1) << off.index((perm[x], perm[y]))
        pd = np.zeros_like(fd)
        for b, (x, y) in enumerate(full[:nd]):
            pd |= ((fd >> b) & 1) << full.index((perm[x], perm[y]))
        best = np.minimum(best, (pk << nd) | pd)
    keep = codes[best == codes]
    fk, fd = keep >> nd, keep & ((1 << nd) - 1)
    rk = np.zeros((len(keep), k, k), dtype=bool)
    rd = np.zeros((len(keep), k, k), dtype=bool)
    for w in range(k):
        rk[:, w, w] = True
    for b, (x, y) in enumerate(off[:nk]):
        rk[:, x, y] = ((fk >> b) & 1).astype(bool)
    for b, (x, y) in enumerate(full[:nd]):
        rd[:, x, y] = ((fd >> b) & 1).astype(bool)
    return rk, rd


@lru_cache(maxsize=None)
def _valuation_digits(k: int, nv: int) -> np.ndarray:
    """(N, nv, k) digits 0/1/2 of every valuation; index = sum digit * 3^(v*k + w)."""
    n = 3 ** (k * nv)
    idx = np.arange(n, dtype=np.int64)
    out = np.empty((n, nv, k), dtype=np.int8)
    for v in range(nv):
        for w in range(k):
            out[:, v, w] = (idx // 3 ** (v * k + w)) % 3
    return out


_CHUNK = 1 << 21


class _Batch:
    """Values of formulas on a batch of frames and all valuations: int8 arrays (k, F, N).

    Variables are stored as (k, 1, N) and broadcast against frame-dependent values.
    """

    def __init__(self, rk: np.ndarray, rd: np.ndarray, variables: Sequence[str]) -> None:
        self.rk, self.rd = rk, rd
        self.k = rk.shape[1]
        self.vars = {p: n for n, p in enumerate(variables)}
        self.digits = _valuation_digits(self.k, len(variables))
        self.memo: dict[Formula, np.ndarray] = {}
        self.conds: dict = {}
        # 2 where u is not a successor of w: min(a_u + pen) over u is K, max(a_u - pen) is ◇
        self.pen_k = (2 * ~rk).astype(np.int8)[:, :, :, None]
        self.pen_d = (2 * ~rd).astype(np.int8)[:, :, :, None]

    def value(self, f: Formula) -> np.ndarray:
        try:
            return self.memo[f]
        except KeyError:
            pass
        match f:
            case Var(name=p):
                out = np.ascontiguousarray(self.digits[:, self.vars[p], :].T)[:, None, :]
            case App(connective=c, args=args):
                a = self.value(args[0])
                if c == NOT:
                    out = 2 - a
                elif c == KNOW:
                    out = np.stack([self._fold(a, self.pen_k[:, w], np.minimum, -1) for w in range(self.k)])
                    np.minimum(out, 2, out=out)
                elif c == DIA:
                    out = np.stack([self._fold(a, self.pen_d[:, w], np.maximum, 1) for w in range(self.k)])
                    np.maximum(out, 0, out=out)
                else:
                    b = self.value(args[1])
                    if c == AND:
                        out = np.minimum(a, b)
                    elif c == OR:
                        out = np.maximum(a, b)
                    elif c == IMP:
                        out = np.minimum(2, 2 - a + b)
                    elif c == IFF:
                        out = 2 - np.abs(a - b)
                    else:
                        raise ValueError(f"kd3 evaluation does not cover {c.id}")
                out = out.astype(np.int8, copy=False)
        self.memo[f] = out
        return out

    def _fold(self, a: np.ndarray, pen: np.ndarray, op, sign: int) -> np.ndarray:
        out = a[0] - sign * pen[:, 0]
        for u in range(1, self.k):
            op(out, a[u] - sign * pen[:, u], out=out)
        return out


def _batches(k: int, formulas: Sequence[Formula], variables: Sequence[str], rels: Iterable[str] = ()):
    rk, rd = _frames(k, *_needs(formulas, rels))
    n = 3 ** (k * len(variables))
    step = max(1, _CHUNK // (n * k))
    for lo in range(0, rk.shape[0], step):
        yield lo, _Batch(rk[lo : lo + step], rd[lo : lo + step], variables)


def _decode_kd3(rk: np.ndarray, rd: np.ndarray, digits: np.ndarray, variables: Sequence[str]) -> FiniteStructure:
    k = rk.shape[0]
    ws = range(1, k + 1)
    return kd3_model(
        ws,
        [(a + 1, b + 1) for a in range(k) for b in range(k) if rk[a, b]],
        [(a + 1, b + 1) for a in range(k) for b in range(k) if rd[a, b]],
        {(w + 1, p): VALUE_ORDER[int(digits[v, w])] for v, p in enumerate(variables) for w in range(k)},
    )


# --- consequence oracles --------------------------------------------------------------------


def _variables(formulas: Iterable[Formula]) -> list[str]:
    out: dict[str, None] = {}
    for f in formulas:
        for p in ordered_vars(f):
            out.setdefault(p)
    return sorted(out)


def consequence_bounded(
    premises: Iterable[Formula],
    goal: Formula,
    logic: LogicDefinition,
    bounds: EnumerationBounds | None = None,
) -> Holds | CounterModel:
    """The first model and point (in enumeration order) verifying the premises and not the goal."""
    bounds = bounds or EnumerationBounds()
    xs = list(premises)
    vs = _variables(xs + [goal])
    if logic.evaluator == "kd3":
        return _kd3_consequence(xs, goal, vs, bounds)
    checked = 0
    for m in enumerate_models(logic, vs, bounds):
        checked += 1
        view = m._view()
        for w in sorted(m.domains["W1"], key=_el_key):
            if all(view.value(w, b) for b in xs) and not view.value(w, goal):
                return CounterModel(m, w)
    return Holds(bounds, checked)


def _kd3_consequence(xs, goal, vs, bounds) -> Holds | CounterModel:
    checked = 0
    for k in range(1, bounds.worlds + 1):
        for _, batch in _batches(k, xs + [goal], vs):
            bad = batch.value(goal) != 2
            for b in xs:
                bad = bad & (batch.value(b) == 2)
            shape = (batch.k, batch.rk.shape[0], batch.digits.shape[0])
            checked += shape[1] * shape[2]
            if bad.any():
                # first in (frame, valuation, world) order
                bad = np.moveaxis(np.broadcast_to(bad, shape), 0, 2)
                f, n, w = np.unravel_index(int(np.argmax(bad)), bad.shape)
                m = _decode_kd3(batch.rk[f], batch.rd[f], batch.digits[n], vs)
                return CounterModel(m, int(w) + 1)
    return Holds(bounds, checked)


def _l3(f: Formula, row: Mapping[str, Fraction]) -> Fraction:
    match f:
        case Var(name=p):
            return row[p]
        case App(connective=c, args=args):
            a = _l3(args[0], row)
            if c == NOT:
                return 1 - a
            b = _l3(args[1], row)
            if c == AND:
                return min(a, b)
            if c == OR:
                return max(a, b)
            if c == IMP:
                return min(Fraction(1), 1 - a + b)
            if c == IFF:
                return 1 - abs(a - b)
    raise ValueError(f"no truth table for {render_formula(f)}")


def _two(f: Formula, row: Mapping[str, bool]) -> bool:
    match f:
        case Var(name=p):
            return row[p]
        case App(connective=c, args=args):
            a = _two(args[0], row)
            if c == NOT:
                return not a
            b = _two(args[1], row)
            if c == AND:
                return a and b
            if c == OR:
                return a or b
            if c == IMP:
                return (not a) or b
            if c == IFF:
                return a == b
    raise ValueError(f"no truth table for {render_formula(f)}")


def truth_table_valid(f: Formula, logic: LogicDefinition, variables: Sequence[str] | None = None) -> bool:
    """Validity by truth table: two-valued for classical, Łukasiewicz three-valued for kd3."""
    vs = list(variables) if variables is not None else _variables([f])
    match logic.evaluator:
        case "classical":
            return all(_two(f, dict(zip(vs, row))) for row in itertools.product((False, True), repeat=len(vs)))
        case "kd3":
            return all(_l3(f, dict(zip(vs, row))) == 1 for row in itertools.product(VALUE_ORDER, repeat=len(vs)))
    raise ValueError(f"no truth tables for {logic.name}")


# --- suitability --------------------------------------------------------------------------------


def _label_domain(binding: SymbolBinding, e: TaggedFormula) -> str:
    try:
        return binding.labels[e.label.symbol]
    except KeyError:
        raise ValueError(f"label symbol {e.label.symbol} is not bound") from None


def _candidates(model: FiniteStructure, xs: Sequence[Expression], binding: SymbolBinding) -> dict[int, list]:
    """Possible images of each renameable index, from the label positions it occupies."""
    cands: dict[int, set | None] = {}
    for e in xs:
        if type(e) is TaggedFormula:
            d = model.domains.get(_label_domain(binding, e), frozenset())
            args = e.label.args
            for pos, i in enumerate(args):
                if type(i) is not int:
                    continue
                here = set(d) if len(args) == 1 else {t[pos] for t in d}
                cands[i] = here if cands.get(i) is None else cands[i] & here
        else:
            for i in e.indices():
                if type(i) is int:
                    cands.setdefault(i, None)
    world = model.domains[model.designated_domain]
    return {i: sorted(c if c is not None else world, key=_el_key) for i, c in cands.items()}


def is_suitable(
    model: FiniteStructure,
    xs: Collection[Expression],
    logic: LogicDefinition,
    binding: SymbolBinding | None = None,
) -> IndexAssignment | None:
    """An index assignment under which the model realises every expression of `xs`, or None."""
    binding = binding or logic.binding
    if model.family != logic.evaluator:
        model = FiniteStructure(
            model.domains, model.relations, model.valuation, model.designated_domain, logic.evaluator
        )
    exprs = sorted(xs, key=expr_key)
    fixed = dict(logic.reserved_elements)
    cands = _candidates(model, exprs, binding)
    order = sorted(cands)
    pos = {i: n for n, i in enumerate(order)}
    checks: list[list[Expression]] = [[] for _ in range(len(order) + 1)]
    for e in exprs:
        idx = [pos[i] + 1 for i in e.indices() if type(i) is int]
        checks[max(idx, default=0)].append(e)
    memo: dict = {}

    def holds(e: Expression, f: dict) -> bool:
        if type(e) is TaggedFormula:
            args = tuple(f[i] if type(i) is int else fixed.get(i, i) for i in e.label.args)
            el = args[0] if len(args) == 1 else args
            dname = _label_domain(binding, e)
            if el not in model.domains.get(dname, ()):
                return False
            key = (el, e.formula, dname)
            if key not in memo:
                memo[key] = satisfies(model, el, e.formula, dname)
            return memo[key] != e.negated
        if type(e) is RelAtom:
            rname = binding.predicates[(e.psym, len(e.args))]
            t = tuple(f[i] if type(i) is int else fixed.get(i, i) for i in e.args)
            return (t in model.relations.get(rname, ())) != e.negated
        a = f[e.left] if type(e.left) is int else fixed.get(e.left, e.left)
        b = f[e.right] if type(e.right) is int else fixed.get(e.right, e.right)
        return (a == b) != e.negated

    f: dict = {}
    if not all(holds(e, f) for e in checks[0]):
        return None

    def search(n: int) -> bool:
        if n == len(order):
            return True
        i = order[n]
        for x in cands[i]:
            f[i] = x
            if all(holds(e, f) for e in checks[n + 1]) and search(n + 1):
                return True
        f.pop(i, None)
        return False

    if not search(0):
        return None
    out = dict(f)
    for e in exprs:
        for i in e.indices():
            if type(i) is not int:
                out[i] = fixed.get(i, i)
    return IndexAssignment(out)


def _kd3_suitable_batch(batch: _Batch, xs: Sequence[Expression]) -> np.ndarray | bool:
    """Per (frame, valuation): whether some index assignment realises every expression.

    Assignments are built index by index; each expression is checked as soon
    as its indices are bound and a partial assignment is dropped once it fails
    everywhere. Condition arrays are cached on the batch.
    """
    k = batch.k
    world_pos: set[int] = set()
    value_pos: set[int] = set()
    for e in xs:
        if type(e) is TaggedFormula:
            args = e.label.args
            if type(args[0]) is int:
                world_pos.add(args[0])
            if len(args) == 2 and type(args[1]) is int:
                value_pos.add(args[1])
        else:
            world_pos.update(i for i in e.indices() if type(i) is int)
    if world_pos & value_pos:
        return False
    order = sorted(world_pos | value_pos, key=lambda i: -sum(i in e.indices() for e in xs))
    domains = [range(k) if i in world_pos else range(3) for i in order]
    pos = {i: n for n, i in enumerate(order)}
    checks: list[list[Expression]] = [[] for _ in range(len(order) + 1)]
    for e in xs:
        checks[max((pos[i] + 1 for i in e.indices() if type(i) is int), default=0)].append(e)
    cache = batch.conds
    f: dict[int, int] = {}

    def cond(e: Expression):
        key = (e, tuple(f[i] for i in e.indices() if type(i) is int))
        try:
            return cache[key]
        except KeyError:
            pass
        if type(e) is TaggedFormula:
            args = e.label.args
            col = batch.value(e.formula)[f[args[0]]]
            want = 2 if len(args) == 1 else (f[args[1]] if type(args[1]) is int else _ENC[args[1]])
            out = (col != want) if e.negated else (col == want)
            if not out.any():
                out = False
        elif type(e) is RelAtom:
            rel = batch.rk if e.psym == "K" else batch.rd
            out = rel[:, f[e.args[0]], f[e.args[1]]][:, None]
            if e.negated:
                out = ~out
            if not out.any():
                out = False
        else:
            out = (f[e.left] == f[e.right]) != e.negated
        cache[key] = out
        return out

    def search(n: int, acc):
        for e in checks[n]:
            c = cond(e)
            if c is False:
                return False
            if c is True:
                continue
            acc = c if acc is True else acc & c
            if not acc.any():
                return False
        if n == len(order):
            return acc
        i = order[n]
        result = False
        for x in domains[n]:
            f[i] = x
            r = search(n + 1, acc)
            if r is True:
                f.pop(i)
                return True
            if r is not False:
                result = r if result is False else result | r
        f.pop(i, None)
        return result

    return search(0, True)


_ENC = {r: int(2 * v) for r, v in VALUES.items()}


# --- generated structures and their extensions ---------------------------------------------------


def _el_key(x: Any) -> tuple:
    if isinstance(x, tuple):
        return (2, tuple(_el_key(y) for y in x))
    if isinstance(x, frozenset):
        return (3, len(x), sorted((_el_key(y) for y in x)))
    if isinstance(x, Reserved):
        return (0, x.rank)
    if isinstance(x, (int, Fraction)):
        return (1, Fraction(x))
    return (4, str(x))


def _union_of(branch: Branch | Collection[Expression]) -> frozenset:
    return branch.union if isinstance(branch, Branch) else frozenset(branch)


def generate_structure(branch: Branch | Collection[Expression], logic: LogicDefinition) -> FiniteStructure:
    """The structure read off a branch union.

    Domains collect the index tuples of labels (bare indices for 1-ary
    labels), relations the positive relational atoms, and the valuation the
    positively labelled variables. When equalities merge indices, only tuples
    whose indices are the least of their classes are kept.
    """
    xs = _union_of(branch)
    if is_b_inconsistent(xs):
        raise ValueError("a b-inconsistent set generates no structure")
    binding = logic.binding
    parent: dict = {}

    def find(i):
        while parent.get(i, i) != i:
            i = parent[i]
        return i

    for e in sorted(xs, key=expr_key):
        if type(e) is EqAtom and not e.negated:
            a, b = find(e.left), find(e.right)
            if a != b:
                lo, hi = sorted((a, b), key=index_key)
                parent[hi] = lo

    def kept(args) -> bool:
        return all(find(i) == i for i in args if type(i) is int)

    domains: dict[str, set] = {}
    relations: dict[str, set] = {}
    valuation: set = set()
    for e in xs:
        if type(e) is TaggedFormula:
            dname = _label_domain(binding, e)
            args = e.label.args
            domains.setdefault(dname, set())
            if not kept(args):
                continue
            el = args[0] if len(args) == 1 else tuple(args)
            domains[dname].add(el)
            if not e.negated and isinstance(e.formula, Var):
                valuation.add((el, e.formula.name))
        elif type(e) is RelAtom:
            rname = binding.predicates[(e.psym, len(e.args))]
            relations.setdefault(rname, set())
            if not e.negated and kept(e.args):
                relations[rname].add(tuple(e.args))
    designated = binding.labels[(logic.world_symbol, 1)]
    domains.setdefault(designated, set())
    for rel in relations.values():
        for t in rel:
            if any(type(i) is int for i in t):
                domains[designated].update(i for i in t if type(i) is int)
    return FiniteStructure(
        {k: frozenset(v) for k, v in domains.items() if v},
        {k: frozenset(v) for k, v in relations.items()},
        frozenset(valuation),
        designated,
        "generated",
    )


def extend_to_model(
    s: FiniteStructure, logic: LogicDefinition, variables: Iterable[str] = ()
) -> FiniteStructure:
    """Complete a generated structure to a model of the logic's family.

    Unvalued variables are false (classical), get a fresh singleton content
    (subS) or take the value 0 (kd3); `variables` lists those to totalise.
    """
    vs = set(variables) | {p for _, p in s.valuation}
    match logic.evaluator:
        case "classical":
            ws = s.domains[s.designated_domain]
            return FiniteStructure(
                {"W1": ws}, {}, frozenset((w, p) for w, p in s.valuation if w in ws), "W1", "classical"
            )
        case "subS":
            ws = s.domains[s.designated_domain]
            atoms = s.domains.get("C", frozenset())
            nxt = max((a for a in atoms if type(a) is int), default=0) + 1
            contents = {}
            for p in sorted(vs):
                u = frozenset(a for a, q in s.valuation if q == p and a in atoms)
                if not u:
                    u, nxt = frozenset([nxt]), nxt + 1
                contents[p] = u
            true = {p for w, p in s.valuation if w in ws}
            m = subs_model(true, contents, world=min(ws, key=_el_key))
            return m
        case "kd3":
            w1 = set(s.domains.get("W1", ()))
            w1 |= {t[0] for t in s.domains.get("W3", ())}
            for rel in s.relations.values():
                for t in rel:
                    w1.update(t)
            values: dict[tuple, Fraction] = {}
            for el, p in s.valuation:
                if isinstance(el, tuple):
                    w, n = el
                    v = VALUES[n] if isinstance(n, Reserved) else Fraction(n)
                    assert values.get((w, p), v) == v, "contradictory values on a saturated branch"
                    values[(w, p)] = v
            for el, p in s.valuation:
                if not isinstance(el, tuple):
                    values.setdefault((el, p), Fraction(1))
            for w in w1:
                for p in vs:
                    values.setdefault((w, p), Fraction(0))
            return kd3_model(w1, s.relations.get("RK", ()), s.relations.get("RD", ()), values)
    raise ValueError(f"no extension hook for {logic.name}")


def extract_countermodel(result: Refuted, logic: LogicDefinition | None = None) -> Extraction:
    """Countermodel read off the witness branch, checked against premises and goal."""
    tab = result.tableau
    logic = logic or tab.logic
    s = generate_structure(result.union, logic)
    vs = _variables(list(tab.premises) + [tab.goal])
    m = extend_to_model(s, logic, vs)
    point = logic.start_label().args[0]
    failures = []
    if not in_family(m, logic):
        failures.append("extended structure is not a model of the logic")
    view = m._view()
    holds = (lambda f: view.value(point, f) == 1) if logic.evaluator == "kd3" else (lambda f: bool(view.value(point, f)))
    for b in tab.premises:
        if not holds(b):
            failures.append(f"premise {render_formula(b)} fails at the start point")
    if holds(tab.goal):
        failures.append(f"goal {render_formula(tab.goal)} holds at the start point")
    return Extraction(m, point, not failures, tuple(failures))


# --- audits -----------------------------------------------------------------------------------------


def _reserved_positions(logic: LogicDefinition) -> set[tuple]:
    out = set()
    for r in logic.rules:
        temps = list(r.premises) + [
            t.template if isinstance(t, EachVar) else t for a in r.alternatives for t in a.templates
        ]
        for t in temps:
            if isinstance(t, TF):
                for n, a in enumerate(t.label.args):
                    if isinstance(a, Reserved):
                        out.add((t.label.fsym, len(t.label.args), n))
    return out


def _index_kinds(schema, value_pos: set[tuple]) -> dict[str, str]:
    kinds: dict[str, str] = {}
    for t in schema.premises:
        if isinstance(t, TF):
            for n, a in enumerate(t.label.args):
                if isinstance(a, str):
                    kind = "value" if (t.label.fsym, len(t.label.args), n) in value_pos else "index"
                    kinds.setdefault(a, kind)
        elif isinstance(t, Rel):
            for a in t.args:
                if isinstance(a, str):
                    kinds.setdefault(a, "index")
    return kinds


def _formula_metas(schema) -> list[str]:
    out: dict[str, None] = {}

    def walk(p):
        if isinstance(p, Meta):
            out.setdefault(p.name)
        elif isinstance(p, Pat):
            for a in p.args:
                walk(a)

    for t in schema.premises:
        if isinstance(t, TF):
            walk(t.formula)
    return list(out)


def _random_expression(logic: LogicDefinition, rng: random.Random, pool: Sequence[Formula], value_pos: set) -> Expression:
    preds = sorted(logic.binding.predicates)
    if preds and rng.random() < 0.3:
        psym, n = rng.choice(preds)
        return RelAtom(psym, rng.random() < 0.2, tuple(rng.randint(1, 3) for _ in range(n)))
    fsym, n = rng.choice(sorted(logic.label_sorts))
    args = tuple(
        rng.choice(logic.reserved_values) if (fsym, n, k) in value_pos else rng.randint(1, 3) for k in range(n)
    )
    return TaggedFormula(rng.choice(pool), rng.random() < 0.3, Label(fsym, args))


def sample_rule_instances(
    logic: LogicDefinition, schema, samples: int, seed: int = 0, pool_depth: int = 1, attempts: int = 20000
) -> list:
    """Distinct (instance, marks) pairs: instantiated premises (plus required marks) and up to two random extra expressions."""
    rng = random.Random(f"{seed}:{logic.name}:{schema.name}")
    pool = list(enumerate_formulas(logic.signature, ["p", "q"], pool_depth))
    value_pos = _reserved_positions(logic)
    kinds = _index_kinds(schema, value_pos)
    fmetas = _formula_metas(schema)
    out = []
    seen: set = set()
    for _ in range(attempts):
        if len(out) >= samples:
            break
        sigma: dict[str, Any] = {m: rng.choice(pool) for m in fmetas}
        for name, kind in sorted(kinds.items()):
            sigma[name] = rng.choice(logic.reserved_values) if kind == "value" else rng.randint(1, 3)
        try:
            core = frozenset(_inst(t, sigma) for t in schema.premises)
        except (KeyError, ValueError):
            continue
        extra = [_random_expression(logic, rng, pool, value_pos) for _ in range(rng.choice((0, 0, 1, 2)))]
        xs = core | frozenset(extra)
        marks: frozenset = frozenset(
            _inst_mark(g.mark, sigma)
            for g in schema.guards
            if isinstance(g, Marked) and all(x in sigma for x in g.mark.formulas + g.mark.indices)
        )
        key = (tuple(sorted(e._key for e in xs)), tuple(sorted(map(str, marks))), tuple(sorted(map(str, sigma.items()))))
        if key in seen:
            continue
        seen.add(key)
        inst = instantiate(schema, sigma, xs, marks)
        if inst is not None:
            out.append((inst, marks))
    return out


def _render(xs: Iterable[Expression]) -> str:
    return "{" + ", ".join(render_expression(e) for e in sorted(xs, key=expr_key)) + "}"


def audit_rules_sound(
    logic: LogicDefinition,
    bounds: EnumerationBounds | None = None,
    samples: int = 100,
    seed: int = 0,
    schemas: Sequence[str] | None = None,
) -> AuditReport:
    """For sampled instances of each rule: every bounded model suitable for the input is suitable for an output."""
    bounds = bounds or EnumerationBounds()
    report = AuditReport()
    for schema in logic.rules:
        if schemas is not None and schema.name not in schemas:
            continue
        insts = sample_rule_instances(logic, schema, samples, seed)
        for inst, _ in insts:
            sample = _render(inst.input)
            witness = _rule_violation(logic, inst, bounds)
            if witness is None:
                report.add(schema.name, "rule-soundness", sample, "pass")
            else:
                report.add(schema.name, "rule-soundness", sample, "violation", witness)
        if len(insts) < samples:
            report.add(
                schema.name, "rule-soundness", "sampling", "skipped",
                f"only {len(insts)} distinct instances found",
            )
    return report


def _rule_violation(logic: LogicDefinition, inst, bounds: EnumerationBounds) -> str | None:
    xs = inst.input
    outs = inst.outputs
    every = set(xs).union(*outs)
    formulas = [e.formula for e in every if type(e) is TaggedFormula]
    vs = _variables(formulas)
    if logic.evaluator == "kd3":
        rels = [e.psym for e in every if type(e) is RelAtom]
        for k in range(1, bounds.worlds + 1):
            for _, batch in _batches(k, formulas, vs, rels):
                inp = _kd3_suitable_batch(batch, sorted(xs, key=expr_key))
                if inp is False:
                    continue
                bad = np.broadcast_to(inp, (batch.rk.shape[0], batch.digits.shape[0])).copy()
                for o in outs:
                    if not bad.any():
                        break
                    ok = _kd3_suitable_batch(batch, sorted(o, key=expr_key))
                    if ok is not False:
                        bad &= ~np.broadcast_to(ok, bad.shape)
                if bad.any():
                    f, n = np.unravel_index(int(np.argmax(bad)), bad.shape)
                    m = _decode_kd3(batch.rk[f], batch.rd[f], batch.digits[n], vs)
                    return json.dumps(structure_to_json(m))
        return None
    for m in enumerate_models(logic, vs, bounds):
        if is_suitable(m, xs, logic) is None:
            continue
        if not any(is_suitable(m, o, logic) is not None for o in outs):
            return json.dumps(structure_to_json(m))
    return None


def audit_models_sound(
    logic: LogicDefinition, branch_samples: Iterable[Branch | Collection[Expression]]
) -> AuditReport:
    """Each open complete branch extends to a model realising its every labelled formula."""
    report = AuditReport()
    for n, b in enumerate(branch_samples):
        xs = _union_of(b)
        sample = f"branch {n}"
        try:
            s = generate_structure(xs, logic)
        except ValueError as exc:
            report.add("models", "model-soundness", sample, "violation", str(exc))
            continue
        vs = _variables(e.formula for e in xs if type(e) is TaggedFormula)
        m = extend_to_model(s, logic, vs)
        bad = []
        if not in_family(m, logic):
            bad.append("extension is not a model of the logic")
        for e in sorted(xs, key=expr_key):
            if type(e) is not TaggedFormula:
                continue
            dname = _label_domain(logic.binding, e)
            args = tuple(VALUES.get(i, i) if isinstance(i, Reserved) else i for i in e.label.args)
            el = args[0] if len(args) == 1 else args
            if el not in m.domains.get(dname, ()):
                bad.append(f"{render_expression(e)}: label outside the domain")
            elif satisfies(m, el, e.formula, dname) == e.negated:
                bad.append(render_expression(e))
        if bad:
            report.add("models", "model-soundness", sample, "violation", "; ".join(bad))
        else:
            report.add("models", "model-soundness", sample, "pass")
    return report


def open_complete_unions(
    logic: LogicDefinition,
    goals: Iterable[Formula],
    premises: Sequence[Formula] = (),
    limits: Limits | None = None,
) -> list[frozenset]:
    """Unions of the open complete branches of saturated tableaux for the given goals."""
    out = []
    for g in goals:
        tab = saturate(premises, g, logic, limits)
        if not hasattr(tab, "nodes"):
            continue
        for leaf in tab.leaves():
            if leaf.status is BranchStatus.OPEN_COMPLETE:
                out.append(tab.union(leaf.id))
    return out


# --- serialisation -------------------------------------------------------------------------------


def _json_index(i: Any) -> str:
    return i.name if isinstance(i, Reserved) else str(i)


def _json_el(x: Any) -> Any:
    if isinstance(x, tuple):
        return [_json_el(y) for y in x]
    if isinstance(x, frozenset):
        return [_json_el(y) for y in sorted(x, key=_el_key)]
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, Reserved):
        return x.name
    return x


def structure_to_json(model: FiniteStructure, point: Any = None) -> dict:
    out: dict[str, Any] = {
        "family": model.family,
        "domains": {k: _json_el(v) for k, v in sorted(model.domains.items())},
        "relations": {k: _json_el(v) for k, v in sorted(model.relations.items())},
        "valuation": [
            [_json_el(el), p] for el, p in sorted(model.valuation, key=lambda ep: (_el_key(ep[0]), ep[1]))
        ],
        "designated_point": _json_el(point),
    }
    if model.family == "subS":
        out["contents"] = {p: _json_el(u) for p, u in sorted(model._view().contents.items())}
    return out
