"""Bundled logics: classical propositional logic, the content-related sublogic S, and K◇3."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Mapping

from .rules import (
    AbsentInstance,
    Alt,
    EachVar,
    Fresh,
    Distinct,
    LabelT,
    Mark,
    Marked,
    Meta,
    Pat,
    PerVar,
    Rel,
    RuleSchema,
    TF,
    VAR_SLOT,
)
from .syntax import AND, DIA, IFF, IMP, KNOW, NOT, OR, Signature
from .tablang import Label, Reserved

__all__ = [
    "SymbolBinding",
    "LogicDefinition",
    "classical_logic",
    "sublogic_s",
    "kd3",
    "registry",
    "get_logic",
    "V0",
    "VH",
    "V1",
]


@dataclass(frozen=True)
class SymbolBinding:
    """Fitting function: label symbols to domains, predicate symbols to relations."""

    labels: Mapping[tuple[str, int], str]
    predicates: Mapping[tuple[str, int], str]


@dataclass(frozen=True)
class LogicDefinition:
    name: str
    signature: Signature
    world_symbol: str
    label_sorts: tuple[tuple[str, int], ...]
    reserved_values: tuple[Reserved, ...]
    binding: SymbolBinding
    rules: tuple[RuleSchema, ...]
    evaluator: str
    enumerator: str
    extension: str
    reserved_elements: Mapping[Reserved, Any] = field(default_factory=dict)
    implicit_labels: frozenset[str] = frozenset()
    description: str = ""

    def __post_init__(self) -> None:
        names = [r.name for r in self.rules]
        if len(set(names)) != len(names):
            raise ValueError(f"{self.name}: duplicate rule names")
        if (self.world_symbol, 1) not in self.label_sorts:
            raise ValueError(f"{self.name}: start label symbol must be a declared 1-ary label")
        for r in self.rules:
            labels, preds, consts = r.symbols()
            if not labels <= set(self.label_sorts) or not labels <= set(self.binding.labels):
                raise ValueError(f"{self.name}: rule {r.name} uses undeclared label symbols")
            if not preds <= set(self.binding.predicates):
                raise ValueError(f"{self.name}: rule {r.name} uses unbound predicate symbols")
            if not consts <= set(self.reserved_values):
                raise ValueError(f"{self.name}: rule {r.name} uses undeclared reserved values")

    def start_label(self, index: int = 1) -> Label:
        return Label(self.world_symbol, (index,))

    def rule(self, name: str) -> RuleSchema:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)

    def info(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "connectives": [
                {"id": c.id, "token": c.token, "arity": c.arity} for c in self.signature.connectives
            ],
            "start_label": f"{self.world_symbol}(1)",
            "label_sorts": [f"{f}/{n}" for f, n in self.label_sorts],
            "reserved_values": [v.name for v in self.reserved_values],
            "predicates": [f"{p}/{n}" for p, n in sorted(self.binding.predicates)],
            "rules": [
                {"name": r.name, "alternatives": len(r.alternatives), "fresh": list(r.fresh)}
                for r in self.rules
            ],
            "evaluator": self.evaluator,
            "enumerator": self.enumerator,
            "extension": self.extension,
        }

    def info_json(self) -> str:
        return json.dumps(self.info(), indent=2, ensure_ascii=False)


A, B = Meta("A"), Meta("B")
SLOT = Meta(VAR_SLOT)


def neg(p):
    return Pat(NOT, (p,))


def bin_(c, a, b):
    return Pat(c, (a, b))


# --- classical ---------------------------------------------------------------


def _w(p, negated: bool = False) -> TF:
    return TF(p, LabelT("w", ("t",)), negated)


@lru_cache(maxsize=None)
def classical_logic() -> LogicDefinition:
    def r(name, premises, *alts):
        return RuleSchema(name, tuple(premises), tuple(Alt(tuple(a)) for a in alts))

    rules = (
        r("R¬", [_w(A), _w(neg(A))], [_w(A, True)]),
        r("R∼", [_w(A, True)], [_w(neg(A))]),
        r("R¬¬", [_w(neg(neg(A)))], [_w(A)]),
        r("R∧", [_w(bin_(AND, A, B))], [_w(A), _w(B)]),
        r("R¬∨", [_w(neg(bin_(OR, A, B)))], [_w(neg(A)), _w(neg(B))]),
        r("R¬→", [_w(neg(bin_(IMP, A, B)))], [_w(A), _w(neg(B))]),
        r("R∨", [_w(bin_(OR, A, B))], [_w(A)], [_w(B)]),
        r("R¬∧", [_w(neg(bin_(AND, A, B)))], [_w(neg(A))], [_w(neg(B))]),
        r("R→", [_w(bin_(IMP, A, B))], [_w(neg(A))], [_w(B)]),
    )
    return LogicDefinition(
        name="classical",
        signature=Signature((NOT, AND, OR, IMP)),
        world_symbol="w",
        label_sorts=(("w", 1),),
        reserved_values=(),
        binding=SymbolBinding(labels={("w", 1): "W1"}, predicates={}),
        rules=rules,
        evaluator="classical",
        enumerator="classical",
        extension="classical",
        implicit_labels=frozenset({"w"}),
        description="Classical propositional logic, single world.",
    )


# --- sublogic S ----------------------------------------------------------------


def _c(p, i: str, negated: bool = False) -> TF:
    return TF(p, LabelT("c", (i,)), negated)


PAIR = "pair"


@lru_cache(maxsize=None)
def sublogic_s(provenance: bool = True) -> LogicDefinition:
    """The content-related logic S with the eleven rules of its tableau system.

    The second rule for negated implication may only use a pair of content
    objects introduced together by the first one. With `provenance` (the
    default) that history is carried by marks recorded on the branch, and the
    conclusion index k is one of the pair's own indices: ~B@i for k = i and,
    through the swapped mark, ~A@j for k = j. Without `provenance` the rule
    instead requires the negated implication itself as a premise, in both
    orientations, with k ranging over every index carrying A (or B).
    """
    imp = bin_(IMP, A, B)
    rules = [
        RuleSchema("R∼", (_w(A, True),), (Alt((_w(neg(A)),)),)),
        RuleSchema("R¬", (_w(A), _w(neg(A))), (Alt((_w(A, True),)),)),
        RuleSchema("R∧", (_w(bin_(AND, A, B)),), (Alt((_w(A), _w(B))),)),
        RuleSchema("R¬¬", (_w(neg(neg(A))),), (Alt((_w(A),)),)),
        RuleSchema("Ri", (_c(A, "i"),), (Alt((EachVar("A", _c(SLOT, "i")),)),)),
    ]
    if provenance:
        rules.append(
            RuleSchema(
                "R¬→(2)",
                (_c(A, "i"), _c(B, "j")),
                (Alt((_c(B, "i", True),)),),
                guards=(Marked(Mark(PAIR, ("A", "B"), ("i", "j"))),),
            )
        )
    else:
        rules.append(
            RuleSchema(
                "R¬→(2)",
                (_w(neg(imp)), _c(A, "i"), _c(B, "j"), _c(A, "k")),
                (Alt((_c(B, "k", True),)),),
            )
        )
        rules.append(
            RuleSchema(
                "R¬→(2)'",
                (_w(neg(imp)), _c(A, "i"), _c(B, "j"), _c(B, "k")),
                (Alt((_c(A, "k", True),)),),
            )
        )
    rules += [
        RuleSchema(
            "R¬∧", (_w(neg(bin_(AND, A, B))),), (Alt((_w(neg(A)),)), Alt((_w(neg(B)),)))
        ),
        RuleSchema("R→(1)", (_w(imp),), (Alt((_w(neg(A)),)), Alt((_w(B),)))),
        RuleSchema("R∼i", (_c(A, "i", True),), (PerVar("A", (_c(SLOT, "i", True),)),)),
        RuleSchema(
            "R¬→(1)",
            (_w(neg(imp)),),
            (
                Alt((_w(A), _w(neg(B)))),
                Alt(
                    (_c(A, "i"), _c(B, "j")),
                    marks=(Mark(PAIR, ("A", "B"), ("i", "j")), Mark(PAIR, ("B", "A"), ("j", "i"))),
                ),
            ),
            guards=(
                Fresh("i"),
                Fresh("j"),
                AbsentInstance((_c(A, "k"), _c(B, "l")), distinct=(("k", "l"),)),
            ),
            fresh=("i", "j"),
        ),
        RuleSchema(
            "R→(2)",
            (_w(imp),),
            (Alt((_c(A, "i"), _c(B, "i"))),),
            guards=(Fresh("i"), AbsentInstance((_c(A, "j"), _c(B, "j")))),
            fresh=("i",),
        ),
    ]
    return LogicDefinition(
        name="subS",
        signature=Signature((NOT, AND, IMP)),
        world_symbol="w",
        label_sorts=(("w", 1), ("c", 1)),
        reserved_values=(),
        binding=SymbolBinding(labels={("w", 1): "W1", ("c", 1): "C"}, predicates={}),
        rules=tuple(rules),
        evaluator="subS",
        enumerator="subS",
        extension="subS",
        implicit_labels=frozenset({"w"}),
        description="Sublogic S with intersected content assignment (the tableau system is not sound).",
    )


# --- K◇3 -------------------------------------------------------------------------

V0 = Reserved(0, "0")
VH = Reserved(1, "1/2")
V1 = Reserved(2, "1")
VALUES = {V0: Fraction(0), VH: Fraction(1, 2), V1: Fraction(1)}


def _v(p, i: str, n, negated: bool = False) -> TF:
    return TF(p, LabelT("w", (i, n)), negated)


def _rk(i: str, j: str) -> Rel:
    return Rel("K", (i, j))


def _rd(i: str, j: str) -> Rel:
    return Rel("<>", (i, j))


@lru_cache(maxsize=None)
def kd3(ref_diamond: str = "K") -> LogicDefinition:
    """K◇3: Łukasiewicz connectives with a reflexive K and an unconstrained ◇.

    `ref_diamond` selects the output of the reflexivity rule triggered by a
    ◇-accessibility atom: "K" (j r^K j, the default) or "<>" (j r^◇ j).
    """
    if ref_diamond not in ("K", "<>"):
        raise ValueError("ref_diamond must be 'K' or '<>'")

    def r(name, premises, *alts, guards=(), fresh=()):
        return RuleSchema(
            name, tuple(premises), tuple(Alt(tuple(a)) for a in alts), tuple(guards), tuple(fresh)
        )

    def by_value(name, pat, table):
        return r(name, [_v(pat, "i", table[0])], *[[_v(A, "i", a), _v(B, "i", b)] for a, b in table[1]])

    def fresh_world(name, rel, p, value):
        return r(
            name,
            [_v(p, "i", value)],
            [rel("i", "j"), _v(A, "j", value)],
            guards=[Fresh("j"), AbsentInstance((rel("i", "k"), _v(A, "k", value)))],
            fresh=["j"],
        )

    conj, disj, impl, iff = bin_(AND, A, B), bin_(OR, A, B), bin_(IMP, A, B), bin_(IFF, A, B)
    dia, know = Pat(DIA, (A,)), Pat(KNOW, (A,))
    h = VH
    rules = (
        # closure and start
        r("R∼", [_v(A, "i", "n"), _v(A, "i", "m")], [_v(A, "i", "n", True)],
          guards=[Distinct("n", "m", ordered=True)]),
        r("Ri1", [TF(A, LabelT("w", ("i",)))], [_v(A, "i", V1)]),
        # non-branching
        r("R¬1", [_v(neg(A), "i", V1)], [_v(A, "i", V0)]),
        r("R¬0", [_v(neg(A), "i", V0)], [_v(A, "i", V1)]),
        r("R¬½", [_v(neg(A), "i", h)], [_v(A, "i", h)]),
        r("R∧1", [_v(conj, "i", V1)], [_v(A, "i", V1), _v(B, "i", V1)]),
        r("R∨0", [_v(disj, "i", V0)], [_v(A, "i", V0), _v(B, "i", V0)]),
        r("R→0", [_v(impl, "i", V0)], [_v(A, "i", V1), _v(B, "i", V0)]),
        r("Rref", [_v(A, "i", "n")], [_rk("i", "i")]),
        r("RrefK", [_rk("i", "j")], [_rk("j", "j")]),
        r("Rref◇", [_rd("i", "j")], [_rk("j", "j") if ref_diamond == "K" else _rd("j", "j")]),
        r("RK1", [_v(know, "i", V1), _rk("i", "j")], [_v(A, "j", V1)]),
        r("R◇0", [_v(dia, "i", V0), _rd("i", "j")], [_v(A, "j", V0)]),
        # branching
        r("R∼i", [TF(A, LabelT("w", ("i",)), True)], [_v(A, "i", V0)], [_v(A, "i", h)]),
        r("R∧0", [_v(conj, "i", V0)], [_v(A, "i", V0)], [_v(B, "i", V0)]),
        by_value("R∧½", conj, (h, [(V1, h), (h, h), (h, V1)])),
        r("R∨1", [_v(disj, "i", V1)], [_v(A, "i", V1)], [_v(B, "i", V1)]),
        by_value("R∨½", disj, (h, [(V0, h), (h, h), (h, V0)])),
        r("R→1", [_v(impl, "i", V1)], [_v(A, "i", V0)], [_v(B, "i", V1)],
          [_v(A, "i", h), _v(B, "i", h)]),
        by_value("R→½", impl, (h, [(V1, h), (h, V0)])),
        by_value("R↔1", iff, (V1, [(V1, V1), (V0, V0), (h, h)])),
        by_value("R↔0", iff, (V0, [(V1, V0), (V0, V1)])),
        by_value("R↔½", iff, (h, [(V1, h), (h, V1), (V0, h), (h, V0)])),
        r("R′◇½", [_v(dia, "i", h), _rd("i", "j")], [_v(A, "j", h)], [_v(A, "j", V0)]),
        r("R′K½", [_v(know, "i", h), _rk("i", "j")], [_v(A, "j", h)], [_v(A, "j", V1)]),
        # fresh worlds
        fresh_world("R◇1", _rd, dia, V1),
        fresh_world("R◇½", _rd, dia, h),
        fresh_world("RK0", _rk, know, V0),
        fresh_world("RK½", _rk, know, h),
    )
    return LogicDefinition(
        name="kd3",
        signature=Signature((NOT, AND, OR, IMP, IFF, DIA, KNOW)),
        world_symbol="w",
        label_sorts=(("w", 1), ("w", 2)),
        reserved_values=(V0, VH, V1),
        binding=SymbolBinding(
            labels={("w", 1): "W1", ("w", 2): "W3"},
            predicates={("K", 2): "RK", ("<>", 2): "RD"},
        ),
        rules=rules,
        evaluator="kd3",
        enumerator="kd3",
        extension="kd3",
        reserved_elements=VALUES,
        description="K◇3: three-valued Łukasiewicz connectives, reflexive K, unconstrained ◇.",
    )


def registry() -> dict[str, LogicDefinition]:
    logics = [classical_logic(), sublogic_s(), kd3()]
    names = [l.name for l in logics]
    if len(set(names)) != len(names):
        raise ValueError("duplicate logic names in registry")
    return {l.name: l for l in logics}


def get_logic(name: str) -> LogicDefinition | None:
    return registry().get(name)
