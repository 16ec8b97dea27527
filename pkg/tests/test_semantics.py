from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabkit.engine import Refuted, decide
from tabkit.logics import V0, V1, VH, get_logic
from tabkit.semantics import (
    CounterModel,
    EnumerationBounds,
    FiniteStructure,
    Holds,
    audit_models_sound,
    audit_rules_sound,
    classical_model,
    consequence_bounded,
    content_of,
    evaluate,
    extend_to_model,
    extract_countermodel,
    generate_structure,
    in_family,
    is_suitable,
    kd3_model,
    open_complete_unions,
    satisfies,
    structure_to_json,
    subs_model,
)
from tabkit.syntax import App, Var, enumerate_formulas, parse_formula
from tabkit.tablang import EqAtom, Label, RelAtom, TaggedFormula

CL, SUBS, KD3 = get_logic("classical"), get_logic("subS"), get_logic("kd3")
HALF = Fraction(1, 2)
VALUES = (Fraction(0), HALF, Fraction(1))


def f(logic, text):
    return parse_formula(text, logic.signature)


def at(logic, text, *args, neg=False, fsym="w"):
    return TaggedFormula(f(logic, text), neg, Label(fsym, args))


# --- evaluation ---------------------------------------------------------------------------


def test_classical_eval():
    m = classical_model(["p"])
    assert evaluate(m, 1, f(CL, "p"), CL) is True
    assert evaluate(m, 1, f(CL, "q"), CL) is False
    assert evaluate(m, 1, f(CL, "q -> p"), CL) is True


def test_subs_eval_of_the_content_example_is_false():
    m = subs_model(["p"], {"p": {"a"}, "q": {"b"}})
    assert evaluate(m, 1, f(SUBS, "p"), SUBS)
    assert not evaluate(m, 1, f(SUBS, "p -> !(!p & !q)"), SUBS)
    shared = subs_model(["p"], {"p": {"a"}, "q": {"a", "b"}})
    assert evaluate(shared, 1, f(SUBS, "p -> !(!p & !q)"), SUBS)


def test_kd3_excluded_middle_takes_half():
    m = kd3_model([1], [(1, 1)], [], {(1, "p"): HALF})
    assert evaluate(m, 1, f(KD3, "p | !p"), KD3) == HALF
    assert not satisfies(m, 1, f(KD3, "p | !p"))
    assert satisfies(m, (1, HALF), f(KD3, "p | !p"), "W3")


def test_eval_rejects_point_outside_the_designated_domain():
    with pytest.raises(ValueError):
        evaluate(classical_model(["p"]), 2, f(CL, "p"), CL)


def test_structure_invariants():
    with pytest.raises(ValueError):
        FiniteStructure({"W1": frozenset()}, {}, frozenset(), "W1")
    with pytest.raises(ValueError):
        FiniteStructure({"W1": frozenset([1])}, {}, frozenset(), "W2")
    with pytest.raises(ValueError):
        FiniteStructure({"W1": frozenset([1])}, {"R": frozenset({(1, 9)})}, frozenset(), "W1")


# --- content -----------------------------------------------------------------------------


def test_content_of_examples():
    m = subs_model([], {"p": {"a"}})
    assert content_of(m, 1, f(SUBS, "p")) == {"a"}
    m = subs_model([], {"p": {"a", "b"}, "q": {"b", "c"}})
    assert content_of(m, 1, f(SUBS, "p & q")) == {"b"}
    m = subs_model([], {"p": {"a"}, "q": {"b"}})
    assert content_of(m, 1, f(SUBS, "p & q")) == frozenset()


def test_content_of_needs_a_subs_model():
    with pytest.raises(ValueError):
        content_of(classical_model(["p"]), 1, f(CL, "p"))


# --- bounded consequence ----------------------------------------------------------------------


def test_subs_countermodel_for_the_content_example():
    r = consequence_bounded([f(SUBS, "p")], f(SUBS, "p -> !(!p & !q)"), SUBS, EnumerationBounds(atoms=2))
    assert isinstance(r, CounterModel)
    m = r.model
    assert len(m.domains["C"]) <= 2
    assert not content_of(m, r.point, f(SUBS, "p")) & content_of(m, r.point, f(SUBS, "q"))


def test_subs_entailment_holds_within_bounds():
    r = consequence_bounded(
        [f(SUBS, "!(!(p -> q) & !(q -> p))")], f(SUBS, "(p & (p -> q)) -> q"), SUBS, EnumerationBounds(atoms=3)
    )
    assert isinstance(r, Holds)
    assert r.verdict == "holds-within-bounds"


def test_kd3_reflexivity_validity_holds():
    assert isinstance(consequence_bounded([], f(KD3, "K p -> p"), KD3, EnumerationBounds(worlds=3)), Holds)
    r = consequence_bounded([], f(KD3, "<>p -> K p"), KD3, EnumerationBounds(worlds=2))
    assert isinstance(r, CounterModel)
    assert evaluate(r.model, r.point, f(KD3, "<>p -> K p"), KD3) != 1


def test_bounds_must_be_positive():
    with pytest.raises(ValueError):
        EnumerationBounds(worlds=0)


# --- suitability ------------------------------------------------------------------------------


def test_suitability_examples():
    m = classical_model(["p"])
    assert is_suitable(m, set(), CL).mapping == {}
    assert is_suitable(m, {at(CL, "p", 1)}, CL).mapping == {1: 1}
    assert is_suitable(m, {at(CL, "p", 1), at(CL, "p", 1, neg=True)}, CL) is None
    assert is_suitable(m, {at(CL, "q", 1)}, CL) is None


def test_suitability_with_relations_and_values():
    m = kd3_model([1, 2], [(1, 1), (2, 2), (1, 2)], [], {(1, "p"): 1, (2, "p"): HALF})
    xs = {at(KD3, "p", 1, VH), RelAtom("K", False, (2, 1))}
    assert is_suitable(m, xs, KD3).mapping == {1: 2, 2: 1, VH: HALF}
    assert is_suitable(m, xs | {EqAtom(False, 1, 2)}, KD3).mapping == {1: 2, 2: 2, VH: HALF}
    assert is_suitable(m, xs | {EqAtom(True, 1, 2)}, KD3).mapping == {1: 2, 2: 1, VH: HALF}
    assert is_suitable(m, xs | {EqAtom(False, 1, 2), at(KD3, "p", 2, V1)}, KD3) is None


# --- generation, extension and countermodels ------------------------------------------------


def test_generate_structure_from_a_kd3_branch():
    s = generate_structure({at(KD3, "p", 1, VH), RelAtom("K", False, (1, 1))}, KD3)
    assert s.domains["W1"] == {1}
    assert s.relations["RK"] == {(1, 1)}
    assert s.valuation == {((1, VH), "p")}


def test_generate_structure_for_classical_open_branch():
    r = decide([], f(CL, "p"), CL)
    s = generate_structure(r.witness, CL)
    assert s.domains["W1"] == {1}
    assert (1, "p") not in s.valuation


def test_generate_structure_rejects_inconsistent_sets():
    with pytest.raises(ValueError):
        generate_structure({at(CL, "p", 1), at(CL, "p", 1, neg=True)}, CL)


def test_generate_structure_merges_equal_indices():
    s = generate_structure({at(CL, "p", 1), at(CL, "q", 2), EqAtom(False, 2, 1)}, CL)
    assert s.domains["W1"] == {1}
    assert s.valuation == {(1, "p")}


def test_extend_to_model_defaults():
    s = generate_structure({at(KD3, "p", 1, VH), RelAtom("K", False, (1, 1))}, KD3)
    m = extend_to_model(s, KD3, ["p", "q"])
    assert in_family(m, KD3)
    assert evaluate(m, 1, f(KD3, "p"), KD3) == HALF
    assert evaluate(m, 1, f(KD3, "q"), KD3) == 0
    m = extend_to_model(generate_structure({at(CL, "p", 1)}, CL), CL, ["p", "q"])
    assert evaluate(m, 1, f(CL, "p"), CL) and not evaluate(m, 1, f(CL, "q"), CL)


def test_extension_is_reflexive():
    r = decide([], f(KD3, "<>p -> K p"), KD3)
    assert isinstance(r, Refuted)
    m = extract_countermodel(r, KD3).model
    assert all((w, w) in m.relations["RK"] for w in m.domains["W1"])


@pytest.mark.parametrize(
    "logic, premises, goal",
    [("kd3", [], "p | !p"), ("classical", [], "p"), ("classical", ["p"], "q"), ("kd3", [], "<>p -> K p")],
)
def test_extract_countermodel(logic, premises, goal):
    lg = get_logic(logic)
    r = decide([f(lg, p) for p in premises], f(lg, goal), lg)
    assert isinstance(r, Refuted)
    e = extract_countermodel(r, lg)
    assert e.verified, e.failures
    for p in premises:
        assert satisfies(e.model, e.point, f(lg, p))
    assert not satisfies(e.model, e.point, f(lg, goal))


def test_extracted_values():
    e = extract_countermodel(decide([], f(KD3, "p | !p"), KD3), KD3)
    assert evaluate(e.model, e.point, f(KD3, "p"), KD3) == HALF
    e = extract_countermodel(decide([f(CL, "p")], f(CL, "q"), CL), CL)
    assert e.model.valuation == {(1, "p")}


def test_countermodel_json():
    e = extract_countermodel(decide([], f(KD3, "p | !p"), KD3), KD3)
    data = structure_to_json(e.model, e.point)
    assert set(data) >= {"domains", "relations", "valuation", "designated_point"}
    assert data["valuation"] == [[[1, "1/2"], "p"]]
    m = subs_model(["p"], {"p": {"a"}, "q": {"b"}})
    assert structure_to_json(m, 1)["contents"] == {"p": ["a"], "q": ["b"]}


# --- audits --------------------------------------------------------------------------------


def test_classical_rule_audit_is_clean():
    rep = audit_rules_sound(CL, EnumerationBounds(worlds=1), samples=10, seed=1)
    assert rep.violations == []
    assert rep.count("rule-soundness") > 0


def test_subs_rule_audit_reports_violations():
    rep = audit_rules_sound(SUBS, EnumerationBounds(atoms=2), samples=20, seed=1, schemas=["R¬→(1)", "R¬→(2)"])
    assert rep.violations


def test_model_audit_on_open_branches():
    goals = list(enumerate_formulas(KD3.signature, ["p"], 2))[:40]
    unions = open_complete_unions(KD3, goals)
    assert unions
    assert audit_models_sound(KD3, unions).violations == []
    cl = open_complete_unions(CL, enumerate_formulas(CL.signature, ["p", "q"], 2))
    assert audit_models_sound(CL, cl).violations == []


def test_model_audit_flags_a_truncated_branch():
    # the start set alone, before R∧ fires: nothing makes p & q true
    rep = audit_models_sound(CL, [{at(CL, "p & q", 1)}])
    assert [e.condition for e in rep.violations] == ["model-soundness"]


# --- properties -----------------------------------------------------------------------------

P, Q = Var("p"), Var("q")
_KD3_CONNECTIVES = KD3.signature.connectives


@st.composite
def kd3_formulas(draw, depth=3):
    if depth == 0 or draw(st.integers(0, 3)) == 0:
        return draw(st.sampled_from([P, Q]))
    c = draw(st.sampled_from(_KD3_CONNECTIVES))
    return App(c, tuple(draw(kd3_formulas(depth - 1)) for _ in range(c.arity)))


@st.composite
def kd3_models(draw, reflexive=True):
    k = draw(st.integers(1, 3))
    ws = list(range(1, k + 1))
    pairs = [(a, b) for a in ws for b in ws]
    rk = {t for t in pairs if draw(st.booleans())}
    if reflexive:
        rk |= {(w, w) for w in ws}
    rd = {t for t in pairs if draw(st.booleans())}
    values = {(w, p): draw(st.sampled_from(VALUES)) for w in ws for p in ("p", "q")}
    return kd3_model(ws, rk, rd, values)


@st.composite
def kd3_expressions(draw):
    i = draw(st.integers(1, 3))
    neg = draw(st.booleans())
    match draw(st.integers(0, 2)):
        case 0:
            return TaggedFormula(draw(kd3_formulas(2)), neg, Label("w", (i,)))
        case 1:
            return TaggedFormula(draw(kd3_formulas(2)), neg, Label("w", (i, draw(st.sampled_from([V0, VH, V1])))))
        case _:
            return RelAtom(draw(st.sampled_from(["K", "<>"])), neg, (i, draw(st.integers(1, 3))))


@settings(max_examples=1000, deadline=None)
@given(kd3_models(), st.frozensets(kd3_expressions(), max_size=5), kd3_expressions())
def test_no_model_is_suitable_for_an_inconsistent_set(m, xs, e):
    assert is_suitable(m, xs | {e, e.negate()}, KD3) is None


_CL_POOL = list(enumerate_formulas(CL.signature, ["p", "q"], 1))


@st.composite
def classical_expressions(draw):
    g = draw(st.sampled_from(_CL_POOL))
    return TaggedFormula(g, draw(st.booleans()), Label("w", (draw(st.integers(1, 3)),)))


@settings(max_examples=1000, deadline=None)
@given(st.frozensets(st.sampled_from(["p", "q"])), st.frozensets(classical_expressions(), max_size=5),
       classical_expressions())
def test_classical_inconsistent_sets_are_unsuitable(true_vars, xs, e):
    assert is_suitable(classical_model(true_vars), xs | {e, e.negate()}, CL) is None


@settings(max_examples=1000, deadline=None)
@given(kd3_models(), kd3_formulas())
def test_kd3_valuation_is_functional(m, g):
    for w in m.domains["W1"]:
        v = evaluate(m, w, g, KD3)
        assert v in VALUES
        assert [n for n in VALUES if satisfies(m, (w, n), g, "W3")] == [v]


@settings(max_examples=1000, deadline=None)
@given(kd3_models(reflexive=False), kd3_formulas(2))
def test_empty_successor_conventions(m, g):
    for w in m.domains["W1"]:
        if not any(a == w for a, _ in m.relations["RK"]):
            assert evaluate(m, w, App(KD3.signature.by_id("know"), (g,)), KD3) == 1
        if not any(a == w for a, _ in m.relations["RD"]):
            assert evaluate(m, w, App(KD3.signature.by_id("dia"), (g,)), KD3) == 0


def _modal_free(g) -> bool:
    return isinstance(g, Var) or (g.connective.id not in ("know", "dia") and all(map(_modal_free, g.args)))


@settings(max_examples=1000, deadline=None)
@given(kd3_models(), kd3_formulas(), st.data())
def test_modal_free_collapse(m, g, data):
    if not _modal_free(g):
        g = data.draw(st.sampled_from([P, Q]))
    ws = sorted(m.domains["W1"])
    w = data.draw(st.sampled_from(ws))
    before = evaluate(m, w, g, KD3)
    values = {}
    for u in ws:
        for p in ("p", "q"):
            values[(u, p)] = evaluate(m, u, Var(p), KD3) if u == w else data.draw(st.sampled_from(VALUES))
    mutated = kd3_model(ws, m.relations["RK"], m.relations["RD"], values)
    assert evaluate(mutated, w, g, KD3) == before


_SUBS_POOL = list(enumerate_formulas(SUBS.signature, ["p", "q"], 2))
_KD3_POOL = list(enumerate_formulas(KD3.signature, ["p"], 2))


@settings(max_examples=1000, deadline=None)
@given(st.sampled_from(["subS", "kd3"]), st.integers(min_value=0), st.integers(min_value=0))
def test_oracle_is_monotone_in_bounds(name, i, j):
    logic = get_logic(name)
    pool = _SUBS_POOL if name == "subS" else _KD3_POOL
    premise, goal = pool[i % len(pool)], pool[j % len(pool)]
    small = consequence_bounded([premise], goal, logic, EnumerationBounds(worlds=1, atoms=1))
    large = consequence_bounded([premise], goal, logic, EnumerationBounds(worlds=2, atoms=2))
    if isinstance(small, CounterModel):
        assert isinstance(large, CounterModel)
