from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabkit.engine import saturate
from tabkit.logics import V0, V1, VH, get_logic
from tabkit.rules import (
    Alt,
    LabelT,
    Meta,
    RuleSchema,
    TF,
    applicable_instances,
    audit_rule_schema,
    instantiate,
    match_core,
)
from tabkit.semantics import sample_rule_instances
from tabkit.syntax import enumerate_formulas, parse_formula
from tabkit.tablang import Label, TaggedFormula, fresh_index, indices_of, is_b_inconsistent

CL, SUBS, KD3 = get_logic("classical"), get_logic("subS"), get_logic("kd3")


def at(logic, text, *args, neg=False, fsym="w"):
    return TaggedFormula(parse_formula(text, logic.signature), neg, Label(fsym, args))


def test_match_core_single_and_double():
    r_and = CL.rule("R∧")
    assert [s["A"] for s in match_core(r_and, {at(CL, "p & q", 1)})] == [
        parse_formula("p", CL.signature)
    ]
    assert len(match_core(r_and, {at(CL, "p & q", 1), at(CL, "r & s", 1)})) == 2


def test_closure_rule_matches_once_per_value_pair():
    xs = {at(KD3, "p", 1, V1), at(KD3, "p", 1, V0)}
    assert len(match_core(KD3.rule("R∼"), xs)) == 1


def test_instantiate_tableau_negation_rule():
    start = {at(SUBS, "p", 1), at(SUBS, "p -> !(!p & !q)", 1, neg=True)}
    rule = SUBS.rule("R∼")
    (sigma,) = match_core(rule, start)
    inst = instantiate(rule, sigma, start)
    assert inst is not None
    assert inst.deltas == (frozenset({at(SUBS, "!(p -> !(!p & !q))", 1)}),)


def test_no_instance_on_inconsistent_input():
    xs = {at(CL, "p & q", 1), at(CL, "p", 1), at(CL, "p", 1, neg=True)}
    for rule in CL.rules:
        for sigma in match_core(rule, xs):
            assert instantiate(rule, sigma, xs) is None
    assert applicable_instances(CL.rules, xs) == []


def test_content_implication_rule_blocked_by_shared_content():
    xs = {at(SUBS, "p -> q", 1), at(SUBS, "p", 1, fsym="c"), at(SUBS, "q", 1, fsym="c")}
    rule = SUBS.rule("R→(2)")
    assert all(instantiate(rule, s, xs) is None for s in match_core(rule, xs))
    open_ = {at(SUBS, "p -> q", 1)}
    (sigma,) = match_core(rule, open_)
    inst = instantiate(rule, sigma, open_)
    assert inst.deltas == (frozenset({at(SUBS, "p", 2, fsym="c"), at(SUBS, "q", 2, fsym="c")}),)


def test_start_set_has_exactly_one_instance():
    start = {at(SUBS, "p", 1), at(SUBS, "p -> !(!p & !q)", 1, neg=True)}
    (inst,) = applicable_instances(SUBS.rules, start)
    assert inst.schema.name == "R∼"


def test_complete_branch_has_no_instances():
    tab = saturate([], parse_formula("p | q", CL.signature), CL)
    for leaf in tab.leaves():
        assert applicable_instances(CL.rules, tab.union(leaf.id), tab.marks_at(leaf.id)) == []


def test_content_rule_adds_every_variable():
    xs = {at(SUBS, "!(!p & !q)", 3, fsym="c")}
    (inst,) = [i for i in applicable_instances(SUBS.rules, xs) if i.schema.name == "Ri"]
    assert inst.deltas == (frozenset({at(SUBS, "p", 3, fsym="c"), at(SUBS, "q", 3, fsym="c")}),)


def test_three_valued_implication_forks_three_ways():
    xs = {at(KD3, "p -> q", 1, V1)}
    (inst,) = [i for i in applicable_instances(KD3.rules, xs) if i.schema.name == "R→1"]
    assert set(inst.deltas) == {
        frozenset({at(KD3, "p", 1, V0)}),
        frozenset({at(KD3, "q", 1, V1)}),
        frozenset({at(KD3, "p", 1, VH), at(KD3, "q", 1, VH)}),
    }


def test_fresh_world_is_new():
    xs = {at(KD3, "<>p", 1, V1)}
    (inst,) = [i for i in applicable_instances(KD3.rules, xs) if i.schema.name == "R◇1"]
    (j,) = inst.fresh.values()
    assert j == fresh_index(xs) and j not in indices_of(xs)


def test_schema_without_alternatives_is_rejected():
    with pytest.raises(ValueError):
        RuleSchema("empty", (TF(Meta("A"), LabelT("w", ("i",))),), ())


def test_broken_schema_is_reported():
    t = TF(Meta("A"), LabelT("w", ("i",)))
    broken = RuleSchema("broken", (t,), (Alt((t,)),))
    report = audit_rule_schema(broken, [{at(CL, "p", 1)}])
    assert [e.condition for e in report.violations] == ["proper-extension"]


@pytest.mark.parametrize("name", ["classical", "subS", "kd3"])
def test_bundled_schemas_pass_the_rule_audit(name):
    logic = get_logic(name)
    for schema in logic.rules:
        pairs = sample_rule_instances(logic, schema, 20, seed=3)
        assert pairs, schema.name
        report = audit_rule_schema(
            schema, [(i.input, m) for i, m in pairs], logic.reserved_values, seed=3
        )
        assert report.violations == [], (schema.name, report.violations[:3])


def test_audit_on_example_branch_sets():
    from tabkit.engine import enumerate_branch_kinds

    kinds = enumerate_branch_kinds(
        [parse_formula("p", SUBS.signature)], parse_formula("p -> !(!p & !q)", SUBS.signature), SUBS
    )
    samples = [(b.union, b.marks) for b in kinds.representatives]
    for schema in SUBS.rules:
        assert audit_rule_schema(schema, samples, seed=1).violations == []


# --- rule instance invariants on every constructed instance -------------------------------

_POOLS = {
    name: list(enumerate_formulas(get_logic(name).signature, ["p", "q"], 2))
    for name in ("classical", "subS", "kd3")
}


@st.composite
def branch_sets(draw):
    name = draw(st.sampled_from(sorted(_POOLS)))
    logic = get_logic(name)
    pool = _POOLS[name]
    goal = pool[draw(st.integers(0, len(pool) - 1))]
    tab = saturate([], goal, logic)
    if not hasattr(tab, "nodes"):
        tab = tab.partial
    node = draw(st.sampled_from(tab.nodes))
    return logic, tab.union(node.id), tab.marks_at(node.id)


def _check_instances(logic, xs, marks):
    insts = applicable_instances(logic.rules, xs, marks)
    for inst in insts:
        assert not is_b_inconsistent(inst.input)
        assert all(inst.input < out for out in inst.outputs)
        assert len(set(inst.outputs)) == len(inst.outputs)
        assert set(inst.core) <= inst.input
        for v, n in inst.fresh.items():
            assert n not in indices_of(inst.input)
    return insts


@settings(max_examples=1000, deadline=None)
@given(branch_sets())
def test_rule_instance_invariants(case):
    logic, xs, marks = case
    _check_instances(logic, xs, marks)


@settings(max_examples=1000, deadline=None)
@given(branch_sets())
def test_applicable_instances_is_deterministic(case):
    logic, xs, marks = case
    a = applicable_instances(logic.rules, xs, marks)
    b = applicable_instances(logic.rules, set(random.Random(7).sample(sorted(xs, key=str), len(xs))), marks)
    assert [(i.schema.name, i.deltas) for i in a] == [(i.schema.name, i.deltas) for i in b]
