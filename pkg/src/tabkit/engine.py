"""Branches, saturation, the branch-consequence decision procedure and tableau checking.

Search is a depth-first walk of a provenance tree. Each node is a branch
prefix; an open, incomplete node gets the first applicable rule instance
(schemas in logic order, matches in canonical order) and one child per
alternative. Matches are maintained incrementally on a trail so that
backtracking is cheap, and the first live match is always the one
`applicable_instances` would list first.
"""

from __future__ import annotations

import bisect
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Collection, Iterable, Iterator, Mapping, Sequence

from .logics import LogicDefinition
from .rules import (
    ExpressionIndex,
    MarkFact,
    RuleInstance,
    RuleSchema,
    _bucket_keys,
    _instantiate,
    _lookup_key,
    applicable_instances,
    instantiate,
    render_substitution,
)
from .syntax import Formula, render_formula
from .tablang import (
    Expression,
    TaggedFormula,
    canonical_renaming,
    expr_key,
    is_b_inconsistent,
    render_expression,
)

__all__ = [
    "BranchStatus",
    "Limits",
    "Step",
    "Branch",
    "Node",
    "Tableau",
    "Proved",
    "Refuted",
    "OutOfResources",
    "ProofResult",
    "BranchKinds",
    "VerificationReport",
    "start_set",
    "start_branch",
    "extend",
    "status_of",
    "saturate",
    "decide",
    "enumerate_branch_kinds",
    "is_redundant_variant",
    "verify_tableau",
    "first_instance",
    "add_result_observer",
    "remove_result_observer",
]

log = logging.getLogger(__name__)


class BranchStatus(Enum):
    CLOSED = "closed"
    OPEN_INCOMPLETE = "open-incomplete"
    OPEN_COMPLETE = "open-complete"
    RESOURCE_EXCEEDED = "resource-exceeded"


@dataclass(frozen=True)
class Limits:
    max_expressions_per_branch: int = 5000
    max_fresh_indices: int = 50
    max_branches: int = 20000
    max_steps_total: int = 1_000_000

    def __post_init__(self) -> None:
        for k, v in self.to_json().items():
            if v < 1:
                raise ValueError(f"{k} must be at least 1")

    def to_json(self) -> dict[str, int]:
        return {
            "max_expressions_per_branch": self.max_expressions_per_branch,
            "max_fresh_indices": self.max_fresh_indices,
            "max_branches": self.max_branches,
            "max_steps_total": self.max_steps_total,
        }


DEFAULT_LIMITS = Limits()


# --- branches --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Step:
    instance: RuleInstance
    alternative: int
    delta: frozenset


@dataclass(frozen=True, eq=False)
class Branch:
    """A sequence start ⊂ start ∪ δ₁ ⊂ ... kept as its start and steps."""

    start: frozenset
    steps: tuple[Step, ...] = ()
    marks: frozenset = frozenset()

    def __post_init__(self) -> None:
        current = self.start
        for n, s in enumerate(self.steps):
            if s.instance.input != current:
                raise ValueError(f"step {n + 1}: instance input differs from the branch element")
            if s.instance.deltas[s.alternative] != s.delta:
                raise ValueError(f"step {n + 1}: delta is not the chosen alternative")
            current = current | s.delta

    @cached_property
    def union(self) -> frozenset:
        out = set(self.start)
        for s in self.steps:
            out |= s.delta
        return frozenset(out)

    def elements(self) -> list[frozenset]:
        out = [self.start]
        for s in self.steps:
            out.append(out[-1] | s.delta)
        return out

    def __len__(self) -> int:
        return len(self.steps) + 1

    def render(self, implicit: Collection[str] = ()) -> str:
        lines = ["start: " + _render_set(self.start, implicit)]
        for s in self.steps:
            lines.append(
                f"{s.instance.schema.name} [{s.alternative}]: + " + _render_set(s.delta, implicit)
            )
        return "\n".join(lines)


def _render_set(xs: Iterable[Expression], implicit: Collection[str] = ()) -> str:
    return "{" + ", ".join(render_expression(e, implicit) for e in sorted(xs, key=expr_key)) + "}"


def start_set(premises: Iterable[Formula], goal: Formula, logic: LogicDefinition) -> frozenset:
    t = logic.start_label()
    return frozenset([TaggedFormula(b, False, t) for b in premises] + [TaggedFormula(goal, True, t)])


def start_branch(premises: Iterable[Formula], goal: Formula, logic: LogicDefinition) -> Branch:
    return Branch(start_set(premises, goal, logic))


def extend(branch: Branch, instance: RuleInstance, alt: int) -> Branch:
    if instance.input != branch.union:
        raise ValueError("instance input is not the branch's last element")
    if not 0 <= alt < len(instance.outputs):
        raise ValueError(f"alternative {alt} out of range")
    step = Step(instance, alt, instance.deltas[alt])
    return Branch(branch.start, branch.steps + (step,), branch.marks | instance.marks[alt])


def status_of(branch: Branch, logic: LogicDefinition) -> BranchStatus:
    xs = branch.union
    if is_b_inconsistent(xs):
        return BranchStatus.CLOSED
    if applicable_instances(logic.rules, xs, branch.marks):
        return BranchStatus.OPEN_INCOMPLETE
    return BranchStatus.OPEN_COMPLETE


# --- incremental search state ----------------------------------------------------


_DISPATCH: dict[int, tuple] = {}


def _dispatch_table(rules: tuple[RuleSchema, ...]) -> dict[tuple, list[tuple[int, int]]]:
    """Bucket key -> (rule, premise position) pairs that a new expression there may match."""
    hit = _DISPATCH.get(id(rules))
    if hit is not None and hit[0] is rules:
        return hit[1]
    table: dict[tuple, list[tuple[int, int]]] = {}
    for ri, r in enumerate(rules):
        for pos, t in enumerate(r.premises):
            table.setdefault(_lookup_key(t, {}), []).append((ri, pos))
    _DISPATCH[id(rules)] = (rules, table)
    return table


class _State:
    """The current branch union with live rule matches, undoable through a trail."""

    def __init__(self, rules: Sequence[RuleSchema]) -> None:
        self.rules = rules if type(rules) is tuple else tuple(rules)
        self.index = ExpressionIndex()
        self.members = self.index.members
        self.marks: set[MarkFact] = set()
        self.trail: list[tuple] = []
        self.max_index = 0
        self.fresh_used = 0
        self.keys: list[list[tuple]] = [[] for _ in self.rules]
        self.live: list[dict[tuple, tuple[dict, tuple]]] = [{} for _ in self.rules]
        self.dispatch = _dispatch_table(self.rules)

    def mark(self) -> int:
        return len(self.trail)

    def undo(self, mark: int) -> None:
        trail = self.trail
        while len(trail) > mark:
            entry = trail.pop()
            kind = entry[0]
            if kind == 0:
                self.index.remove(entry[1])
            elif kind == 1:
                ri, key = entry[1], entry[2]
                keys = self.keys[ri]
                del keys[bisect.bisect_left(keys, key)]
                del self.live[ri][key]
            elif kind == 2:
                ri, key, payload = entry[1], entry[2], entry[3]
                bisect.insort(self.keys[ri], key)
                self.live[ri][key] = payload
            elif kind == 3:
                self.marks.discard(entry[1])
            elif kind == 4:
                self.max_index = entry[1]
            elif kind == 5:
                self.fresh_used = entry[1]

    def add(self, e: Expression) -> None:
        if e in self.members:
            return
        self.index.add(e)
        self.trail.append((0, e))
        top = self.max_index
        for i in e.indices():
            if type(i) is int and i > top:
                top = i
        if top != self.max_index:
            self.trail.append((4, self.max_index))
            self.max_index = top
        self._new_matches(e)

    def add_mark(self, m: MarkFact) -> None:
        if m not in self.marks:
            self.marks.add(m)
            self.trail.append((3, m))

    def note_fresh(self, n: int) -> None:
        if n:
            self.trail.append((5, self.fresh_used))
            self.fresh_used += n

    def _new_matches(self, e: Expression) -> None:
        # a premise template has exactly one unbound lookup key, so no pair repeats here
        for bk in _bucket_keys(e):
            for ri, pos in self.dispatch.get(bk, ()):
                schema = self.rules[ri]
                matchers = schema._matchers
                s = matchers[pos](e, {})
                if s is None:
                    continue
                if len(matchers) == 1:
                    self._record(ri, s, (e,))
                else:
                    for s2, core in self._join(schema.premises, matchers, pos, e, s):
                        self._record(ri, s2, core)

    def _join(self, templates, matchers, pos: int, e: Expression, sigma: dict) -> Iterator[tuple[dict, tuple]]:
        """Matches with templates[pos] bound to e, earlier positions avoiding e."""
        n = len(templates)
        order = [k for k in range(n) if k != pos]
        chosen: list[Any] = [None] * n
        chosen[pos] = e
        index = self.index

        def rec(j: int, s: dict) -> Iterator[tuple[dict, tuple]]:
            if j == len(order):
                yield s, tuple(chosen)
                return
            k = order[j]
            t = templates[k]
            m = matchers[k]
            for _, x in index.candidates(t, s):
                if k < pos and x == e:
                    continue
                s2 = m(x, s)
                if s2 is not None:
                    chosen[k] = x
                    yield from rec(j + 1, s2)

        return rec(0, sigma)

    def _record(self, ri: int, sigma: dict, core: tuple) -> None:
        key = tuple(x._key for x in core)
        live = self.live[ri]
        if key in live:
            return
        live[key] = (sigma, core)
        bisect.insort(self.keys[ri], key)
        self.trail.append((1, ri, key))

    def _kill(self, ri: int, key: tuple) -> None:
        keys = self.keys[ri]
        del keys[bisect.bisect_left(keys, key)]
        payload = self.live[ri].pop(key)
        self.trail.append((2, ri, key, payload))

    def first(self) -> tuple[int, dict, tuple, list, tuple] | None:
        """The first applicable instance as (rule index, full substitution, core, alternatives, match key)."""
        index, marks = self.index, self.marks
        for ri, schema in enumerate(self.rules):
            keys = self.keys[ri]
            if not keys:
                continue
            live = self.live[ri]
            j = 0
            while j < len(keys):
                key = keys[j]
                sigma, core = live[key]
                alts, full, permanent = _instantiate(schema, sigma, index, marks, self.max_index + 1)
                if alts is not None:
                    return ri, full, core, alts, key
                if permanent:
                    self._kill(ri, key)
                else:
                    j += 1
        return None


# --- provenance tree and tableaux --------------------------------------------------


class Node:
    """A branch prefix. The fields describe the step from the parent to this node."""

    __slots__ = (
        "id", "parent", "depth", "rule", "substitution", "alternative",
        "delta", "marks", "status", "children", "size",
    )

    def __init__(
        self,
        id: int,
        parent: int | None,
        depth: int,
        rule: int | None = None,
        substitution: Mapping[str, Any] | None = None,
        alternative: int | None = None,
        delta: frozenset = frozenset(),
        marks: frozenset = frozenset(),
    ) -> None:
        self.id = id
        self.parent = parent
        self.depth = depth
        self.rule = rule
        self.substitution = substitution
        self.alternative = alternative
        self.delta = delta
        self.marks = marks
        self.status = BranchStatus.OPEN_INCOMPLETE
        self.children: list[int] = []
        self.size = 0


@dataclass(eq=False)
class Tableau:
    """The goal, the shared start set and the provenance tree whose leaves are the branches."""

    premises: tuple[Formula, ...]
    goal: Formula
    logic: LogicDefinition
    limits: Limits
    start: frozenset
    nodes: list[Node]
    explicit_branches: list[Branch] | None = None

    def leaves(self) -> list[Node]:
        return [n for n in self.nodes if not n.children]

    def path(self, node_id: int) -> list[Node]:
        out = []
        cur: int | None = node_id
        while cur is not None:
            n = self.nodes[cur]
            out.append(n)
            cur = n.parent
        return out[::-1]

    def branch(self, node_id: int) -> Branch:
        """Materialise the branch ending at `node_id`, rebuilding each rule instance."""
        path = self.path(node_id)
        current = self.start
        marks: frozenset = frozenset()
        steps = []
        for n in path[1:]:
            schema = self.logic.rules[n.rule]
            sigma = {k: v for k, v in n.substitution.items() if k not in schema.fresh}
            binding = {v: n.substitution[v] for v in schema.fresh} or None
            inst = instantiate(schema, sigma, current, marks, fresh_binding=binding)
            assert inst is not None, "recorded step no longer applies"
            steps.append(Step(inst, n.alternative, n.delta))
            current = current | n.delta
            marks = marks | n.marks
        return Branch(self.start, tuple(steps), marks)

    def branches(self) -> list[Branch]:
        if self.explicit_branches is not None:
            return list(self.explicit_branches)
        return [self.branch(n.id) for n in self.leaves()]

    def union(self, node_id: int) -> frozenset:
        out = set(self.start)
        for n in self.path(node_id):
            out |= n.delta
        return frozenset(out)

    def marks_at(self, node_id: int) -> frozenset:
        out: set = set()
        for n in self.path(node_id):
            out |= n.marks
        return frozenset(out)

    def trace_json(self, verdict: str) -> dict:
        implicit = self.logic.implicit_labels
        nodes = []
        for n in self.nodes:
            nodes.append(
                {
                    "id": n.id,
                    "parent": n.parent,
                    "rule": None if n.rule is None else self.logic.rules[n.rule].name,
                    "substitution": None
                    if n.substitution is None
                    else render_substitution(n.substitution),
                    "alternative": n.alternative,
                    "delta": [
                        render_expression(e, implicit)
                        for e in sorted(n.delta or (self.start if n.parent is None else ()), key=expr_key)
                    ],
                    "status": n.status.value,
                }
            )
        return {
            "goal": {
                "premises": [render_formula(p) for p in self.premises],
                "formula": render_formula(self.goal),
            },
            "logic": self.logic.name,
            "limits": self.limits.to_json(),
            "nodes": nodes,
            "verdict": verdict,
        }

    def render_text(self) -> str:
        implicit = self.logic.implicit_labels
        lines = []
        for n in self._preorder():
            pad = "  " * n.depth
            if n.parent is None:
                head = "start " + _render_set(self.start, implicit)
            else:
                rule = self.logic.rules[n.rule].name
                sub = ", ".join(f"{k}={v}" for k, v in render_substitution(n.substitution).items())
                head = f"{rule}[{n.alternative}] ({sub}) + {_render_set(n.delta, implicit)}"
            tail = "" if n.children else f"  [{n.status.value}]"
            lines.append(f"{pad}{n.id}: {head}{tail}")
        return "\n".join(lines)

    def _preorder(self) -> Iterator[Node]:
        stack = [0]
        while stack:
            n = self.nodes[stack.pop()]
            yield n
            stack.extend(reversed(n.children))


@dataclass(eq=False)
class Proved:
    tableau: Tableau
    verdict: str = "proved"


@dataclass(eq=False)
class Refuted:
    """An open complete branch; `union` and `marks` describe its last element."""

    tableau: Tableau
    leaf: int
    union: frozenset
    verdict: str = "refuted"

    @cached_property
    def witness(self) -> Branch:
        return self.tableau.branch(self.leaf)


@dataclass(eq=False)
class OutOfResources:
    partial: Tableau
    limits_hit: tuple[str, ...]
    verdict: str = "out-of-resources"


ProofResult = Proved | Refuted | OutOfResources


def _search(
    premises: Sequence[Formula],
    goal: Formula,
    logic: LogicDefinition,
    limits: Limits,
    stop_on_open: bool,
) -> tuple[Tableau, int | None, frozenset | None, list[str]]:
    start = start_set(premises, goal, logic)
    nodes: list[Node] = [Node(0, None, 0)]
    tab = Tableau(tuple(premises), goal, logic, limits, start, nodes)
    state = _State(logic.rules)
    hit: list[str] = []
    steps = 0
    leaves = 0
    open_leaf: int | None = None
    open_union: frozenset | None = None

    if is_b_inconsistent(start):
        nodes[0].status = BranchStatus.CLOSED
        return tab, None, None, hit
    for e in sorted(start, key=expr_key):
        state.add(e)
    nodes[0].size = len(state.members)

    def expand(node: Node) -> list | None:
        """Choose the node's instance; None for a leaf."""
        nonlocal leaves, open_leaf, open_union
        if len(state.members) > limits.max_expressions_per_branch:
            node.status = BranchStatus.RESOURCE_EXCEEDED
            hit.append("max_expressions_per_branch")
            leaves += 1
            return None
        found = state.first()
        if found is None:
            node.status = BranchStatus.OPEN_COMPLETE
            leaves += 1
            if open_leaf is None:
                open_leaf, open_union = node.id, frozenset(state.members)
            return None
        ri, full, core, alts, key = found
        schema = logic.rules[ri]
        if schema.fresh and state.fresh_used + len(schema.fresh) > limits.max_fresh_indices:
            node.status = BranchStatus.RESOURCE_EXCEEDED
            hit.append("max_fresh_indices")
            leaves += 1
            return None
        # every child contains one alternative, so this match is spent below the node
        state._kill(ri, key)
        return [(ri, full, d, m) for d, m in alts]

    frames: list[list] = []
    alts = expand(nodes[0])
    if alts:
        frames.append([nodes[0], alts, 0, state.mark()])
    while frames:
        if stop_on_open and open_leaf is not None:
            break
        frame = frames[-1]
        parent, alts, i, mark = frame
        if i == len(alts):
            frames.pop()
            continue
        if steps >= limits.max_steps_total:
            hit.append("max_steps_total")
            break
        if leaves + (len(frames) - 1) >= limits.max_branches:
            hit.append("max_branches")
            break
        frame[2] = i + 1
        state.undo(mark)
        ri, full, delta, mk = alts[i]
        schema = logic.rules[ri]
        steps += 1
        child = Node(len(nodes), parent.id, parent.depth + 1, ri, full, i, delta, mk)
        nodes.append(child)
        parent.children.append(child.id)
        members = state.members
        if any((c := e.complement()) in members or c in delta for e in delta):
            child.status = BranchStatus.CLOSED
            child.size = len(members) + len(delta)
            leaves += 1
            continue
        state.note_fresh(len(schema.fresh))
        for m in mk:
            state.add_mark(m)
        for e in sorted(delta, key=expr_key):
            state.add(e)
        child.size = len(members)
        calts = expand(child)
        if calts:
            frames.append([child, calts, 0, state.mark()])
    # nodes whose expansion was cut short keep the open-incomplete status
    for f in frames:
        if f[2] < len(f[1]) and not hit:
            hit.append("stopped")
    return tab, open_leaf, open_union, hit


def saturate(
    premises: Iterable[Formula],
    goal: Formula,
    logic: LogicDefinition,
    limits: Limits | None = None,
) -> Tableau | OutOfResources:
    """The full saturation tree; its leaves are the branches of a complete tableau."""
    limits = limits or DEFAULT_LIMITS
    tab, _, _, hit = _search(tuple(premises), goal, logic, limits, stop_on_open=False)
    if hit:
        return OutOfResources(tab, tuple(dict.fromkeys(hit)))
    return tab


def decide(
    premises: Iterable[Formula],
    goal: Formula,
    logic: LogicDefinition,
    limits: Limits | None = None,
) -> ProofResult:
    """Proved if every complete branch closes, Refuted at the first open complete branch."""
    limits = limits or DEFAULT_LIMITS
    premises = tuple(premises)
    tab, open_leaf, union, hit = _search(premises, goal, logic, limits, stop_on_open=True)
    result: ProofResult
    if open_leaf is not None:
        result = Refuted(tab, open_leaf, union)
    elif hit := [h for h in hit if h != "stopped"]:
        result = OutOfResources(tab, tuple(dict.fromkeys(hit)))
    else:
        result = Proved(tab)
    for fn in _OBSERVERS:
        fn(premises, goal, logic, result)
    return result


_OBSERVERS: list[Callable[[tuple, Formula, LogicDefinition, ProofResult], None]] = []


def add_result_observer(fn: Callable[[tuple, Formula, LogicDefinition, ProofResult], None]) -> None:
    """Call `fn(premises, goal, logic, result)` after every `decide`."""
    _OBSERVERS.append(fn)


def remove_result_observer(fn: Callable) -> None:
    _OBSERVERS.remove(fn)


def first_instance(logic: LogicDefinition, xs: Collection[Expression], marks=frozenset()):
    """The instance the search would pick on `xs`, as (schema name, substitution, deltas)."""
    state = _State(logic.rules)
    if is_b_inconsistent(xs):
        return None
    for e in sorted(xs, key=expr_key):
        state.add(e)
    for m in marks:
        state.add_mark(m)
    found = state.first()
    if found is None:
        return None
    ri, full, _, alts, _ = found
    return logic.rules[ri].name, full, [d for d, _ in alts]


# --- branch kinds ------------------------------------------------------------------


@dataclass
class BranchKinds:
    total_kinds: int
    complete_kinds: int
    closed_complete_kinds: int
    representatives: list[Branch]
    complete_representatives: list[Branch]


def _sequence_key(branch: Branch, lv) -> tuple:
    tags: dict[Expression, int] = {e: 0 for e in branch.start}
    for n, s in enumerate(branch.steps, 1):
        for e in s.delta:
            tags[e] = n
    b = canonical_renaming(tags, lv, tags)
    return tuple(sorted((t, expr_key(e.rename(b))) for e, t in tags.items()))


def enumerate_branch_kinds(
    premises: Iterable[Formula],
    goal: Formula,
    logic: LogicDefinition,
    limits: Limits | None = None,
) -> BranchKinds | OutOfResources:
    """Every branch from the start set (all instances, all alternatives, all prefixes), up to similarity.

    Two branches are of the same kind when one common renaming maps each
    element of one onto the corresponding element of the other.
    """
    limits = limits or Limits()
    premises = tuple(premises)
    root = start_branch(premises, goal, logic)
    lv = logic.reserved_values
    seen: set[tuple] = set()
    reps: list[Branch] = []
    complete: list[Branch] = []
    closed = 0
    stack = [root]
    visited = 0
    while stack:
        br = stack.pop()
        key = _sequence_key(br, lv)
        if key in seen:
            continue
        seen.add(key)
        reps.append(br)
        visited += 1
        if visited > limits.max_steps_total or len(reps) > limits.max_branches:
            tab = Tableau(premises, goal, logic, limits, root.start, [Node(0, None, 0)], reps)
            return OutOfResources(tab, ("max_branches",))
        xs = br.union
        if is_b_inconsistent(xs):
            complete.append(br)
            closed += 1
            continue
        insts = applicable_instances(logic.rules, xs, br.marks)
        if not insts:
            complete.append(br)
            continue
        children = [extend(br, inst, k) for inst in insts for k in range(len(inst.outputs))]
        stack.extend(reversed(children))
    return BranchKinds(len(reps), len(complete), closed, reps, complete)


def is_redundant_variant(psi: Branch, phi: Branch) -> bool:
    """Whether psi is a redundant variant of phi.

    At the first divergence, phi's step uses an instance with fewer
    alternatives than psi's, psi took some alternative k of its instance, and
    every alternative of phi's instance equals an alternative of psi's other
    than k.
    """
    ep, eq = phi.elements(), psi.elements()
    i = 0
    while i < min(len(ep), len(eq)) and ep[i] == eq[i]:
        i += 1
    if i == 0 or i >= len(ep) or i >= len(eq):
        return False
    x, y = phi.steps[i - 1], psi.steps[i - 1]
    if len(x.instance.outputs) >= len(y.instance.outputs):
        return False
    k = y.alternative
    others = [o for n, o in enumerate(y.instance.outputs) if n != k]
    return all(o in others for o in x.instance.outputs)


# --- verification ------------------------------------------------------------------


@dataclass
class VerificationReport:
    entries: list[tuple[str, bool, str]] = field(default_factory=list)

    def add(self, check: str, ok: bool, detail: str = "") -> None:
        self.entries.append((check, ok, detail))

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.entries)

    @property
    def failures(self) -> list[tuple[str, bool, str]]:
        return [e for e in self.entries if not e[1]]

    def to_json(self) -> list[dict]:
        return [{"check": c, "ok": ok, "detail": d} for c, ok, d in self.entries]


def verify_tableau(t: Tableau, logic: LogicDefinition, proved: bool | None = None) -> VerificationReport:
    """Re-check a tableau from its branches alone, independently of the search.

    With `proved` set (or inferred from the leaves when None), also checks
    that every branch is closed.
    """
    report = VerificationReport()
    branches = t.branches()
    report.add("nonempty", bool(branches), "" if branches else "no branches")

    for n, b in enumerate(branches):
        ok = b.start == t.start
        report.add("start", ok, "" if ok else f"branch {n} does not start from the goal's start set")
        current, marks = b.start, frozenset()
        for m, s in enumerate(b.steps):
            inst = s.instance
            sigma = {k: v for k, v in inst.substitution.items() if k not in inst.schema.fresh}
            again = instantiate(inst.schema, sigma, current, marks, fresh_binding=inst.fresh or None)
            legal = (
                again is not None
                and again.outputs == inst.outputs
                and s.delta == inst.deltas[s.alternative]
                and current < current | s.delta
            )
            if not legal:
                report.add("step", False, f"branch {n} step {m + 1}: {inst.schema.name} does not replay")
                break
            current = current | s.delta
            marks = marks | inst.marks[s.alternative]
        else:
            report.add("step", True)

    seqs = [b.elements() for b in branches]
    prefix_ok = True
    for a in range(len(seqs)):
        for c in range(len(seqs)):
            if a != c and len(seqs[a]) <= len(seqs[c]) and seqs[c][: len(seqs[a])] == seqs[a]:
                report.add("maximal", False, f"branch {a} is a prefix of branch {c}")
                prefix_ok = False
    if prefix_ok:
        report.add("maximal", True)

    # branches sharing a prefix must continue by alternatives of one instance, all of them
    groups: dict[tuple, list[tuple[int, int]]] = {}
    for n, seq in enumerate(seqs):
        for i in range(1, len(seq)):
            groups.setdefault(tuple(seq[:i]), []).append((n, i))
    siblings_ok = True
    for prefix, members in groups.items():
        nexts = {seqs[n][i] for n, i in members}
        instances = [branches[n].steps[i - 1].instance for n, i in members]
        if not any(nexts <= set(inst.outputs) for inst in instances):
            report.add("siblings", False, f"continuations after step {len(prefix)} mix rule instances")
            siblings_ok = False
        elif not any(set(inst.outputs) <= nexts for inst in instances):
            report.add("siblings", False, f"an alternative after step {len(prefix)} is missing")
            siblings_ok = False
    if siblings_ok:
        report.add("siblings", True)

    statuses = []
    for n, b in enumerate(branches):
        st = status_of(b, logic)
        statuses.append(st)
        ok = st in (BranchStatus.CLOSED, BranchStatus.OPEN_COMPLETE)
        report.add("complete", ok, "" if ok else f"branch {n} is {st.value}")
    if proved is None:
        proved = all(s is BranchStatus.CLOSED for s in statuses)
    if proved:
        bad = [n for n, s in enumerate(statuses) if s is not BranchStatus.CLOSED]
        report.add("closed", not bad, "" if not bad else f"open branches: {bad}")
    return report


def dumps_trace(tab: Tableau, verdict: str) -> str:
    return json.dumps(tab.trace_json(verdict), indent=2, ensure_ascii=False)
