"""Command-line front end.

Exit codes: 0 proved / holds / clean audit, 1 refuted / countermodel /
violations, 2 out of resources, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
from typing import Any, Sequence, TextIO

from .engine import (
    Limits,
    OutOfResources,
    Proved,
    Refuted,
    decide,
    enumerate_branch_kinds,
)
from .logics import LogicDefinition, registry
from .rules import AuditReport, audit_rule_schema
from .semantics import (
    CounterModel,
    EnumerationBounds,
    audit_models_sound,
    audit_rules_sound,
    consequence_bounded,
    extract_countermodel,
    open_complete_unions,
    sample_rule_instances,
    structure_to_json,
)
from .syntax import FormulaError, enumerate_formulas, parse_formula, render_formula
from .tablang import render_expression, expr_key

EXIT_OK, EXIT_REFUTED, EXIT_RESOURCES, EXIT_USAGE = 0, 1, 2, 64
COMMANDS = ("prove", "countermodel", "oracle", "audit", "branches", "info")
NEEDS_GOAL = ("prove", "countermodel", "oracle", "branches")

log = logging.getLogger("tabkit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _positive(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    defaults = Limits()
    p = _Parser(prog="tabkit", description="Labelled tableaux, semantic oracles and soundness audits.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--logic", choices=sorted(registry()), default=None)
    p.add_argument("--premise", action="append", default=[], metavar="FORMULA")
    p.add_argument("--goal", metavar="FORMULA")
    p.add_argument("--max-steps", type=_positive, default=defaults.max_steps_total)
    p.add_argument("--max-branch-size", type=_positive, default=defaults.max_expressions_per_branch)
    p.add_argument("--max-fresh", type=_positive, default=defaults.max_fresh_indices)
    p.add_argument("--max-branches", type=_positive, default=defaults.max_branches)
    p.add_argument("--worlds", type=_positive, default=3, help="oracle/audit bound on worlds")
    p.add_argument("--atoms", type=_positive, default=3, help="oracle/audit bound on content atoms")
    p.add_argument("--depth", type=_positive, default=2, help="formula depth for audit goal sampling")
    p.add_argument("--samples", type=_positive, default=100, help="audit samples per rule")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--jobs", type=_positive, default=1, help="worker cap (search runs in one worker)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--expect-unsound", action="store_true", help="audit passes iff violations are found")
    p.add_argument("--trace", metavar="PATH", help="also write the JSON proof trace to PATH")
    return p


def _configure_logging() -> None:
    level = os.environ.get("TABKIT_LOG")
    if not level:
        return
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _limits(ns: argparse.Namespace) -> Limits:
    return Limits(
        max_expressions_per_branch=ns.max_branch_size,
        max_fresh_indices=ns.max_fresh,
        max_branches=ns.max_branches,
        max_steps_total=ns.max_steps,
    )


def _parse(text: str, logic: LogicDefinition, what: str):
    try:
        return parse_formula(text, logic.signature)
    except FormulaError as exc:
        raise UsageError(f"{what} {text!r}: {exc}") from None


def _emit(out: TextIO, fmt: str, data: dict, text: str) -> None:
    if fmt == "json":
        out.write(json.dumps(data, indent=2, ensure_ascii=False) + "\n")
    else:
        out.write(text.rstrip("\n") + "\n")


def run(argv: Sequence[str], out: TextIO = sys.stdout, err: TextIO = sys.stderr) -> int:
    try:
        ns = build_parser().parse_args(list(argv))
        if ns.command != "info" and ns.logic is None:
            raise UsageError("--logic is required")
        if ns.command in NEEDS_GOAL and ns.goal is None:
            raise UsageError(f"{ns.command} needs --goal")
        logic = registry()[ns.logic] if ns.logic else None
        premises = [_parse(t, logic, "premise") for t in ns.premise] if logic else []
        goal = _parse(ns.goal, logic, "goal") if logic and ns.goal is not None else None
        limits = _limits(ns)
    except UsageError as exc:
        err.write(f"tabkit: error: {exc}\n")
        return EXIT_USAGE
    log.info("command %s logic %s", ns.command, ns.logic)
    match ns.command:
        case "prove":
            return _prove(ns, logic, premises, goal, limits, out)
        case "countermodel":
            return _countermodel(ns, logic, premises, goal, limits, out)
        case "oracle":
            return _oracle(ns, logic, premises, goal, out)
        case "audit":
            return _audit(ns, logic, limits, out)
        case "branches":
            return _branches(ns, logic, premises, goal, limits, out)
        case "info":
            return _info(ns, logic, out)
    return EXIT_USAGE


def _verdict_code(result: Any) -> int:
    if isinstance(result, Proved):
        return EXIT_OK
    if isinstance(result, Refuted):
        return EXIT_REFUTED
    return EXIT_RESOURCES


def _tableau(result: Any):
    return result.partial if isinstance(result, OutOfResources) else result.tableau


def _write_trace(ns: argparse.Namespace, trace: dict) -> None:
    if ns.trace:
        with open(ns.trace, "w", encoding="utf-8") as fh:
            json.dump(trace, fh, indent=2, ensure_ascii=False)
            fh.write("\n")


def _prove(ns, logic, premises, goal, limits, out) -> int:
    result = decide(premises, goal, logic, limits)
    tab = _tableau(result)
    trace = tab.trace_json(result.verdict)
    _write_trace(ns, trace)
    text = f"verdict: {result.verdict}\n"
    if isinstance(result, OutOfResources):
        text += f"limits hit: {', '.join(result.limits_hit)}\n"
    text += tab.render_text()
    _emit(out, ns.format, trace, text)
    return _verdict_code(result)


def _countermodel(ns, logic, premises, goal, limits, out) -> int:
    result = decide(premises, goal, logic, limits)
    _write_trace(ns, _tableau(result).trace_json(result.verdict))
    data: dict[str, Any] = {"logic": logic.name, "verdict": result.verdict}
    if isinstance(result, Refuted):
        ex = extract_countermodel(result, logic)
        data["countermodel"] = structure_to_json(ex.model, ex.point)
        data["verified"] = ex.verified
        data["failures"] = list(ex.failures)
        branch = sorted(result.union, key=expr_key)
        data["branch"] = [render_expression(e, logic.implicit_labels) for e in branch]
        text = (
            f"verdict: refuted\nverified: {str(ex.verified).lower()}\n"
            + "".join(f"failure: {f}\n" for f in ex.failures)
            + json.dumps(data["countermodel"], indent=2, ensure_ascii=False)
        )
    elif isinstance(result, Proved):
        text = "verdict: proved (no countermodel)"
    else:
        data["limits_hit"] = list(result.limits_hit)
        text = f"verdict: {result.verdict}\nlimits hit: {', '.join(result.limits_hit)}"
    _emit(out, ns.format, data, text)
    return _verdict_code(result)


def _oracle(ns, logic, premises, goal, out) -> int:
    bounds = EnumerationBounds(worlds=ns.worlds, atoms=ns.atoms)
    result = consequence_bounded(premises, goal, logic, bounds)
    data: dict[str, Any] = {
        "logic": logic.name,
        "premises": [render_formula(p) for p in premises],
        "goal": render_formula(goal),
        "bounds": bounds.to_json(),
        "verdict": result.verdict,
    }
    if isinstance(result, CounterModel):
        data["countermodel"] = structure_to_json(result.model, result.point)
        text = "verdict: countermodel\n" + json.dumps(data["countermodel"], indent=2, ensure_ascii=False)
        code = EXIT_REFUTED
    else:
        data["models_checked"] = result.models_checked
        text = (
            f"verdict: holds within bounds (worlds <= {bounds.worlds}, atoms <= {bounds.atoms}); "
            f"{result.models_checked} models checked"
        )
        code = EXIT_OK
    _emit(out, ns.format, data, text)
    return code


def _audit(ns, logic, limits, out) -> int:
    bounds = EnumerationBounds(worlds=ns.worlds, atoms=ns.atoms)
    schema_report = AuditReport()
    for schema in logic.rules:
        pairs = sample_rule_instances(logic, schema, ns.samples, ns.seed)
        inputs = [(inst.input, marks) for inst, marks in pairs]
        schema_report.extend(audit_rule_schema(schema, inputs, logic.reserved_values, seed=ns.seed))
    rules_report = audit_rules_sound(logic, bounds, ns.samples, ns.seed)
    rng = random.Random(ns.seed)
    pool = list(enumerate_formulas(logic.signature, ["p", "q"], ns.depth))
    goals = rng.sample(pool, min(ns.samples, len(pool)))
    unions = open_complete_unions(logic, goals, limits=limits)
    models_report = audit_models_sound(logic, unions)
    sections = {"rule-schema": schema_report, "rule-soundness": rules_report, "model-soundness": models_report}
    total = sum(len(r.violations) for r in sections.values())
    data = {
        "logic": logic.name,
        "bounds": bounds.to_json(),
        "samples": ns.samples,
        "seed": ns.seed,
        "sections": {
            name: {
                "checked": r.count(),
                "violations": [v.to_json() for v in r.violations],
                "skipped": r.count(verdict="skipped"),
            }
            for name, r in sections.items()
        },
        "violations": total,
        "expect_unsound": ns.expect_unsound,
    }
    lines = [f"audit {logic.name} (worlds <= {bounds.worlds}, atoms <= {bounds.atoms}, seed {ns.seed})"]
    for name, r in sections.items():
        lines.append(f"{name}: {r.count()} passed, {len(r.violations)} violations, {r.count(verdict='skipped')} skipped")
        by_schema: dict[str, int] = {}
        for v in r.violations:
            by_schema[v.schema] = by_schema.get(v.schema, 0) + 1
        for schema, n in by_schema.items():
            lines.append(f"  {schema}: {n} violations")
    if ns.expect_unsound:
        lines.append("violations expected: " + ("found" if total else "none found"))
        code = EXIT_OK if total else EXIT_REFUTED
    else:
        code = EXIT_OK if total == 0 else EXIT_REFUTED
    _emit(out, ns.format, data, "\n".join(lines))
    return code


def _branches(ns, logic, premises, goal, limits, out) -> int:
    kinds = enumerate_branch_kinds(premises, goal, logic, limits)
    if isinstance(kinds, OutOfResources):
        data = {"verdict": kinds.verdict, "limits_hit": list(kinds.limits_hit)}
        _emit(out, ns.format, data, f"verdict: {kinds.verdict}")
        return EXIT_RESOURCES
    implicit = logic.implicit_labels
    data = {
        "logic": logic.name,
        "total_kinds": kinds.total_kinds,
        "complete_kinds": kinds.complete_kinds,
        "closed_complete_kinds": kinds.closed_complete_kinds,
        "complete_representatives": [b.render(implicit) for b in kinds.complete_representatives],
        "representatives": [b.render(implicit) for b in kinds.representatives],
    }
    text = "\n".join(
        [
            f"total kinds: {kinds.total_kinds}",
            f"complete kinds: {kinds.complete_kinds} ({kinds.closed_complete_kinds} closed)",
            "complete representatives:",
            *(f"  {n + 1}. {b.render(implicit)}" for n, b in enumerate(kinds.complete_representatives)),
        ]
    )
    _emit(out, ns.format, data, text)
    return EXIT_OK


def _info(ns, logic, out) -> int:
    logics = [logic] if logic else list(registry().values())
    data = {"logics": [l.info() for l in logics]}
    lines = []
    for l in logics:
        info = l.info()
        lines.append(f"{info['name']}: {info['description']}")
        lines.append("  connectives: " + " ".join(c["token"] for c in info["connectives"]))
        lines.append("  rules: " + ", ".join(r["name"] for r in info["rules"]))
    _emit(out, ns.format, data, "\n".join(lines))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
