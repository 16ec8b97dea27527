"""Labelled tableaux over generalised semantic structures.

Formulas and signatures live in `syntax`, the labelled expression language in
`tablang`, rule schemas in `rules`, the search in `engine`, finite models and
oracles in `semantics`, and the bundled logics in `logics`.
"""

from .engine import (
    Branch,
    BranchStatus,
    Limits,
    OutOfResources,
    Proved,
    Refuted,
    Tableau,
    decide,
    enumerate_branch_kinds,
    saturate,
    verify_tableau,
)
from .logics import LogicDefinition, classical_logic, get_logic, kd3, registry, sublogic_s
from .semantics import (
    CounterModel,
    EnumerationBounds,
    FiniteStructure,
    Holds,
    audit_models_sound,
    audit_rules_sound,
    consequence_bounded,
    evaluate,
    extract_countermodel,
)
from .syntax import Signature, enumerate_formulas, parse_formula, render_formula

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "BranchStatus",
    "Limits",
    "OutOfResources",
    "Proved",
    "Refuted",
    "Tableau",
    "decide",
    "enumerate_branch_kinds",
    "saturate",
    "verify_tableau",
    "LogicDefinition",
    "classical_logic",
    "get_logic",
    "kd3",
    "registry",
    "sublogic_s",
    "CounterModel",
    "EnumerationBounds",
    "FiniteStructure",
    "Holds",
    "audit_models_sound",
    "audit_rules_sound",
    "consequence_bounded",
    "evaluate",
    "extract_countermodel",
    "Signature",
    "enumerate_formulas",
    "parse_formula",
    "render_formula",
]
