"""Offline integrity checks for task configurations."""

from .constraints import (
    Balance,
    Constraint,
    DataVolume,
    EntityExists,
    Instance,
    MaxCount,
    compatible_profiles,
    derive_constraints,
    eval_constraint,
    feasibility_matrix,
    triviality_filter,
)
from .predicate import PredicateAST, PredicateError, evaluate_predicate, parse_predicate
from .store import ProfileStore, load_store, load_stores
from .templates import TemplateExpr, TemplateError, ResolutionError, parse_template, resolve_templates

__all__ = [
    "Balance", "Constraint", "DataVolume", "EntityExists", "Instance", "MaxCount",
    "compatible_profiles", "derive_constraints", "eval_constraint", "feasibility_matrix",
    "triviality_filter", "PredicateAST", "PredicateError", "evaluate_predicate",
    "parse_predicate", "ProfileStore", "load_store", "load_stores", "TemplateExpr",
    "TemplateError", "ResolutionError", "parse_template", "resolve_templates",
]
