"""Hierarchical benchmark statistics: estimators, bootstrap CIs, variability, simulations and integrity checks."""

__version__ = "0.1.0"

from .api import HierarchicalBootstrap, SuiteMean, check_tree
from .bootstrap import (
    FULL,
    LADDERS,
    ROLLOUTS_ONLY,
    BootstrapConfig,
    BootstrapResult,
    ResampleLadder,
    hierarchical_bootstrap,
    per_app_bootstrap,
    resample_app,
)
from .data import (
    AXES,
    BenchmarkTree,
    ConfigKey,
    DataError,
    EmptyDatasetError,
    IntegrityError,
    OutcomeRecord,
    ParseError,
    ingest_records,
    leaf_rate,
    tree_from_nested,
    validate_tree,
)
from .estimators import (
    ConfidenceInterval,
    ConfidenceLevel,
    DomainError,
    jeffreys_draw,
    pass_at_k,
    suite_mean,
    trimmed_mean,
    trimmed_suite_mean,
    wald_interval,
    wilson_interval,
)

__all__ = [
    "__version__", "HierarchicalBootstrap", "SuiteMean", "check_tree", "FULL", "LADDERS", "ROLLOUTS_ONLY",
    "BootstrapConfig", "BootstrapResult", "ResampleLadder", "hierarchical_bootstrap", "per_app_bootstrap",
    "resample_app", "AXES", "BenchmarkTree", "ConfigKey", "DataError", "EmptyDatasetError", "IntegrityError",
    "OutcomeRecord", "ParseError", "ingest_records", "leaf_rate", "tree_from_nested", "validate_tree",
    "ConfidenceInterval", "ConfidenceLevel", "DomainError", "jeffreys_draw", "pass_at_k", "suite_mean",
    "trimmed_mean", "trimmed_suite_mean", "wald_interval", "wilson_interval",
]
