"""scikit-learn style wrappers: configure in ``__init__``, compute in ``fit``."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bootstrap import AXIS_VALUES, BootstrapConfig, ResampleLadder, hierarchical_bootstrap
from .data import AXES, BenchmarkTree, DataError, ingest_records, tree_from_nested
from .estimators import POOL_ROLLOUTS, ConfidenceLevel, suite_mean, trimmed_suite_mean


def check_tree(X, model: str | None = None, axis_mask=AXES) -> BenchmarkTree:
    """Coerce ``X`` to a :class:`BenchmarkTree`.

    Accepts a tree, a path to a results file, an iterable of records, or a
    nested ``{app: {scenario: {config: rollouts}}}`` mapping. When the records
    hold several models, ``model`` picks one.
    """
    if isinstance(X, BenchmarkTree):
        return X
    if isinstance(X, Mapping):
        return tree_from_nested(X, axis_mask, model or "")
    if isinstance(X, (str, Path, list, tuple)):
        trees = ingest_records(X, axis_mask)
        if model is None:
            if len(trees) != 1:
                raise DataError(f"input holds {len(trees)} models; pick one of {sorted(trees)}")
            return next(iter(trees.values()))
        if model not in trees:
            raise DataError(f"model {model!r} not in input")
        return trees[model]
    raise TypeError(f"cannot build a benchmark tree from {type(X).__name__}")


class SuiteMean(BaseEstimator):
    """Two-stage suite mean (optionally trimmed over apps)."""

    def __init__(self, pooling: str = POOL_ROLLOUTS, trim_fraction: float = 0.0, model: str | None = None):
        self.pooling = pooling
        self.trim_fraction = trim_fraction
        self.model = model

    def fit(self, X, y=None):
        tree = check_tree(X, self.model)
        if self.trim_fraction:
            est = trimmed_suite_mean(tree, self.trim_fraction, self.pooling)
        else:
            est = suite_mean(tree, self.pooling)
        self.theta_ = est.theta_hat
        self.per_app_ = dict(est.per_app)
        self.n_apps_ = tree.n_apps
        return self


class HierarchicalBootstrap(BaseEstimator):
    """Percentile bootstrap CI of the suite mean, with per-app CIs from the same replicates."""

    def __init__(self, resample_scenarios: bool = True, resample_axes: bool = True, resample_rollouts: bool = True,
                 n_replicates: int = 1000, alpha: float = 0.05, random_state: int = 0, statistic: str = "mean",
                 trim_fraction: float = 0.0, axis_mode: str = AXIS_VALUES, pooling: str = POOL_ROLLOUTS,
                 n_jobs: int = 1, model: str | None = None):
        self.resample_scenarios = resample_scenarios
        self.resample_axes = resample_axes
        self.resample_rollouts = resample_rollouts
        self.n_replicates = n_replicates
        self.alpha = alpha
        self.random_state = random_state
        self.statistic = statistic
        self.trim_fraction = trim_fraction
        self.axis_mode = axis_mode
        self.pooling = pooling
        self.n_jobs = n_jobs
        self.model = model

    def _config(self) -> BootstrapConfig:
        if isinstance(self.random_state, bool) or not isinstance(self.random_state, int):
            raise ValueError("random_state must be an integer seed")
        ladder = ResampleLadder(self.resample_scenarios, self.resample_axes, self.resample_rollouts)
        return BootstrapConfig(ladder=ladder, B=self.n_replicates, level=ConfidenceLevel(self.alpha),
                               seed=self.random_state, statistic=self.statistic, trim_fraction=self.trim_fraction,
                               axis_mode=self.axis_mode, pooling=self.pooling)

    def fit(self, X, y=None):
        tree = check_tree(X, self.model)
        result = hierarchical_bootstrap(tree, self._config(), n_jobs=self.n_jobs, per_app=True)
        self.interval_ = result.interval
        self.replicates_ = result.replicates
        self.per_app_intervals_ = dict(result.per_app_intervals)
        self.app_replicates_ = result.app_replicates
        return self

    def interval(self):
        check_is_fitted(self, "interval_")
        return self.interval_.lower, self.interval_.upper
