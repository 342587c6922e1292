"""Cross-model comparisons: performance profiles, significance calls, expected regret."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .bootstrap import BootstrapConfig, per_app_bootstrap
from .data import BenchmarkTree
from .estimators import DomainError, app_means, as_level, wald_interval
from .rng import derive_seed, substream

logger = logging.getLogger(__name__)

WALD_DECISION = "wald-decision"
BOOTSTRAP_DECISION = "bootstrap-decision"
SPLIT_HALF = "split-half"


@dataclass(frozen=True)
class PerformanceProfile:
    thresholds: tuple[float, ...]
    fractions: Mapping[str, tuple[float, ...]]

    def to_series(self) -> dict:
        return {m: {"x": list(self.thresholds), "y": list(f)} for m, f in self.fractions.items()}


def performance_profile(per_app_means: Mapping[str, Mapping[str, float]], thresholds: Sequence[float]) -> PerformanceProfile:
    """Fraction of apps on which each model reaches at least ``tau``."""
    thresholds = tuple(float(t) for t in thresholds)
    app_sets = {frozenset(v) for v in per_app_means.values()}
    if len(app_sets) > 1:
        raise DomainError("all models must cover the same apps")
    fractions = {}
    for model, means in per_app_means.items():
        vals = np.asarray(list(means.values()), dtype=float)
        fractions[model] = tuple(float(np.mean(vals >= t)) for t in thresholds)
    return PerformanceProfile(thresholds, fractions)


@dataclass(frozen=True)
class AppRegret:
    p_wrong: float
    gap: float
    regret: float


@dataclass
class RegretReport:
    per_app: dict[str, AppRegret]
    method: str
    skipped: list[str] = field(default_factory=list)

    @property
    def total(self) -> float:
        return float(sum(r.regret for r in self.per_app.values()))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "total": self.total,
            "per_app": {a: vars(r) for a, r in self.per_app.items()},
            "skipped": list(self.skipped),
        }


def _check_shared(tree1: BenchmarkTree, tree2: BenchmarkTree):
    if tree1.app_names != tree2.app_names:
        raise DomainError("models must share the same apps")
    for app in tree1.app_names:
        if list(tree1.apps[app]) != list(tree2.apps[app]):
            raise DomainError(f"models must share the scenarios of app {app!r}")


def _half_scores(arr, halves: np.ndarray, rng) -> np.ndarray:
    """Pooled score of one model on each simulation's half, one random config per scenario."""
    slices = arr.scenario_slices()
    starts = np.asarray([sl.start for sl in slices])
    sizes = np.asarray([sl.stop - sl.start for sl in slices])
    pick = starts[halves] + (rng.random(halves.shape) * sizes[halves]).astype(np.int64)
    return arr.successes[pick].sum(axis=1) / arr.trials[pick].sum(axis=1)


def split_half_regret(tree_model1: BenchmarkTree, tree_model2: BenchmarkTree, n_sims: int = 500,
                      seed: int = 0) -> RegretReport:
    """Probability of picking the inferior model from half the data, times the full-data gap.

    Each simulation draws one configuration per scenario and a random
    ``floor(S_a / 2)`` scenarios per app (shared by both models); the higher
    half-score wins, ties by a fair coin.
    """
    _check_shared(tree_model1, tree_model2)
    full1, full2 = app_means(tree_model1), app_means(tree_model2)
    per_app, skipped = {}, []
    for a, app in enumerate(tree_model1.app_names):
        arr1, arr2 = tree_model1.arrays[app], tree_model2.arrays[app]
        S = len(arr1.scenarios)
        if S < 2:
            logger.warning("app %r has fewer than 2 scenarios; skipped", app)
            skipped.append(app)
            continue
        halves = substream(seed, "split-half", a).random((n_sims, S)).argsort(axis=1)[:, : S // 2]
        s1 = _half_scores(arr1, halves, substream(seed, "config-pick", a, 1))
        s2 = _half_scores(arr2, halves, substream(seed, "config-pick", a, 2))
        coin = substream(seed, "coin", a).random(n_sims) < 0.5
        model1_wins = np.where(s1 == s2, coin, s1 > s2)
        full_winner_1 = full1[app] >= full2[app]
        p_wrong = float(np.mean(model1_wins != full_winner_1))
        gap = abs(full1[app] - full2[app])
        per_app[app] = AppRegret(p_wrong, gap, p_wrong * gap)
    return RegretReport(per_app, SPLIT_HALF, skipped)


def wald_app_intervals(tree: BenchmarkTree, level=0.05):
    level = as_level(level)
    return {
        app: wald_interval(int(arr.successes.sum()), int(arr.trials.sum()), level)
        for app, arr in tree.arrays.items()
    }


def significance_flags(tree_model1: BenchmarkTree, tree_model2: BenchmarkTree, method: str = "bootstrap",
                       config: BootstrapConfig | None = None, n_jobs: int = 1) -> dict[str, bool]:
    """Per-app significance: the two models' per-app CIs are disjoint."""
    if tree_model1.app_names != tree_model2.app_names:
        raise DomainError("models must share the same apps")
    config = config or BootstrapConfig()
    if method in ("wald", WALD_DECISION):
        ci1 = wald_app_intervals(tree_model1, config.level)
        ci2 = wald_app_intervals(tree_model2, config.level)
    elif method in ("bootstrap", BOOTSTRAP_DECISION):
        ci1 = per_app_bootstrap(tree_model1, config.with_(seed=derive_seed(config.seed, 1)), n_jobs=n_jobs)
        ci2 = per_app_bootstrap(tree_model2, config.with_(seed=derive_seed(config.seed, 2)), n_jobs=n_jobs)
    else:
        raise DomainError(f"unknown method {method!r}")
    return {app: ci1[app].disjoint(ci2[app]) for app in tree_model1.app_names}


def decision_regret(split_half: RegretReport, flags: Mapping[str, bool], method: str) -> RegretReport:
    """Regret incurred by deploying the declared-better model on every flagged app."""
    per_app = {a: r for a, r in split_half.per_app.items() if flags.get(a)}
    return RegretReport(per_app, method, list(split_half.skipped))


def compare_models(tree_model1: BenchmarkTree, tree_model2: BenchmarkTree, n_sims: int = 500, seed: int = 0,
                   config: BootstrapConfig | None = None, n_jobs: int = 1) -> dict[str, RegretReport]:
    config = config or BootstrapConfig(seed=derive_seed(seed, "bootstrap"))
    base = split_half_regret(tree_model1, tree_model2, n_sims, seed)
    wald = significance_flags(tree_model1, tree_model2, "wald", config)
    boot = significance_flags(tree_model1, tree_model2, "bootstrap", config, n_jobs)
    return {
        SPLIT_HALF: base,
        WALD_DECISION: decision_regret(base, wald, WALD_DECISION),
        BOOTSTRAP_DECISION: decision_regret(base, boot, BOOTSTRAP_DECISION),
    }
