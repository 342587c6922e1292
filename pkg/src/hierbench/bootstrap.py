"""Hierarchical bootstrap over apps -> scenarios -> configuration axes -> rollouts.

Apps are fixed strata and never resampled. Within each app a replicate
resamples, depending on the ladder:

1. scenarios with replacement,
2. for every scenario copy and every environmental axis that varies in that
   scenario, the observed axis values with replacement; the surviving
   configuration cells are the product of the drawn values, counted with
   multiplicity,
3. rollouts with replacement inside every surviving cell copy.

Resampling ``R`` binary rollouts with replacement is drawn as
``Binomial(R, k/R)``; ``m`` independent copies of one cell pool to
``Binomial(m R, k/R)``. Both are exact in distribution.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .data import AXES, AppArrays, BenchmarkTree
from .estimators import (
    PERCENTILE,
    POOL_LEAVES,
    POOL_ROLLOUTS,
    ConfidenceInterval,
    ConfidenceLevel,
    DomainError,
    as_level,
    suite_mean,
    trimmed_mean,
)
from .rng import as_generator, substream

logger = logging.getLogger(__name__)

CHUNK = 256
AXIS_VALUES = "values"
AXIS_CELLS = "cells"


@dataclass(frozen=True)
class ResampleLadder:
    scenarios: bool = True
    config_axes: bool = True
    rollouts: bool = True

    def __post_init__(self):
        if not (self.scenarios or self.config_axes or self.rollouts):
            raise DomainError("at least one resampling level must be enabled")

    @property
    def label(self) -> str:
        parts = [n for n, on in (("scen", self.scenarios), ("config", self.config_axes), ("roll", self.rollouts)) if on]
        return "+".join(parts)


FULL = ResampleLadder(True, True, True)
ROLLOUTS_ONLY = ResampleLadder(False, False, True)
AXES_ROLLOUTS = ResampleLadder(False, True, True)
SCEN_ROLLOUTS = ResampleLadder(True, False, True)
SCEN_AXES = ResampleLadder(True, True, False)

LADDERS = {
    "roll": ROLLOUTS_ONLY,
    "config+roll": AXES_ROLLOUTS,
    "scen+roll": SCEN_ROLLOUTS,
    "scen+config": SCEN_AXES,
    "scen+config+roll": FULL,
}


@dataclass(frozen=True)
class BootstrapConfig:
    ladder: ResampleLadder = FULL
    B: int = 1000
    level: ConfidenceLevel = field(default_factory=ConfidenceLevel)
    seed: int = 0
    statistic: str = "mean"
    trim_fraction: float = 0.0
    axis_mode: str = AXIS_VALUES
    pooling: str = POOL_ROLLOUTS

    def __post_init__(self):
        if int(self.B) != self.B or self.B < 1:
            raise DomainError(f"B must be a positive integer, got {self.B!r}")
        if self.statistic not in ("mean", "trimmed-mean"):
            raise DomainError(f"unknown statistic {self.statistic!r}")
        if self.axis_mode not in (AXIS_VALUES, AXIS_CELLS):
            raise DomainError(f"unknown axis_mode {self.axis_mode!r}")
        if self.pooling not in (POOL_ROLLOUTS, POOL_LEAVES):
            raise DomainError(f"unknown pooling {self.pooling!r}")
        object.__setattr__(self, "level", as_level(self.level))

    def with_(self, **kw) -> "BootstrapConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "resample_scenarios": self.ladder.scenarios,
            "resample_axes": self.ladder.config_axes,
            "resample_rollouts": self.ladder.rollouts,
            "B": int(self.B),
            "alpha": self.level.alpha,
            "seed": int(self.seed),
            "statistic": self.statistic,
            "trim_fraction": self.trim_fraction,
            "axis_mode": self.axis_mode,
            "pooling": self.pooling,
        }


@dataclass(frozen=True)
class BootstrapResult:
    interval: ConfidenceInterval
    replicates: np.ndarray
    per_app_intervals: Mapping[str, ConfidenceInterval] | None = None
    app_replicates: np.ndarray | None = None


# --------------------------------------------------------------------------- engine


def _cell_weights(arr: AppArrays, s: int, sl: slice, n: int, axis_mode: str, rng) -> np.ndarray:
    """Multiplicity of each cell of scenario ``s`` in ``n`` independent scenario copies."""
    n_cells = sl.stop - sl.start
    if axis_mode == AXIS_CELLS:
        return rng.multinomial(n_cells, np.full(n_cells, 1.0 / n_cells), size=n)
    sizes = arr.axis_sizes[s]
    codes = arr.axis_codes[sl]
    varying = [j for j in range(len(AXES)) if sizes[j] > 1]

    def draw(m):
        w = np.ones((m, n_cells), dtype=np.int64)
        for j in varying:
            nv = int(sizes[j])
            counts = rng.multinomial(nv, np.full(nv, 1.0 / nv), size=m)
            w *= counts[:, codes[:, j]]
        return w

    w = draw(n)
    if n_cells != int(np.prod(sizes)):
        # non-factorial design: the drawn value product may miss every observed cell
        empty = np.flatnonzero(w.sum(axis=1) == 0)
        while empty.size:
            w[empty] = draw(empty.size)
            empty = empty[w[empty].sum(axis=1) == 0]
    return w


def _leaf_weights(arr: AppArrays, ladder: ResampleLadder, axis_mode: str, b: int, rng_scen, rng_axes) -> np.ndarray:
    S = len(arr.scenarios)
    if ladder.scenarios and S > 1:
        ms = rng_scen.multinomial(S, np.full(S, 1.0 / S), size=b)
    else:
        ms = np.ones((b, S), dtype=np.int64)
    W = np.empty((b, len(arr.trials)), dtype=np.int64)
    for s, sl in enumerate(arr.scenario_slices()):
        m = ms[:, s]
        n_cells = sl.stop - sl.start
        if ladder.config_axes and n_cells > 1:
            cw = _cell_weights(arr, s, sl, int(m.sum()), axis_mode, rng_axes)
            cum = np.vstack([np.zeros((1, n_cells), dtype=np.int64), np.cumsum(cw, axis=0)])
            ends = np.cumsum(m)
            W[:, sl] = cum[ends] - cum[ends - m]
        else:
            W[:, sl] = m[:, None]
    return W


def _app_replicates(arr: AppArrays, ladder, axis_mode, pooling, b, rng_scen, rng_axes, rng_roll) -> np.ndarray:
    W = _leaf_weights(arr, ladder, axis_mode, b, rng_scen, rng_axes)
    k, n = arr.successes, arr.trials
    K = W * k
    if ladder.rollouts:
        mixed = np.flatnonzero((k > 0) & (k < n))
        if mixed.size:
            K[:, mixed] = rng_roll.binomial(W[:, mixed] * n[mixed], k[mixed] / n[mixed])
    if pooling == POOL_ROLLOUTS:
        return K.sum(axis=1) / (W * n).sum(axis=1)
    return (K / n).sum(axis=1) / W.sum(axis=1)


def resample_app(arr: AppArrays | BenchmarkTree, ladder: ResampleLadder, rng=None, app: str | None = None,
                 axis_mode: str = AXIS_VALUES, pooling: str = POOL_ROLLOUTS, size: int | None = None):
    """One (or ``size``) bootstrap replicate(s) of a single app's mean."""
    if isinstance(arr, BenchmarkTree):
        if app is None:
            if arr.n_apps != 1:
                raise ValueError("app must be given for a multi-app tree")
            app = arr.app_names[0]
        arr = arr.arrays[app]
    rng = as_generator(rng)
    out = _app_replicates(arr, ladder, axis_mode, pooling, 1 if size is None else size, rng, rng, rng)
    return float(out[0]) if size is None else out


def _statistic(values: np.ndarray, config: BootstrapConfig):
    if config.statistic == "trimmed-mean":
        return trimmed_mean(values, config.trim_fraction, axis=-1)
    return values.mean(axis=-1)


def _percentile(reps: np.ndarray, estimate: float, level: ConfidenceLevel) -> ConfidenceInterval:
    lo, hi = np.quantile(reps, [level.alpha / 2, 1 - level.alpha / 2])
    return ConfidenceInterval(float(estimate), float(max(0.0, lo)), float(min(1.0, hi)), PERCENTILE, level)


def app_replicate_matrix(tree: BenchmarkTree, config: BootstrapConfig, n_jobs: int = 1) -> np.ndarray:
    """``(B, A)`` matrix of resampled per-app means.

    Work is split into (chunk, app) units with their own substreams, so the
    result is identical for any ``n_jobs``.
    """
    arrays = list(tree.arrays.values())
    for name, arr in tree.arrays.items():
        if arr.trials.size == 0:
            raise DomainError(f"app {name!r} has no rollouts")
    B, A = int(config.B), len(arrays)
    reps = np.empty((B, A))
    units = [(c, a) for c in range((B + CHUNK - 1) // CHUNK) for a in range(A)]

    def work(unit):
        c, a = unit
        lo, hi = c * CHUNK, min(B, (c + 1) * CHUNK)
        streams = (substream(config.seed, "bootstrap", c, a, lvl) for lvl in ("scenarios", "axes", "rollouts"))
        reps[lo:hi, a] = _app_replicates(arrays[a], config.ladder, config.axis_mode, config.pooling, hi - lo, *streams)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(work, units))
    else:
        for unit in units:
            work(unit)
    return reps


def hierarchical_bootstrap(tree: BenchmarkTree, config: BootstrapConfig | None = None, n_jobs: int = 1,
                           per_app: bool = False) -> BootstrapResult:
    """Percentile CI for the suite statistic; optionally per-app CIs from the same replicates."""
    config = config or BootstrapConfig()
    app_reps = app_replicate_matrix(tree, config, n_jobs)
    reps = np.asarray(_statistic(app_reps, config), dtype=float)
    est = suite_mean(tree, config.pooling)
    point = est.theta_hat
    if config.statistic == "trimmed-mean":
        point = float(trimmed_mean(list(est.per_app.values()), config.trim_fraction))
    per_app_cis = None
    if per_app:
        per_app_cis = {
            app: _percentile(app_reps[:, i], est.per_app[app], config.level)
            for i, app in enumerate(tree.app_names)
        }
    return BootstrapResult(_percentile(reps, point, config.level), reps, per_app_cis, app_reps)


def per_app_bootstrap(tree: BenchmarkTree, config: BootstrapConfig | None = None, apps=None,
                      n_jobs: int = 1) -> dict[str, ConfidenceInterval]:
    """Per-app percentile CIs. Apps are never resampled, so each app's CI only
    depends on its own subtree and its position in ``tree``."""
    result = hierarchical_bootstrap(tree, config, n_jobs=n_jobs, per_app=True)
    if apps is None:
        return dict(result.per_app_intervals)
    missing = [a for a in apps if a not in result.per_app_intervals]
    if missing:
        raise KeyError(f"unknown app(s): {missing}")
    return {a: result.per_app_intervals[a] for a in apps}
