"""Matched-pair sensitivity of success rates to each environmental axis."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .data import AXES, BenchmarkTree
from .estimators import DomainError

logger = logging.getLogger(__name__)

UNORDERED = "unordered-pairs"


@dataclass(frozen=True)
class MatchedPair:
    axis: str
    app: str
    scenario: str
    key_fixed: tuple[tuple[str, str], ...]
    value_a: str
    value_b: str
    delta: float

    def __post_init__(self):
        if self.value_a == self.value_b:
            raise ValueError("matched pair needs two distinct axis values")


@dataclass(frozen=True)
class SensitivityProfile:
    axis: str
    mad: float
    q90_abs_delta: float
    n_pairs: int


def _check_axis(tree: BenchmarkTree, axis: str):
    if axis not in AXES:
        raise DomainError(f"unknown axis {axis!r}")
    if axis not in tree.axis_mask:
        raise DomainError(f"axis {axis!r} is disabled in this tree")


def matched_pairs(tree: BenchmarkTree, axis: str, ordering: str = UNORDERED, apps=None) -> list[MatchedPair]:
    """All unordered pairs of configurations that differ only on ``axis``.

    ``delta = rate(value_a) - rate(value_b)`` with ``value_a < value_b``.
    """
    _check_axis(tree, axis)
    if ordering != UNORDERED:
        raise DomainError(f"unsupported ordering {ordering!r}")
    others = [a for a in AXES if a != axis]
    pairs = []
    for app, scens in tree.apps.items():
        if apps is not None and app not in apps:
            continue
        for scen, cfgs in scens.items():
            contexts: dict[tuple, dict[str, float]] = {}
            for cfg, vec in cfgs.items():
                ctx = tuple((o, cfg.get(o)) for o in others)
                contexts.setdefault(ctx, {})[cfg.get(axis)] = sum(vec) / len(vec)
            for ctx, rates in contexts.items():
                for va, vb in combinations(sorted(rates), 2):
                    pairs.append(MatchedPair(axis, app, scen, ctx, va, vb, rates[va] - rates[vb]))
    if not pairs:
        logger.warning("no matched pairs along axis %r", axis)
    return pairs


def mad(pairs: Sequence[MatchedPair] | Sequence[float]) -> float:
    """Mean absolute matched-pair difference."""
    deltas = _deltas(pairs)
    if deltas.size == 0:
        raise DomainError("MAD of an empty pair set")
    return float(np.mean(np.abs(deltas)))


def _deltas(pairs) -> np.ndarray:
    return np.asarray([p.delta if isinstance(p, MatchedPair) else p for p in pairs], dtype=float)


def nearest_rank(values, q: float) -> float:
    """Order statistic at rank ``floor(q n) + 1`` (capped at n)."""
    s = np.sort(np.asarray(values, dtype=float))
    if s.size == 0:
        raise DomainError("percentile of an empty set")
    idx = min(s.size - 1, math.floor(q * s.size + 1e-9))
    return float(s[idx])


def sensitivity_profile(tree: BenchmarkTree, axis: str, apps=None) -> SensitivityProfile:
    pairs = matched_pairs(tree, axis, apps=apps)
    abs_d = np.abs(_deltas(pairs))
    return SensitivityProfile(axis, mad(pairs), nearest_rank(abs_d, 0.9), len(pairs))


def mad_grid(tree: BenchmarkTree, axes: Sequence[str] | None = None) -> dict[str, dict[str, float | None]]:
    """Per-app MAD for each enabled axis (``None`` where an app has no pairs)."""
    axes = [a for a in (axes or AXES) if a in tree.axis_mask]
    grid = {}
    for app in tree.app_names:
        row = {}
        for axis in axes:
            pairs = [p for p in matched_pairs(tree, axis, apps={app})]
            row[axis] = mad(pairs) if pairs else None
        grid[app] = row
    return grid


def marginal_deltas(tree: BenchmarkTree, axis: str) -> np.ndarray:
    """Pairwise |delta| between per-scenario axis-value rates.

    Each value's rate is the mean of the leaf rates carrying that value, i.e.
    averaged over every other axis; values are then paired within the scenario.
    """
    _check_axis(tree, axis)
    out = []
    for scens in tree.apps.values():
        for cfgs in scens.values():
            by_value: dict[str, list[float]] = {}
            for cfg, vec in cfgs.items():
                by_value.setdefault(cfg.get(axis), []).append(sum(vec) / len(vec))
            rates = {v: float(np.mean(r)) for v, r in by_value.items()}
            for va, vb in combinations(sorted(rates), 2):
                out.append(abs(rates[va] - rates[vb]))
    return np.asarray(out, dtype=float)


def exceedance_curve(tree: BenchmarkTree, axis: str, thresholds: Sequence[float]) -> list[tuple[float, float]]:
    """Fraction of scenario-level |delta| strictly above each threshold."""
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise DomainError("thresholds must be non-empty")
    if thresholds != sorted(thresholds):
        raise DomainError("thresholds must be sorted")
    d = marginal_deltas(tree, axis)
    if d.size == 0:
        raise DomainError(f"no value pairs along axis {axis!r}")
    return exceedance_from_deltas(d, thresholds)


def exceedance_from_deltas(abs_deltas, thresholds) -> list[tuple[float, float]]:
    d = np.sort(np.abs(np.asarray(abs_deltas, dtype=float)))
    n = d.size
    return [(float(t), float(n - np.searchsorted(d, t, side="right")) / n) for t in thresholds]
