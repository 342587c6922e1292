"""Leaf- and suite-level estimators for binary success rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .data import BenchmarkTree
from .rng import as_generator

WILSON = "wilson"
WALD = "wald"
PERCENTILE = "bootstrap-percentile"

POOL_ROLLOUTS = "rollouts"
POOL_LEAVES = "leaves"


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class ConfidenceLevel:
    """Two-sided level ``1 - alpha``; ``z`` is always derived from ``alpha``."""

    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def z(self) -> float:
        return float(ndtri(1.0 - self.alpha / 2.0))

    @property
    def confidence(self) -> float:
        return 1.0 - self.alpha


def as_level(level) -> ConfidenceLevel:
    if isinstance(level, ConfidenceLevel):
        return level
    return ConfidenceLevel(float(level))


@dataclass(frozen=True)
class ConfidenceInterval:
    estimate: float
    lower: float
    upper: float
    method: str
    level: ConfidenceLevel = field(default_factory=ConfidenceLevel)
    center: float | None = None

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def disjoint(self, other: "ConfidenceInterval") -> bool:
        return self.upper < other.lower or other.upper < self.lower

    def to_dict(self) -> dict:
        out = {
            "estimate": self.estimate,
            "lower": self.lower,
            "upper": self.upper,
            "method": self.method,
            "alpha": self.level.alpha,
        }
        if self.center is not None:
            out["center"] = self.center
        return out


def _check_counts(k, R):
    if isinstance(k, bool) or isinstance(R, bool) or int(k) != k or int(R) != R:
        raise DomainError(f"counts must be integers, got k={k!r}, R={R!r}")
    if R < 1:
        raise DomainError(f"trial count must be >= 1, got R={R}")
    if not 0 <= k <= R:
        raise DomainError(f"success count must lie in [0, R], got k={k}, R={R}")


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


def wilson_interval(k: int, R: int, level=0.05) -> ConfidenceInterval:
    """Wilson score interval for ``k`` successes in ``R`` trials.

    ``estimate`` is the raw rate k/R; the recentred midpoint is in ``center``.
    """
    _check_counts(k, R)
    level = as_level(level)
    z = level.z
    p = k / R
    z2 = z * z
    denom = 1.0 + z2 / R
    center = (p + z2 / (2 * R)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / R + z2 / (4 * R * R))
    return ConfidenceInterval(p, _clip01(center - half), _clip01(center + half), WILSON, level, center)


def wald_interval(k: int, R: int, level=0.05) -> ConfidenceInterval:
    """Normal-approximation interval. Zero width when k is 0 or R, by design."""
    _check_counts(k, R)
    level = as_level(level)
    p = k / R
    half = level.z * math.sqrt(p * (1 - p) / R)
    return ConfidenceInterval(p, _clip01(p - half), _clip01(p + half), WALD, level, p)


def jeffreys_draw(k, R, rng=None, size=None):
    """Draw from the Jeffreys posterior Beta(k + 1/2, R - k + 1/2).

    ``k`` and ``R`` may be arrays, in which case they broadcast like numpy.
    """
    k_arr, R_arr = np.asarray(k), np.asarray(R)
    if np.any(R_arr < 1) or np.any(k_arr < 0) or np.any(k_arr > R_arr):
        raise DomainError(f"invalid counts k={k!r}, R={R!r}")
    return as_generator(rng).beta(k_arr + 0.5, R_arr - k_arr + 0.5, size=size)


def pass_at_k(p: Sequence[float], k: int) -> float:
    """Mean over tasks of 1 - (1 - p_i)^k."""
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        raise DomainError("pass_at_k needs at least one task")
    if np.any((p < 0) | (p > 1)):
        raise DomainError("probabilities must lie in [0, 1]")
    if int(k) != k or k < 1:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    # 1 - (1 - p)^k without cancellation for small p
    with np.errstate(divide="ignore"):
        return float(np.mean(-np.expm1(int(k) * np.log1p(-p))))


@dataclass(frozen=True)
class SuiteEstimate:
    theta_hat: float
    per_app: Mapping[str, float]


def app_means(tree: BenchmarkTree, pooling: str = POOL_ROLLOUTS) -> dict[str, float]:
    out = {}
    for app, arr in tree.arrays.items():
        if arr.trials.sum() == 0:
            raise DomainError(f"app {app!r} has no rollouts")
        if pooling == POOL_ROLLOUTS:
            out[app] = float(arr.successes.sum() / arr.trials.sum())
        elif pooling == POOL_LEAVES:
            out[app] = float(np.mean(arr.rates))
        else:
            raise ValueError(f"unknown pooling {pooling!r}")
    return out


def suite_mean(tree: BenchmarkTree, pooling: str = POOL_ROLLOUTS) -> SuiteEstimate:
    """Unweighted mean across apps of the per-app pooled success rate."""
    per_app = app_means(tree, pooling)
    return SuiteEstimate(float(np.mean(list(per_app.values()))), per_app)


def trim_count(n_apps: int, trim_fraction: float) -> int:
    if not 0.0 <= trim_fraction < 0.5:
        raise DomainError(f"trim_fraction must lie in [0, 0.5), got {trim_fraction}")
    g = math.floor(trim_fraction * n_apps + 1e-9)
    if 2 * g >= n_apps:
        raise DomainError(f"trimming {g} per tail would remove all {n_apps} apps")
    return g


def trimmed_mean(values, trim_fraction: float, axis: int = -1):
    """Symmetric trimmed mean with ``floor(trim_fraction * n)`` values cut per tail."""
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    g = trim_count(n, trim_fraction)
    if g == 0:
        return values.mean(axis=axis)
    s = np.sort(values, axis=axis)
    s = np.take(s, np.arange(g, n - g), axis=axis)
    return s.mean(axis=axis)


def trimmed_suite_mean(tree: BenchmarkTree, trim_fraction: float, pooling: str = POOL_ROLLOUTS) -> SuiteEstimate:
    per_app = app_means(tree, pooling)
    return SuiteEstimate(float(trimmed_mean(list(per_app.values()), trim_fraction)), per_app)


def wilson_bounds(k, R, z: float):
    """Vectorised Wilson endpoints for arrays of counts (no validation)."""
    k, R = np.asarray(k, dtype=float), np.asarray(R, dtype=float)
    p = k / R
    denom = 1.0 + z * z / R
    center = (p + z * z / (2 * R)) / denom
    half = z / denom * np.sqrt(p * (1 - p) / R + z * z / (4 * R * R))
    return np.clip(center - half, 0.0, 1.0), np.clip(center + half, 0.0, 1.0)


def wald_bounds(k, R, z: float):
    k, R = np.asarray(k, dtype=float), np.asarray(R, dtype=float)
    p = k / R
    half = z * np.sqrt(p * (1 - p) / R)
    return np.clip(p - half, 0.0, 1.0), np.clip(p + half, 0.0, 1.0)


def suite_wald_interval(tree: BenchmarkTree, level=0.05) -> ConfidenceInterval:
    """Naive suite CI: every rollout an independent coin flip within its app."""
    level = as_level(level)
    var = 0.0
    per_app = app_means(tree)
    for app, arr in tree.arrays.items():
        p = per_app[app]
        var += p * (1 - p) / arr.trials.sum()
    theta = float(np.mean(list(per_app.values())))
    half = level.z * math.sqrt(var) / len(per_app)
    return ConfidenceInterval(theta, _clip01(theta - half), _clip01(theta + half), WALD, level, theta)
