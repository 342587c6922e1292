"""Calibrated generative models and Monte Carlo studies of the estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .bootstrap import FULL, LADDERS, BootstrapConfig, ResampleLadder, hierarchical_bootstrap
from .data import AXES, BenchmarkTree, ConfigKey
from .estimators import (
    ConfidenceLevel,
    DomainError,
    as_level,
    pass_at_k,
    suite_mean,
    suite_wald_interval,
    wald_bounds,
    wilson_bounds,
)
from .rng import as_generator, derive_seed, substream

# per-app success rates of a mid-range model: 15 apps spanning 0.16-0.62, mean 0.41
DEFAULT_APP_RATES = (0.16, 0.22, 0.27, 0.31, 0.34, 0.37, 0.41, 0.43, 0.44, 0.46, 0.49, 0.52, 0.54, 0.57, 0.62)

THETA_DRAWS = 1_000_000


@dataclass(frozen=True)
class BaseCalibration:
    """Observed leaf outcomes are bimodal: k=0 with ``mass_zero``, else k=R_base."""

    mass_zero: float = 0.68
    R_base: int = 3

    def __post_init__(self):
        if not 0.0 <= self.mass_zero <= 1.0:
            raise DomainError("mass_zero must lie in [0, 1]")
        if self.R_base < 1:
            raise DomainError("R_base must be >= 1")

    @property
    def mass_full(self) -> float:
        return 1.0 - self.mass_zero


@dataclass(frozen=True)
class SuiteCalibration:
    """Generative model p_{a,s} = clip(mu_a + e_s), p_{a,s,c} = clip(p_{a,s} + e_c).

    ``theta_true`` is the super-population suite mean, filled in by
    :func:`build_calibration`.
    """

    app_rates: tuple = DEFAULT_APP_RATES
    sigma_scen: float = 0.25
    sigma_config: float = 0.05
    n_scenarios: int = 8
    axis_shape: tuple = (3, 3, 3)
    R: int = 3
    name: str = "main"
    theta_true: float | None = None
    theta_se: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "app_rates", tuple(float(m) for m in self.app_rates))
        object.__setattr__(self, "axis_shape", tuple(int(n) for n in self.axis_shape))
        if not self.app_rates or any(not 0.0 <= m <= 1.0 for m in self.app_rates):
            raise DomainError("app rates must be non-empty and lie in [0, 1]")
        if not (self.sigma_scen >= 0 and self.sigma_config >= 0) or math.isnan(self.sigma_scen + self.sigma_config):
            raise DomainError("noise scales must be non-negative")
        if self.n_scenarios < 1 or self.R < 1 or len(self.axis_shape) > len(AXES) or min(self.axis_shape, default=1) < 1:
            raise DomainError("invalid suite shape")

    @property
    def n_apps(self) -> int:
        return len(self.app_rates)

    @property
    def n_configs(self) -> int:
        return int(np.prod(self.axis_shape)) if self.axis_shape else 1

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "app_rates": list(self.app_rates),
            "sigma_scen": self.sigma_scen,
            "sigma_config": self.sigma_config,
            "n_scenarios": self.n_scenarios,
            "axis_shape": list(self.axis_shape),
            "R": self.R,
            "theta_true": self.theta_true,
            "theta_se": self.theta_se,
        }


@lru_cache(maxsize=64)
def _theta_true(app_rates: tuple, sigma_scen: float, sigma_config: float, n_draws: int, seed: int):
    means, variances = [], []
    for a, mu in enumerate(app_rates):
        rng = substream(seed, "calibration", a)
        p_s = np.clip(mu + sigma_scen * rng.standard_normal(n_draws), 0.0, 1.0)
        p_c = np.clip(p_s + sigma_config * rng.standard_normal(n_draws), 0.0, 1.0)
        means.append(p_c.mean())
        variances.append(p_c.var(ddof=1) / n_draws)
    A = len(app_rates)
    return float(np.mean(means)), float(math.sqrt(sum(variances)) / A)


def build_calibration(spec: SuiteCalibration | None = None, n_draws: int = THETA_DRAWS, seed: int = 20240) -> SuiteCalibration:
    """Fix the generative model and attach its true suite mean.

    The expectation over scenario and configuration noise is taken by Monte
    Carlo with ``n_draws`` draws per app; the standard error is stored in
    ``theta_se``. Noise-free models are exact.
    """
    spec = spec or SuiteCalibration()
    if spec.sigma_scen == 0 and spec.sigma_config == 0:
        return replace(spec, theta_true=float(np.mean(spec.app_rates)), theta_se=0.0)
    theta, se = _theta_true(spec.app_rates, float(spec.sigma_scen), float(spec.sigma_config), int(n_draws), int(seed))
    return replace(spec, theta_true=theta, theta_se=se)


MAIN = SuiteCalibration(name="main")
# no within-app spread: every leaf of an app shares its rate
TABLE3_HOMOGENEOUS = SuiteCalibration(sigma_scen=0.0, sigma_config=0.0, n_scenarios=10, name="homogeneous")
TABLE3_HETEROGENEOUS = SuiteCalibration(sigma_scen=0.08, sigma_config=0.03, n_scenarios=10, name="heterogeneous")
CONDITIONS = {c.name: c for c in (MAIN, TABLE3_HOMOGENEOUS, TABLE3_HETEROGENEOUS)}


def sample_leaf_probs(cal: SuiteCalibration, rng) -> np.ndarray:
    """True success probability of every leaf, shape (A, S, C)."""
    rng = as_generator(rng)
    mu = np.asarray(cal.app_rates)[:, None]
    A, S, C = cal.n_apps, cal.n_scenarios, cal.n_configs
    p_s = np.clip(mu + cal.sigma_scen * rng.standard_normal((A, S)), 0.0, 1.0)
    return np.clip(p_s[:, :, None] + cal.sigma_config * rng.standard_normal((A, S, C)), 0.0, 1.0)


def _config_keys(shape: Sequence[int]) -> list[ConfigKey]:
    keys = []
    for idx in np.ndindex(*shape) if shape else [()]:
        values = {AXES[j]: f"{AXES[j][0]}{v}" for j, v in enumerate(idx)}
        keys.append(ConfigKey(**values))
    return keys


def _tree_from_outcomes(y: np.ndarray, axis_shape: Sequence[int], model: str = "") -> BenchmarkTree:
    keys = _config_keys(axis_shape)
    apps = {}
    for a in range(y.shape[0]):
        apps[f"app{a:02d}"] = {
            f"s{s:02d}": {keys[c]: tuple(y[a, s, c].astype(int).tolist()) for c in range(len(keys))}
            for s in range(y.shape[1])
        }
    return BenchmarkTree(apps, frozenset(AXES[: len(axis_shape)]), model)


def sample_synthetic_tree(cal: SuiteCalibration, rng, return_probs: bool = False):
    """Draw leaf probabilities, then ``R`` Bernoulli rollouts per leaf."""
    rng = as_generator(rng)
    probs = sample_leaf_probs(cal, rng)
    y = rng.random(probs.shape + (cal.R,)) < probs[..., None]
    tree = _tree_from_outcomes(y, cal.axis_shape)
    return (tree, probs) if return_probs else tree


@dataclass(frozen=True)
class TwoModelSpec:
    """Two models on shared apps and scenarios.

    Model 1 sits ``gap/2`` above and model 2 ``gap/2`` below the app rate.
    Scenario difficulty ``sigma_scen`` is shared; ``sigma_model`` adds a
    model-specific scenario effect and ``sigma_config`` model-specific cell noise.
    """

    app_rates: tuple = DEFAULT_APP_RATES
    gaps: tuple = (0.0,) * 3 + (0.45,) * 12
    sigma_scen: float = 0.1
    sigma_model: float = 0.18
    sigma_config: float = 0.05
    n_scenarios: int = 8
    axis_shape: tuple = (3, 3, 3)
    R: int = 20

    def __post_init__(self):
        if len(self.gaps) != len(self.app_rates):
            raise DomainError("one gap per app is required")
        if min(self.sigma_scen, self.sigma_model, self.sigma_config) < 0:
            raise DomainError("noise scales must be non-negative")


def sample_two_model_trees(spec: TwoModelSpec, rng) -> tuple[BenchmarkTree, BenchmarkTree]:
    rng = as_generator(rng)
    mu = np.asarray(spec.app_rates)[:, None]
    half = np.asarray(spec.gaps)[:, None] / 2
    A, S = len(spec.app_rates), spec.n_scenarios
    C = int(np.prod(spec.axis_shape)) if spec.axis_shape else 1
    shared = spec.sigma_scen * rng.standard_normal((A, S))
    trees = []
    for m, sign in enumerate((1.0, -1.0)):
        p_s = np.clip(mu + sign * half + shared + spec.sigma_model * rng.standard_normal((A, S)), 0.0, 1.0)
        probs = np.clip(p_s[:, :, None] + spec.sigma_config * rng.standard_normal((A, S, C)), 0.0, 1.0)
        y = rng.random(probs.shape + (spec.R,)) < probs[..., None]
        trees.append(_tree_from_outcomes(y, spec.axis_shape, f"model{m + 1}"))
    return trees[0], trees[1]


# --------------------------------------------------------------------------- coverage studies


@dataclass(frozen=True)
class CoverageRow:
    condition: str
    method: str
    R: int | None
    coverage: float
    coverage_se: float
    width: float
    n: int

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "resampling": self.method,
            "R": self.R,
            "coverage": self.coverage,
            "coverage_se": self.coverage_se,
            "width": self.width,
            "n": self.n,
        }


def _binom_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def coverage_study_base(R_values=(1, 3, 5, 10), n_trials: int = 10_000, level=0.05, seed: int = 0,
                        base: BaseCalibration = BaseCalibration()) -> list[CoverageRow]:
    """Per-configuration coverage of Wald and Wilson intervals.

    Each trial draws an observed count from the bimodal base calibration, a true
    rate from its Jeffreys posterior, then ``R`` fresh rollouts.
    """
    if n_trials < 1000:
        raise DomainError("n_trials must be >= 1000")
    z = as_level(level).z
    rows = []
    for R in R_values:
        rng = substream(seed, "coverage-base", int(R))
        k_obs = np.where(rng.random(n_trials) < base.mass_zero, 0, base.R_base)
        p_true = rng.beta(k_obs + 0.5, base.R_base - k_obs + 0.5)
        k_new = rng.binomial(int(R), p_true)
        for name, bounds in (("wald", wald_bounds), ("wilson", wilson_bounds)):
            lo, hi = bounds(k_new, R, z)
            cov = float(np.mean((lo <= p_true) & (p_true <= hi)))
            rows.append(CoverageRow("base", name, int(R), cov, _binom_se(cov, n_trials), float(np.mean(hi - lo)), n_trials))
    return rows


def _variant_ladder(variant) -> ResampleLadder | str:
    if isinstance(variant, ResampleLadder) or variant == "wald":
        return variant
    return LADDERS[variant]


def _ladder_code(ladder: ResampleLadder) -> int:
    # seed key depends on which levels resample, not on the variant's position
    return 4 * ladder.scenarios + 2 * ladder.config_axes + ladder.rollouts


def coverage_study_suite(calibration: SuiteCalibration, variants=("roll", "config+roll", "scen+config+roll"),
                         n_experiments: int = 200, B: int = 500, seed: int = 0, level=0.05,
                         axis_mode: str = "values", n_jobs: int = 1, estimand: str = "super-population") -> list[CoverageRow]:
    """Suite-level coverage of bootstrap ladder variants (and the naive Wald CI).

    ``estimand="realized"`` scores coverage against the mean of the sampled leaf
    probabilities instead of the super-population ``theta_true``.
    """
    cal = calibration if calibration.theta_true is not None else build_calibration(calibration)
    level = as_level(level)
    hits = {v: 0 for v in variants}
    widths = {v: 0.0 for v in variants}
    for e in range(n_experiments):
        tree, probs = sample_synthetic_tree(cal, substream(seed, "tree", e), return_probs=True)
        target = cal.theta_true if estimand == "super-population" else float(probs.mean(axis=(1, 2)).mean())
        for variant in variants:
            ladder = _variant_ladder(variant)
            if ladder == "wald":
                ci = suite_wald_interval(tree, level)
            else:
                cfg = BootstrapConfig(ladder=ladder, B=B, level=level, seed=derive_seed(seed, "bootstrap", e, _ladder_code(ladder)),
                                      axis_mode=axis_mode)
                ci = hierarchical_bootstrap(tree, cfg, n_jobs=n_jobs).interval
            hits[variant] += ci.contains(target)
            widths[variant] += ci.width
    rows = []
    for variant in variants:
        cov = hits[variant] / n_experiments
        label = variant.label if isinstance(variant, ResampleLadder) else variant
        rows.append(CoverageRow(cal.name, label, cal.R, cov, _binom_se(cov, n_experiments),
                                widths[variant] / n_experiments, n_experiments))
    return rows


def bootstrap_B_sensitivity(calibration: SuiteCalibration, B_list=(100, 300, 500, 1000, 2000), n_experiments: int = 200,
                            seed: int = 0, level=0.05, ladder: ResampleLadder = FULL, n_jobs: int = 1) -> list[dict]:
    """Coverage and mean width of the full ladder as the replicate count grows.

    Every B is run on the same sampled trees, so width differences between
    consecutive B reflect replicate noise only.
    """
    B_list = [int(b) for b in B_list]
    if B_list != sorted(B_list):
        raise DomainError("B_list must be sorted")
    cal = calibration if calibration.theta_true is not None else build_calibration(calibration)
    level = as_level(level)
    hits = np.zeros(len(B_list))
    widths = np.zeros(len(B_list))
    for e in range(n_experiments):
        tree = sample_synthetic_tree(cal, substream(seed, "tree", e))
        for i, B in enumerate(B_list):
            cfg = BootstrapConfig(ladder=ladder, B=B, level=level, seed=derive_seed(seed, "bootstrap", e))
            ci = hierarchical_bootstrap(tree, cfg, n_jobs=n_jobs).interval
            hits[i] += ci.contains(cal.theta_true)
            widths[i] += ci.width
    rows = []
    for i, B in enumerate(B_list):
        cov = hits[i] / n_experiments
        w = widths[i] / n_experiments
        rows.append({
            "B": B,
            "coverage": float(cov),
            "coverage_se": _binom_se(cov, n_experiments),
            "width": float(w),
            "width_change": None if i == 0 else float(w - widths[i - 1] / n_experiments),
        })
    return rows


# --------------------------------------------------------------------------- replay


STATIC = "static"
MULTIFACTORIAL = "multifactorial"


@dataclass(frozen=True)
class ReplaySimSpec:
    task_probs: tuple
    k: int
    n_mc: int = 100_000
    env: str = STATIC
    match_prob: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "task_probs", tuple(float(p) for p in self.task_probs))
        if not self.task_probs or any(not 0.0 <= p <= 1.0 for p in self.task_probs):
            raise DomainError("task probabilities must be non-empty and lie in [0, 1]")
        if self.k < 1:
            raise DomainError("k must be >= 1")
        if self.n_mc < 10_000:
            raise DomainError("n_mc must be >= 10,000")
        if self.env not in (STATIC, MULTIFACTORIAL):
            raise DomainError(f"unknown env {self.env!r}")
        if not 0.0 <= self.match_prob <= 1.0:
            raise DomainError("match_prob must lie in [0, 1]")


@dataclass(frozen=True)
class ReplayResult:
    empirical_sr: float
    analytic_pass_at_k: float
    abs_error: float
    mc_se: float
    source_sr: float

    def to_dict(self) -> dict:
        return {
            "empirical_SR": self.empirical_sr,
            "analytic_pass_at_k": self.analytic_pass_at_k,
            "abs_error": self.abs_error,
            "mc_se": self.mc_se,
            "source_SR": self.source_sr,
        }


_MC_CHUNK = 20_000


def _replay(spec: ReplaySimSpec, seed: int, match_prob: float) -> ReplayResult:
    p = np.asarray(spec.task_probs)
    total, total_sq = 0.0, 0.0
    for c, lo in enumerate(range(0, spec.n_mc, _MC_CHUNK)):
        n = min(_MC_CHUNK, spec.n_mc - lo)
        # recording phase: k rollouts per task; a stored trajectory exists iff one succeeded
        recorded = substream(seed, "record", c).binomial(spec.k, p, size=(n, p.size)) > 0
        if match_prob < 1.0:
            # the replayed action sequence only lands when the new configuration matches
            recorded &= substream(seed, "match", c).random((n, p.size)) < match_prob
        sr = recorded.mean(axis=1)
        total += sr.sum()
        total_sq += (sr ** 2).sum()
    mean = total / spec.n_mc
    var = max(total_sq / spec.n_mc - mean ** 2, 0.0) * spec.n_mc / (spec.n_mc - 1)
    analytic = pass_at_k(p, spec.k)
    return ReplayResult(float(mean), analytic, abs(float(mean) - analytic), math.sqrt(var / spec.n_mc), float(p.mean()))


def replay_equivalence_sim(spec: ReplaySimSpec, seed: int = 0) -> ReplayResult:
    """Replay agent on a static environment: succeeds on a task iff any of the
    ``k`` recording rollouts succeeded."""
    return _replay(spec, seed, 1.0)


def replay_transfer_sim(spec: ReplaySimSpec, seed: int = 0) -> ReplayResult:
    """Replay agent on a multifactorial environment with configuration-match probability."""
    return _replay(spec, seed, spec.match_prob if spec.env == MULTIFACTORIAL else 1.0)
