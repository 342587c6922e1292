"""Acceptance criteria, one test per criterion.

Each test records a ``PASS criterion N: ...`` or ``FAIL criterion N: ...`` line
(shown in the terminal summary) before asserting.
"""

import itertools
import json
import math
import re
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

from hierbench.analysis import BOOTSTRAP_DECISION, WALD_DECISION, compare_models
from hierbench.bootstrap import BootstrapConfig, ROLLOUTS_ONLY, resample_app
from hierbench.cli import run
from hierbench.data import tree_from_nested
from hierbench.estimators import jeffreys_draw, pass_at_k, wald_interval, wilson_interval
from hierbench.integrity import Instance, feasibility_matrix, load_stores, triviality_filter
from hierbench.rng import derive_seed, substream
from hierbench.simlab import (
    MAIN,
    TABLE3_HETEROGENEOUS,
    TABLE3_HOMOGENEOUS,
    ReplaySimSpec,
    TwoModelSpec,
    bootstrap_B_sensitivity,
    build_calibration,
    coverage_study_base,
    coverage_study_suite,
    replay_equivalence_sim,
    sample_two_model_trees,
)
from hierbench.variability import exceedance_curve, mad, matched_pairs

from conftest import ACCEPTANCE_LINES, FIXTURES
from test_cli import SMALL, STOCHASTIC
from test_integrity import _oracle_ok
from test_variability import random_tree

pytestmark = pytest.mark.acceptance

SEED = 0


def verdict(n: int, checks: dict[str, bool], detail: str):
    ok = all(checks.values())
    failed = [name for name, good in checks.items() if not good]
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    if failed:
        line += f" [failed: {', '.join(failed)}]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_wald_collapse():
    t0 = time.perf_counter()
    rows = coverage_study_base(seed=SEED)
    cov = {(r.method, r.R): r.coverage for r in rows}
    elapsed = time.perf_counter() - t0
    wald3 = cov[("wald", 3)]
    wilson = {R: cov[("wilson", R)] for R in (1, 3, 5, 10)}
    verdict(1, {
        "wald R=3 in 0.25+-0.06": abs(wald3 - 0.25) <= 0.06,
        "wilson >= 0.90 at every R": min(wilson.values()) >= 0.90,
        "runtime < 120 s": elapsed < 120,
    }, f"wald@R=3={wald3:.3f}, wilson={ {R: round(c, 3) for R, c in wilson.items()} }, {elapsed:.1f}s")


def test_criterion_2_bootstrap_ladder():
    t0 = time.perf_counter()
    homo = {r.method: r for r in coverage_study_suite(build_calibration(TABLE3_HOMOGENEOUS),
                                                      ("roll", "scen+config+roll"), 200, 500, seed=SEED)}
    het = {r.method: r for r in coverage_study_suite(build_calibration(TABLE3_HETEROGENEOUS), ("roll",), 200, 500,
                                                     seed=SEED)}
    elapsed = time.perf_counter() - t0
    full, roll, hroll = homo["scen+config+roll"], homo["roll"], het["roll"]
    verdict(2, {
        "full coverage >= 0.97": full.coverage >= 0.97,
        "full width 0.061+-0.02": abs(full.width - 0.061) <= 0.02,
        "roll coverage 0.86+-0.06": abs(roll.coverage - 0.86) <= 0.06,
        "roll width 0.013+-0.006": abs(roll.width - 0.013) <= 0.006,
        "heterogeneous roll coverage 0.60+-0.08": abs(hroll.coverage - 0.60) <= 0.08,
        "runtime < 15 min": elapsed < 900,
    }, f"homogeneous full cov={full.coverage:.3f} width={full.width:.4f}; roll cov={roll.coverage:.3f} "
       f"width={roll.width:.4f}; heterogeneous roll cov={hroll.coverage:.3f}; {elapsed:.0f}s")


def test_criterion_3_ladder_ordering():
    rows = coverage_study_suite(build_calibration(MAIN), ("roll", "config+roll", "scen+config+roll"), 200, 500,
                                seed=SEED)
    c = [r.coverage for r in rows]
    verdict(3, {
        "strictly increasing": c[0] < c[1] < c[2],
        "roll <= 0.30": c[0] <= 0.30,
        "+axes in [0.40, 0.70]": 0.40 <= c[1] <= 0.70,
        "full >= 0.90": c[2] >= 0.90,
    }, "coverage " + " -> ".join(f"{r.method}={r.coverage:.3f}" for r in rows))


def test_criterion_4_b_sensitivity():
    rows = bootstrap_B_sensitivity(build_calibration(MAIN), B_list=(100, 300, 500, 600, 1000, 2000),
                                   n_experiments=200, seed=SEED)
    by_B = {r["B"]: r for r in rows}
    diffs = {B: abs(by_B[B]["width"] - by_B[2 * B]["width"]) for B in by_B if B >= 300 and 2 * B in by_B}
    covs = {B: r["coverage"] for B, r in by_B.items()}
    verdict(4, {
        "|width(B)-width(2B)| < 0.002 for B >= 300": bool(diffs) and max(diffs.values()) < 0.002,
        "coverage >= 0.95 for B >= 100": min(covs.values()) >= 0.95,
    }, f"width diffs { {B: round(d, 5) for B, d in diffs.items()} }, coverage { {B: round(c, 3) for B, c in covs.items()} }")


def test_criterion_5_replay_equivalence():
    t0 = time.perf_counter()
    rng = substream(SEED, "trial", 5)
    worst_z, gap_ok, n_interior = 0.0, True, 0
    for v in range(20):
        p = tuple(float(x) for x in rng.random(int(rng.integers(1, 8))))
        interior = any(0 < x < 1 for x in p)
        n_interior += interior
        for k in (1, 2, 5, 20):
            res = replay_equivalence_sim(ReplaySimSpec(p, k, 100_000), seed=derive_seed(SEED, v, k))
            worst_z = max(worst_z, res.abs_error / res.mc_se if res.mc_se > 0 else 0.0)
            if k > 1 and interior:
                gap_ok &= float(np.mean(p)) < pass_at_k(p, k) and float(np.mean(p)) < res.empirical_sr
    high = tuple(float(x) for x in 0.1 + 0.9 * rng.random(10))
    sr64 = replay_equivalence_sim(ReplaySimSpec(high, 64, 100_000), seed=SEED).empirical_sr
    elapsed = time.perf_counter() - t0
    verdict(5, {
        "|SR - pass@k| < 3 SE": worst_z < 3,
        "strict gap": gap_ok and n_interior > 0,
        "SR(k=64) >= 0.99": sr64 >= 0.99,
        "runtime < 60 s": elapsed < 60,
    }, f"max |error|/SE={worst_z:.2f} over 80 runs, gap holds on {n_interior} interior vectors, "
       f"SR@64={sr64:.4f}, {elapsed:.1f}s")


def test_criterion_6_estimator_oracles():
    mpmath.mp.dps = 50
    z = -mpmath.sqrt(2) * mpmath.erfinv(mpmath.mpf("0.05") - 1)  # upper 97.5% normal quantile
    k, R = mpmath.mpf(0), mpmath.mpf(3)
    p = k / R
    center = (p + z ** 2 / (2 * R)) / (1 + z ** 2 / R)
    half = z / (1 + z ** 2 / R) * mpmath.sqrt(p * (1 - p) / R + z ** 2 / (4 * R ** 2))
    upper = float(center + half)
    ci = wilson_interval(0, 3)
    wald_ok = all(wald_interval(kk, RR).width == 0 for RR in (1, 3, 10) for kk in (0, RR))
    draws = jeffreys_draw(0, 3, substream(SEED, "trial", 6), size=1_000_000)
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    verdict(6, {
        "wilson k=0,R=3 = [0, 0.5615]": ci.lower == 0 and abs(ci.upper - 0.5615) < 1e-3 and abs(ci.upper - upper) < 1e-3,
        "wald zero width at k in {0,R}": wald_ok,
        "jeffreys mean within 3 SE of 0.125": abs(draws.mean() - 0.125) < 3 * se,
    }, f"wilson=[{ci.lower:.4f}, {ci.upper:.4f}] (oracle {upper:.4f}), jeffreys mean={draws.mean():.5f} (SE {se:.5f})")


def _count_oracle(predicate: str, prof: dict, params: dict) -> bool:
    """Plain evaluator for the ``count(t where f='v' and g>=<p>) >= n`` predicates in the fixtures."""
    m = re.fullmatch(r"count\((\w+) where (.*)\) >= (\d+)", predicate)
    table, conds, n = m.group(1), m.group(2).split(" and "), int(m.group(3))
    rows = prof["tables"].get(table, [])
    for cond in conds:
        field, op, value = re.fullmatch(r"(\w+)\s*(>=|=)\s*(.+)", cond).groups()
        value = params[value[1:-1]] if value.startswith("<") else value.strip("'")
        if op == "=":
            rows = [r for r in rows if str(r.get(field)) == str(value)]
        else:
            rows = [r for r in rows if r.get(field) is not None and float(r[field]) >= float(value)]
    return len(rows) >= n


def test_criterion_7_small_oracles():
    leaf = (1, 0, 1)
    exact = {}
    for idx in itertools.product(range(3), repeat=3):
        key = round(sum(leaf[i] for i in idx) / 3, 12)
        exact[key] = exact.get(key, 0) + 1 / 27
    reps = np.round(resample_app(tree_from_nested({"a": {"s": {"c": leaf}}}), ROLLOUTS_ONLY,
                                 substream(SEED, "trial", 7), size=100_000), 12)
    values, counts = np.unique(reps, return_counts=True)
    emp = dict(zip(values.tolist(), (counts / reps.size).tolist()))
    tv = 0.5 * sum(abs(emp.get(v, 0) - exact.get(v, 0)) for v in set(emp) | set(exact))

    matrices_ok = triviality_ok = True
    root = FIXTURES / "integrity"
    names = sorted(p.name for p in root.iterdir() if p.is_dir())
    for name in names:
        raw_insts = json.loads((root / name / "instances.json").read_text())
        raw_profs = {d["profile_id"]: d for d in (json.loads(p.read_text()) for p in (root / name / "profiles").glob("*.json"))}
        assert len(raw_insts) <= 5 and len(raw_profs) <= 5
        stores = load_stores(root / name / "profiles")
        m = feasibility_matrix([Instance.from_dict(o) for o in raw_insts], stores)
        expected = {i["id"]: {pid: _oracle_ok(i, prof) for pid, prof in raw_profs.items()} for i in raw_insts}
        matrices_ok &= m == expected
        for inst in raw_insts:
            configs = [{"profile": pid, "params": inst.get("params", {})} for pid in sorted(raw_profs)]
            res = triviality_filter(configs, inst["predicate"], stores)
            want = [c for c in configs if not _count_oracle(inst["predicate"], raw_profs[c["profile"]], c["params"])]
            triviality_ok &= res.surviving == want
    verdict(7, {
        "rollout-only TV < 0.01": tv < 0.01,
        "feasibility matrices exact": matrices_ok,
        "triviality filter exact": triviality_ok,
    }, f"TV={tv:.4f} at B=100000; brute force over fixtures {names}")


def test_criterion_8_regret_direction():
    wins, totals = 0, []
    spec = TwoModelSpec()
    for rep in range(50):
        t1, t2 = sample_two_model_trees(spec, substream(SEED, "tree", rep))
        cfg = BootstrapConfig(B=1000, seed=derive_seed(SEED, "bootstrap", rep))
        out = compare_models(t1, t2, n_sims=500, seed=derive_seed(SEED, rep), config=cfg)
        w, b = out[WALD_DECISION].total, out[BOOTSTRAP_DECISION].total
        wins += w > b
        totals.append((w, b))
    mean_w, mean_b = np.mean(totals, axis=0)
    verdict(8, {"wald > bootstrap in >= 95% of reps": wins >= 0.95 * 50},
            f"wald regret > bootstrap regret in {wins}/50 reps (mean totals {mean_w:.4f} vs {mean_b:.4f})")


def test_criterion_9_determinism(capsys):
    same = {}
    for command in STOCHASTIC:
        outs = []
        for threads in ("1", "3"):
            code = run([command] + SMALL[command] + ["--seed", "11", "--threads", threads, "--format", "json"])
            outs.append((code, capsys.readouterr().out))
        same[command] = outs[0][0] == 0 and outs[0] == outs[1] and outs[0][1].strip() != ""
    verdict(9, {f"{c} byte-identical": ok for c, ok in same.items()},
            f"{sum(same.values())}/{len(same)} stochastic commands byte-identical across thread caps 1 and 3")


def test_criterion_10_variability():
    m = mad([0.2, -0.1, 0.1])
    monotone = True
    taus = np.linspace(0, 1, 21)
    for seed in range(100):
        tree = random_tree(np.random.default_rng(seed), drop=0.2)
        ys = [y for _, y in exceedance_curve(tree, "instance", taus)]
        monotone &= all(a >= b for a, b in zip(ys, ys[1:]))
    counts_ok = True
    for v, w in itertools.product(range(1, 6), range(1, 4)):
        tree = random_tree(np.random.default_rng(v * 10 + w), n_apps=1, n_scen=2, values=(v, w))
        per_ctx = {}
        for p in matched_pairs(tree, "instance"):
            per_ctx[(p.scenario, p.key_fixed)] = per_ctx.get((p.scenario, p.key_fixed), 0) + 1
        counts_ok &= all(n == math.comb(v, 2) for n in per_ctx.values()) and sum(per_ctx.values()) == 2 * w * math.comb(v, 2)
    verdict(10, {
        "MAD = 0.1333": abs(m - 0.4 / 3) < 1e-9,
        "exceedance nonincreasing": monotone,
        "pair counts C(v,2)": counts_ok,
    }, f"MAD={m:.10f}, exceedance nonincreasing on 100 fixtures, pair counts checked for v<=5")
