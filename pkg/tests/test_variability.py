import itertools
import logging
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierbench.data import AXES, ConfigKey, ingest_records, tree_from_nested
from hierbench.estimators import DomainError
from hierbench.variability import (
    MatchedPair,
    exceedance_curve,
    exceedance_from_deltas,
    mad,
    mad_grid,
    marginal_deltas,
    matched_pairs,
    nearest_rank,
    sensitivity_profile,
)


def _vec(rate, R=10):
    k = int(round(rate * R))
    return (1,) * k + (0,) * (R - k)


def random_tree(rng, n_apps=2, n_scen=3, values=(2, 3, 2), R=4, drop=0.0):
    axes = AXES[: len(values)]
    nested = {}
    for a in range(n_apps):
        nested[f"a{a}"] = {}
        for s in range(n_scen):
            cells = {}
            for combo in itertools.product(*(range(v) for v in values)):
                if rng.random() < drop:
                    continue
                cells[ConfigKey(**{ax: f"x{c}" for ax, c in zip(axes, combo)})] = tuple(int(b) for b in rng.integers(0, 2, R))
            if not cells:
                cells[ConfigKey()] = (0,)
            nested[f"a{a}"][f"s{s}"] = cells
    return tree_from_nested(nested)


def test_mad_hand_oracle():
    assert mad([0.2, -0.1, 0.1]) == pytest.approx(0.4 / 3, abs=1e-9)
    assert mad([0.0, 0.0]) == 0.0
    with pytest.raises(DomainError):
        mad([])


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=30))
def test_mad_sign_flip_invariant(deltas):
    assert mad(deltas) == pytest.approx(mad([-d for d in deltas]))
    assert mad(deltas) <= max(abs(d) for d in deltas) + 1e-12


def test_sign_convention():
    tree = tree_from_nested({"a": {"s": {ConfigKey(theme="light"): _vec(0.8), ConfigKey(theme="dark"): _vec(0.6)}}})
    (pair,) = matched_pairs(tree, "theme")
    assert (pair.value_a, pair.value_b) == ("dark", "light")
    assert pair.delta == pytest.approx(-0.2)


def test_three_values_three_pairs():
    tree = tree_from_nested({"a": {"s": {ConfigKey(theme=t): _vec(r) for t, r in (("x", 0.1), ("y", 0.5), ("z", 0.9))}}})
    assert len(matched_pairs(tree, "theme")) == 3


def test_single_value_axis_is_empty_with_warning(caplog):
    tree = tree_from_nested({"a": {"s": {ConfigKey(theme="x", instance=i): _vec(0.5) for i in "pq"}}})
    with caplog.at_level(logging.WARNING):
        assert matched_pairs(tree, "theme") == []
    assert "no matched pairs" in caplog.text


def test_disabled_axis_is_domain_error():
    tree = tree_from_nested({"a": {"s": {ConfigKey(): _vec(0.5)}}}, axis_mask={"instance"})
    with pytest.raises(DomainError):
        matched_pairs(tree, "theme")
    with pytest.raises(DomainError):
        matched_pairs(tree, "colour")


def test_pair_requires_distinct_values():
    with pytest.raises(ValueError):
        MatchedPair("theme", "a", "s", (), "x", "x", 0.0)


def test_sensitivity_profile_examples():
    tree = tree_from_nested({"a": {"s": {ConfigKey(theme="a"): _vec(0.5), ConfigKey(theme="b"): _vec(0.2)}}})
    prof = sensitivity_profile(tree, "theme")
    assert prof.mad == pytest.approx(0.3) and prof.q90_abs_delta == pytest.approx(0.3) and prof.n_pairs == 1
    assert nearest_rank([0.0] * 9 + [1.0], 0.9) == 1.0
    assert nearest_rank([3, 1, 2], 0.0) == 1


def test_exceedance_counting_oracle():
    assert exceedance_from_deltas([0.05, 0.15], [0.10]) == [(0.10, 0.5)]
    assert exceedance_from_deltas([0.0, 0.0], [0.1, 0.5]) == [(0.1, 0.0), (0.5, 0.0)]
    d = [0.05, 0.2, 0.4]
    assert exceedance_from_deltas(d, [0.01])[0][1] == 1.0
    assert exceedance_from_deltas(d, [0.4])[0][1] == 0.0


def test_exceedance_validation():
    tree = tree_from_nested({"a": {"s": {ConfigKey(theme="a"): _vec(0.5), ConfigKey(theme="b"): _vec(0.2)}}})
    with pytest.raises(DomainError):
        exceedance_curve(tree, "theme", [])
    with pytest.raises(DomainError):
        exceedance_curve(tree, "theme", [0.5, 0.1])


def test_exceedance_marginal_pooling():
    # theme rates averaged over instances: dark = (0.2+0.4)/2, light = (0.8+0.6)/2 -> |delta| = 0.4
    cells = {("dark", "i0"): 0.2, ("dark", "i1"): 0.4, ("light", "i0"): 0.8, ("light", "i1"): 0.6}
    tree = tree_from_nested({"a": {"s": {ConfigKey(theme=t, instance=i): _vec(r) for (t, i), r in cells.items()}}})
    assert marginal_deltas(tree, "theme") == pytest.approx([0.4])
    assert exceedance_curve(tree, "theme", [0.3, 0.4]) == [(0.3, 1.0), (0.4, 0.0)]


def test_exceedance_nonincreasing_on_random_fixtures():
    taus = np.linspace(0, 1, 21)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        tree = random_tree(rng, drop=0.2)
        ys = [y for _, y in exceedance_curve(tree, "instance", taus)]
        assert all(a >= b for a, b in zip(ys, ys[1:]))
        assert ys[0] <= 1.0


def _brute_mad(tree, axis):
    """Re-walk every ordered pair of leaves and keep those differing only on ``axis``."""
    others = [a for a in AXES if a != axis]
    deltas = []
    for app, scens in tree.apps.items():
        for scen, cfgs in scens.items():
            items = list(cfgs.items())
            for (c1, v1), (c2, v2) in itertools.combinations(items, 2):
                if c1.get(axis) != c2.get(axis) and all(c1.get(o) == c2.get(o) for o in others):
                    deltas.append(abs(sum(v1) / len(v1) - sum(v2) / len(v2)))
    return sum(deltas) / len(deltas), len(deltas)


@pytest.mark.parametrize("seed", range(10))
def test_mad_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, n_scen=3, drop=0.25)
    for axis in ("instance", "profile", "theme"):
        pairs = matched_pairs(tree, axis)
        if not pairs:
            continue
        ref, n = _brute_mad(tree, axis)
        assert len(pairs) == n
        assert mad(pairs) == pytest.approx(ref, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 10_000))
def test_pair_counts_are_binomial(v, w, seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, n_apps=1, n_scen=2, values=(v, w))
    pairs = matched_pairs(tree, "instance")
    # each scenario has w contexts with v values each
    assert len(pairs) == 2 * w * math.comb(v, 2)
    per_ctx = {}
    for p in pairs:
        per_ctx[(p.scenario, p.key_fixed)] = per_ctx.get((p.scenario, p.key_fixed), 0) + 1
    assert all(n == math.comb(v, 2) for n in per_ctx.values())


def test_pairs_invariant_to_record_order():
    rng = np.random.default_rng(0)
    tree = random_tree(rng)
    records = [{"model": "m", "app": a, "scenario": s, **cfg.as_dict(), "rollout": r, "success": bool(y)}
               for a, s, cfg, vec in tree.leaves() for r, y in enumerate(vec)]
    shuffled = records[:]
    random.Random(1).shuffle(shuffled)
    t1 = ingest_records(records)["m"]
    t2 = ingest_records(shuffled)["m"]
    assert matched_pairs(t1, "theme") == matched_pairs(t2, "theme")


def test_mad_grid_shape():
    tree = random_tree(np.random.default_rng(3), n_apps=3)
    grid = mad_grid(tree)
    assert list(grid) == ["a0", "a1", "a2"]
    assert set(grid["a0"]) == set(AXES)
    assert grid["a0"]["ui_state"] is None
    assert grid["a1"]["instance"] == pytest.approx(mad(matched_pairs(tree, "instance", apps={"a1"})))
