"""Factorized engine versus the enumerated-tree reference on small trees.

The reference engine builds every metamer explicitly, so agreement here
checks the whole cohort bookkeeping: multiplicities, the grouped axis
distribution, the foliage-above scans and the ring pools.
"""

import time

import pytest

from treesink.core import TrunkScriptEntry
from treesink.engine import simulate
from treesink.oracle import simulate_naive
from treesink.synthetic import script_only_dataset

TOL = 1e-9

FIXTURE_SCRIPTS = {
    "mixed": (
        TrunkScriptEntry(1, 3),
        TrunkScriptEntry(2, 4, ((4, 1),)),
        TrunkScriptEntry(3, 4, ((3, 1),)),
        TrunkScriptEntry(4, 5, ((2, 1), (4, 1))),
        TrunkScriptEntry(5, 5, ((3, 2),)),
        TrunkScriptEntry(6, 5),
    ),
    "branchy": (
        TrunkScriptEntry(1, 4),
        TrunkScriptEntry(2, 5, ((2, 1),)),
        TrunkScriptEntry(3, 5, ((2, 2),)),
        TrunkScriptEntry(4, 6, ((3, 2), (4, 1))),
        TrunkScriptEntry(5, 6, ((2, 1), (3, 1))),
        TrunkScriptEntry(6, 6),
    ),
    "sparse": (
        TrunkScriptEntry(1, 3),
        TrunkScriptEntry(2, 3),
        TrunkScriptEntry(3, 4, ((3, 1),)),
        TrunkScriptEntry(4, 4),
        TrunkScriptEntry(5, 4, ((4, 2),)),
    ),
}
ENVIRONMENTS = {"reference": 1000.0, "vigorous": 4000.0, "suppressed": 120.0}


def rel_dev(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-30)


def compare_outputs(factorized, naive):
    worst = 0.0
    assert factorized.cycles == naive.cycles
    for af, an in zip(factorized.allocations, naive.allocations):
        for field in ("q", "d", "d_s", "d_r", "q_s", "q_r", "ratio",
                      "s_blade"):
            worst = max(worst, rel_dev(getattr(af, field),
                                       getattr(an, field)))
    tf = {t.gu_index: t for t in factorized.trunk_profile}
    tn = {t.gu_index: t for t in naive.trunk_profile}
    assert tf.keys() == tn.keys()
    for k in tf:
        for field in ("mass_g", "diameter_cm", "length_cm"):
            worst = max(worst, rel_dev(getattr(tf[k], field),
                                       getattr(tn[k], field)))
    rf = {(r.gu_index, r.tree_age): r.diameter_cm
          for r in factorized.ring_matrix}
    rn = {(r.gu_index, r.tree_age): r.diameter_cm for r in naive.ring_matrix}
    assert rf.keys() == rn.keys()
    for k in rf:
        worst = max(worst, rel_dev(rf[k], rn[k]))
    bf = {(b.gu_index, b.pa): b for b in factorized.branch_compartments}
    bn = {(b.gu_index, b.pa): b for b in naive.branch_compartments}
    assert bf.keys() == bn.keys()
    for k in bf:
        assert bf[k].count == bn[k].count
        for field in ("wood_g", "leaf_g", "axis_length_cm"):
            worst = max(worst, rel_dev(getattr(bf[k], field),
                                       getattr(bn[k], field)))
    worst = max(worst, rel_dev(factorized.total_wood_g, naive.total_wood_g))
    worst = max(worst, rel_dev(factorized.total_leaf_ever_g,
                               naive.total_leaf_ever_g))
    return worst


@pytest.mark.parametrize("script_name", sorted(FIXTURE_SCRIPTS))
@pytest.mark.parametrize("env_name", sorted(ENVIRONMENTS))
def test_factorized_engine_matches_enumerated_reference(
        params, zones, script_name, env_name):
    p = params.with_values(v_env=(560.0, ENVIRONMENTS[env_name]))
    ds = script_only_dataset(FIXTURE_SCRIPTS[script_name])
    factorized = simulate(p, zones, ds, tree_index=1)
    naive = simulate_naive(p, zones, ds, tree_index=1)
    assert compare_outputs(factorized, naive) < TOL


def test_multiplicities_match_enumerated_axis_counts(params, zones):
    ds = script_only_dataset(FIXTURE_SCRIPTS["branchy"])
    p = params.with_values(v_env=(560.0, 4000.0))
    factorized = simulate(p, zones, ds, tree_index=1)
    naive = simulate_naive(p, zones, ds, tree_index=1)
    fact_counts = {}
    for cls in factorized.topology["axis_classes"]:
        key = f"{cls['pa']}_{cls['birth_cycle']}"
        fact_counts[key] = fact_counts.get(key, 0) + cls["multiplicity"]
    assert fact_counts == naive.topology["axis_counts"]


def test_reference_engine_is_slower_but_fast_enough(params, zones):
    ds = script_only_dataset(FIXTURE_SCRIPTS["branchy"])
    p = params.with_values(v_env=(560.0, 4000.0))
    start = time.perf_counter()
    simulate_naive(p, zones, ds, tree_index=1)
    assert time.perf_counter() - start < 5.0
