"""Randomized end-to-end containment: for every seeded workload, the
feedback-enabled output must sit between the reference output and the
reference minus the feedback subset (multiset semantics)."""

import pytest

from punctstream.oracle import def1_check
from punctstream.workloads import check_workload

SEEDS = range(60)


@pytest.mark.parametrize("seed", SEEDS)
def test_random_workload_containment(seed):
    res, desc = check_workload(seed)
    assert res.ok, f"{desc}: {res.witness}"


def test_def1_check_flags_invented_row():
    ok, witness = def1_check([(1, 2)], [(1, 2), (9, 9)], [])
    assert not ok and "not in reference" in witness


def test_def1_check_flags_unauthorized_missing_row():
    from punctstream.core import AttrType, Constraint, Pattern, Schema

    s = Schema("x", (("t", AttrType.TIMESTAMP), ("v", AttrType.INT)), 0)
    f = Pattern.of(s, v=Constraint.eq(5))
    ok, witness = def1_check([(0, 5), (1, 6)], [(0, 5)], [f])
    assert not ok and "outside every feedback pattern" in witness
    ok2, _ = def1_check([(0, 5), (1, 6)], [(1, 6)], [f])
    assert ok2
