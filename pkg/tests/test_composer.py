import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from udf.composer import (SizeTable, compose_pointset, decompose, degenerate_construction,
                          ratio_csv, ratio_report)
from udf.errors import NoSegment, NotStrictlyConvex
from udf.gap import count_directional, count_pairwise
from udf.norms import euclidean, lp_norm

import oracles

# pinned by a seed-0 run of the full pipeline (euclidean, d = 2)
PINNED = {1024: (3344, 0.3266), 4096: (17166, 0.3492), 16384: (80436, 0.3507)}


@pytest.fixture(scope="module")
def euclid_table():
    return SizeTable(euclidean(2), seed=0)


def test_decompose_examples():
    assert decompose(20, [1, 2, 5, 12]) == [3, 2, 1, 0]
    assert decompose(4, [1, 2, 5, 12]) == [1, 1]
    assert decompose(1, [1, 2, 5, 12]) == [0]
    with pytest.raises(ValueError):
        decompose(0, [1, 2])
    with pytest.raises(ValueError):
        decompose(5, [2, 3])


@given(st.lists(st.integers(2, 60), min_size=1, max_size=6, unique=True), st.integers(1, 300))
def test_decompose_is_greedy(rest, n):
    sizes = [1] + sorted(rest)
    parts = decompose(n, sizes)
    assert sum(sizes[m] for m in parts) == n
    assert parts == sorted(parts, reverse=True)
    assert parts == oracles.greedy_brute(n, sizes)


def test_table_sizes(euclid_table):
    euclid_table.extend_to(5000)
    assert euclid_table.sizes[:7] == [1, 2, 32, 216, 1024, 4000, 13824]
    assert euclid_table.counts[:7] == [0, 1, 42, 492, 3344, 17040, 72672]


def test_single_block_matches_spec_report(euclid_table):
    ps, rep = compose_pointset(euclidean(2), 216, table=euclid_table)
    spec, block = euclid_table.block(3)
    single = count_directional(block)
    assert len(ps) == 216
    assert rep.per_direction == single.per_direction
    assert rep.lemma_bound == single.lemma_bound


@pytest.mark.parametrize("n", sorted(PINNED))
def test_pinned_ratios(euclid_table, n):
    ps, rep = compose_pointset(euclidean(2), n, table=euclid_table)
    total, ratio = PINNED[n]
    assert len(ps) == n
    assert rep.total == total
    assert rep.total >= rep.table_bound
    assert rep.total / (n * math.log2(n)) == pytest.approx(ratio, rel=0.01)


def test_ratio_report(euclid_table):
    rows = ratio_report(euclidean(2), [1024, 4096], table=euclid_table)
    assert [r.total for r in rows] == [3344, 17166]
    assert not any(r.flagged for r in rows)
    assert ratio_csv(rows).splitlines()[0] == "n,total,ratio,target,flagged"


def test_l3_d3_meets_table():
    n = 2**14
    ps, rep = compose_pointset(lp_norm(3, 3), n)
    assert len(ps) == n
    assert rep.total >= rep.table_bound > 0


def test_cache_roundtrip(tmp_path, monkeypatch):
    monkeypatch.setenv("UDF_CACHE_DIR", str(tmp_path))
    t = SizeTable(lp_norm(3, 2), seed=0).extend_to(100)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    again = SizeTable(lp_norm(3, 2), seed=0)
    assert again.sizes == t.sizes and again.counts == t.counts
    assert SizeTable(lp_norm(3, 2), seed=1).sizes == [1]


def test_compose_rejects_square():
    with pytest.raises(NotStrictlyConvex):
        compose_pointset(lp_norm(math.inf, 2), 10)


def test_degenerate_examples():
    ps, count = degenerate_construction(lp_norm(math.inf, 2), 20)
    assert len(ps) == 20 and count >= 100
    ps, count = degenerate_construction(lp_norm(1, 2), 40)
    assert count >= 400
    pts = [tuple(p) for p in ps.points]
    assert count == oracles.unit_pairs(pts, lambda v: oracles.lp_gauge(v, 1))
    with pytest.raises(NoSegment):
        degenerate_construction(euclidean(2), 10)
    with pytest.raises(ValueError):
        degenerate_construction(lp_norm(math.inf, 2), 7)


def test_offsets_are_seeded(euclid_table):
    a, rep = compose_pointset(euclidean(2), 300, seed=3, table=euclid_table)
    b, _ = compose_pointset(euclidean(2), 300, seed=3, table=euclid_table)
    assert np.array_equal(a.points, b.points)
    # cross-copy pairs are not counted, so brute force can only see more
    assert count_pairwise(a, euclidean(2)) >= rep.total
