import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from udf.construct import GapSpec, proposition_spec
from udf.errors import Overflow, TooLarge
from udf.gap import (PointSet, count_directional, count_pairwise, grid_bound, hash_cells,
                     materialize, sumset_ratio_check)
from udf.norms import euclidean, lp_norm, perturbed_lp_norm

import oracles

SQUARE = GapSpec.simple(np.eye(2), [2, 2], codes=[[1, 0], [0, 1]])


def test_materialize_examples():
    assert len(materialize(SQUARE)) == 4
    line = GapSpec.simple([[1, 0], [1, 0]], [2, 2])
    ps = materialize(line)
    assert len(ps) == 3 and ps.merged == 1
    assert sorted(map(tuple, ps.points)) == [(0, 0), (1, 0), (2, 0)]


def test_materialize_cap():
    spec = GapSpec.simple(np.eye(2), [1000, 1000])
    with pytest.raises(Overflow):
        materialize(spec, cap=10**5)


def test_square_counts():
    ps = materialize(SQUARE)
    rep = count_directional(ps)
    assert rep.per_direction == [2, 2] and rep.total == 4
    assert rep.lemma_bound == 4 and grid_bound(SQUARE, 4) == 4
    assert count_pairwise(ps, euclidean(2)) == 4
    assert count_pairwise([[0, 0], [0.3, 0.4]], euclidean(2)) == 0
    assert count_pairwise([[0, 0], [0.6, 0.8]], euclidean(2)) == 1


def test_pairwise_cap():
    with pytest.raises(TooLarge):
        count_pairwise(np.zeros((50, 2)), euclidean(2), cap=10)


def test_small_proposition_spec():
    spec = proposition_spec(euclidean(2), 3)
    ps = materialize(spec)
    assert len(ps) <= 2**3 * 3 * 3**2
    rep = count_directional(ps)
    assert rep.total >= math.ceil(rep.lemma_bound)


def test_counts_against_brute_force():
    norm = lp_norm(3, 2)
    spec = proposition_spec(norm, 2)
    ps = materialize(spec)
    rep = count_directional(ps)
    pts = [tuple(p) for p in ps.points]
    assert rep.per_direction == [oracles.directional_pairs(pts, u) for u in spec.directions]
    assert count_pairwise(ps, norm) == oracles.unit_pairs(pts, lambda v: oracles.lp_gauge(v, 3))


def test_l3_pairwise_dominates():
    norm = lp_norm(3, 2)
    ps = materialize(proposition_spec(norm, 5))
    assert count_pairwise(ps, norm) >= count_directional(ps).total


def test_workers_do_not_change_counts():
    ps = materialize(proposition_spec(lp_norm(3, 3), 3))
    assert count_directional(ps, workers=4).per_direction == count_directional(ps).per_direction


def test_sumset_examples():
    assert sumset_ratio_check([(0,)], (1,), 4, 2)
    with pytest.raises(ValueError):
        sumset_ratio_check([(0, 0), (1, 0)], (1, 0), 4, 1)
    with pytest.raises(ValueError):
        sumset_ratio_check([], (1,), 4, 2)


def random_sumset_instance(rng):
    d = rng.randint(1, 3)
    k = rng.randint(2, 12)
    c = rng.randint(2, k)
    X = [tuple(rng.randint(-6, 6) for _ in range(d)) for _ in range(rng.randint(1, 50))]
    x = tuple(rng.randint(-3, 3) for _ in range(d))
    return X, x, k, c


def test_sumset_fuzz():
    rng = random.Random(2024)
    for _ in range(1000):
        X, x, k, c = random_sumset_instance(rng)
        small, big = oracles.sumset_sizes(X, x, k, c)
        assert Fraction(small) >= Fraction(k - c, k) * big
        assert sumset_ratio_check(X, x, k, c)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_grid_bound_closed_form(d):
    for m in range(1, 65):
        spec = GapSpec.simple(np.zeros((m + 2 * d - 2, d)), [2] * m + [m] * (d - 1) + [m * m] * (d - 1),
                              codes=_codes(m, d), m=m, d=d)
        b = grid_bound(spec, 1)
        assert b == oracles.proposition_grid_bound(m, d, 1)
        assert b >= Fraction(d * (m - 2), 2)


def _codes(m, d):
    rows = []
    width = m + 2 * d - 2
    for j in range(m):
        r = [0] * width
        r[j] = 1
        rows.append(r)
    for i in range(d - 1):
        for j in range(m):
            r = [0] * width
            r[j] = 1
            r[m + i] = 1
            r[m + d - 1 + i] = j + 1
            rows.append(r)
    return rows


def test_grid_bound_ignores_geometry():
    spec = proposition_spec(euclidean(3), 3)
    other = GapSpec(generators=np.random.default_rng(0).normal(size=spec.generators.shape),
                    ranges=spec.ranges, codes=spec.codes, directions=spec.directions)
    assert grid_bound(spec, 1000) == grid_bound(other, 1000)


@settings(max_examples=40)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=3), st.integers(2, 12), st.data())
def test_dedup_monotone(x, k, data):
    c = data.draw(st.integers(2, k))
    small = len(materialize(GapSpec.simple([x], [k - c]))) if k > c else 0
    big = len(materialize(GapSpec.simple([x], [k])))
    assert k * small >= (k - c) * big


@settings(max_examples=20)
@given(st.integers(0, 10**6))
def test_csv_roundtrip(seed):
    pts = np.random.default_rng(seed).normal(size=(20, 3)) * 1e3
    ps = PointSet.from_points(pts)
    back = PointSet.from_csv(ps.to_csv())
    assert np.array_equal(back.points, ps.points)


@settings(max_examples=20)
@given(st.integers(0, 10**6))
def test_dedup_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 4, size=(30, 2)).astype(float)
    pts = base + rng.uniform(-1e-10, 1e-10, size=base.shape)
    ps = PointSet.from_points(pts)
    assert len(ps) == len({tuple(r) for r in base})
    # every input point is represented
    assert ps.contains(pts).all()


def test_hash_is_deterministic():
    keys = np.array([[1, 2, 3], [-1, 0, 5]], dtype=np.int64)
    assert np.array_equal(hash_cells(keys), hash_cells(keys.copy()))
    assert hash_cells(keys)[0] != hash_cells(keys)[1]


@pytest.mark.parametrize("norm", [euclidean(2), perturbed_lp_norm(2, 2, seed=0)],
                         ids=lambda n: n.name)
def test_pairwise_at_least_directional(norm):
    for m in (2, 3, 4):
        ps = materialize(proposition_spec(norm, m))
        assert count_pairwise(ps, norm) >= count_directional(ps).total
