import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from udf.construct2d import (build_2d_generators, chord_length, chord_profile, find_heights,
                             warmup_gapspec)
from udf.errors import NotStrictlyConvex, OutOfRange
from udf.norms import euclidean, lp_norm, perturbed_lp_norm

import oracles


def test_chord_length_examples():
    e = euclidean(2)
    assert chord_length(e, 0.0) == pytest.approx(2, abs=1e-12)
    assert chord_length(e, 0.8) == pytest.approx(1.2, abs=1e-12)
    assert chord_length(lp_norm(1, 2), 0.5) == pytest.approx(1, abs=1e-12)
    assert chord_length(e, 1.0) == 0
    with pytest.raises(OutOfRange):
        chord_length(e, 1.5)


def test_profile_of_l3():
    prof = chord_profile(lp_norm(3, 2))
    assert prof.height == pytest.approx(1, abs=1e-12)
    assert prof.width == pytest.approx(2, abs=1e-12)


def test_heights_examples():
    e = euclidean(2)
    t = find_heights(e, 3)
    assert np.allclose(t, [math.sqrt(15) / 4, math.sqrt(3) / 2, math.sqrt(7) / 4], atol=1e-9)
    assert np.allclose(find_heights(e, 1), [math.sqrt(3) / 2], atol=1e-9)


@pytest.mark.parametrize("m", range(1, 11))
def test_heights_match_inversion(m):
    assert np.allclose(find_heights(euclidean(2), m), oracles.euclid_heights(m), atol=1e-9)


def test_heights_l15():
    n = lp_norm(1.5, 2)
    t = find_heights(n, 2)
    # the width of the l^1.5 ball along e1 is 2, so lambda(t_i) = 2 i / 3
    assert np.allclose(chord_length(n, t), [2 / 3, 4 / 3], atol=1e-10)


def test_heights_reject_square():
    with pytest.raises(NotStrictlyConvex):
        find_heights(lp_norm(math.inf, 2), 3)


def test_generators_m1():
    g = build_2d_generators(euclidean(2), 1)
    assert np.allclose(g.points[0], [-0.5, math.sqrt(3) / 2], atol=1e-9)
    assert np.allclose(g.v, [1, 0], atol=1e-12)
    assert np.allclose(g.partners[0], [0.5, math.sqrt(3) / 2], atol=1e-9)


def test_generators_m3_offsets():
    g = build_2d_generators(euclidean(2), 3)
    assert np.allclose(g.partners - g.points, [[0.5, 0], [1, 0], [1.5, 0]], atol=1e-9)


def _gauge_residuals(norm, g):
    return np.abs(norm.gauge(np.vstack([g.points, g.partners])) - 1)


@pytest.mark.parametrize("norm", [euclidean(2), lp_norm(1.5, 2), lp_norm(3, 2),
                                  perturbed_lp_norm(2, 2, seed=3)], ids=lambda n: n.name)
@pytest.mark.parametrize("m", [1, 4, 9])
def test_generators_on_boundary(norm, m):
    g = build_2d_generators(norm, m)
    assert _gauge_residuals(norm, g).max() <= 1e-11
    signed = np.vstack([g.points, -g.points])
    D = np.linalg.norm(signed[:, None] - signed[None], axis=-1)
    assert D[~np.eye(2 * m, dtype=bool)].min() > 1e-8


def test_rotated_generators():
    n = lp_norm(3, 2)
    g = build_2d_generators(n, 3, angle=0.3)
    assert _gauge_residuals(n, g).max() <= 1e-11


@pytest.mark.parametrize("norm", [euclidean(2), lp_norm(1.5, 2), lp_norm(4, 2),
                                  perturbed_lp_norm(2, 2, seed=1)], ids=lambda n: n.name)
def test_chord_length_monotone(norm):
    prof = chord_profile(norm)
    t = np.sort(np.random.default_rng(0).uniform(0, prof.height, 1000))
    lam = chord_length(norm, t, profile=prof)
    assert np.all(np.diff(lam) <= 1e-10)


@given(st.integers(1, 12))
def test_euclid_chord_length_closed_form(k):
    t = k / 13
    assert chord_length(euclidean(2), t) == pytest.approx(2 * math.sqrt(1 - t * t), abs=1e-11)


def test_warmup_spec_ranges():
    spec = warmup_gapspec(euclidean(2), 4)
    assert list(spec.ranges) == [2, 2, 2, 2, 16]
    assert len(spec.directions) == 8
