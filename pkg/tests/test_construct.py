import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from udf.construct import (GapSpec, assemble_generators, find_ap_points, phi_map,
                           proposition_codes, proposition_ranges, proposition_spec,
                           seed_target, solve_on_boundary, verify_non_overlapping)
from udf.constants import EPS_BND
from udf.errors import NoConvergence, NotStrictlyConvex, SeedExhausted
from udf.norms import boundary_point, euclidean, lp_norm, perturbed_lp_norm


def test_phi_examples():
    e = euclidean(3)
    ws = np.eye(3)[:2]
    assert np.allclose(phi_map(e, [0.6, 0, 0.8], ws), [1.2, 0], atol=1e-12)
    assert np.allclose(phi_map(e, [0.36, 0.48, 0.8], ws), [0.72, 0.96], atol=1e-12)
    x = boundary_point(lp_norm(4, 3), [1, 1, 1]).coords
    a, b = phi_map(lp_norm(4, 3), x, ws)
    assert abs(a - b) <= 1e-10 and a > 0


def test_seed_target_postconditions():
    x, t = seed_target(euclidean(3), eps_coord=0.1, eta=0.1, seed=42)
    assert np.all(np.abs(2 * x[:2]) >= 0.1) and x[2] >= 0.1
    assert np.allclose(t, 2 * x[:2], atol=1e-10)
    x, t = seed_target(euclidean(2), eps_coord=0.1, eta=0.1, seed=1)
    assert abs(2 * x[0]) >= 0.1 and x[1] >= 0.1


def test_seed_target_budget_zero():
    with pytest.raises(SeedExhausted):
        seed_target(euclidean(3), budget=0)


def test_solve_on_boundary_examples():
    p = solve_on_boundary(euclidean(3), [0.42, 0.42], [0.21, 0.21, 0.95])
    assert np.allclose(p.coords, [0.21, 0.21, math.sqrt(1 - 0.0882)], atol=1e-10)
    p = solve_on_boundary(euclidean(2), [1.0], [0.4, 0.9])
    assert np.allclose(p.coords, [0.5, math.sqrt(3) / 2], atol=1e-10)


def test_solve_on_boundary_unreachable():
    with pytest.raises(NoConvergence):
        solve_on_boundary(euclidean(3), [5.0, 5.0], [0.21, 0.21, 0.95])


def test_ap_points_closed_form():
    w = find_ap_points(euclidean(3), 4, t=np.array([0.4, 0.4]), lam=0.05,
                       x_seed=np.array([0.2, 0.2, math.sqrt(0.92)]))
    for j, p in enumerate(w.points, start=1):
        a = (1 + 0.05 * j) * 0.2
        assert np.allclose(p, [a, a, math.sqrt(1 - 2 * a * a)], atol=1e-8)
    w.check(euclidean(3))


def test_ap_points_single():
    w = find_ap_points(euclidean(2), 1, seed=5)
    assert w.points.shape == (1, 2)
    w.check(euclidean(2))


def test_ap_points_reject_square():
    with pytest.raises(NotStrictlyConvex):
        find_ap_points(lp_norm(math.inf, 3), 2)


def test_ranges_and_codes():
    assert proposition_ranges(3, 2) == [2, 2, 2, 3, 9]
    for m, d in [(1, 2), (3, 2), (4, 3), (2, 4)]:
        codes = proposition_codes(m, d)
        assert codes.shape == (d * m, m + 2 * d - 2)
        assert len({tuple(c) for c in codes}) == d * m


@pytest.mark.parametrize("norm", [euclidean(3), lp_norm(3, 3), perturbed_lp_norm(2, 3, seed=0),
                                  euclidean(2), lp_norm(1.5, 2)], ids=lambda n: n.name)
@pytest.mark.parametrize("m", [2, 4])
def test_assembled_spec_invariants(norm, m):
    spec = proposition_spec(norm, m)
    d = norm.dim
    assert len(spec.generators) == m + 2 * d - 2
    assert len(spec.directions) == d * m
    assert np.abs(norm.gauge(spec.directions) - 1).max() <= EPS_BND
    assert np.abs(spec.codes @ spec.generators - spec.directions).max() <= 1e-10
    assert np.all(spec.generators[:m, -1] > 0)
    assert verify_non_overlapping(spec).ok


def test_q_points_on_sphere():
    e = euclidean(3)
    spec = proposition_spec(e, 3)
    labels = spec.labels()
    q = spec.directions[[k for k, lab in enumerate(labels) if lab[0] == "q"]]
    assert len(q) == 6
    assert np.allclose(np.linalg.norm(q, axis=1), 1, atol=1e-11)


def test_euclid_points_match_closed_form():
    # on the sphere Phi(p) = 2 p_{1..d-1}, so p_j is determined by its target
    e = euclidean(3)
    spec = proposition_spec(e, 5, seed=2)
    prov = spec.provenance
    t, lam = np.asarray(prov["t"]), prov["lambda"]
    for j, p in enumerate(spec.generators[:5], start=1):
        top = (1 + j * lam) * t / 2
        assert np.allclose(p, [*top, math.sqrt(1 - top @ top)], atol=1e-8)


def test_non_overlap_examples():
    ok = GapSpec.simple([[0, 1], [0.6, 0.8]], [2, 2], codes=[[1, 0], [0, 1]])
    assert verify_non_overlapping(ok).ok
    bad = GapSpec.simple([[0.6, 0.8], [-0.6, -0.8]], [2, 2], codes=[[1, 0], [0, 1]])
    rep = verify_non_overlapping(bad)
    assert not rep.ok and rep.case == 1
    spec = proposition_spec(lp_norm(3, 3), 4)
    assert verify_non_overlapping(spec).ok and len(spec.directions) == 12


def test_spec_json_roundtrip():
    spec = proposition_spec(lp_norm(3, 2), 3)
    back = GapSpec.from_json(json.loads(json.dumps(spec.to_json())))
    assert np.array_equal(back.generators, spec.generators)
    assert back.ranges == spec.ranges and np.array_equal(back.codes, spec.codes)
    assert back.provenance["lambda"] == spec.provenance["lambda"]


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_euclid_phi_closed_form(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=3)
    x /= np.linalg.norm(x)
    assert np.allclose(phi_map(euclidean(3), x, np.eye(3)[:2]), 2 * x[:2], atol=1e-10)
