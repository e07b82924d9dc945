import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from margincausal.dataset import DgpSpec, generate
from margincausal.errors import InsufficientDataError, MarginCausalError
from margincausal.geometry import (OVERLAP, SEPARABLE, brute_force_hull_distance,
                                   hull_closest_pair, relaxed_overlap_check,
                                   separating_hyperplane, simplex_grid)
from oracles import lp_strictly_separable


def test_singletons():
    sol = hull_closest_pair([[0.0]], [[3.0]])
    assert sol.distance == pytest.approx(3.0)
    assert sol.alpha.tolist() == [1.0] and sol.beta.tolist() == [1.0]
    assert sol.verdict == SEPARABLE
    hp = separating_hyperplane(sol, [[0.0]], [[3.0]])
    assert hp.w[0] < 0 and hp.a0 > hp.a1


def test_point_inside_segment():
    sol = hull_closest_pair([[0.0], [2.0]], [[1.0]])
    assert sol.distance <= 1e-9
    assert sol.verdict == OVERLAP
    with pytest.raises(MarginCausalError):
        separating_hyperplane(sol, [[0.0], [2.0]], [[1.0]])


def test_triangles_against_grid():
    Z0 = np.array([[0, 0], [1, 0], [0, 1]], float)
    Z1 = np.array([[2, 2], [3, 2], [2, 3]], float)
    sol = hull_closest_pair(Z0, Z1)
    assert sol.distance == pytest.approx(np.sqrt(4.5), abs=1e-9)
    assert abs(sol.distance - brute_force_hull_distance(Z0, Z1, 1e-3)) < 1e-3


def test_brute_force_examples():
    assert brute_force_hull_distance([[0.0]], [[3.0]]) == 3.0
    assert brute_force_hull_distance([[0.0], [2.0]], [[1.0]], 1e-3) <= 1e-3
    with pytest.raises(InsufficientDataError):
        brute_force_hull_distance(np.zeros((6, 1)), np.ones((1, 1)))
    with pytest.raises(ValueError):
        brute_force_hull_distance([[0.0]], [[1.0]], 0.7)


def test_simplex_grid():
    W = simplex_grid(3, 4)
    assert len(W) == 15
    np.testing.assert_allclose(W.sum(1), 1.0)
    assert W.min() >= 0


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        hull_closest_pair([[np.nan]], [[1.0]])


def test_identical_sets_overlap():
    Z = np.random.default_rng(0).normal(size=(10, 3))
    chk = relaxed_overlap_check(Z, Z)
    assert chk.verdict == OVERLAP and chk.distance <= 1e-9
    assert chk.witness is not None


def test_fig2_overlap_and_far_apart():
    d = generate(DgpSpec("fig2-bivariate", n0=100, n1=100, seed=7))
    chk = relaxed_overlap_check(d.covariates[d.T < 0], d.covariates[d.T > 0])
    assert chk.verdict == OVERLAP
    far = generate(DgpSpec("fig2-bivariate", n0=100, n1=100, seed=7, mean1=(50, 50)))
    Z0, Z1 = far.covariates[far.T < 0], far.covariates[far.T > 0]
    chk = relaxed_overlap_check(Z0, Z1)
    assert chk.verdict == SEPARABLE
    assert lp_strictly_separable(Z0, Z1)


def test_hyperplane_separates_random_instance():
    rng = np.random.default_rng(11)
    Z0 = rng.normal(size=(20, 3))
    Z1 = rng.normal(size=(20, 3)) + 6.0
    chk = relaxed_overlap_check(Z0, Z1)
    hp = chk.hyperplane
    assert np.all(Z0 @ hp.w >= hp.a0 - 1e-8)
    assert np.all(Z1 @ hp.w <= hp.a1 + 1e-8)
    assert hp.a0 > hp.a1
    assert hp.width >= chk.distance - 1e-6


def test_width_equals_distance_far_clouds():
    rng = np.random.default_rng(3)
    Z0 = rng.normal(size=(50, 2))
    Z1 = rng.normal(size=(50, 2)) + 10
    chk = relaxed_overlap_check(Z0, Z1)
    assert abs(chk.hyperplane.width - chk.distance) <= 1e-5


def _pair(seed, n0, n1, p, shift):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n0, p)), rng.normal(size=(n1, p)) + shift


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 12), st.integers(1, 4),
       st.floats(0, 5))
def test_solution_invariants(seed, n0, n1, p, shift):
    Z0, Z1 = _pair(seed, n0, n1, p, shift)
    sol = hull_closest_pair(Z0, Z1)
    assert np.all(sol.alpha >= 0) and np.all(sol.beta >= 0)
    assert abs(sol.alpha.sum() - 1) <= 1e-12 and abs(sol.beta.sum() - 1) <= 1e-12
    assert abs(np.linalg.norm(sol.alpha @ Z0 - sol.beta @ Z1) - sol.distance) <= 1e-10
    assert (sol.verdict == SEPARABLE) == (sol.distance > sol.overlap_tol)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 10), st.integers(1, 10), st.integers(1, 4),
       st.floats(0, 5))
def test_translation_rotation_symmetry(seed, n0, n1, p, shift):
    Z0, Z1 = _pair(seed, n0, n1, p, shift)
    base = hull_closest_pair(Z0, Z1)
    rng = np.random.default_rng(seed + 1)
    t = rng.normal(size=p) * 3
    assert abs(hull_closest_pair(Z0 + t, Z1 + t).distance - base.distance) <= 1e-9
    Q, _ = np.linalg.qr(rng.normal(size=(p, p)))
    assert abs(hull_closest_pair(Z0 @ Q, Z1 @ Q).distance - base.distance) <= 1e-8
    swapped = hull_closest_pair(Z1, Z0)
    assert abs(swapped.distance - base.distance) <= 1e-9
    np.testing.assert_allclose(swapped.p0, base.p1, atol=1e-6)
    np.testing.assert_allclose(swapped.p1, base.p0, atol=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3), st.floats(0, 3))
def test_oracle_dominance_small(seed, n0, n1, shift):
    Z0, Z1 = _pair(seed, n0, n1, 2, shift)
    step = 1e-2
    both = np.vstack([Z0, Z1])
    diam = np.linalg.norm(both.max(0) - both.min(0))
    sol = hull_closest_pair(Z0, Z1)
    grid = brute_force_hull_distance(Z0, Z1, step)
    assert sol.distance <= grid + 1e-12
    assert 0.5 * sol.distance ** 2 <= 0.5 * grid ** 2 + step * diam


def test_verdict_matches_lp_oracle():
    rng = np.random.default_rng(5)
    for k in range(30):
        p = int(rng.integers(1, 5))
        Z0, Z1 = _pair(k, int(rng.integers(2, 15)), int(rng.integers(2, 15)), p,
                       rng.uniform(0, 6))
        chk = relaxed_overlap_check(Z0, Z1)
        assert (chk.verdict == SEPARABLE) == lp_strictly_separable(Z0, Z1)


def test_deterministic():
    Z0, Z1 = _pair(1, 30, 25, 3, 1.0)
    a = hull_closest_pair(Z0, Z1)
    b = hull_closest_pair(Z0, Z1)
    assert a.alpha.tobytes() == b.alpha.tobytes() and a.iterations == b.iterations
