import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from margincausal.dataset import DgpSpec, generate
from margincausal.geometry import SEPARABLE, relaxed_overlap_check
from margincausal.svr import (chebyshev_fit, continuous_margin_set, fit_linear_svr,
                              hard_tube_exists, lift_datasets, residual_sd)
from margincausal.errors import DegenerateModelError
from oracles import chebyshev_residual_by_vertices, svr_dual_projected_gradient


def _linear(n=20, seed=0):
    z = np.random.default_rng(seed).uniform(-1, 1, size=(n, 1))
    return z, 2 * z[:, 0] + 1


def test_exact_linear_data():
    z, t = _linear()
    m = fit_linear_svr(z, t, epsilon=0.1, reg_c=1e4)
    # the flattest function inside the tube need not interpolate, but nothing
    # may stick out of it
    assert np.all(np.abs(m.residuals) <= m.epsilon + 1e-8)
    assert continuous_margin_set(m).size == 0
    assert hard_tube_exists(z, t, 0.01).exists


def test_dual_invariants():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(40, 3))
    t = z @ [1.0, -2.0, 0.5] + rng.normal(size=40)
    m = fit_linear_svr(z, t, epsilon=0.3, reg_c=2.0)
    coef = m.alpha_plus - m.alpha_minus
    np.testing.assert_allclose(coef @ z, m.w, atol=1e-8)
    assert abs(coef.sum()) <= 1e-8
    for a in (m.alpha_plus, m.alpha_minus):
        assert np.all(a >= 0) and np.all(a <= m.reg_c)
    assert np.max(m.alpha_plus * m.alpha_minus) <= 1e-10
    inside = np.abs(m.residuals) < m.epsilon - 1e-8
    assert np.all(coef[inside] == 0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.05, 0.3, 1.0]))
def test_dual_matches_reference(seed, eps):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(30, 2))
    t = z @ [1.0, 0.5] + rng.normal(size=30)
    m = fit_linear_svr(z, t, eps, reg_c=1.0)
    ref = svr_dual_projected_gradient(z, t, eps, 1.0)
    assert abs(m.objective - ref) <= 1e-6 * max(1.0, abs(ref))


def test_intercept_only_tube():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(25, 2))
    t = rng.normal(size=25)
    eps = np.max(np.abs(t - t.mean())) + 0.5
    m = fit_linear_svr(z, t, eps, reg_c=1e-8)
    assert np.linalg.norm(m.w) < 1e-6
    assert np.all(np.abs(m.residuals) <= eps)


def test_shift_invariance():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(50, 2))
    t = z @ [1.0, 2.0] + rng.normal(size=50)
    m = fit_linear_svr(z, t, 0.2)
    ms = fit_linear_svr(z, t + 5.0, 0.2)
    np.testing.assert_allclose(ms.w, m.w, atol=1e-8)
    assert ms.b == pytest.approx(m.b + 5.0, abs=1e-8)
    np.testing.assert_allclose(ms.residuals, m.residuals, atol=1e-8)
    np.testing.assert_array_equal(continuous_margin_set(ms).kept_indices,
                                  continuous_margin_set(m).kept_indices)


def test_identical_covariates_no_tube():
    cert = hard_tube_exists([[0.0], [0.0]], [0.0, 1.0], 0.4)
    assert not cert.exists
    assert cert.max_residual == pytest.approx(0.5, abs=1e-9)
    # the alternative system: convex u, v with Z'u = Z'v and value < 0
    assert cert.alternative_value < 0
    assert cert.u.sum() == pytest.approx(1) and cert.v.sum() == pytest.approx(1)


def test_tube_certificate_holds():
    rng = np.random.default_rng(4)
    z = rng.normal(size=(30, 2))
    t = z @ [1.0, -1.0] + rng.uniform(-0.2, 0.2, size=30)
    cert = hard_tube_exists(z, t, 0.25)
    assert cert.exists
    r = t - z @ cert.w - cert.b
    assert np.all(np.abs(r) <= 0.25 + 1e-8)


def test_chebyshev_against_subset_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        z = rng.normal(size=(7, 1))
        t = rng.normal(size=7)
        _, _, best = chebyshev_fit(z, t)
        assert best == pytest.approx(chebyshev_residual_by_vertices(z, t), abs=1e-8)


def test_tube_monotone_in_epsilon():
    rng = np.random.default_rng(6)
    z = rng.normal(size=(20, 2))
    t = rng.normal(size=20)
    verdicts = [hard_tube_exists(z, t, e).exists for e in np.linspace(0, 3, 31)]
    first = verdicts.index(True)
    assert all(verdicts[first:])


def test_lift():
    lp = lift_datasets([[1.0]], [2.0], 0.5)
    np.testing.assert_array_equal(lp.d_plus, [[1.0, 2.5]])
    np.testing.assert_array_equal(lp.d_minus, [[1.0, 1.5]])
    rng = np.random.default_rng(7)
    z, t, eps = rng.normal(size=(30, 2)), rng.normal(size=30) * 10, 0.1
    lp = lift_datasets(z, t, eps)
    # (T + eps) - (T - eps) is 2 eps up to rounding of the two sums
    diff = lp.d_plus[:, -1] - lp.d_minus[:, -1]
    assert np.all(np.abs(diff - 2 * eps) <= 4 * np.spacing(np.abs(t) + eps))
    np.testing.assert_array_equal(lp.d_plus[:, :-1], z)


def test_lifted_exact_linear_is_separable():
    z, t = _linear(15)
    for eps in (0.01, 0.1, 1.0):
        lp = lift_datasets(z, t, eps)
        assert relaxed_overlap_check(lp.d_plus, lp.d_minus).verdict == SEPARABLE


def test_margin_rule_and_nesting():
    d = generate(DgpSpec("continuous-treatment", n=300, seed=1))
    m = fit_linear_svr(d.covariates, d.T, 0.1)
    rep = continuous_margin_set(m)
    assert rep.size / d.n > 0.8
    np.testing.assert_array_equal(rep.kept_indices,
                                  np.flatnonzero(np.abs(m.residuals) > 0.1 + 1e-8))
    assert set(continuous_margin_set(m, 0.5).kept_indices) <= set(rep.kept_indices)


def test_residual_sd_zero():
    with pytest.raises(DegenerateModelError):
        residual_sd([1.0, 1.0, 1.0])


def test_bad_arguments():
    with pytest.raises(ValueError):
        fit_linear_svr([[0.0], [1.0]], [0.0, 1.0], epsilon=0)
    with pytest.raises(ValueError):
        lift_datasets([[0.0]], [0.0], -1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.01, 0.1, 0.5, 2.0]))
def test_tube_iff_lifted_hulls_separable(seed, eps):
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(3, 15)), int(rng.integers(1, 3))
    z = rng.normal(size=(n, p))
    t = z @ rng.normal(size=p) + rng.uniform(-1, 1) * rng.normal(size=n)
    lp = lift_datasets(z, t, eps)
    sep = relaxed_overlap_check(lp.d_plus, lp.d_minus).verdict == SEPARABLE
    assert hard_tube_exists(z, t, eps).exists == sep
