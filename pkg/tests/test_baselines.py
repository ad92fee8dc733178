import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cafpo.baselines import (
    MarkowitzEstimates, equal_weight, factor_regression, markowitz_factor, markowitz_historical, markowitz_solve,
    momentum_sides, value_weight, vanilla_state,
)
from cafpo.data import ReturnsPanel, SyntheticSpec, generate_synthetic_panel
from cafpo.errors import DataError, NumericalError
from oracles import two_pass_moments


def test_equal_and_value_weight_examples():
    np.testing.assert_array_equal(equal_weight(["a", "b", "c", "d"]).weights, [0.25] * 4)
    assert equal_weight(4).is_valid()
    np.testing.assert_allclose(value_weight([1.0, 3.0]).weights, [0.25, 0.75])
    np.testing.assert_allclose(equal_weight(3, sides=[1, 1, -1]).weights, [0.5, 0.5, -1.0])
    np.testing.assert_allclose(value_weight([1.0, 3.0, 2.0], sides=[1, -1, -1]).weights, [1.0, -0.6, -0.4])
    np.testing.assert_allclose(equal_weight(3, mask=[True, False, True]).weights, [0.5, 0, 0.5])


def test_baseline_errors():
    with pytest.raises(DataError):
        equal_weight([])
    with pytest.raises(DataError):
        value_weight([1.0, -2.0])
    with pytest.raises(DataError):
        equal_weight(2, sides=[1, 0])


def test_momentum_sides():
    np.testing.assert_array_equal(momentum_sides([0.1, -0.2, 0.0]), [1, -1, 1])


@settings(max_examples=50, deadline=None)
@given(st.permutations(list(range(6))))
def test_equal_weight_permutation_equivariant(perm):
    sides = np.array([1, -1, 1, 1, -1, 1])
    w = equal_weight(6, sides=sides).weights
    np.testing.assert_array_equal(equal_weight(6, sides=sides[list(perm)]).weights, w[list(perm)])


def test_historical_moments():
    est = markowitz_historical([[0.0], [0.2]], ridge=False)
    assert est.mu[0] == pytest.approx(0.1) and est.V[0, 0] == pytest.approx(0.02)
    R = np.random.default_rng(0).normal(0.01, 0.05, (120, 5))
    est = markowitz_historical(R)
    mu, V = two_pass_moments(R)
    assert est.ridge == 0.0
    np.testing.assert_allclose(est.mu, mu, rtol=0, atol=1e-12)
    np.testing.assert_allclose(est.V, V, rtol=0, atol=1e-12)
    with pytest.raises(DataError):
        markowitz_historical([[0.1, 0.2]])


def test_constant_returns_get_ridge():
    est = markowitz_historical(np.full((10, 3), 0.01))
    assert est.ridge > 0
    np.testing.assert_allclose(est.V, est.ridge * np.eye(3), atol=1e-30)
    R = np.random.default_rng(1).normal(size=(4, 6))  # T < N: singular sample covariance
    est = markowitz_historical(R)
    assert est.ridge == pytest.approx(1e-6 * np.trace(np.cov(R, rowvar=False)) / 6)
    assert np.linalg.eigvalsh(est.V)[0] > 0


def test_factor_regression_examples():
    reg = factor_regression([[0.1], [0.2]], [[1.0], [2.0]])
    assert reg.D[0, 0] == pytest.approx(0.1, abs=1e-12) and reg.alpha[0] == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(0)
    F = rng.normal(size=(60, 3))
    D = rng.normal(size=(4, 3))
    alpha = rng.normal(size=4) * 0.01
    R = alpha + F @ D.T
    reg = factor_regression(R, F)
    np.testing.assert_allclose(reg.D, D, atol=1e-9)
    np.testing.assert_allclose(reg.alpha, alpha, atol=1e-9)
    est = markowitz_factor(R, F)
    np.testing.assert_allclose(est.V, D @ np.cov(F, rowvar=False) @ D.T, atol=1e-12)
    with pytest.raises(DataError, match="condition"):
        factor_regression(R, np.column_stack([F[:, 0], F[:, 0]]))


def test_factor_covariance_is_psd():
    rng = np.random.default_rng(2)
    for _ in range(20):
        F = rng.normal(size=(30, 2))
        R = F @ rng.normal(size=(2, 8)) + rng.normal(scale=0.1, size=(30, 8))
        assert np.linalg.eigvalsh(markowitz_factor(R, F).V)[0] >= -1e-10


def test_factor_means_match_generator():
    syn = generate_synthetic_panel(SyntheticSpec(n_assets=20, n_periods=240, seed=4))
    R = syn.returns.filled()[1:]
    F = syn.observable.values[:-1]
    est = markowitz_factor(R, F)
    se = np.sqrt(np.diag(est.V) / len(R))
    # true unconditional mean is zero: factors are mean zero and independent of the loadings
    assert np.mean(np.abs(est.mu) <= 2 * se) >= 0.8


def test_tangency_examples():
    wv = markowitz_solve(MarkowitzEstimates(np.array([0.1, 0.05]), np.diag([0.04, 0.01])))
    assert wv.degenerate
    np.testing.assert_allclose(wv.weights, [-1.0, 1.0])
    wv = markowitz_solve(MarkowitzEstimates(np.zeros(3), np.eye(3)))
    assert wv.degenerate and wv.is_valid()
    mu = np.array([0.03, -0.01, 0.02, -0.04])
    np.testing.assert_allclose(markowitz_solve(MarkowitzEstimates(mu, np.eye(4))).weights,
                               [0.6, -0.2, 0.4, -0.8])
    with pytest.raises(NumericalError):
        markowitz_solve(MarkowitzEstimates(mu, np.zeros((4, 4))))


def test_tangency_scale_invariant():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(5, 5))
    est = MarkowitzEstimates(rng.normal(size=5), A @ A.T + np.eye(5))
    for c in (1e-3, 2.0, 1e4):
        np.testing.assert_allclose(markowitz_solve(MarkowitzEstimates(c * est.mu, est.V)).weights,
                                   markowitz_solve(est).weights, atol=1e-12)


def test_vanilla_state():
    dates = [f"2000-{m:02d}" for m in range(1, 13)] + ["2001-01"]
    R = np.random.default_rng(0).normal(0, 0.05, (13, 3))
    avail = np.ones((13, 3), bool)
    avail[[2, 5, 9], 1] = False
    avail[7] = False
    panel = ReturnsPanel(dates, ["a", "b", "c"], R, avail)
    s = vanilla_state(panel, "2000-12", ["a", "b", "c"])
    assert s.shape == (12, 3)
    np.testing.assert_array_equal(s[:, 2][avail[:12, 2]], R[:12, 2][avail[:12, 2]])
    assert (s[:, 1] == 0).sum() == 4  # three masked months plus the all-absent month
    assert (s[7] == 0).all()
    np.testing.assert_array_equal(vanilla_state(panel, "2001-01", ["c", "a"])[:, 1], np.where(avail[1:, 0], R[1:, 0], 0))
    with pytest.raises(DataError):
        vanilla_state(panel, "2000-11", ["a"])
