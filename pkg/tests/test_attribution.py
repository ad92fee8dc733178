import numpy as np
import pytest

from cafpo import diffcore as dc
from cafpo.agents import AgentConfig, EnsemblePolicy, build_actor
from cafpo.attribution import (
    attribute_state, emit_attribution_csv, portfolio_level_contribution, read_attribution_csv, sample_baselines,
    stock_level_contribution,
)
from cafpo.diffcore import MLP, Tensor
from cafpo.errors import ConfigError, ShapeError


def _linear(W):
    """f_i(x) = sum_jk W[i, j, k] x[j, k] on (batch, M, K) input."""
    N, M, K = W.shape
    Wf = W.reshape(N, M * K).T

    def f(x):
        return dc.matmul(dc.reshape(x, (x.shape[0], M * K)), Tensor(Wf))
    return f


def test_linear_map_is_exact():
    rng = np.random.default_rng(0)
    W = rng.normal(size=(3, 4, 2))
    x = rng.normal(size=(4, 2))
    for steps in (2, 5):
        att = attribute_state(_linear(W), x, np.zeros((4, 2)), steps=steps)
        np.testing.assert_allclose(att.values, W * x[None], rtol=0, atol=1e-12)
    base = rng.normal(size=(7, 4, 2))
    att = attribute_state(_linear(W), x, base, steps=3)
    np.testing.assert_allclose(att.values, W * (x - base.mean(axis=0))[None], rtol=0, atol=1e-12)


def test_state_equal_to_baseline_gives_zero():
    actor = build_actor(2, 3, AgentConfig(hidden_size=4, head_sizes=[5]), np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=(3, 2))
    att = attribute_state(actor, x, x, steps=4)
    assert np.abs(att.values).max() == 0.0
    assert (att.completeness_gap() == 0).all()


def test_completeness_on_small_network():
    rng = np.random.default_rng(2)
    net = MLP([6, 8, 3], rng, "tanh")

    def f(x):
        return net(dc.reshape(x, (x.shape[0], 6)))
    x = rng.normal(size=(3, 2))
    att = attribute_state(f, x, rng.normal(size=(16, 3, 2)), steps=64)
    assert att.completeness_gap().max() <= 0.05


def test_symmetric_inputs_get_equal_attribution():
    W = np.ones((1, 1, 2))
    x = np.array([[0.7, 0.7]])

    def f(inp):
        return dc.tanh(_linear(W)(inp))
    att = attribute_state(f, x, np.zeros((1, 2)), steps=8)
    assert att.values[0, 0, 0] == pytest.approx(att.values[0, 0, 1], abs=1e-15)


def test_recurrent_actor_and_ensemble():
    cfg = AgentConfig(hidden_size=4, head_sizes=[5], lookback=3)
    ens = EnsemblePolicy([build_actor(2, 3, cfg, np.random.default_rng(s)) for s in (0, 1)])
    rng = np.random.default_rng(3)
    states = rng.normal(size=(20, 3, 2))
    base = sample_baselines(states, 8, seed=0)
    att = attribute_state(ens.mean_output, states[0], base, steps=16)
    assert att.values.shape == (3, 3, 2)
    assert att.completeness_gap().max() <= 0.05
    again = attribute_state(ens.mean_output, states[0], sample_baselines(states, 8, seed=0), steps=16)
    assert np.array_equal(att.values, again.values)


def test_input_validation():
    with pytest.raises(ShapeError):
        attribute_state(_linear(np.ones((1, 2, 2))), np.zeros((2, 2)), np.zeros((3, 2, 3)))
    with pytest.raises(ConfigError):
        attribute_state(_linear(np.ones((1, 2, 2))), np.zeros((2, 2)), np.zeros((2, 2)), steps=1)


def test_stock_level():
    np.testing.assert_array_equal(stock_level_contribution([[1, 2], [3, 4]]), [2, 3])
    np.testing.assert_array_equal(stock_level_contribution([[5, -1]]), [5, -1])
    np.testing.assert_array_equal(stock_level_contribution(np.zeros((3, 2))), [0, 0])


def test_portfolio_level():
    np.testing.assert_allclose(portfolio_level_contribution([[[1.0, 3.0]]]), [0.25, 0.75])
    v = np.random.default_rng(0).normal(size=(4, 3, 5))
    p = portfolio_level_contribution(v)
    assert abs(p.sum() - 1) <= 1e-12 and (p >= 0).all()
    np.testing.assert_array_equal(portfolio_level_contribution(-v), p)
    assert portfolio_level_contribution(np.zeros((2, 2, 2))) is None


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    dates = [f"2020-{m:02d}" for m in range(1, 13)]
    names = ["F0", "F1", "F2", "F3", "F4"]
    port = rng.random((12, 5))
    port /= port.sum(axis=1, keepdims=True)
    stock = {"A001": rng.normal(size=(12, 5))}
    emit_attribution_csv(dates, names, stock, port, tmp_path / "attribution")
    d, n, vals = read_attribution_csv(tmp_path / "attribution" / "portfolio.csv")
    assert len(open(tmp_path / "attribution" / "portfolio.csv").readlines()) == 61
    assert d == dates and n == names
    np.testing.assert_array_equal(vals, port)
    assert np.abs(vals.sum(axis=1) - 1).max() <= 1e-9
    _, _, s = read_attribution_csv(tmp_path / "attribution" / "stock_A001.csv")
    np.testing.assert_array_equal(s, stock["A001"])
