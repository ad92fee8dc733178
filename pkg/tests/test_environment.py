import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cafpo.environment import (
    PortfolioEnv, PortfolioState, RewardState, WeightVector, compound_return, differential_ddr, differential_sharpe,
    max_drawdown, normalize_action, reward_diff_ddr, reward_diff_sharpe, reward_log, sharpe_ratio, step,
    sterling_ratio, summarize, wealth_curve, write_episode_csv, write_weights_csv,
)
from cafpo.environment.metrics import drawdown_from_wealth
from cafpo.errors import DataError, NumericalError
from oracles import expansion_residuals, loglog_slopes, sample_moment_state


# --- actions -----------------------------------------------------------------


def test_normalize_examples():
    np.testing.assert_allclose(normalize_action([2, -1, 1]).weights, [2 / 3, -1, 1 / 3])
    np.testing.assert_allclose(normalize_action([0.5, -0.5]).weights, [1, -1])
    wv = normalize_action([1, 2, 3])
    assert wv.degenerate
    np.testing.assert_allclose(wv.weights, [-1, 0.4, 0.6])
    assert wv.is_valid()


def test_normalize_degenerate_patterns():
    np.testing.assert_allclose(normalize_action([-1, -2, -3]).weights, [1, -0.4, -0.6])
    np.testing.assert_allclose(normalize_action([0, 0, 0]).weights, [1, -1, 0])
    np.testing.assert_allclose(normalize_action([3, 0]).weights, [1, -1])
    np.testing.assert_allclose(normalize_action([2, 2, 1, 2]).weights, [1 / 3, 1 / 3, -1, 1 / 3])
    assert not normalize_action([1, -1]).degenerate


def test_normalize_respects_mask():
    wv = normalize_action([5, -1, 2, 0], mask=[True, False, True, True])
    np.testing.assert_allclose(wv.weights, [5 / 7, 0, 2 / 7, -1])
    with pytest.raises(DataError):
        normalize_action([1, -1, 1], mask=[True, False, False])


def test_normalize_rejects_bad_input():
    with pytest.raises(NumericalError):
        normalize_action([1.0, np.nan])
    with pytest.raises(DataError):
        normalize_action([1.0])


raw_actions = st.lists(st.one_of(st.floats(-1e6, 1e6), st.just(0.0), st.floats(0, 1e-300)), min_size=2, max_size=30)


@settings(max_examples=300, deadline=None)
@given(raw_actions)
def test_normalize_always_on_simplex(raw):
    assert normalize_action(raw).violations() == []


normal_actions = st.lists(st.one_of(st.floats(-1e6, 1e6, allow_subnormal=False), st.just(0.0)), min_size=2, max_size=30)


@settings(max_examples=200, deadline=None)
@given(normal_actions, st.floats(1e-3, 1e3))
def test_normalize_scale_invariant(raw, c):
    np.testing.assert_allclose(normalize_action(np.array(raw) * c).weights, normalize_action(raw).weights,
                               rtol=1e-12, atol=1e-15)


# --- rewards -----------------------------------------------------------------


def test_log_reward():
    assert reward_log(0.0) == 0.0
    assert reward_log(math.e - 1) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(NumericalError):
        reward_log(-1.0)


def test_differential_sharpe_examples():
    assert differential_sharpe(0.02, 0.0, 0.01) == pytest.approx(0.2, rel=1e-12)
    # r = A and r^2 = B leave both moment increments at zero
    A, B = 0.01, 0.01 ** 2 + 4e-4
    assert differential_sharpe(A, A, B) == pytest.approx(-0.5 * A * (A * A - B) / (B - A * A) ** 1.5)


def test_differential_sharpe_singular_guard():
    assert differential_sharpe(0.02, 0.01, 0.01 ** 2) == 0.0
    rs = RewardState(A=0.01, B=0.01 ** 2, warmup=0)
    reward, nxt = reward_diff_sharpe(0.05, rs)
    assert reward == 0.0 and nxt.A > rs.A


def test_differential_ddr_examples():
    assert differential_ddr(0.05, 0.0, 0.01) == pytest.approx(0.5, rel=1e-12)
    assert differential_ddr(0.0, 0.0, 0.01) == 0.0
    assert differential_ddr(-0.1, 0.0, 0.0) == 0.0
    st_ = RewardState(A=0.0, DD2=0.01, eta=0.1, warmup=0)
    _, nxt = reward_diff_ddr(-0.2, st_)
    assert nxt.DD2 - st_.DD2 == pytest.approx(0.1 * (0.04 - 0.01), rel=1e-12)


def test_warmup_emits_zero_then_starts_from_averages():
    rs = RewardState(eta=0.05, warmup=3)
    rets = [0.01, -0.02, 0.03, 0.02]
    rewards = []
    for r in rets:
        rew, rs = reward_diff_sharpe(r, rs)
        rewards.append(rew)
    assert rewards[:3] == [0.0, 0.0, 0.0]
    A0, B0 = np.mean(rets[:3]), np.mean(np.square(rets[:3]))
    assert rewards[3] == pytest.approx(differential_sharpe(0.02, A0, B0), rel=1e-12)
    assert rs.A == pytest.approx(A0 + 0.05 * (0.02 - A0), rel=1e-12)


def test_differential_rewards_are_first_order_expansions():
    rng = np.random.default_rng(0)
    for kind in ("sharpe", "ddr"):
        res = np.array([expansion_residuals(kind, *sample_moment_state(rng)) for _ in range(40)])
        per_state, pooled = loglog_slopes(res)
        assert abs(pooled - 2.0) < 0.2
        assert abs(np.median(per_state) - 2.0) < 0.05


# --- metrics -----------------------------------------------------------------


def test_compound_return():
    assert compound_return([0.1, -0.1]) == pytest.approx(-0.01, abs=1e-15)
    assert compound_return([]) == 0.0
    r = np.random.default_rng(3).normal(0.01, 0.05, 240)
    w = 1.0
    for x in r:
        w *= 1 + x
    assert abs(compound_return(r) - (w - 1)) <= 1e-12


def test_ratios():
    assert sharpe_ratio([0.02, -0.01, 0.03]) == pytest.approx(0.6405, abs=1e-4)
    assert sharpe_ratio([0.02, -0.01, 0.03]) == pytest.approx(np.mean([0.02, -0.01, 0.03]) / np.std([0.02, -0.01, 0.03], ddof=1))
    assert sharpe_ratio([0.01] * 5) is None
    assert sharpe_ratio([0.01]) is None
    assert max_drawdown([0.01] * 5) == 0.0
    assert sterling_ratio([0.01] * 5) is None
    assert drawdown_from_wealth([1, 1.2, 0.9, 1.0]) == pytest.approx(0.25)
    assert max_drawdown([0.2, -0.25, 1 / 9]) == pytest.approx(0.25)
    assert sterling_ratio([0.2, -0.25, 1 / 9]) == pytest.approx(np.mean([0.2, -0.25, 1 / 9]) / 0.25)
    assert sharpe_ratio([0.02, -0.01, 0.03], annualize=True) == pytest.approx(math.sqrt(12) * 0.6405, abs=1e-3)


def test_metrics_agree_with_wealth_curve():
    r = np.random.default_rng(5).normal(0.0, 0.08, 100)
    w = wealth_curve(r)
    peak, mdd, cur = 1.0, 0.0, 1.0
    for x in r:
        cur *= 1 + x
        peak = max(peak, cur)
        mdd = max(mdd, (peak - cur) / peak)
    assert max_drawdown(r) == pytest.approx(mdd, abs=1e-14)
    assert compound_return(r) == pytest.approx(w[-1] - 1, abs=1e-12)
    assert summarize(r)["n_periods"] == 100


# --- stepping ----------------------------------------------------------------


def test_step_examples():
    s, _ = step(WeightVector([1.0, -1.0]), [0.10, 0.04])
    assert s.r_p == pytest.approx(0.06)
    s, _ = step(WeightVector([0.5, 0.5, -1.0]), [0.0, 0.0, 0.0])
    assert s.r_p == 0.0 and s.wealth == 1.0
    s, _ = step(WeightVector([0.3, 0.7, -1.0]), [0.5, 0.1, 0.0], available=[False, True, True])
    assert s.r_p == pytest.approx(0.07)
    with pytest.raises(NumericalError):
        step(WeightVector([1.0, -1.0]), [np.nan, 0.0])


def test_state_validation():
    assert PortfolioState(np.zeros((3, 2))).M == 3
    with pytest.raises(DataError):
        PortfolioState([[0.0, np.nan]])


def _env(T=40, N=4, K=2, reward="log", seed=0):
    rng = np.random.default_rng(seed)
    dates = [f"{2000 + t // 12}-{t % 12 + 1:02d}" for t in range(T)]
    avail = rng.random((T, N)) > 0.1
    return PortfolioEnv(rng.normal(size=(T, K)), rng.normal(0, 0.05, (T, N)), avail, dates, lookback=3, reward=reward)


def test_env_timing_and_telescoping():
    env = _env()
    s0 = env.reset(2, 38)
    np.testing.assert_array_equal(s0, env.features[0:3])
    rng = np.random.default_rng(1)
    steps = []
    while True:
        st_ = env.step(rng.normal(size=env.N))
        steps.append(st_)
        if st_.done:
            break
    assert len(steps) == 36
    assert steps[0].date == env.dates[3]
    expected = steps[0].weights.weights @ np.where(env.available[3], env.returns[3], 0)
    assert steps[0].r_p == pytest.approx(expected)
    assert sum(s.reward for s in steps) == pytest.approx(math.log(steps[-1].wealth), abs=1e-10)
    with pytest.raises(DataError):
        env.step(np.ones(env.N))


def test_env_masks_unavailable_assets_at_decision():
    env = _env()
    env.reset(2, 5)
    s = env.step(np.arange(1.0, env.N + 1) - 2.5)
    assert (s.weights.weights[~env.available[2]] == 0).all()


def test_env_rejects_incomplete_windows():
    env = _env()
    with pytest.raises(DataError):
        env.reset(1, 5)
    with pytest.raises(DataError):
        env.reset(2, 40)


def test_env_bankruptcy_ends_episode():
    dates = ["2000-01", "2000-02", "2000-03"]
    env = PortfolioEnv(np.zeros((3, 1)), [[0, 0], [-0.6, 0.6], [0, 0]], np.ones((3, 2), bool), dates, lookback=1)
    env.reset(0, 2)
    s = env.step([1.0, -1.0])
    assert s.bankrupt and s.done and s.wealth == 0.0 and np.isfinite(s.reward)


def test_episode_csv_round_trip(tmp_path):
    env = _env(reward="diff-sharpe")
    env.reset(2, 20)
    steps = [env.step(np.random.default_rng(t).normal(size=env.N)) for t in range(18)]
    write_episode_csv(steps, tmp_path / "ep.csv")
    rows = list(csv.DictReader(open(tmp_path / "ep.csv")))
    assert len(rows) == 18
    assert [float(r["wealth"]) for r in rows] == [s.wealth for s in steps]
    W = np.stack([s.weights.weights for s in steps])
    write_weights_csv([s.date for s in steps], ["a", "b", "c", "d"], W, tmp_path / "w.csv")
    rows = list(csv.DictReader(open(tmp_path / "w.csv")))
    assert len(rows) == 18 * 4 and float(rows[5]["weight"]) == W[1, 1]
