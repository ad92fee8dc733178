"""Rolling-window experiment engine.

Each window trains on its training span only: the autoencoder (CAFPO),
the feature standardization and every agent seed. The frozen seed ensemble
(or a rule-based baseline) then trades the test span. A decision at period
``t`` uses information up to ``t`` and earns the return of ``t + 1``, so
the first test decision is taken at the last training period.
"""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .. import baselines as bl
from ..agents import AgentConfig, EnsemblePolicy, evaluate_ensemble, train_agent
from ..agents.training import run_policy
from ..attribution import attribute_state, portfolio_level_contribution, sample_baselines, stock_level_contribution
from ..data import (
    CharacteristicsPanel, FactorSeries, LagSchedule, MarketCaps, ReturnsPanel, generate_synthetic_panel,
    load_caps_csv, load_characteristics_csv, load_returns_csv, preprocess_characteristics, read_factor_rows,
    top_by_cap,
)
from ..environment import PortfolioEnv, WeightVector, summarize
from ..errors import ConfigError, DataError
from ..factors import ConditionalAutoencoder, ca_train, extract_factor_series
from .config import LEARNING_METHODS, RunConfig, Window

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreparedData:
    returns: ReturnsPanel
    raw_characteristics: CharacteristicsPanel
    characteristics: CharacteristicsPanel
    schedule: LagSchedule
    caps: MarketCaps | None = None
    observable: FactorSeries | None = None


def prepare_data(cfg: RunConfig) -> PreparedData:
    d = cfg.data
    if d.synthetic is not None:
        syn = generate_synthetic_panel(d.synthetic)
        chars = preprocess_characteristics(syn.characteristics, syn.schedule)
        return PreparedData(syn.returns, syn.characteristics, chars, syn.schedule, syn.caps, syn.observable)
    returns = load_returns_csv(d.returns)
    raw = load_characteristics_csv(d.characteristics)
    schedule = LagSchedule({n: d.frequencies.get(n, d.default_frequency) for n in raw.names})
    caps = load_caps_csv(d.caps) if d.caps else None
    obs = read_factor_rows(d.observable_factors) if d.observable_factors else None
    return PreparedData(returns, raw, preprocess_characteristics(raw, schedule), schedule, caps, obs)


@dataclass
class SeedResult:
    seed: int
    history: list[dict]
    agent: object

    @property
    def actor(self):
        return self.agent.actor


@dataclass
class WindowResult:
    window: Window
    train_dates: tuple[str, str]
    test_dates: tuple[str, ...]
    universe: tuple[str, ...]
    returns: np.ndarray
    weights: np.ndarray
    degenerate: int
    seeds: list[SeedResult] = field(default_factory=list)
    # dated inputs consumed while training, as (first, last) date pairs
    training_inputs: dict[str, tuple[str, str]] = field(default_factory=dict)
    # (decision date, latest input date, date whose return it earns)
    decision_inputs: list[tuple[str, str, str]] = field(default_factory=list)
    features: FactorSeries | None = None
    # standardized feature rows the agents saw, aligned with features.dates
    scaled: np.ndarray | None = None
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    model: ConditionalAutoencoder | None = None
    attribution: dict | None = None

    def summary(self) -> dict:
        s = summarize(self.returns)
        s.update(index=self.window.index, train_first=self.train_dates[0], train_last=self.train_dates[1],
                 test_first=self.test_dates[0], test_last=self.test_dates[-1], degenerate_actions=self.degenerate)
        return s


@dataclass
class BacktestReport:
    config: RunConfig
    config_hash: str
    windows: list[WindowResult]
    characteristics: CharacteristicsPanel
    selected: dict = field(default_factory=dict)

    @property
    def dates(self) -> tuple[str, ...]:
        return tuple(d for w in self.windows for d in w.test_dates)

    @property
    def returns(self) -> np.ndarray:
        return np.concatenate([w.returns for w in self.windows])

    def metrics(self) -> dict:
        cfg = self.config
        out = {
            "config_hash": self.config_hash,
            "method": cfg.method,
            "algorithm": cfg.algorithm if cfg.method in LEARNING_METHODS else None,
            "reward": cfg.reward if cfg.method in LEARNING_METHODS else None,
            "seeds": list(cfg.seeds) if cfg.method in LEARNING_METHODS else [],
            "n_windows": len(self.windows),
            "pooled": summarize(self.returns),
            "windows": [w.summary() for w in self.windows],
            "degenerate_actions": int(sum(w.degenerate for w in self.windows)),
        }
        if self.selected:
            out["selected_hyperparameters"] = self.selected
        if cfg.method in LEARNING_METHODS:
            out["training"] = [
                {"window": w.window.index, "seed": s.seed, "first_mean_reward": s.history[0]["mean_reward"],
                 "last_mean_reward": s.history[-1]["mean_reward"]}
                for w in self.windows for s in w.seeds
            ]
        if cfg.attribution.enabled:
            gaps = [w.attribution["max_completeness_gap"] for w in self.windows if w.attribution]
            out["attribution"] = {**cfg.attribution.__dict__, "max_completeness_gap": max(gaps) if gaps else None}
        return out


def thread_count() -> int:
    raw = os.environ.get("CAFPO_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CAFPO_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"CAFPO_THREADS must be a positive integer, got {raw!r}")
    return n


def window_universe(cfg: RunConfig, data: PreparedData, t: int) -> tuple[str, ...]:
    if cfg.universe_size is None:
        return data.returns.assets
    if data.caps is None:
        raise DataError("a universe size needs market caps")
    return tuple(top_by_cap(data.returns, data.caps, t, cfg.universe_size))


def _standardize(x: np.ndarray, rows: slice) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = x[rows].mean(axis=0)
    std = x[rows].std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return (x - mean) / std, mean, std


def _features(cfg: RunConfig, data: PreparedData, w: Window, universe, R: np.ndarray):
    """Feature rows ``train_first .. test_last`` plus the fitted autoencoder, if any."""
    dates = data.returns.dates
    span = (dates[w.train_first], dates[w.test_last])
    if cfg.method == "CAFPO":
        chars = data.characteristics
        fc = cfg.factors
        train_span = (dates[w.train_first], dates[w.train_last])
        for d in train_span:
            if d not in chars.dates:
                raise DataError(f"window {w.index}: characteristics do not cover {d}")
        model = ConditionalAutoencoder(chars.P, universe, fc.n_factors, fc.hidden_sizes, fc.seed)
        ca_train(model, data.returns, chars, train_span, fc.epochs, fc.seed, fc.lr, fc.batch_size)
        return extract_factor_series(model, data.returns, window=span), model
    if cfg.method == "FFPO":
        if data.observable is None:
            raise DataError("FFPO needs observable factors")
        try:
            return data.observable.between(*span), None
        except DataError as exc:
            raise DataError(f"window {w.index}: observable factors do not cover {span[0]}..{span[1]} ({exc})") from None
    rows = R[w.train_first : w.test_last + 1]
    return FactorSeries(dates[w.train_first : w.test_last + 1], universe, rows), None


def _train_seeds(cfg: RunConfig, agent_cfg: AgentConfig, iterations: int, make_env, first: int, stop: int,
                 seeds) -> list[SeedResult]:
    def one(seed):
        agent, hist = train_agent(cfg.algorithm, make_env(), first, stop, agent_cfg, seed, iterations)
        return SeedResult(seed, hist, agent)

    workers = min(thread_count(), len(seeds))
    if workers <= 1:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, seeds))


def _pad_trace(steps, n: int, N: int) -> tuple[np.ndarray, np.ndarray, int]:
    r = np.zeros(n)
    W = np.zeros((n, N))
    deg = 0
    for k, s in enumerate(steps):
        r[k] = max(s.r_p, -1.0)  # limited liability: wealth stops at zero
        W[k] = s.weights.weights
        deg += int(s.weights.degenerate)
    if len(steps) < n:
        logger.warning("portfolio bankrupt at %s; flat for the rest of the window", steps[-1].date)
    return r, W, deg


def _rule_weights(cfg: RunConfig, data: PreparedData, t: int, cols: list[int], R: np.ndarray,
                  avail: np.ndarray) -> WeightVector:
    mask = avail[t]
    sides = bl.momentum_sides(R[t]) if cfg.side_rule == "momentum" else None
    if cfg.method == "equal":
        return bl.equal_weight(len(cols), sides, mask)
    if cfg.method == "value":
        if data.caps is None:
            raise DataError("value weighting needs market caps")
        ct = data.caps.date_index(data.returns.dates[t])
        cap_cols = [data.caps.assets.index(data.returns.assets[c]) for c in cols]
        caps = data.caps.caps[ct, cap_cols]
        return bl.value_weight(np.where(np.isfinite(caps), caps, 0.0), sides, mask & np.isfinite(caps) & (caps > 0))
    L = cfg.markowitz_window
    lo = max(0, t - L + 1)
    if cfg.method == "markowitz-hist":
        return bl.markowitz_solve(bl.markowitz_historical(R[lo : t + 1]), mask=mask)
    if data.observable is None:
        raise DataError("markowitz-factor needs observable factors")
    # regress r_s on f_{s-1} for s in the trailing window
    F = data.observable
    s0 = max(lo, 1)
    lagged = F.values[[F.date_index(data.returns.dates[s - 1]) for s in range(s0, t + 1)]]
    est = bl.markowitz_factor(R[s0 : t + 1], lagged)
    V, _ = bl.condition_covariance(est.V)
    return bl.markowitz_solve(bl.MarkowitzEstimates(est.mu, V), mask=mask)


def _grid_search(cfg: RunConfig, make_env, first: int, stop: int) -> tuple[AgentConfig, int, dict]:
    """Pick grid values by validation-tail Sharpe on the first window (first seed only)."""
    from ..environment import sharpe_ratio

    keys = sorted(cfg.grid)
    split = stop - cfg.windows.validation
    if split - first < 2:
        raise ConfigError("validation span leaves no room for inner training")
    best, best_score = None, -np.inf
    for values in itertools.product(*(cfg.grid[k] for k in keys)):
        choice = dict(zip(keys, values))
        iters = choice.get("iterations", cfg.iterations)
        agent_cfg = replace(cfg.agent, **{k: v for k, v in choice.items() if k != "iterations"})
        agent_cfg.validate()
        agent, _ = train_agent(cfg.algorithm, make_env(), first, split, agent_cfg, cfg.seeds[0], iters)
        steps = evaluate_ensemble(EnsemblePolicy([agent.actor]), make_env(), split, stop)
        score = sharpe_ratio([s.r_p for s in steps])
        score = -np.inf if score is None else score
        logger.info("grid %s: validation Sharpe %s", choice, score)
        if best is None or score > best_score:
            best, best_score = choice, score
    iters = best.get("iterations", cfg.iterations)
    return replace(cfg.agent, **{k: v for k, v in best.items() if k != "iterations"}), iters, best


def attribute_window(acfg, ens: EnsemblePolicy, env: PortfolioEnv, train_ts, test_ts, universe, names) -> dict:
    """Expected-gradients attribution of the ensemble output on each test state.

    Baselines are drawn from training-span states. Stock rows are labelled
    by the holding period and skipped for stocks not listed at the decision.
    """
    base = sample_baselines(env.observations(list(train_ts)), acfg.n_baselines, acfg.seed)
    dates, port, gaps = [], [], []
    stock: dict[str, list] = {a: [] for a in universe}
    stock_dates: dict[str, list] = {a: [] for a in universe}
    for t in test_ts:
        att = attribute_state(ens.mean_output, env.observation(t), base, acfg.steps)
        gaps.append(float(np.max(att.completeness_gap())))
        d = env.dates[t + 1]
        dates.append(d)
        p = portfolio_level_contribution(att.values)
        port.append(np.full(len(names), np.nan) if p is None else p)
        for i, a in enumerate(universe):
            if env.available[t, i]:
                stock[a].append(stock_level_contribution(att.values[i]))
                stock_dates[a].append(d)
            else:
                logger.debug("attribution skips %s at %s: not listed", a, env.dates[t])
    return {"dates": dates, "portfolio": np.array(port), "stock": {a: np.array(v) for a, v in stock.items() if v},
            "stock_dates": {a: v for a, v in stock_dates.items() if v}, "factor_names": list(names),
            "max_completeness_gap": max(gaps) if gaps else 0.0}


def run_window(cfg: RunConfig, data: PreparedData, w: Window, tuned: dict | None = None) -> tuple[WindowResult, dict]:
    dates = data.returns.dates
    universe = window_universe(cfg, data, w.train_last)
    cols = [data.returns.assets.index(a) for a in universe]
    R = data.returns.filled()[:, cols]
    avail = data.returns.available[:, cols]
    test_dates = dates[w.test_first : w.test_last + 1]
    n_test = len(test_dates)
    inputs: dict[str, tuple[str, str]] = {}

    if cfg.method not in LEARNING_METHODS:
        env = PortfolioEnv(np.zeros((len(dates), 1)), R, avail, dates, lookback=1)
        wvs = {t: _rule_weights(cfg, data, t, cols, R, avail) for t in w.decisions}
        steps = run_policy(env, w.decisions.start, w.decisions.stop, lambda _s, t: wvs[t])
        r, W, deg = _pad_trace(steps, n_test, len(universe))
        # rule-based weights are re-estimated each decision from data up to that date
        used = [(dates[t], dates[t], dates[t + 1]) for t in w.decisions]
        return WindowResult(w, (dates[w.train_first], dates[w.train_last]), test_dates, universe, r, W, deg,
                            training_inputs=inputs, decision_inputs=used), {}

    feats, model = _features(cfg, data, w, universe, R)
    if model is not None:
        inputs["autoencoder_returns"] = (dates[w.train_first], dates[w.train_last])
        inputs["autoencoder_characteristics"] = (dates[w.train_first], dates[w.train_last])
    a = w.train_first
    n_train = w.train_last - a + 1
    X, mean, std = _standardize(feats.values, slice(0, n_train))
    inputs["feature_scaling"] = (feats.source_dates[0], feats.source_dates[n_train - 1])
    local_dates = dates[a : w.test_last + 1]
    M = cfg.agent.lookback
    if n_train <= M:
        raise DataError(f"window {w.index}: {n_train} training periods cannot fill a {M}-period state")

    def make_env():
        return PortfolioEnv(X, R[a : w.test_last + 1], avail[a : w.test_last + 1], local_dates, lookback=M,
                            reward=cfg.reward, eta=cfg.eta, warmup=cfg.warmup)

    first, stop = M - 1, n_train - 1
    agent_cfg, iterations, selected = cfg.agent, cfg.iterations, {}
    if tuned:
        agent_cfg, iterations, selected = tuned["agent"], tuned["iterations"], tuned["selected"]
    elif cfg.grid and cfg.windows.validation > 0:
        agent_cfg, iterations, selected = _grid_search(cfg, make_env, first, stop)
    seeds = _train_seeds(cfg, agent_cfg, iterations, make_env, first, stop, cfg.seeds)
    # training states end at the bootstrap state of the last decision; rewards end at the last training return
    inputs["agent_states"] = (feats.source_dates[0], feats.source_dates[stop])
    inputs["agent_rewards"] = (local_dates[first + 1], local_dates[stop])

    ens = EnsemblePolicy([s.actor for s in seeds])
    env = make_env()
    test_first_local, test_stop_local = w.decisions.start - a, w.decisions.stop - a
    steps = evaluate_ensemble(ens, env, test_first_local, test_stop_local)
    r, W, deg = _pad_trace(steps, n_test, len(universe))
    used = [(local_dates[t], feats.source_dates[t], local_dates[t + 1]) for t in range(test_first_local, test_stop_local)]
    result = WindowResult(w, (dates[w.train_first], dates[w.train_last]), test_dates, universe, r, W, deg, seeds,
                          inputs, used, feats, X, mean, std, model)
    if cfg.attribution.enabled:
        result.attribution = attribute_window(cfg.attribution, ens, env, range(first, stop),
                                              range(test_first_local, test_stop_local), universe, feats.names)
    return result, {"agent": agent_cfg, "iterations": iterations, "selected": selected}


def run_rolling_backtest(cfg: RunConfig, data: PreparedData | None = None, n_windows: int | None = None
                         ) -> BacktestReport:
    cfg.validate()
    data = data or prepare_data(cfg)
    spec = cfg.windows if n_windows is None else replace(cfg.windows, n_windows=n_windows)
    earliest = 0
    if cfg.method == "CAFPO":
        first_char = data.characteristics.dates[0]
        if first_char not in data.returns.dates:
            raise DataError(f"characteristics start at {first_char}, outside the returns panel")
        earliest = data.returns.dates.index(first_char)
    windows = spec.windows(data.returns.dates, earliest)
    results: list[WindowResult] = []
    tuned: dict | None = None
    for w in windows:
        logger.info("window %d: train %s..%s, test %s..%s", w.index, data.returns.dates[w.train_first],
                    data.returns.dates[w.train_last], data.returns.dates[w.test_first], data.returns.dates[w.test_last])
        try:
            res, t = run_window(cfg, data, w, tuned)
        except (DataError, ConfigError) as exc:
            raise type(exc)(f"window {w.index}: {exc}") from None
        if cfg.grid and cfg.windows.validation > 0 and tuned is None:
            tuned = t
        results.append(res)
    return BacktestReport(cfg, cfg.hash(), results, data.characteristics, tuned["selected"] if tuned else {})
