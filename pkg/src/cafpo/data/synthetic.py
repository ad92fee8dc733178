"""Synthetic panels with a known conditional factor structure.

Returns follow ``r[t, i] = beta[t, i] . f[t] + noise`` where ``beta[t, i]``
is a linear map of the preprocessed characteristics row for ``(t, i)``,
i.e. exactly the conditioning information the autoencoder sees after the
lag schedule has been applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .panels import (
    CharacteristicsPanel,
    FactorSeries,
    LagSchedule,
    MarketCaps,
    ReturnsPanel,
    month_range,
)
from .preprocess import preprocess_characteristics


@dataclass
class SyntheticSpec:
    n_assets: int = 50
    n_periods: int = 240
    n_factors: int = 3
    n_characteristics: int = 10
    factor_vol: float | list[float] = 0.05
    noise_scale: float = 0.005
    churn_rate: float = 0.0
    seed: int = 0
    # P x K; drawn from the seed when omitted
    loading_map: list[list[float]] | None = None
    # AR(1) coefficient of the factors; > 0 makes next-period factors predictable
    factor_persistence: float = 0.0
    char_persistence: float = 0.9
    char_drift: float = 0.1
    missing_rate: float = 0.0
    observable_noise: float = 0.5
    start: str = "2000-01"
    frequencies: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        for name in ("n_assets", "n_periods", "n_factors", "n_characteristics"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")
        if not 0.0 <= self.churn_rate < 1.0:
            raise ConfigError("churn_rate must lie in [0, 1)")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError("missing_rate must lie in [0, 1)")
        if not -1.0 < self.factor_persistence < 1.0:
            raise ConfigError("factor_persistence must lie in (-1, 1)")
        vol = np.broadcast_to(np.asarray(self.factor_vol, dtype=float), (self.n_factors,))
        if (vol <= 0).any():
            raise ConfigError("factor volatilities must be positive")
        if self.loading_map is not None and np.shape(self.loading_map) != (self.n_characteristics, self.n_factors):
            raise ConfigError(f"loading_map must be {self.n_characteristics} x {self.n_factors}")

    @property
    def char_names(self) -> tuple[str, ...]:
        return tuple(f"c{p:02d}" for p in range(self.n_characteristics))

    @property
    def asset_names(self) -> tuple[str, ...]:
        return tuple(f"A{i:03d}" for i in range(self.n_assets))

    @property
    def factor_names(self) -> tuple[str, ...]:
        return tuple(f"F{k}" for k in range(self.n_factors))

    def schedule(self) -> LagSchedule:
        return LagSchedule({n: self.frequencies.get(n, "monthly") for n in self.char_names})


@dataclass(frozen=True)
class SyntheticPanel:
    spec: SyntheticSpec
    returns: ReturnsPanel
    characteristics: CharacteristicsPanel
    schedule: LagSchedule
    factors: FactorSeries
    loadings: np.ndarray
    loading_map: np.ndarray
    caps: MarketCaps
    observable: FactorSeries
    noise: np.ndarray

    def __iter__(self):
        return iter((self.returns, self.characteristics, self.factors, self.loadings))


def generate_synthetic_panel(spec: SyntheticSpec) -> SyntheticPanel:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    N, T, K, P = spec.n_assets, spec.n_periods, spec.n_factors, spec.n_characteristics
    schedule = spec.schedule()
    lead = schedule.max_lag
    dates_all = month_range(spec.start, T + lead)

    # persistent firm characteristics: static level plus AR(1) drift
    level = rng.normal(size=(N, P))
    drift = np.zeros((N, P))
    raw = np.empty((T + lead, N, P))
    for t in range(T + lead):
        drift = spec.char_persistence * drift + spec.char_drift * rng.normal(size=(N, P))
        raw[t] = level + drift
    if spec.missing_rate > 0:
        raw[rng.random(raw.shape) < spec.missing_rate] = np.nan
    chars = CharacteristicsPanel(dates_all, spec.asset_names, spec.char_names, raw)
    z = preprocess_characteristics(chars, schedule).values  # (T, N, P)

    if spec.loading_map is None:
        # ranks in (-1, 1) have variance ~1/3, so this gives unit-variance loadings
        cmap = rng.normal(scale=np.sqrt(3.0 / P), size=(P, K))
    else:
        cmap = np.asarray(spec.loading_map, dtype=float)
    beta = z @ cmap  # (T, N, K)

    vol = np.broadcast_to(np.asarray(spec.factor_vol, dtype=float), (K,)).copy()
    phi = spec.factor_persistence
    f = np.empty((T, K))
    f[0] = vol * rng.normal(size=K)
    for t in range(1, T):
        f[t] = phi * f[t - 1] + np.sqrt(1.0 - phi * phi) * vol * rng.normal(size=K)

    noise = spec.noise_scale * rng.normal(size=(T, N))
    ret = np.einsum("tnk,tk->tn", beta, f) + noise

    avail = np.ones((T, N), dtype=bool)
    if spec.churn_rate > 0:
        u = rng.random((T, N))
        for t in range(1, T):
            flip = u[t] < spec.churn_rate
            avail[t] = np.where(flip, ~avail[t - 1], avail[t - 1])
        # keep at least two assets listed so a long-short book always exists
        for t in range(T):
            if avail[t].sum() < 2:
                avail[t, :2] = True

    dates = dates_all[lead:]
    returns = ReturnsPanel(dates, spec.asset_names, np.where(avail, ret, np.nan), avail)
    factors = FactorSeries(dates, spec.factor_names, f)

    cap0 = np.exp(rng.normal(8.0, 1.0, size=N))
    caps = cap0 * np.cumprod(1.0 + np.clip(ret, -0.9, None), axis=0)
    caps = MarketCaps(dates, spec.asset_names, caps)

    obs = f + spec.observable_noise * vol * rng.normal(size=(T, K))
    observable = FactorSeries(dates, tuple(f"OBS{k}" for k in range(K)), obs)
    return SyntheticPanel(spec, returns, chars, schedule, factors, beta, cmap, caps, observable, noise)


def true_factor_r2(panel: SyntheticPanel) -> float:
    """Pooled uncentered R^2 of per-date cross-sectional regressions on the true loadings."""
    r = panel.returns.filled()
    mask = panel.returns.available
    sse = sst = 0.0
    for t in range(panel.returns.T):
        m = mask[t]
        X, y = panel.loadings[t][m], r[t][m]
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ coef
        sse += float(resid @ resid)
        sst += float(y @ y)
    return 1.0 - sse / sst
