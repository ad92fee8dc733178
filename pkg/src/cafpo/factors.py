"""Conditional autoencoder factors and the observable-factor pathway.

The covariates network maps each asset's lagged characteristics to a row of
factor loadings (one LeakyReLU hidden layer by default, shared across
assets). The factor network is a single linear layer from the cross-section
of returns to K factors. Reconstructed returns are loadings times factors.

The factor network's input width is the training universe. Assets missing
at a date enter as zero returns, so they contribute nothing to the factors.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .data.io import read_factor_rows
from .data.panels import CharacteristicsPanel, FactorSeries, ReturnsPanel
from .diffcore import Dense, Module, Tape, Tensor
from .errors import DataError, ShapeError

logger = logging.getLogger(__name__)

__all__ = [
    "CAConfig", "CAForward", "ConditionalAutoencoder", "FactorSeries", "TrainLog", "ca_forward", "ca_train",
    "canonical_correlations", "extract_factor_series", "load_model", "load_observable_factors", "save_model",
    "total_r2",
]


@dataclass
class CAConfig:
    n_factors: int = 5
    hidden_sizes: list[int] = field(default_factory=lambda: [16])
    epochs: int = 500
    lr: float = 0.01
    # dates per mini-batch; None means the full window
    batch_size: int | None = None
    seed: int = 0


class ConditionalAutoencoder(Module):
    def __init__(self, n_characteristics: int, universe: Sequence[str], n_factors: int = 5,
                 hidden_sizes: Sequence[int] = (16,), seed: int | None = 0):
        super().__init__()
        if n_factors < 1 or n_characteristics < 1 or not hidden_sizes or min(hidden_sizes) < 1:
            raise ShapeError("K, P and every hidden size must be >= 1")
        if not universe:
            raise ShapeError("training universe is empty")
        rng = np.random.default_rng(seed) if seed is not None else None
        self.P, self.K = n_characteristics, n_factors
        self.hidden_sizes = list(hidden_sizes)
        self.universe = tuple(universe)
        sizes = [n_characteristics, *hidden_sizes]
        self.hidden = [self.add_module(f"cov_hidden{i}" if i else "cov_hidden", Dense(a, b, rng))
                       for i, (a, b) in enumerate(zip(sizes, sizes[1:]))]
        self.beta_out = self.add_module("beta_out", Dense(sizes[-1], n_factors, rng))
        # weights are stored transposed: (N, K), so f = r @ W + b
        self.factor_net = self.add_module("factor_net", Dense(len(self.universe), n_factors, rng))

    @property
    def H(self) -> int:
        return self.hidden_sizes[0]

    @property
    def N(self) -> int:
        return len(self.universe)

    def loadings(self, z: Tensor) -> Tensor:
        x = z
        for layer in self.hidden:
            x = dc.leaky_relu(layer(x))
        return self.beta_out(x)

    def factors(self, r: Tensor) -> Tensor:
        return self.factor_net(r)

    def reconstruct(self, z: Tensor, r: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Batched forward: ``z`` (..., N, P), ``r`` (..., N) -> loadings, factors, reconstruction."""
        beta = self.loadings(z)
        f = self.factors(r)
        fb = dc.reshape(f, f.shape[:-1] + (1, self.K))
        recon = dc.sum(beta * fb, axis=-1)
        return beta, f, recon

    def manifest(self) -> dict:
        return {"K": self.K, "H": self.H, "P": self.P, "hidden_sizes": self.hidden_sizes,
                "universe": list(self.universe)}


@dataclass(frozen=True)
class CAForward:
    loadings: np.ndarray
    factors: np.ndarray
    reconstruction: np.ndarray
    residual: np.ndarray


def ca_forward(model: ConditionalAutoencoder, z, r) -> CAForward:
    """Loadings, factors, reconstruction and residual for one cross-section."""
    z = np.asarray(z, dtype=float)
    r = np.asarray(r, dtype=float)
    if z.shape != (model.N, model.P):
        raise ShapeError(f"characteristics must be {model.N} x {model.P}, got {z.shape}")
    if r.shape != (model.N,):
        raise ShapeError(f"returns must have length {model.N}, got {r.shape}")
    beta, f, recon = model.reconstruct(Tensor(z), Tensor(r))
    return CAForward(beta.values, f.values, recon.values, r - recon.values)


def _window_arrays(model, returns: ReturnsPanel, chars: CharacteristicsPanel | None, window):
    first, last = window
    r0, r1 = returns.date_index(first), returns.date_index(last)
    if r1 < r0:
        raise DataError(f"empty window {first}..{last}")
    missing = [a for a in model.universe if a not in returns.assets]
    if missing:
        raise DataError(f"universe assets absent from returns panel: {missing[:5]}")
    cols = [returns.assets.index(a) for a in model.universe]
    r = returns.filled()[r0 : r1 + 1][:, cols]
    mask = returns.available[r0 : r1 + 1][:, cols]
    z = None
    if chars is not None:
        c0, c1 = chars.date_index(first), chars.date_index(last)
        ccols = [chars.assets.index(a) for a in model.universe]
        z = chars.values[c0 : c1 + 1][:, ccols, :]
        if z.shape[-1] != model.P:
            raise ShapeError(f"model expects {model.P} characteristics, panel has {z.shape[-1]}")
    return returns.dates[r0 : r1 + 1], r, mask, z


@dataclass
class TrainLog:
    losses: list[float] = field(default_factory=list)

    @property
    def running_min(self) -> list[float]:
        return list(np.minimum.accumulate(self.losses)) if self.losses else []


def ca_train(model: ConditionalAutoencoder, returns: ReturnsPanel, chars: CharacteristicsPanel,
             window: tuple[str, str], epochs: int, seed: int = 0, lr: float = 0.01,
             batch_size: int | None = None, train_covariates: bool = True) -> tuple[ConditionalAutoencoder, TrainLog]:
    """Fit by Adam on the masked mean squared reconstruction error over the window.

    ``chars`` must already be preprocessed; its row ``t`` conditions the
    return of period ``t``. The model is updated in place and returned.
    """
    dates, r, mask, z = _window_arrays(model, returns, chars, window)
    if not chars.normalized:
        raise DataError("characteristics must be lagged and rank-normalized before training")
    log = TrainLog()
    if epochs <= 0:
        return model, log
    params = model.parameters() if train_covariates else model.factor_net.parameters()
    opt = dc.Adam(params, lr=lr)
    rng = np.random.default_rng(seed)
    T = len(dates)
    bs = T if not batch_size else min(batch_size, T)
    for _ in range(epochs):
        order = np.arange(T) if bs == T else rng.permutation(T)
        epoch_loss = 0.0
        for s in range(0, T, bs):
            idx = order[s : s + bs]
            m = mask[idx].astype(float)
            count = max(m.sum(), 1.0)
            with Tape() as tape:
                _, _, recon = model.reconstruct(Tensor(z[idx]), Tensor(r[idx]))
                err = (recon - Tensor(r[idx])) * Tensor(m)
                loss = dc.sum(dc.square(err)) * (1.0 / count)
            tape.backward(loss, params=params)
            opt.step()
            epoch_loss += loss.item() * count
        log.losses.append(epoch_loss / max(mask.sum(), 1.0))
    logger.debug("autoencoder trained on %s..%s: loss %.3e -> %.3e", dates[0], dates[-1], log.losses[0], log.losses[-1])
    return model, log


def extract_factor_series(model: ConditionalAutoencoder, returns: ReturnsPanel,
                          chars: CharacteristicsPanel | None = None, window: tuple[str, str] | None = None
                          ) -> FactorSeries:
    """Apply the factor network date by date; missing returns enter as zeros."""
    window = window or (returns.dates[0], returns.dates[-1])
    dates, r, _, _ = _window_arrays(model, returns, None, window)
    f = model.factors(Tensor(r)).values
    return FactorSeries(dates, tuple(f"CA{k}" for k in range(model.K)), f)


def load_observable_factors(path: str | Path, window: tuple[str, str] | None = None) -> FactorSeries:
    series = read_factor_rows(path)
    if window is None:
        return series
    first, last = window
    try:
        return series.between(first, last)
    except DataError as exc:
        raise DataError(f"{path}: factors do not cover {first}..{last} ({exc})") from None


def total_r2(actual: np.ndarray, predicted: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Uncentered R^2 = 1 - sum (r - r_hat)^2 / sum r^2 over the masked cells."""
    actual, predicted = np.asarray(actual), np.asarray(predicted)
    m = np.ones(actual.shape, bool) if mask is None else np.asarray(mask, bool)
    resid = (actual - predicted)[m]
    return 1.0 - float(resid @ resid) / float(actual[m] @ actual[m])


def canonical_correlations(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Canonical correlations between the columns of X and Y, descending."""
    X = np.asarray(X, float) - np.mean(X, axis=0)
    Y = np.asarray(Y, float) - np.mean(Y, axis=0)
    qx, _ = np.linalg.qr(X)
    qy, _ = np.linalg.qr(Y)
    s = np.linalg.svd(qx.T @ qy, compute_uv=False)
    return np.clip(s[: min(X.shape[1], Y.shape[1])], 0.0, 1.0)


def save_model(model: ConditionalAutoencoder, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dc.save_params(model.state_dict(), directory / "autoencoder.cafw")
    (directory / "autoencoder.json").write_text(json.dumps(model.manifest(), indent=2, sort_keys=True) + "\n")


def load_model(directory: str | Path) -> ConditionalAutoencoder:
    directory = Path(directory)
    man = json.loads((directory / "autoencoder.json").read_text())
    model = ConditionalAutoencoder(man["P"], man["universe"], man["K"], man["hidden_sizes"], seed=None)
    model.load_state_dict(dc.load_params(directory / "autoencoder.cafw"))
    return model
