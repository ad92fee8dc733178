"""Seed ensembles: normalize each actor's action, average, normalize again."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from ..environment import WeightVector, normalize_action
from ..errors import ShapeError
from .networks import Actor

logger = logging.getLogger(__name__)


class EnsemblePolicy:
    def __init__(self, actors: Sequence[Actor]):
        if not actors:
            raise ShapeError("an ensemble needs at least one actor")
        manifest = actors[0].shape_manifest()
        for a in actors[1:]:
            if a.shape_manifest() != manifest:
                raise ShapeError("ensemble actors must share one architecture")
        self.actors = list(actors)

    @property
    def N(self) -> int:
        return self.actors[0].N

    def raw_actions(self, states) -> np.ndarray:
        """(members, batch, N) deterministic raw outputs."""
        return np.stack([a(np.asarray(states, dtype=float)).values for a in self.actors])

    def mean_output(self, states) -> Tensor:
        """Differentiable mean raw output over members, shape (batch, N)."""
        outs = [a(states) for a in self.actors]
        total = outs[0]
        for o in outs[1:]:
            total = total + o
        return total * (1.0 / len(outs)) if len(outs) > 1 else dc.identity(total)

    def weights(self, states, masks=None) -> list[WeightVector]:
        """One combined weight vector per state in the batch."""
        states = np.asarray(states, dtype=float)
        if states.ndim == 2:
            states = states[None]
        raw = self.raw_actions(states)
        masks = np.ones((states.shape[0], self.N), bool) if masks is None else np.asarray(masks, bool).reshape(
            states.shape[0], self.N)
        out = []
        for b in range(states.shape[0]):
            avg = np.mean([normalize_action(raw[m, b], masks[b]).weights for m in range(len(self.actors))], axis=0)
            wv = normalize_action(avg, masks[b])
            if wv.degenerate:
                logger.info("ensemble average was one-sided; degeneracy rule applied")
            out.append(wv)
        return out


def ensemble_act(ensemble: EnsemblePolicy, state, mask=None) -> WeightVector:
    return ensemble.weights(np.asarray(state, dtype=float)[None], None if mask is None else [mask])[0]
