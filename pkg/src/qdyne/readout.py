"""Photon-count readout maps from a population to a random count."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ReadoutModel:
    """``variant`` is ``"bernoulli"`` (projection noise only) or ``"poisson"``.

    The Poisson variant draws ``Pois[mu0 + (mu1 - mu0) Bn[p]]``.
    """

    variant: str = "poisson"
    mu0: float = 0.0
    mu1: float = 1.0

    def __post_init__(self):
        variant = self.variant.lower()
        if variant not in ("bernoulli", "poisson"):
            raise ValueError(f"unknown readout variant {self.variant!r}")
        object.__setattr__(self, "variant", variant)
        if variant == "poisson" and not (self.mu1 > self.mu0 >= 0):
            raise ValueError("poisson readout needs mu1 > mu0 >= 0")

    @classmethod
    def bernoulli(cls):
        return cls("bernoulli", 0.0, 1.0)

    @property
    def lo(self) -> float:
        return 0.0 if self.variant == "bernoulli" else self.mu0

    @property
    def hi(self) -> float:
        return 1.0 if self.variant == "bernoulli" else self.mu1


def _check_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(~(p >= 0)) or np.any(~(p <= 1)):
        raise ValueError("population must lie in [0, 1]")
    return p


def sample_photons(p, model: ReadoutModel, rng: np.random.Generator):
    """Draw photon counts for population(s) ``p``; returns int64 array (or int)."""
    p = _check_prob(p)
    branch = rng.random(p.shape) < p
    if model.variant == "bernoulli":
        out = branch.astype(np.int64)
    else:
        out = rng.poisson(np.where(branch, model.mu1, model.mu0)).astype(np.int64)
    return out if out.ndim else int(out)


def count_mean(p, model: ReadoutModel):
    p = np.asarray(p, dtype=float)
    return model.lo + (model.hi - model.lo) * p


def count_variance(p, model: ReadoutModel):
    """Bernoulli ``p(1-p)``; Poisson mixture adds the branch-mean variance to the shot noise."""
    p = np.asarray(p, dtype=float)
    bern = p * (1.0 - p)
    if model.variant == "bernoulli":
        return bern
    return count_mean(p, model) + (model.mu1 - model.mu0) ** 2 * bern
