"""Two-level belief compression.

An expected-occupancy vector is approximated by a factorized belief whose
per-band probabilities take only two values: a low level on the nu bands
most likely idle and a high level on the rest.  The information-optimal
projection sorts the vector and scans prefix/suffix means, scoring each
split by total binary entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .measurement import DenseBelief, occupancy_table


def binary_entropy(x) -> np.ndarray | float:
    """Entropy (nats) of a Bernoulli(x), continuous extension 0 at x in {0,1}."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    h = -xlogy(x, x) - xlogy(1.0 - x, 1.0 - x)
    return float(h) if h.ndim == 0 else h


@dataclass(frozen=True)
class CompressedBeliefState:
    """Two occupancy-probability levels plus the count of bands at the low one."""

    beta_low: float
    beta_high: float
    nu: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta_low <= self.beta_high <= 1.0:
            raise ValueError(
                f"levels must satisfy 0 <= low <= high <= 1, "
                f"got ({self.beta_low}, {self.beta_high})"
            )
        if self.nu < 1:
            raise ValueError(f"nu={self.nu} must be at least 1")


@dataclass(frozen=True)
class LevelMap:
    """Band-to-level assignment; True marks a band at the low level."""

    is_low: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "is_low", np.asarray(self.is_low, dtype=bool))


def project(beta) -> tuple[CompressedBeliefState, LevelMap]:
    """KL-optimal two-level compression of an expected-occupancy vector.

    The nu* smallest entries are averaged into the low level and the rest
    into the high level, with nu* minimizing the summed binary entropy of
    the two levels.  Ties pick the smallest nu; equal entries keep their
    original band order, so the assignment is reproducible.
    """
    beta = np.asarray(beta, dtype=float)
    f = beta.shape[0]
    if f < 2:
        raise ValueError("compression needs at least two bands")
    order = np.argsort(beta, kind="stable")
    sorted_beta = beta[order]
    prefix = np.cumsum(sorted_beta)
    total = prefix[-1]
    nu = np.arange(1, f)
    low = prefix[:-1] / nu
    high = (total - prefix[:-1]) / (f - nu)
    low = np.clip(low, 0.0, 1.0)
    high = np.clip(high, 0.0, 1.0)
    objective = nu * binary_entropy(low) + (f - nu) * binary_entropy(high)
    k = int(np.argmin(objective))
    nu_star = k + 1
    is_low = np.zeros(f, dtype=bool)
    is_low[order[:nu_star]] = True
    cbs = CompressedBeliefState(float(low[k]), float(max(low[k], high[k])), nu_star)
    return cbs, LevelMap(is_low)


def expand(cbs: CompressedBeliefState, level_map: LevelMap) -> np.ndarray:
    """Expected-occupancy vector carried by a compressed belief."""
    f = level_map.is_low.shape[0]
    n_low = int(level_map.is_low.sum())
    if n_low != cbs.nu:
        raise ValueError(f"level map has {n_low} low bands, state says {cbs.nu}")
    if cbs.nu > f - 1:
        raise ValueError(f"nu={cbs.nu} must leave at least one band at the high level")
    return np.where(level_map.is_low, cbs.beta_low, cbs.beta_high)


def kld_to_factorized(pi: DenseBelief, cbs: CompressedBeliefState, level_map: LevelMap) -> float:
    """KL divergence from a dense belief to a two-level factorized one.

    Returns +inf when the factorized model assigns zero mass to a state the
    dense belief supports.
    """
    beta = expand(cbs, level_map)
    table = occupancy_table(pi.f_bands)
    factors = np.where(table == 1, beta[None, :], 1.0 - beta[None, :])
    approx = factors.prod(axis=1)
    mass = pi.masses
    support = mass > 0
    if np.any(support & (approx <= 0.0)):
        return math.inf
    terms = xlogy(mass[support], mass[support] / approx[support])
    return float(terms.sum())
