"""Compressed spectrum measurements and the exact Bayesian posterior oracle.

Each reporting SU contributes one scalar projection of the occupancy vector
through an i.i.d. Gaussian gain column; the number of reports that survive
the shared control channels is binomial.  For small band counts the full
2^F posterior is computable exactly and serves as the reference for the
sparse estimators.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .params import ModelParams

DENSE_BELIEF_MAX_BANDS = 14


@dataclass
class MeasurementBatch:
    """Gains (F x m, one column per received report) and observations (m,)."""

    gains: np.ndarray
    observations: np.ndarray
    count: int

    def __post_init__(self) -> None:
        self.gains = np.asarray(self.gains, dtype=float)
        self.observations = np.asarray(self.observations, dtype=float)
        if self.gains.ndim != 2:
            raise ValueError("gains must be a 2-D array of shape (f_bands, count)")
        if self.gains.shape[1] != self.count or self.observations.shape != (self.count,):
            raise ValueError(
                f"inconsistent batch: gains {self.gains.shape}, "
                f"observations {self.observations.shape}, count {self.count}"
            )

    @classmethod
    def empty(cls, f_bands: int) -> "MeasurementBatch":
        return cls(np.zeros((f_bands, 0)), np.zeros(0), 0)


def draw_measurement_count(psi, p: ModelParams, rng: np.random.Generator) -> int:
    """Number of reports that survive the B shared control channels."""
    psi = float(psi)
    if not 0.0 <= psi <= 1.0:
        raise ValueError(f"psi={psi!r} must lie in [0, 1]")
    return int(rng.binomial(p.b_channels, psi * math.exp(-psi)))


def measurement_count_pmf(psi, p: ModelParams) -> np.ndarray:
    """pmf of the received-report count m over 0..B."""
    psi = float(psi)
    q = psi * math.exp(-psi)
    m = np.arange(p.b_channels + 1)
    binom = np.array([math.comb(p.b_channels, int(k)) for k in m], dtype=float)
    return binom * q**m * (1.0 - q) ** (p.b_channels - m)


def generate_batch(b, m: int, p: ModelParams, rng: np.random.Generator) -> MeasurementBatch:
    """Draw m compressed measurements of the occupancy vector b."""
    b = np.asarray(b, dtype=float)
    if m < 0:
        raise ValueError("measurement count must be nonnegative")
    gains = rng.normal(0.0, math.sqrt(p.sigma_a2), size=(b.shape[0], m))
    noise = rng.normal(0.0, math.sqrt(p.sigma_z2), size=m)
    return MeasurementBatch(gains, gains.T @ b + noise, m)


def occupancy_table(f_bands: int) -> np.ndarray:
    """All occupancy vectors as rows, ordered by their big-endian integer value.

    Row k holds the bits of k with band 0 as the most significant bit; this
    fixes the tie-breaking order shared by the exhaustive estimators.
    """
    if f_bands > DENSE_BELIEF_MAX_BANDS:
        raise ValueError(f"enumeration capped at {DENSE_BELIEF_MAX_BANDS} bands")
    k = np.arange(1 << f_bands)
    shifts = np.arange(f_bands - 1, -1, -1)
    return ((k[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


@dataclass
class DenseBelief:
    """Probability masses over all 2^F occupancy vectors (oracle scale only)."""

    masses: np.ndarray
    f_bands: int

    def __post_init__(self) -> None:
        if self.f_bands > DENSE_BELIEF_MAX_BANDS:
            raise ValueError(f"dense beliefs are capped at {DENSE_BELIEF_MAX_BANDS} bands")
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.shape != (1 << self.f_bands,):
            raise ValueError(f"need {1 << self.f_bands} masses, got {self.masses.shape}")
        if np.any(self.masses < 0):
            raise ValueError("belief masses must be nonnegative")
        total = self.masses.sum()
        if not math.isclose(total, 1.0, abs_tol=1e-10):
            raise ValueError(f"belief masses must sum to 1, got {total}")

    @classmethod
    def from_factorized(cls, beta) -> "DenseBelief":
        """Product belief with per-band occupancy probabilities beta."""
        beta = np.asarray(beta, dtype=float)
        masses = np.array([1.0])
        for bi in beta:  # band 0 ends up as the most significant bit
            masses = np.kron(masses, np.array([1.0 - bi, bi]))
        return cls(masses, beta.shape[0])

    def expected_occupancy(self) -> np.ndarray:
        return self.masses @ occupancy_table(self.f_bands)


def exact_posterior(prior: DenseBelief, batch: MeasurementBatch, p: ModelParams) -> DenseBelief:
    """Bayes update of a dense belief by a measurement batch.

    Likelihoods are combined in the log domain with max subtraction so tiny
    noise variances cannot underflow the normalization.
    """
    if prior.masses.sum() <= 0.0:
        raise ValueError("prior belief carries no mass")
    if batch.count == 0:
        return DenseBelief(prior.masses.copy(), prior.f_bands)
    table = occupancy_table(prior.f_bands).astype(float)
    resid = table @ batch.gains - batch.observations[None, :]
    loglik = -np.sum(resid**2, axis=1) / (2.0 * p.sigma_z2)
    with np.errstate(divide="ignore"):
        logpost = np.where(prior.masses > 0, np.log(prior.masses, where=prior.masses > 0), -np.inf)
    logpost = logpost + loglik
    logpost -= logpost.max()
    post = np.exp(logpost)
    return DenseBelief(post / post.sum(), prior.f_bands)


def batch_to_csv(batch: MeasurementBatch) -> str:
    """Debug serialization: one line per gain column, then the observations."""
    buf = io.StringIO()
    buf.write(f"# f_bands={batch.gains.shape[0]} count={batch.count}\n")
    for j in range(batch.count):
        buf.write(",".join(repr(v) for v in batch.gains[:, j]) + "\n")
    buf.write(",".join(repr(v) for v in batch.observations) + "\n")
    return buf.getvalue()


def batch_from_csv(text: str) -> MeasurementBatch:
    lines = [ln for ln in text.strip().splitlines()]
    header = lines[0].lstrip("# ").split()
    f_bands = int(header[0].split("=")[1])
    count = int(header[1].split("=")[1])
    gains = np.zeros((f_bands, count))
    for j in range(count):
        gains[:, j] = [float(v) for v in lines[1 + j].split(",")]
    obs = np.array([float(v) for v in lines[1 + count].split(",")]) if count else np.zeros(0)
    return MeasurementBatch(gains, obs, count)
