"""Myopic allocation of a total traffic budget across spectrum bands.

Given the posterior occupancy probabilities, the per-slot tradeoff between
SU throughput, PU protection and transmission cost is concave in the
traffic vector; the budget-constrained maximizer has a water-filling
structure solved by bisection on the budget multiplier.  Bands more
likely busy never receive more traffic than bands more likely idle, and
bands above a fixed occupancy threshold receive none at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from .params import ModelParams


@dataclass
class AllocationResult:
    traffic: np.ndarray
    multiplier: float
    objective: float


def tradeoff_coeff(p: ModelParams) -> float:
    """Weight of PU protection relative to SU traffic in the myopic objective."""
    return (1.0 - p.xi) * (1.0 - p.rho_p) / (p.xi * (1.0 - p.rho_s))


def occupancy_threshold(p: ModelParams) -> float:
    """Occupancy probability above which a band gets zero traffic."""
    a = p.xi * (1.0 - p.rho_s)
    return a / ((1.0 - p.xi) * (1.0 - p.rho_p) + a)


def r_max(beta_hat, p: ModelParams) -> np.ndarray:
    """Per-band traffic caps: the unconstrained per-band maximizers.

    Zero for bands at or above the occupancy threshold (including the
    certain-busy limit beta_hat = 1).
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    if np.any((beta_hat < 0) | (beta_hat > 1)):
        raise ValueError("occupancy probabilities must lie in [0, 1]")
    c = tradeoff_coeff(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        odds = np.where(beta_hat < 1.0, beta_hat / (1.0 - beta_hat), np.inf)
    return np.maximum(0.0, 1.0 - c * odds)


def myopic_objective(beta_hat, r, p: ModelParams) -> float:
    """One-slot tradeoff value of a traffic vector under belief beta_hat."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("traffic rates must be nonnegative")
    c = tradeoff_coeff(p)
    return float(np.sum(((1.0 - beta_hat) * r + c * beta_hat) * np.exp(-r)))


def allocate(
    beta_hat,
    budget,
    p: ModelParams,
    sum_tol: float = 1e-9,
    root_tol: float = 1e-11,
) -> AllocationResult:
    """Budget-constrained maximizer of the myopic tradeoff.

    The multiplier is bisected until the allocated total matches the
    budget; per-band values come from the stationarity cases (clamped at
    zero, clamped at the cap, or the unique interior root, found by
    bisection since the marginal value decreases in the rate).  Bands with
    equal occupancy probability receive identical traffic by construction.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    budget = float(budget)
    caps_full = r_max(beta_hat, p)
    cap_total = float(caps_full.sum())
    if budget < 0.0:
        raise ValueError("budget must be nonnegative")
    if budget > cap_total + 1e-9:
        raise ValueError(f"budget {budget} exceeds the feasible total {cap_total}")
    c = tradeoff_coeff(p)
    if budget <= 0.0:
        mu_floor = float(np.min(-(1.0 - beta_hat) + c * beta_hat))
        zero = np.zeros_like(beta_hat)
        return AllocationResult(zero, mu_floor, myopic_objective(beta_hat, zero, p))
    values, inverse = np.unique(beta_hat, return_inverse=True)
    counts = np.bincount(inverse).astype(float)
    slopes = 1.0 - values
    penalties = c * values
    caps = r_max(values, p)
    r_unique, mu = _accel.allocate_core(
        slopes, penalties, caps, counts, min(budget, cap_total), sum_tol, root_tol
    )
    traffic = np.asarray(r_unique)[inverse]
    return AllocationResult(traffic, float(mu), myopic_objective(beta_hat, traffic, p))
