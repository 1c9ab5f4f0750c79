"""Sparse MAP estimation of the occupancy state.

The estimator works on the deviation from the prior mode: flipping the
measurement signs on mode-busy bands turns the posterior objective into a
nonnegative-weighted l1-penalized least squares over binary corrections.
A box-constrained projected-gradient relaxation provides the start for a
single-bit-flip hill climb; an exhaustive oracle covers small band counts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .measurement import DENSE_BELIEF_MAX_BANDS, MeasurementBatch, occupancy_table
from .params import ModelParams

BETA_CLAMP = 1e-9


@dataclass
class ResidualProblem:
    """Correction-vector form of the MAP objective.

    residual_obs:    observations minus the prior-mode prediction
    corrected_gains: gains with signs flipped on mode-busy bands (F x m)
    weights:         nonnegative prior log-odds penalties, one per band
    prior_mode:      the thresholded prior occupancy estimate
    """

    residual_obs: np.ndarray
    corrected_gains: np.ndarray
    weights: np.ndarray
    prior_mode: np.ndarray


class RelaxedSolution(NamedTuple):
    e: np.ndarray
    converged: bool
    n_iter: int
    objective_history: np.ndarray | None


class HillClimbResult(NamedTuple):
    e: np.ndarray
    n_flips: int


def clamp_beta(beta: np.ndarray) -> np.ndarray:
    return np.clip(beta, BETA_CLAMP, 1.0 - BETA_CLAMP)


def residual_transform(beta, batch: MeasurementBatch, p: ModelParams) -> ResidualProblem:
    """Re-center a measurement batch on the prior mode.

    Occupancy probabilities exactly 0 or 1 would give infinite weights and
    are clamped (with a warning) just inside the open interval.
    """
    beta = np.asarray(beta, dtype=float)
    if np.any((beta <= 0.0) | (beta >= 1.0)):
        warnings.warn(
            "occupancy probabilities at 0 or 1 clamped to keep log-odds finite",
            RuntimeWarning,
            stacklevel=2,
        )
        beta = clamp_beta(beta)
    mode = (beta >= 0.5).astype(np.uint8)
    resid = batch.observations - batch.gains.T @ mode
    corrected = batch.gains * (1.0 - 2.0 * mode)[:, None]
    weights = 2.0 * p.sigma_z2 * (1.0 - 2.0 * mode) * np.log((1.0 - beta) / beta)
    return ResidualProblem(resid, corrected, weights, mode)


def map_objective(e, prob: ResidualProblem) -> float:
    """Penalized squared residual of a correction vector (binary or relaxed)."""
    e = np.asarray(e, dtype=float)
    resid = prob.residual_obs - prob.corrected_gains.T @ e
    return float(resid @ resid + prob.weights @ e)


def relaxed_solve(
    prob: ResidualProblem,
    tol: float = 1e-8,
    max_iter: int = 10000,
    record_history: bool = False,
) -> RelaxedSolution:
    """Box-constrained minimizer of the relaxed correction objective.

    Cyclic coordinate descent with exact per-coordinate minimization,
    started at the all-zero correction; each update clips the coordinate
    minimizer into [0, 1], so the objective never increases.  Stops after
    a sweep whose projected-gradient norm falls below `tol`; exhausting
    `max_iter` sweeps returns the last iterate flagged non-converged.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    f = prob.corrected_gains.shape[0]
    e = np.zeros(f)
    history = [map_objective(e, prob)] if record_history else None
    if prob.residual_obs.shape[0] == 0:
        return RelaxedSolution(e, True, 0, np.asarray(history) if history else None)
    a, y, mu = prob.corrected_gains, prob.residual_obs, prob.weights
    gram = a @ a.T
    ay = a @ y
    diag = np.diag(gram)
    s = gram @ e
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        for i in range(f):
            grad_i = 2.0 * (s[i] - ay[i]) + mu[i]
            if diag[i] > 0.0:
                new = min(max(e[i] - grad_i / (2.0 * diag[i]), 0.0), 1.0)
            else:
                new = 0.0  # zero gain row: only the penalty acts
            delta = new - e[i]
            if delta != 0.0:
                s += delta * gram[:, i]
                e[i] = new
        if record_history:
            history.append(map_objective(e, prob))
        grad = 2.0 * (s - ay) + mu
        proj_grad = np.where(e <= 0.0, np.minimum(grad, 0.0), grad)
        proj_grad = np.where(e >= 1.0, np.maximum(grad, 0.0), proj_grad)
        if np.linalg.norm(proj_grad) < tol:
            converged = True
            break
    return RelaxedSolution(e, converged, sweeps, np.asarray(history) if history else None)


def flip_gains(e, prob: ResidualProblem) -> np.ndarray:
    """Objective decrease achieved by flipping each single component of e."""
    e = np.asarray(e, dtype=float)
    gram = prob.corrected_gains @ prob.corrected_gains.T
    ay = prob.corrected_gains @ prob.residual_obs
    cross = gram @ e - np.diag(gram) * e
    return (2.0 * e - 1.0) * (-2.0 * ay + 2.0 * cross + np.diag(gram) + prob.weights)


def hill_climb(start, prob: ResidualProblem) -> HillClimbResult:
    """Single-bit-flip descent on the binary correction objective.

    Repeatedly flips the component with the largest objective decrease
    while one exists; zero-gain flips are not taken, which both guarantees
    termination and leaves an optimal start untouched.  The result is a
    1-flip local optimum.
    """
    e = np.asarray(start, dtype=np.uint8).copy()
    flips = 0
    while True:
        gains = flip_gains(e, prob)
        best = int(np.argmax(gains))
        if gains[best] <= 0.0:
            return HillClimbResult(e, flips)
        e[best] ^= 1
        flips += 1


def map_estimate(beta, batch: MeasurementBatch, p: ModelParams) -> np.ndarray:
    """Occupancy estimate: prior mode corrected by the refined relaxation."""
    prob = residual_transform(beta, batch, p)
    relaxed = relaxed_solve(prob)
    start = (relaxed.e >= 0.5).astype(np.uint8)
    corr = hill_climb(start, prob).e
    return prob.prior_mode ^ corr


def map_exhaustive(beta, batch: MeasurementBatch, p: ModelParams) -> np.ndarray:
    """Exact posterior-mode occupancy by enumeration (oracle scale only).

    Ties resolve to the candidate with the smallest big-endian integer
    value, matching the enumeration order of `occupancy_table`.
    """
    beta = np.asarray(beta, dtype=float)
    f = beta.shape[0]
    if f > DENSE_BELIEF_MAX_BANDS:
        raise ValueError(f"exhaustive search capped at {DENSE_BELIEF_MAX_BANDS} bands")
    beta = clamp_beta(beta)
    table = occupancy_table(f).astype(float)
    resid = table @ batch.gains - batch.observations[None, :]
    penalty = 2.0 * p.sigma_z2 * np.log((1.0 - beta) / beta)
    objective = np.sum(resid**2, axis=1) + table @ penalty
    return occupancy_table(f)[int(np.argmin(objective))].copy()


def map_estimate_batch(
    beta: np.ndarray,
    gains: np.ndarray,
    observations: np.ndarray,
    p: ModelParams,
    tol: float = 1e-8,
    max_iter: int = 10000,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized `map_estimate` over a batch of independent instances.

    beta (n, F), gains (n, F, m), observations (n, m); probabilities are
    clamped silently (bulk callers expand beliefs that may sit on the
    boundary by construction).  Returns the estimates (n, F) and the
    per-instance hill-climb flip counts.  Dispatches to the compiled
    kernel when available.
    """
    beta = clamp_beta(np.asarray(beta, dtype=float))
    gains = np.ascontiguousarray(gains, dtype=float)
    observations = np.ascontiguousarray(observations, dtype=float)
    n, f, m = gains.shape
    mode = (beta >= 0.5).astype(np.uint8)
    if m == 0:
        return mode, np.zeros(n, dtype=np.int64)
    resid = observations - np.einsum("kfm,kf->km", gains, mode.astype(float))
    corrected = gains * (1.0 - 2.0 * mode)[:, :, None]
    weights = 2.0 * p.sigma_z2 * (1.0 - 2.0 * mode) * np.log((1.0 - beta) / beta)
    from . import _accel

    if n == 1:  # skip the parallel dispatch overhead
        corr = np.zeros((1, f), dtype=np.uint8)
        nf = _accel._solve_one(
            corrected[0], np.ascontiguousarray(resid[0]),
            np.ascontiguousarray(weights[0]), tol, max_iter, corr[0],
        )
        return mode ^ corr, np.array([nf], dtype=np.int64)
    corr, flips = _accel.solve_corrections_batch(
        corrected, np.ascontiguousarray(resid), np.ascontiguousarray(weights), tol, max_iter
    )
    return mode ^ corr, flips
