"""Average-reward policy optimization on the compressed belief grid.

Each sweep alternates three stages: a scheduling stage that maximizes the
one-slot tradeoff plus continuation over the budget grid of every
posterior cell, a sensing evaluation stage that marginalizes the posterior
value over the detected-idle-count pmf for each measurement count, and a
sensing stage that maximizes over the sensing-rate grid net of sensing
cost.  Sensing decisions are indexed by prior cells only and budget
decisions by posterior cells only; no joint state is ever formed.  The
long-run-average criterion is handled by relative value iteration: after
every sweep the value of a fixed reference cell is subtracted, and the
subtracted increment at convergence is the per-slot gain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import blobio
from .kernels import KernelCache
from .params import ModelParams

log = logging.getLogger(__name__)

POLICY_VERSION = 1


@dataclass
class PolicyTables:
    """Converged policies and relative values on the cell grid."""

    psi: np.ndarray            # sensing rate per prior cell
    psi_index: np.ndarray
    budget: np.ndarray         # traffic budget per posterior cell
    budget_index: np.ndarray
    v_prior: np.ndarray
    v_posterior: np.ndarray
    gain: float
    converged: bool
    n_sweeps: int
    span_history: np.ndarray
    meta: dict

    def save(self, path) -> None:
        arrays = {
            "psi": self.psi,
            "psi_index": self.psi_index,
            "budget": self.budget,
            "budget_index": self.budget_index,
            "v_prior": self.v_prior,
            "v_posterior": self.v_posterior,
            "span_history": self.span_history,
        }
        meta = dict(self.meta)
        meta.update(
            {
                "version": POLICY_VERSION,
                "gain": self.gain,
                "converged": self.converged,
                "n_sweeps": self.n_sweeps,
            }
        )
        blobio.write_blob(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "PolicyTables":
        meta, arrays = blobio.read_blob(path)
        return cls(
            arrays["psi"],
            arrays["psi_index"],
            arrays["budget"],
            arrays["budget_index"],
            arrays["v_prior"],
            arrays["v_posterior"],
            meta["gain"],
            meta["converged"],
            meta["n_sweeps"],
            arrays["span_history"],
            meta,
        )


def scheduling_stage(
    kern: KernelCache, v_prior: np.ndarray, p: ModelParams
) -> tuple[np.ndarray, np.ndarray]:
    """Maximize stage reward plus continuation over each cell's budget grid.

    The stage reward averages the per-band success probabilities over the
    cell's expanded belief and charges the scheduled traffic.  Ties pick
    the smallest budget.
    """
    n_cells, n_lambda = kern.lambda_values.shape
    reward = (
        p.xi * kern.e_ts
        + (1.0 - p.xi) * kern.e_tp
        - p.lam * p.c_tx * kern.lambda_values
    )
    continuation = (kern.sched_kernel @ v_prior).reshape(n_cells, n_lambda)
    total = reward + continuation
    idx = np.argmax(total, axis=1)
    return total[np.arange(n_cells), idx], idx


def sensing_evaluation_stage(kern: KernelCache, v_posterior: np.ndarray) -> np.ndarray:
    """Expected posterior value per (prior cell, measurement count)."""
    gathered = v_posterior[kern.postcell]
    return np.einsum("smv,smv->sm", kern.tables.nu_pmf, gathered)


def sensing_stage(
    kern: KernelCache, v_m: np.ndarray, p: ModelParams
) -> tuple[np.ndarray, np.ndarray]:
    """Maximize over the sensing-rate grid net of sensing cost.

    Ties pick the smallest rate, so worthless information is never bought.
    """
    value = v_m @ kern.pm_table.T - p.lam * p.b_channels * p.c_s * kern.psi_grid[None, :]
    idx = np.argmax(value, axis=1)
    return value[np.arange(value.shape[0]), idx], idx


def solve(
    kern: KernelCache,
    p: ModelParams,
    tol: float = 1e-6,
    max_sweeps: int = 2000,
    ref_cell: int = 0,
) -> PolicyTables:
    """Relative value iteration until the span of successive differences
    drops below `tol`.  Exhausting `max_sweeps` returns the best policies
    found, flagged non-converged."""
    if abs(kern.meta["params"]["xi"] - p.xi) > 1e-12:
        raise ValueError(
            "kernel cache was estimated under a different throughput weight xi"
        )
    n_cells = kern.grid.n_cells
    v_prior = np.zeros(n_cells)
    spans = []
    gain = 0.0
    converged = False
    sweep = 0
    budget_idx = np.zeros(n_cells, dtype=np.int64)
    psi_idx = np.zeros(n_cells, dtype=np.int64)
    v_post = np.zeros(n_cells)
    for sweep in range(1, max_sweeps + 1):
        v_post, budget_idx = scheduling_stage(kern, v_prior, p)
        v_m = sensing_evaluation_stage(kern, v_post)
        v_new, psi_idx = sensing_stage(kern, v_m, p)
        delta = v_new - v_prior
        span = float(delta.max() - delta.min())
        spans.append(span)
        gain = float(v_new[ref_cell])
        v_prior = v_new - gain
        if span < tol:
            converged = True
            break
    if not converged:
        log.warning("relative value iteration hit max_sweeps=%d (span %.3g)", max_sweeps, spans[-1])
    cells = np.arange(n_cells)
    meta = {
        "cache_digest": kern.meta.get("cache_digest"),
        "lam": p.lam,
        "xi": p.xi,
        "tol": tol,
        "ref_cell": ref_cell,
    }
    return PolicyTables(
        psi=kern.psi_grid[psi_idx],
        psi_index=psi_idx,
        budget=kern.lambda_values[cells, budget_idx],
        budget_index=budget_idx,
        v_prior=v_prior,
        v_posterior=v_post - gain,
        gain=gain,
        converged=converged,
        n_sweeps=sweep,
        span_history=np.asarray(spans),
        meta=meta,
    )
