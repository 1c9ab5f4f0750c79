"""Closed-loop slot simulator.

Each slot: the controller looks up a sensing rate from the prior belief
cell, receives a random number of compressed measurements, re-estimates
the occupancy, forms the posterior belief from the calibrated detection
tables, looks up and allocates a traffic budget, then overhears feedback
and advances both the belief and the true state.  Throughput is
accumulated as the expected per-band success probability given the
realized true state, which removes Bernoulli noise without bias.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .belief import binary_entropy
from .dynamics import Feedback, steady_state_idle_prob
from .kernels import KernelCache, next_prior_occupancy
from .params import ModelParams
from .planner import PolicyTables
from .recovery import clamp_beta, map_estimate_batch
from .scheduler import allocate, r_max

CSV_HEADER = [
    "slots",
    "burn_in",
    "seed",
    "c_sensing",
    "c_sched",
    "c_total",
    "t_su",
    "t_pu",
    "lagrangian",
]

TRACE_HEADER = [
    "slot",
    "occupancy",
    "prior_cell",
    "prior_low",
    "prior_high",
    "prior_nu",
    "psi",
    "m",
    "estimate",
    "nu_hat",
    "post_cell",
    "budget",
    "traffic",
    "feedback",
    "reward_su",
    "reward_pu",
    "cost_sensing",
    "cost_sched",
]


@dataclass
class MetricsReport:
    """Per-slot averages over the post-burn-in window plus raw traces."""

    c_sensing: float
    c_sched: float
    c_total: float
    t_su: float
    t_pu: float
    lagrangian: float
    slots: int
    burn_in: int
    seed: int
    clamped_cells: int
    diagnostics: dict = field(default_factory=dict)

    def csv_row(self) -> list:
        return [
            self.slots,
            self.burn_in,
            self.seed,
            self.c_sensing,
            self.c_sched,
            self.c_total,
            self.t_su,
            self.t_pu,
            self.lagrangian,
        ]


def run(
    policies: PolicyTables,
    kernels: KernelCache,
    p: ModelParams,
    slots: int,
    seed: int,
    burn_in: int | None = None,
    trace_path=None,
) -> MetricsReport:
    """Simulate the learned policies for `slots` slots."""
    psi_table = policies.psi
    budget_table = policies.budget

    return _simulate(
        lambda cell: float(psi_table[cell]),
        lambda cell: float(budget_table[cell]),
        kernels,
        p,
        slots,
        seed,
        burn_in,
        trace_path,
    )


def run_fixed(
    psi_const: float,
    budget_const: float,
    kernels: KernelCache,
    p: ModelParams,
    slots: int,
    seed: int,
    burn_in: int | None = None,
    trace_path=None,
) -> MetricsReport:
    """Simulate constant policies (budget still capped by feasibility)."""
    if not 0.0 <= psi_const <= 1.0:
        raise ValueError("psi_const must lie in [0, 1]")
    if budget_const < 0.0:
        raise ValueError("budget_const must be nonnegative")
    return _simulate(
        lambda cell: psi_const,
        lambda cell: budget_const,
        kernels,
        p,
        slots,
        seed,
        burn_in,
        trace_path,
    )


def _simulate(
    psi_of_cell,
    budget_of_cell,
    kern: KernelCache,
    p: ModelParams,
    slots: int,
    seed: int,
    burn_in: int | None,
    trace_path,
) -> MetricsReport:
    if slots < 1:
        raise ValueError("slots must be at least 1")
    if burn_in is None:
        burn_in = slots // 10
    if not 0 <= burn_in < slots:
        raise ValueError(f"burn_in={burn_in} must lie in [0, slots)")
    grid = kern.grid
    f = p.f_bands
    rng = np.random.default_rng(seed)
    one_minus_rho_s = 1.0 - p.rho_s
    one_minus_rho_p = 1.0 - p.rho_p
    ack_stay = p.theta + (1.0 - p.theta) * p.zeta

    def compress(beta):
        """Two-level projection: level triple plus the aligned expansion."""
        low, high, nu = _accel.project_core(beta)
        expanded = np.full(f, high)
        expanded[np.argsort(beta, kind="stable")[:nu]] = low
        return (low, high, nu), expanded

    pi_busy = 1.0 - steady_state_idle_prob(p)
    (prior_low, prior_high, prior_nu), beta_prior = compress(np.full(f, pi_busy))
    occupancy = (rng.random(f) < pi_busy).astype(np.uint8)

    trace_file = open(trace_path, "w", newline="") if trace_path else None
    trace = csv.writer(trace_file) if trace_file else None
    if trace:
        trace.writerow(TRACE_HEADER)

    acc = dict.fromkeys(("c_sensing", "c_sched", "t_su", "t_pu"), 0.0)
    diag = {k: np.zeros(slots) for k in ("psi", "entropy", "budget", "beta_hat_sum", "m", "flips")}
    clamped = 0
    zeros = np.zeros(f)

    for k in range(slots):
        cell, was_clamped = grid.cell_index(prior_low, prior_high, prior_nu)
        clamped += was_clamped
        psi = psi_of_cell(cell)
        m = int(rng.binomial(p.b_channels, psi * math.exp(-psi)))
        if m > 0:
            gains = rng.standard_normal((f, m)) * math.sqrt(p.sigma_a2)
            obs = gains.T @ occupancy + rng.standard_normal(m) * math.sqrt(p.sigma_z2)
            est_batch, flips = map_estimate_batch(
                beta_prior[None, :], gains[None, :, :], obs[None, :], p
            )
            estimate = est_batch[0]
            nu_hat = int(f - estimate.sum())
            fa = kern.tables.fa[cell, m, nu_hat]
            md = kern.tables.md[cell, m, nu_hat]
            beta_hat = estimate * (1.0 - fa) + (1 - estimate) * md
            post_levels, _ = compress(beta_hat)
            n_flips = int(flips[0])
        else:
            estimate = None
            nu_hat = prior_nu
            beta_hat = beta_prior
            post_levels = (prior_low, prior_high, prior_nu)
            n_flips = 0
        post_cell, was_clamped = grid.cell_index(*post_levels)
        clamped += was_clamped

        beta_hat_c = clamp_beta(beta_hat)
        budget = min(budget_of_cell(post_cell), float(r_max(beta_hat_c, p).sum()))
        traffic = allocate(beta_hat_c, budget, p).traffic if budget > 1e-15 else zeros

        decay = np.exp(-traffic)
        reward_su = float(np.sum((1 - occupancy) * one_minus_rho_s * traffic * decay))
        reward_pu = float(np.sum(occupancy * one_minus_rho_p * decay))
        cost_sensing = psi * p.b_channels * p.c_s
        cost_sched = p.c_tx * float(traffic.sum())

        success = (occupancy == 1) & (rng.random(f) < one_minus_rho_p * decay)
        erased = rng.random(f) < p.epsilon
        feedback = np.where(
            (occupancy == 0) | erased,
            int(Feedback.EMPTY),
            np.where(success, int(Feedback.ACK), int(Feedback.NACK)),
        )
        trans = rng.random(f)
        occupancy_next = np.where(
            occupancy == 0,
            trans < p.zeta,
            np.where(success, trans < ack_stay, True),
        ).astype(np.uint8)

        if k >= burn_in:
            acc["c_sensing"] += cost_sensing
            acc["c_sched"] += cost_sched
            acc["t_su"] += reward_su
            acc["t_pu"] += reward_pu
        diag["psi"][k] = psi
        diag["entropy"][k] = float(np.sum(binary_entropy(beta_prior)))
        diag["budget"][k] = float(traffic.sum())
        diag["beta_hat_sum"][k] = float(beta_hat.sum())
        diag["m"][k] = m
        diag["flips"][k] = n_flips

        if trace:
            trace.writerow(
                [
                    k,
                    "".join(map(str, occupancy)),
                    cell,
                    f"{prior_low:.6g}",
                    f"{prior_high:.6g}",
                    prior_nu,
                    f"{psi:.6g}",
                    m,
                    "".join(map(str, estimate)) if estimate is not None else "",
                    nu_hat,
                    post_cell,
                    f"{budget:.6g}",
                    ";".join(f"{v:.6g}" for v in traffic),
                    "".join(str(int(v)) for v in feedback),
                    f"{reward_su:.6g}",
                    f"{reward_pu:.6g}",
                    f"{cost_sensing:.6g}",
                    f"{cost_sched:.6g}",
                ]
            )

        beta_next = next_prior_occupancy(beta_hat_c, traffic, feedback, p)
        (prior_low, prior_high, prior_nu), beta_prior = compress(beta_next)
        occupancy = occupancy_next

    if trace_file:
        trace_file.close()

    window = slots - burn_in
    c_sensing = acc["c_sensing"] / window
    c_sched = acc["c_sched"] / window
    t_su = acc["t_su"] / window
    t_pu = acc["t_pu"] / window
    c_total = c_sensing + c_sched
    diag["burn_in"] = burn_in
    return MetricsReport(
        c_sensing=c_sensing,
        c_sched=c_sched,
        c_total=c_total,
        t_su=t_su,
        t_pu=t_pu,
        lagrangian=p.xi * t_su + (1.0 - p.xi) * t_pu - p.lam * c_total,
        slots=slots,
        burn_in=burn_in,
        seed=seed,
        clamped_cells=clamped,
        diagnostics=diag,
    )
