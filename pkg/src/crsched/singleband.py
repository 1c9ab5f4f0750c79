"""Single-band baseline with noiseless sensing.

Two schemes over one licensed band: a non-adaptive scheme that senses at a
constant rate, and an adaptive heuristic whose sensing rate depends on the
last detected channel state.  Both admit closed-form long-run metrics; the
optimizers maximize SU throughput under a sensing-plus-transmission budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dynamics import band_transition_prob, steady_state_idle_prob
from .params import ModelParams


class NonAdaptiveMetrics(NamedTuple):
    cost: float
    sensing_cost: float
    su_throughput: float
    pu_throughput: float


class AdaptiveMetrics(NamedTuple):
    cost: float
    sensing_cost: float
    su_throughput: float


class NonAdaptiveOptimum(NamedTuple):
    psi: float
    r: float
    su_throughput: float
    psi_upper_bound: float


@dataclass(frozen=True)
class SingleBandPolicy:
    """Adaptive heuristic: sensing traffic per last detected state, data traffic r."""

    psi0: float  # sensing traffic when the channel was last detected idle
    psi1: float  # sensing traffic when the channel was last detected busy
    r: float

    def __post_init__(self) -> None:
        for name in ("psi0", "psi1", "r"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v!r} must lie in [0, 1]")


def _check_unit(name: str, v) -> float:
    v = float(v)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name}={v!r} must lie in [0, 1]")
    return v


def nonadaptive_metrics(psi, r, p: ModelParams) -> NonAdaptiveMetrics:
    """Long-run cost and throughputs when sensing at constant traffic psi.

    Transmission at rate r is attempted only in slots where a measurement
    arrives and shows the channel idle, so the SUs never interfere.
    """
    psi = _check_unit("psi", psi)
    r = _check_unit("r", r)
    pi0 = steady_state_idle_prob(p)
    collected = psi * math.exp(-psi)
    sensing = psi * p.c_s
    cost = sensing + pi0 * collected * r * p.c_tx
    t_su = (1.0 - p.rho_s) * pi0 * collected * r * math.exp(-r)
    t_pu = (1.0 - p.rho_p) * (1.0 - pi0)
    return NonAdaptiveMetrics(cost, sensing, t_su, t_pu)


def nonadaptive_optimize(c_max, p: ModelParams, grid_step: float = 1e-4) -> NonAdaptiveOptimum:
    """Best (psi, r) of the non-adaptive scheme under budget c_max.

    The budget binds at the optimum whenever it can, which pins r as a
    function of psi; the search is an exhaustive scan of that curve with r
    capped at 1.  A closed-form upper-bound maximizer of psi is returned
    alongside for cross-checking.
    """
    c_max = float(c_max)
    if c_max <= 0.0:
        raise ValueError(f"budget must be positive, got {c_max!r}")
    pi0 = steady_state_idle_prob(p)
    psi_hi = min(c_max / p.c_s, 1.0) if p.c_s > 0 else 1.0
    n = max(2, int(round(psi_hi / grid_step)))
    psi = np.linspace(psi_hi / n, psi_hi, n)
    with np.errstate(divide="ignore", over="ignore"):
        r = (c_max - psi * p.c_s) * np.exp(psi) / (pi0 * psi * p.c_tx)
    r = np.clip(r, 0.0, 1.0)
    t_su = (1.0 - p.rho_s) * pi0 * psi * np.exp(-psi) * r * np.exp(-r)
    k = int(np.argmax(t_su))
    bound = min(2.0 * (c_max / p.c_s) / (1.0 + math.sqrt(1.0 + 4.0 * pi0 * p.c_tx / p.c_s)), 1.0)
    return NonAdaptiveOptimum(float(psi[k]), float(r[k]), float(t_su[k]), bound)


def _transition_matrix(p: ModelParams) -> np.ndarray:
    # Zero-traffic chain: the schemes transmit only on a slot detected idle,
    # and transitions out of the idle state do not depend on SU traffic.
    return np.array(
        [
            [band_transition_prob(0, 0, 0.0, p), band_transition_prob(1, 0, 0.0, p)],
            [band_transition_prob(0, 1, 0.0, p), band_transition_prob(1, 1, 0.0, p)],
        ]
    )


def detection_flows(psi0, psi1, p: ModelParams) -> tuple[float, float]:
    """Per-slot rate of detecting each state right after the other one.

    flow(b) sums, over the delay since the last detection, the probability
    of surviving that many slots undetected and then being caught in state
    b, having last been detected in state 1-b.  Evaluated in closed form by
    resumming the delay series with a 2x2 resolvent.
    """
    ps = (psi0 * math.exp(-psi0), psi1 * math.exp(-psi1))
    tm = _transition_matrix(p)

    def flow(b: int) -> float:
        x = 1.0 - ps[1 - b]
        det = (1.0 - x * tm[0, 0]) * (1.0 - x * tm[1, 1]) - x * x * tm[0, 1] * tm[1, 0]
        return ps[1 - b] * tm[1 - b, b] / det

    return flow(0), flow(1)


def adaptive_metrics(pol: SingleBandPolicy, p: ModelParams) -> AdaptiveMetrics:
    """Long-run cost and SU throughput of the adaptive heuristic.

    Transmission happens only in the slot where a measurement is collected
    and shows the channel idle.  A zero sensing rate in either detected
    state makes the no-detection regime absorbing, so all long-run rates
    vanish; reported as zero cost and zero throughput.
    """
    ps0 = pol.psi0 * math.exp(-pol.psi0)
    ps1 = pol.psi1 * math.exp(-pol.psi1)
    if ps0 == 0.0 or ps1 == 0.0:
        return AdaptiveMetrics(0.0, 0.0, 0.0)
    f0, f1 = detection_flows(pol.psi0, pol.psi1, p)
    norm = f0 / ps0 + f1 / ps1
    pihat00 = f0 / norm
    pihat10 = f1 / norm
    sensing = p.c_s * (pihat00 * math.exp(pol.psi0) + pihat10 * math.exp(pol.psi1))
    cost = sensing + pihat00 * pol.r * p.c_tx
    t_su = (1.0 - p.rho_s) * pihat00 * pol.r * math.exp(-pol.r)
    return AdaptiveMetrics(cost, sensing, t_su)


def detection_state_masses(
    pol: SingleBandPolicy, p: ModelParams, tail_tol: float = 1e-12
) -> tuple[np.ndarray, np.ndarray]:
    """Steady-state masses over (last detected state, delay), delay >= 1.

    The delay series for each detected state is truncated once its
    geometric tail falls below `tail_tol`.
    """
    ps = (pol.psi0 * math.exp(-pol.psi0), pol.psi1 * math.exp(-pol.psi1))
    if ps[0] == 0.0 or ps[1] == 0.0:
        return np.zeros(0), np.zeros(0)
    f = detection_flows(pol.psi0, pol.psi1, p)
    norm = f[0] / ps[0] + f[1] / ps[1]
    out = []
    for b in (0, 1):
        head = f[b] / norm
        x = 1.0 - ps[b]
        # head * x**(tau-1) has tail mass head * x**T / (1-x) after T terms
        terms = max(1, int(math.ceil(math.log(tail_tol * ps[b] / head) / math.log(x))) + 1)
        out.append(head * x ** np.arange(terms))
    return out[0], out[1]


def _adaptive_grids(psi0, psi1, r, p: ModelParams):
    """Vectorized cost/throughput of the heuristic over a policy grid."""
    tm = _transition_matrix(p)
    ps0 = psi0 * np.exp(-psi0)
    ps1 = psi1 * np.exp(-psi1)

    def flow(ps_other, b):
        x = 1.0 - ps_other
        det = (1.0 - x * tm[0, 0]) * (1.0 - x * tm[1, 1]) - x * x * tm[0, 1] * tm[1, 0]
        return ps_other * tm[1 - b, b] / det

    f0 = flow(ps1, 0)  # depends on psi1 only
    f1 = flow(ps0, 1)  # depends on psi0 only
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = f0[None, :] / ps0[:, None] + f1[:, None] / ps1[None, :]
        pihat00 = np.where(np.isfinite(norm), f0[None, :] / norm, 0.0)
        pihat10 = np.where(np.isfinite(norm), f1[:, None] / norm, 0.0)
    base_cost = p.c_s * (pihat00 * np.exp(psi0)[:, None] + pihat10 * np.exp(psi1)[None, :])
    cost = base_cost[:, :, None] + pihat00[:, :, None] * (r * p.c_tx)[None, None, :]
    tput = (1.0 - p.rho_s) * pihat00[:, :, None] * (r * np.exp(-r))[None, None, :]
    return cost, tput


def adaptive_optimize(
    c_max, p: ModelParams, step: float = 0.02, refine_step: float = 0.002
) -> tuple[SingleBandPolicy, float]:
    """Grid-search maximum of SU throughput under budget c_max.

    One coarse pass over the policy cube, then one local refinement around
    the incumbent.  Ties go to the smallest (psi0, psi1) and then the
    smallest r, so the cheapest policy among equals is reported.
    """
    c_max = float(c_max)
    if c_max <= 0.0:
        raise ValueError(f"budget must be positive, got {c_max!r}")

    def search(psi0, psi1, r):
        cost, tput = _adaptive_grids(psi0, psi1, r, p)
        tput = np.where(cost <= c_max + 1e-12, tput, -np.inf)
        best = tput.max()
        i, j, k = np.argwhere(tput == best)[0]  # C-order: lexicographic tie-break
        return float(psi0[i]), float(psi1[j]), float(r[k]), float(best)

    axis = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    a0, a1, ar, best = search(axis, axis, axis)

    def window(center):
        lo = max(0.0, center - step)
        hi = min(1.0, center + step)
        n = int(round((hi - lo) / refine_step))
        return np.linspace(lo, hi, n + 1)

    # the equal-rate sub-family contains the non-adaptive optimum; refining
    # around it too keeps the adaptive result dominant at any budget, even
    # when the optimum sits below the coarse grid's first step
    na = nonadaptive_optimize(c_max, p)
    for c0, c1, cr in ((a0, a1, ar), (na.psi, na.psi, na.r)):
        b0, b1, br, refined = search(window(c0), window(c1), window(cr))
        if refined > best:
            a0, a1, ar, best = b0, b1, br, refined
    return SingleBandPolicy(a0, a1, ar), max(best, 0.0)
