"""Physical and MAC layer closed forms.

Per-band success probabilities under the collision channel, the two-state
occupancy Markov chain, the distribution of overheard PU feedback, and the
occupancy transition conditioned on that feedback.  All functions are pure;
traffic arguments are validated to be nonnegative but are otherwise not
capped (the probability formulas are well defined for any r >= 0, the
per-band policy cap r <= 1 is enforced by the policy layers).
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .params import ModelParams


class Feedback(enum.IntEnum):
    """PU feedback overheard by the controller on one band."""

    EMPTY = 0  # idle band, or the ACK/NACK was erased
    ACK = 1
    NACK = 2


def _check_bit(b) -> int:
    if b not in (0, 1):
        raise ValueError(f"occupancy bit must be 0 or 1, got {b!r}")
    return int(b)


def _check_rate(r) -> float:
    r = float(r)
    if r < 0.0 or not math.isfinite(r):
        raise ValueError(f"traffic rate must be finite and >= 0, got {r!r}")
    return r


def pu_success_prob(b, r, p: ModelParams) -> float:
    """Probability that the PU packet on a band survives the slot.

    Requires the band to be occupied; SU traffic r thins the success by the
    large-network no-collision factor exp(-r).
    """
    b = _check_bit(b)
    r = _check_rate(r)
    return b * (1.0 - p.rho_p) * math.exp(-r)


def su_success_prob(b, r, p: ModelParams) -> float:
    """Probability that exactly one SU transmits on an idle band and succeeds."""
    b = _check_bit(b)
    r = _check_rate(r)
    return (1 - b) * (1.0 - p.rho_s) * r * math.exp(-r)


def band_transition_prob(b_next, b, r, p: ModelParams) -> float:
    """One-slot occupancy transition probability for a single band.

    A band stays occupied after a delivered packet only if the PU sources a
    new one (theta) or a fresh PU arrives (zeta); a failed delivery forces a
    retransmission; an idle band is claimed with probability zeta.
    """
    b_next = _check_bit(b_next)
    b = _check_bit(b)
    succ = pu_success_prob(b, r, p)
    p_busy = (1 - b) * p.zeta + (b - (1.0 - p.theta) * (1.0 - p.zeta) * succ)
    return p_busy if b_next == 1 else 1.0 - p_busy


def feedback_pmf(sym: Feedback, b, r, p: ModelParams) -> float:
    """Probability of overhearing `sym` on a band with occupancy b and traffic r."""
    b = _check_bit(b)
    r = _check_rate(r)
    succ = pu_success_prob(b, r, p)
    if sym == Feedback.EMPTY:
        return 1.0 - b + b * p.epsilon
    if sym == Feedback.ACK:
        return (1.0 - p.epsilon) * succ
    if sym == Feedback.NACK:
        return (1.0 - p.epsilon) * (b - succ)
    raise ValueError(f"unknown feedback symbol {sym!r}")


def feedback_conditioned_transition(b_next, b, r, sym: Feedback, p: ModelParams) -> float:
    """Occupancy transition probability given the overheard feedback.

    ACK pins a delivered packet (the band stays busy only via a new packet
    or a fresh arrival) and NACK pins a retransmission.  An EMPTY symbol is
    an erasure or an idle band and carries no information about delivery,
    so the unconditioned chain applies.
    """
    b_next = _check_bit(b_next)
    b = _check_bit(b)
    if sym != Feedback.EMPTY and b != 1:
        raise ValueError("ACK/NACK feedback implies an occupied band")
    if sym == Feedback.ACK:
        p_busy = p.theta + (1.0 - p.theta) * p.zeta
    elif sym == Feedback.NACK:
        p_busy = 1.0
    elif sym == Feedback.EMPTY:
        p_busy = band_transition_prob(1, b, r, p)
    else:
        raise ValueError(f"unknown feedback symbol {sym!r}")
    return p_busy if b_next == 1 else 1.0 - p_busy


def steady_state_idle_prob(p: ModelParams) -> float:
    """Long-run probability that a band is idle under zero SU traffic."""
    release = (1.0 - p.theta) * (1.0 - p.zeta) * (1.0 - p.rho_p)
    return release / (release + p.zeta)


def aggregate_throughput(b, r, which: str, p: ModelParams) -> float:
    """Expected instantaneous throughput summed over bands.

    `which` selects the network: "SU" for opportunistic traffic, "PU" for
    the licensed users.
    """
    b = np.asarray(b, dtype=float)
    r = np.asarray(r, dtype=float)
    if b.shape != (p.f_bands,) or r.shape != (p.f_bands,):
        raise ValueError(
            f"expected {p.f_bands} bands, got occupancy {b.shape} and traffic {r.shape}"
        )
    if np.any(r < 0):
        raise ValueError("traffic rates must be nonnegative")
    if which == "PU":
        return float(np.sum(b * (1.0 - p.rho_p) * np.exp(-r)))
    if which == "SU":
        return float(np.sum((1.0 - b) * (1.0 - p.rho_s) * r * np.exp(-r)))
    raise ValueError(f"which must be 'SU' or 'PU', got {which!r}")


def simulate_occupancy_chain(p: ModelParams, slots: int, seed, r: float = 0.0) -> float:
    """Empirical idle fraction of one band simulated for `slots` slots.

    Diagnostic companion to `steady_state_idle_prob`; the chain starts idle.
    """
    rng = np.random.default_rng(seed)
    p01 = band_transition_prob(1, 0, r, p)
    p11 = band_transition_prob(1, 1, r, p)
    u = rng.random(slots)
    b = 0
    idle = 0
    for k in range(slots):
        idle += 1 - b
        b = 1 if u[k] < (p11 if b else p01) else 0
    return idle / slots
