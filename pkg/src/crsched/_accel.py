"""Compiled hot loops for Monte-Carlo estimation and the slot simulator.

Every function here mirrors a pure-NumPy/Python reference implementation
elsewhere in the package (same update rules, same tie-breaking); numba only
removes the interpreter overhead.  When numba is unavailable the plain
Python definitions below run as-is, just slower.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit, prange

    NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def _h2(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log(x) - (1.0 - x) * math.log(1.0 - x)


@njit(cache=True)
def project_core(beta: np.ndarray) -> tuple:
    """Two-level compression of one belief vector; see `belief.project`."""
    f = beta.shape[0]
    s = np.sort(beta)
    total = 0.0
    for i in range(f):
        total += s[i]
    best_obj = np.inf
    best_nu = 1
    best_low = 0.0
    best_high = 1.0
    prefix = 0.0
    for nu in range(1, f):
        prefix += s[nu - 1]
        low = prefix / nu
        high = (total - prefix) / (f - nu)
        if low < 0.0:
            low = 0.0
        if low > 1.0:
            low = 1.0
        if high < 0.0:
            high = 0.0
        if high > 1.0:
            high = 1.0
        obj = nu * _h2(low) + (f - nu) * _h2(high)
        if obj < best_obj:
            best_obj = obj
            best_nu = nu
            best_low = low
            best_high = high
    if best_high < best_low:
        best_high = best_low
    return best_low, best_high, best_nu


@njit(cache=True)
def _solve_one(a, y, mu, tol, max_iter, eb) -> int:
    """Relaxed solve + hill climb for one correction problem.

    a (F, m), y (m,), mu (F,); the binary correction is written into `eb`
    and the hill-climb flip count returned.  Mirrors `recovery.relaxed_solve`
    and `recovery.hill_climb` exactly.
    """
    f, m = a.shape
    gram_f = np.zeros((f, f))
    ay = np.zeros(f)
    for i in range(f):
        acc = 0.0
        for j in range(m):
            acc += a[i, j] * y[j]
        ay[i] = acc
        for q in range(i, f):
            acc2 = 0.0
            for j in range(m):
                acc2 += a[i, j] * a[q, j]
            gram_f[i, q] = acc2
            gram_f[q, i] = acc2
    e = np.zeros(f)
    s = np.zeros(f)
    for _ in range(max_iter):
        for i in range(f):
            grad_i = 2.0 * (s[i] - ay[i]) + mu[i]
            if gram_f[i, i] > 0.0:
                new = e[i] - grad_i / (2.0 * gram_f[i, i])
                if new < 0.0:
                    new = 0.0
                elif new > 1.0:
                    new = 1.0
            else:
                new = 0.0
            delta = new - e[i]
            if delta != 0.0:
                for q in range(f):
                    s[q] += delta * gram_f[q, i]
                e[i] = new
        pg2 = 0.0
        for i in range(f):
            g = 2.0 * (s[i] - ay[i]) + mu[i]
            if e[i] <= 0.0 and g > 0.0:
                g = 0.0
            elif e[i] >= 1.0 and g < 0.0:
                g = 0.0
            pg2 += g * g
        if math.sqrt(pg2) < tol:
            break
    for q in range(f):
        eb[q] = 1 if e[q] >= 0.5 else 0
    # hill climb on the binary objective, reusing the Gram matrix
    s = np.zeros(f)
    for i in range(f):
        acc = 0.0
        for q in range(f):
            acc += gram_f[i, q] * eb[q]
        s[i] = acc
    nflips = 0
    improving = True
    while improving:
        best = -1
        best_gain = 0.0
        for i in range(f):
            sign = 2.0 * eb[i] - 1.0
            gain = sign * (
                -2.0 * ay[i]
                + 2.0 * (s[i] - gram_f[i, i] * eb[i])
                + gram_f[i, i]
                + mu[i]
            )
            if gain > best_gain:
                best_gain = gain
                best = i
        if best < 0:
            improving = False
        else:
            d = 1.0 - 2.0 * eb[best]
            eb[best] = 1 - eb[best]
            for i in range(f):
                s[i] += d * gram_f[i, best]
            nflips += 1
    return nflips


@njit(cache=True, parallel=True)
def solve_corrections_batch(
    corrected: np.ndarray,
    resid: np.ndarray,
    weights: np.ndarray,
    tol: float,
    max_iter: int,
) -> tuple:
    """Relaxed solve + hill climb for a batch of correction problems.

    corrected (n, F, m), resid (n, m), weights (n, F).  Returns the binary
    corrections (n, F) and per-instance flip counts.
    """
    n, f, m = corrected.shape
    out = np.zeros((n, f), dtype=np.uint8)
    flips = np.zeros(n, dtype=np.int64)
    for k in prange(n):
        flips[k] = _solve_one(corrected[k], resid[k], weights[k], tol, max_iter, out[k])
    return out, flips


@njit(cache=True, parallel=True)
def scheduling_samples(
    occupancy: np.ndarray,
    u_feedback: np.ndarray,
    beta_hat: np.ndarray,
    traffic: np.ndarray,
    theta: float,
    zeta: float,
    rho_p: float,
    epsilon: float,
    level_step: float,
    n_levels: int,
    pair_id: np.ndarray,
    cell_lookup: np.ndarray,
) -> np.ndarray:
    """Next-slot prior CBS cell for each Monte-Carlo sample.

    occupancy (n, F) are true-state draws, u_feedback (n, F) uniforms pick
    the feedback symbol; the belief update and projection match
    `kernels.next_prior_occupancy` and `belief.project`.  Cells whose two
    levels bin equal are canonicalized to nu = 1.
    """
    n, f = occupancy.shape
    cells = np.zeros(n, dtype=np.int64)
    ack_val = theta + (1.0 - theta) * zeta
    for k in prange(n):
        nxt = np.empty(f)
        for i in range(f):
            bh = beta_hat[i]
            ps = (1.0 - rho_p) * math.exp(-traffic[i])
            if occupancy[k, i] == 0:
                sym = 0
            else:
                ui = u_feedback[k, i]
                if ui < epsilon:
                    sym = 0
                elif ui < epsilon + (1.0 - epsilon) * ps:
                    sym = 1
                else:
                    sym = 2
            if sym == 1:
                nxt[i] = ack_val
            elif sym == 2:
                nxt[i] = 1.0
            else:
                busy_stay = ps * ack_val + (1.0 - ps)
                num = zeta * (1.0 - bh) + busy_stay * epsilon * bh
                den = (1.0 - bh) + epsilon * bh
                nxt[i] = num / den
        low, high, nu = project_core(nxt)
        il = int(math.floor(low / level_step + 0.5))
        ih = int(math.floor(high / level_step + 0.5))
        if il < 0:
            il = 0
        if il > n_levels - 1:
            il = n_levels - 1
        if ih < 0:
            ih = 0
        if ih > n_levels - 1:
            ih = n_levels - 1
        if il > ih:
            tmp = il
            il = ih
            ih = tmp
        if il == ih:
            nu = 1
        cells[k] = cell_lookup[pair_id[il, ih], nu - 1]
    return cells


@njit(cache=True)
def allocate_core(
    slopes: np.ndarray,
    penalties: np.ndarray,
    caps: np.ndarray,
    counts: np.ndarray,
    budget: float,
    sum_tol: float,
    root_tol: float,
) -> tuple:
    """Budget-constrained concave allocation over deduplicated band groups.

    slopes[u] = 1 - beta_hat, penalties[u] = tradeoff_coeff * beta_hat,
    caps[u] the per-band cap, counts[u] the group multiplicity.  Returns
    per-group traffic and the multiplier at which the budget binds.
    """
    u_n = slopes.shape[0]
    r = np.zeros(u_n)

    def _r_of(ui: int, mu: float) -> float:
        if caps[ui] <= 0.0:
            return 0.0
        if -slopes[ui] + penalties[ui] >= mu:
            return 0.0
        edge = (slopes[ui] * (caps[ui] - 1.0) + penalties[ui]) * math.exp(-caps[ui])
        if edge <= mu:
            return caps[ui]
        lo = 0.0
        hi = caps[ui]
        while hi - lo > root_tol:
            mid = 0.5 * (lo + hi)
            val = -(slopes[ui] * (mid - 1.0) + penalties[ui]) * math.exp(-mid) + mu
            if val > 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def _total(mu: float) -> float:
        acc = 0.0
        for ui in range(u_n):
            acc += counts[ui] * _r_of(ui, mu)
        return acc

    mu_lo = np.inf
    cap_total = 0.0
    for ui in range(u_n):
        c = -slopes[ui] + penalties[ui]
        if c < mu_lo:
            mu_lo = c
        cap_total += counts[ui] * caps[ui]
    if budget >= cap_total - 1e-12:
        for ui in range(u_n):
            r[ui] = caps[ui]
        return r, 0.0
    mu_hi = 0.0
    for _ in range(60):  # paranoia: at mu=0 every band already sits at its cap
        if _total(mu_hi) >= budget:
            break
        mu_hi = mu_hi * 2.0 + 1.0
    mu = mu_lo
    for _ in range(200):
        mu = 0.5 * (mu_lo + mu_hi)
        s = _total(mu)
        if abs(s - budget) <= sum_tol:
            break
        if s < budget:
            mu_lo = mu
        else:
            mu_hi = mu
    for ui in range(u_n):
        r[ui] = _r_of(ui, mu)
    return r, mu
