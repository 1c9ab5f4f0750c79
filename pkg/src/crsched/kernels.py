"""Monte-Carlo estimation of the compressed-belief transition structure.

The planner never touches raw beliefs: it works on a discretized grid of
compressed belief states.  This module estimates everything it needs from
sampled slots: detection-quality tables (false-alarm and missed-detection
rates conditioned on the measurement count and the detected-idle count),
the detected-idle-count pmf, the sensing transition from a prior cell to a
posterior cell, and the scheduling transition from a posterior cell back
to the next prior cell through feedback and the occupancy dynamics.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _accel, blobio
from .dynamics import Feedback
from .params import ModelParams
from .recovery import clamp_beta, map_estimate_batch
from .scheduler import allocate, r_max

log = logging.getLogger(__name__)

CACHE_VERSION = 1
_DETECTION_TAG = 0xD7
_SCHEDULING_TAG = 0x5C


@dataclass
class CbsGrid:
    """Discretization of the compressed belief space.

    Levels are multiples of `level_step`; a cell is a half-open interval of
    half-width `level_step / 2` around each level pair (low <= high) plus a
    detected-idle count nu in 1..F-1.  Level pairs that coincide describe
    the same belief for every nu, so they are canonicalized to nu = 1.
    """

    level_step: float
    f_bands: int
    n_levels: int = field(init=False)
    levels: np.ndarray = field(init=False)
    pair_id: np.ndarray = field(init=False)
    cell_lookup: np.ndarray = field(init=False)
    cell_low: np.ndarray = field(init=False)
    cell_high: np.ndarray = field(init=False)
    cell_nu: np.ndarray = field(init=False)
    n_cells: int = field(init=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.level_step <= 0.1:
            raise ValueError(f"level_step={self.level_step} must lie in (0, 0.1]")
        n = round(1.0 / self.level_step) + 1
        if abs((n - 1) * self.level_step - 1.0) > 1e-9:
            raise ValueError("level_step must divide 1 evenly")
        if self.f_bands < 2:
            raise ValueError("the compressed belief space needs at least two bands")
        self.n_levels = n
        self.levels = np.linspace(0.0, 1.0, n)
        self.pair_id = np.full((n, n), -1, dtype=np.int64)
        self.cell_lookup = np.full(
            (n * (n + 1) // 2, self.f_bands - 1), -1, dtype=np.int64
        )
        low_idx, high_idx, nu_vals = [], [], []
        pid = 0
        cid = 0
        for il in range(n):
            for ih in range(il, n):
                self.pair_id[il, ih] = pid
                nus = range(1, self.f_bands) if il < ih else (1,)
                for nu in nus:
                    self.cell_lookup[pid, nu - 1] = cid
                    low_idx.append(il)
                    high_idx.append(ih)
                    nu_vals.append(nu)
                    cid += 1
                pid += 1
        self.cell_low = np.array(low_idx, dtype=np.int64)
        self.cell_high = np.array(high_idx, dtype=np.int64)
        self.cell_nu = np.array(nu_vals, dtype=np.int64)
        self.n_cells = cid

    @property
    def cell_halfwidth(self) -> float:
        return self.level_step / 2.0

    def bin_level(self, value: float) -> tuple[int, bool]:
        """Level index whose half-open cell contains `value`, plus a clamp flag."""
        raw = math.floor(value / self.level_step + 0.5)
        clamped = raw < 0 or raw > self.n_levels - 1
        return min(max(raw, 0), self.n_levels - 1), clamped

    def cell_index(self, beta_low: float, beta_high: float, nu: int) -> tuple[int, bool]:
        il, c1 = self.bin_level(beta_low)
        ih, c2 = self.bin_level(beta_high)
        if il > ih:
            il, ih = ih, il
        if il == ih:
            nu = 1
        nu = min(max(int(nu), 1), self.f_bands - 1)
        return int(self.cell_lookup[self.pair_id[il, ih], nu - 1]), c1 or c2

    def cell_values(self, cell: int) -> tuple[float, float, int]:
        return (
            float(self.levels[self.cell_low[cell]]),
            float(self.levels[self.cell_high[cell]]),
            int(self.cell_nu[cell]),
        )

    def expand_cell(self, cell: int) -> np.ndarray:
        """Canonical expected-occupancy vector of a cell (low bands first)."""
        low, high, nu = self.cell_values(cell)
        beta = np.full(self.f_bands, high)
        beta[:nu] = low
        return beta

    def spec(self) -> dict:
        return {"level_step": self.level_step, "f_bands": self.f_bands}


@dataclass
class DetectionTables:
    """Estimator quality statistics per (cell, measurement count, idle count).

    fa[s, m, nu_hat] and md[s, m, nu_hat] are the mean false-alarm and
    missed-detection fractions; nu_pmf[s, m] is the pmf of the detected
    idle count.  Entries never observed hold the no-measurement fallback
    (the prior rates of the cell).
    """

    fa: np.ndarray
    md: np.ndarray
    nu_pmf: np.ndarray
    fallback_entries: int


def binomial_pmf_table(psi_grid: np.ndarray, p: ModelParams) -> np.ndarray:
    """Rows: pmf of the received-measurement count for each sensing rate."""
    b = p.b_channels
    m = np.arange(b + 1)
    comb = np.array([math.comb(b, int(k)) for k in m], dtype=float)
    q = psi_grid * np.exp(-psi_grid)
    return comb[None, :] * q[:, None] ** m[None, :] * (1.0 - q[:, None]) ** (b - m)[None, :]


def estimate_detection_tables(
    grid: CbsGrid,
    n_mc: int,
    p: ModelParams,
    seed: int,
    relax_tol: float = 1e-8,
    relax_max_iter: int = 10000,
) -> DetectionTables:
    """Monte-Carlo detection statistics of the MAP estimator on every cell.

    For each cell and measurement count, occupancy vectors are drawn from
    the cell's expanded belief under a uniformly random band permutation,
    measured, and re-estimated; false-alarm and missed-detection fractions
    are averaged conditionally on the detected idle count.  The
    no-measurement column is exact: the estimator returns the prior mode,
    so the posterior equals the prior and the error rates are the prior
    rates themselves.
    """
    if n_mc < 100:
        raise ValueError("n_mc must be at least 100")
    if p.f_bands != grid.f_bands:
        raise ValueError("grid and params disagree on the number of bands")
    f = grid.f_bands
    b_ch = p.b_channels
    n_cells = grid.n_cells
    low = grid.levels[grid.cell_low]
    high = grid.levels[grid.cell_high]
    fa = np.broadcast_to((1.0 - high)[:, None, None], (n_cells, b_ch + 1, f + 1)).copy()
    md = np.broadcast_to(low[:, None, None], (n_cells, b_ch + 1, f + 1)).copy()
    nu_pmf = np.zeros((n_cells, b_ch + 1, f + 1))
    nu_pmf[np.arange(n_cells), 0, grid.cell_nu] = 1.0

    children = np.random.SeedSequence([seed, _DETECTION_TAG]).spawn(n_cells * b_ch)
    sig_a = math.sqrt(p.sigma_a2)
    sig_z = math.sqrt(p.sigma_z2)
    observed = 0
    for s in range(n_cells):
        base = np.sort(grid.expand_cell(s))  # ascending: low levels first
        for m in range(1, b_ch + 1):
            rng = np.random.default_rng(children[s * b_ch + (m - 1)])
            order = rng.random((n_mc, f)).argsort(axis=1)
            beta = base[order]
            occ = (rng.random((n_mc, f)) < beta).astype(np.uint8)
            gains = rng.standard_normal((n_mc, f, m)) * sig_a
            obs = np.einsum("kfm,kf->km", gains, occ.astype(float))
            obs += rng.standard_normal((n_mc, m)) * sig_z
            est, _ = map_estimate_batch(beta, gains, obs, p, relax_tol, relax_max_iter)
            nu_hat = f - est.sum(axis=1)
            counts = np.bincount(nu_hat, minlength=f + 1)
            nu_pmf[s, m] = counts / n_mc
            fa_events = ((1 - occ) & est).sum(axis=1)
            md_events = (occ & (1 - est)).sum(axis=1)
            busy_mask = nu_hat < f
            idle_mask = nu_hat > 0
            fa_sum = np.bincount(
                nu_hat[busy_mask],
                weights=fa_events[busy_mask] / (f - nu_hat[busy_mask]),
                minlength=f + 1,
            )
            md_sum = np.bincount(
                nu_hat[idle_mask],
                weights=md_events[idle_mask] / nu_hat[idle_mask],
                minlength=f + 1,
            )
            has_busy = counts > 0
            has_busy[f] = False
            fa[s, m, has_busy] = fa_sum[has_busy] / counts[has_busy]
            has_idle = counts > 0
            has_idle[0] = False
            md[s, m, has_idle] = md_sum[has_idle] / counts[has_idle]
            observed += int(has_busy.sum()) + int(has_idle.sum())
    fallback = n_cells * b_ch * 2 * (f + 1) - observed
    log.info("detection tables: %d conditioning entries fell back to prior rates", fallback)
    return DetectionTables(fa, md, nu_pmf, fallback)


def posterior_cell_map(grid: CbsGrid, tables: DetectionTables) -> np.ndarray:
    """Posterior cell reached from (cell, m, nu_hat) under the tables.

    The two-valued posterior belief (missed-detection level on detected
    idle bands, one minus false alarm on detected busy bands) is
    re-projected, which also folds the empirically possible nu_hat in
    {0, F} back into the canonical cell space.  m = 0 carries no
    information and maps every cell to itself.
    """
    f = grid.f_bands
    n_cells, n_m = tables.fa.shape[:2]
    post = np.empty((n_cells, n_m, f + 1), dtype=np.int64)
    for s in range(n_cells):
        post[s, 0, :] = s
        for m in range(1, n_m):
            for nu_hat in range(f + 1):
                level_low = tables.md[s, m, nu_hat]
                level_high = 1.0 - tables.fa[s, m, nu_hat]
                beta = np.full(f, level_high)
                beta[:nu_hat] = level_low
                vl, vh, nu = _accel.project_core(beta)
                post[s, m, nu_hat], _ = grid.cell_index(vl, vh, nu)
    return post


def estimate_sensing_kernel(
    grid: CbsGrid,
    tables: DetectionTables,
    psi_grid: np.ndarray,
    p: ModelParams,
    postcell: np.ndarray | None = None,
) -> sp.csr_matrix:
    """Transition matrix from prior cells to posterior cells per sensing rate.

    Deterministic composition of the measurement-count pmf, the detected
    idle count pmf and the posterior cell map; row (s, psi_index) is the
    distribution of the posterior cell.  Stored with rows flattened as
    s * len(psi_grid) + psi_index.
    """
    if postcell is None:
        postcell = posterior_cell_map(grid, tables)
    n_cells = grid.n_cells
    n_psi = psi_grid.shape[0]
    pm = binomial_pmf_table(np.asarray(psi_grid, dtype=float), p)
    s_idx, m_idx, nu_idx = np.nonzero(tables.nu_pmf)
    pmf_vals = tables.nu_pmf[s_idx, m_idx, nu_idx]
    cols = postcell[s_idx, m_idx, nu_idx]
    rows_parts, cols_parts, data_parts = [], [], []
    for j in range(n_psi):
        rows_parts.append(s_idx * n_psi + j)
        cols_parts.append(cols)
        data_parts.append(pm[j, m_idx] * pmf_vals)
    mat = sp.coo_matrix(
        (np.concatenate(data_parts), (np.concatenate(rows_parts), np.concatenate(cols_parts))),
        shape=(n_cells * n_psi, n_cells),
    ).tocsr()
    mat.eliminate_zeros()  # zero-rate rows would otherwise keep explicit zeros
    return mat


def next_prior_occupancy(beta_hat, r, fb, p: ModelParams) -> np.ndarray:
    """Next-slot expected occupancy from the posterior belief and feedback.

    Per-band Bayes update: the feedback likelihood under each occupancy
    hypothesis reweights the belief, and each hypothesis advances through
    its feedback-conditioned transition.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    r = np.asarray(r, dtype=float)
    fb = np.asarray(fb)
    succ = (1.0 - p.rho_p) * np.exp(-r)  # PU success probability if busy
    ack_val = p.theta + (1.0 - p.theta) * p.zeta
    is_empty = fb == Feedback.EMPTY
    is_ack = fb == Feedback.ACK
    like_idle = np.where(is_empty, 1.0, 0.0)
    like_busy = np.where(
        is_empty,
        p.epsilon,
        np.where(is_ack, (1.0 - p.epsilon) * succ, (1.0 - p.epsilon) * (1.0 - succ)),
    )
    trans_idle = np.where(is_empty, p.zeta, 0.0)
    busy_stay = succ * ack_val + (1.0 - succ)
    trans_busy = np.where(is_empty, busy_stay, np.where(is_ack, ack_val, 1.0))
    num = trans_idle * like_idle * (1.0 - beta_hat) + trans_busy * like_busy * beta_hat
    den = like_idle * (1.0 - beta_hat) + like_busy * beta_hat
    if np.any(den <= 0.0):
        raise ValueError("feedback impossible under the given belief (zero likelihood)")
    return num / den


def estimate_scheduling_kernel(
    grid: CbsGrid,
    p: ModelParams,
    n_lambda: int,
    n_mc: int,
    seed: int,
    allocator=allocate,
) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray, np.ndarray]:
    """Monte-Carlo transition from posterior cells back to prior cells.

    For each posterior cell and each point of its budget grid (uniform on
    [0, feasible total]), occupancy vectors are drawn from the expanded
    belief, feedback is drawn per band, and the updated belief is
    re-projected and binned.  Returns the transition matrix (rows
    flattened as cell * n_lambda + budget_index), the per-cell budget
    grids, and the expected SU/PU stage throughputs of each allocation.
    """
    if n_mc < 100:
        raise ValueError("n_mc must be at least 100")
    f = grid.f_bands
    n_cells = grid.n_cells
    lambda_values = np.zeros((n_cells, n_lambda))
    e_ts = np.zeros((n_cells, n_lambda))
    e_tp = np.zeros((n_cells, n_lambda))
    children = np.random.SeedSequence([seed, _SCHEDULING_TAG]).spawn(n_cells * n_lambda)
    indptr = np.zeros(n_cells * n_lambda + 1, dtype=np.int64)
    col_parts, data_parts = [], []
    for s in range(n_cells):
        beta = clamp_beta(grid.expand_cell(s))
        caps_total = float(r_max(beta, p).sum())
        lambdas = np.linspace(0.0, caps_total, n_lambda)
        lambda_values[s] = lambdas
        for j in range(n_lambda):
            alloc = allocator(beta, lambdas[j], p)
            r = alloc.traffic
            decay = np.exp(-r)
            e_ts[s, j] = float(np.sum((1.0 - beta) * (1.0 - p.rho_s) * r * decay))
            e_tp[s, j] = float(np.sum(beta * (1.0 - p.rho_p) * decay))
            rng = np.random.default_rng(children[s * n_lambda + j])
            occ = (rng.random((n_mc, f)) < beta).astype(np.uint8)
            u_fb = rng.random((n_mc, f))
            cells = _accel.scheduling_samples(
                occ,
                u_fb,
                beta,
                r,
                p.theta,
                p.zeta,
                p.rho_p,
                p.epsilon,
                grid.level_step,
                grid.n_levels,
                grid.pair_id,
                grid.cell_lookup,
            )
            counts = np.bincount(cells, minlength=n_cells)
            nz = np.nonzero(counts)[0]
            row = s * n_lambda + j
            indptr[row + 1] = indptr[row] + nz.shape[0]
            col_parts.append(nz)
            data_parts.append(counts[nz] / n_mc)
    mat = sp.csr_matrix(
        (np.concatenate(data_parts), np.concatenate(col_parts), indptr),
        shape=(n_cells * n_lambda, n_cells),
    )
    return mat, lambda_values, e_ts, e_tp


@dataclass
class KernelCache:
    """Everything the planner and the simulator need about one grid."""

    grid: CbsGrid
    psi_grid: np.ndarray
    pm_table: np.ndarray
    tables: DetectionTables
    postcell: np.ndarray
    sensing_kernel: sp.csr_matrix
    lambda_values: np.ndarray
    e_ts: np.ndarray
    e_tp: np.ndarray
    sched_kernel: sp.csr_matrix
    meta: dict

    @property
    def n_lambda(self) -> int:
        return self.lambda_values.shape[1]

    def save(self, path) -> None:
        arrays = {
            "psi_grid": self.psi_grid,
            "pm_table": self.pm_table,
            "fa": self.tables.fa,
            "md": self.tables.md,
            "nu_pmf": self.tables.nu_pmf,
            "postcell": self.postcell,
            "sensing_data": self.sensing_kernel.data,
            "sensing_indices": self.sensing_kernel.indices,
            "sensing_indptr": self.sensing_kernel.indptr,
            "lambda_values": self.lambda_values,
            "e_ts": self.e_ts,
            "e_tp": self.e_tp,
            "sched_data": self.sched_kernel.data,
            "sched_indices": self.sched_kernel.indices,
            "sched_indptr": self.sched_kernel.indptr,
        }
        blobio.write_blob(path, self.meta, arrays)

    @classmethod
    def load(cls, path) -> "KernelCache":
        meta, arrays = blobio.read_blob(path)
        grid = CbsGrid(**meta["grid"])
        tables = DetectionTables(
            arrays["fa"], arrays["md"], arrays["nu_pmf"], meta["fallback_entries"]
        )
        n_psi = arrays["psi_grid"].shape[0]
        n_lambda = arrays["lambda_values"].shape[1]
        sensing = sp.csr_matrix(
            (arrays["sensing_data"], arrays["sensing_indices"], arrays["sensing_indptr"]),
            shape=(grid.n_cells * n_psi, grid.n_cells),
        )
        sched = sp.csr_matrix(
            (arrays["sched_data"], arrays["sched_indices"], arrays["sched_indptr"]),
            shape=(grid.n_cells * n_lambda, grid.n_cells),
        )
        return cls(
            grid,
            arrays["psi_grid"],
            arrays["pm_table"],
            tables,
            arrays["postcell"],
            sensing,
            arrays["lambda_values"],
            arrays["e_ts"],
            arrays["e_tp"],
            sched,
            meta,
        )


def tables_digest(p: ModelParams, grid: CbsGrid, n_mc: int, seed: int) -> str:
    """Digest of everything the detection tables depend on (not xi, not lam)."""
    payload = {
        "params": p.digest(exclude=("xi", "lam")),
        "grid": grid.spec(),
        "n_mc": n_mc,
        "seed": seed,
    }
    return _digest(payload)


def cache_digest(
    p: ModelParams, grid: CbsGrid, psi_step: float, n_lambda: int, n_mc: int, seed: int
) -> str:
    """Digest of the full kernel cache; independent of lam only."""
    payload = {
        "params": p.digest(exclude=("lam",)),
        "grid": grid.spec(),
        "psi_step": psi_step,
        "n_lambda": n_lambda,
        "n_mc": n_mc,
        "seed": seed,
    }
    return _digest(payload)


def _digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_kernel_cache(
    p: ModelParams,
    grid: CbsGrid,
    psi_step: float,
    n_lambda: int,
    n_mc: int,
    seed: int,
    tables: DetectionTables | None = None,
) -> KernelCache:
    """Estimate (or complete, given detection tables) a full kernel cache."""
    psi_grid = np.linspace(0.0, 1.0, round(1.0 / psi_step) + 1)
    if tables is None:
        tables = estimate_detection_tables(grid, n_mc, p, seed)
    postcell = posterior_cell_map(grid, tables)
    sensing = estimate_sensing_kernel(grid, tables, psi_grid, p, postcell)
    sched, lambda_values, e_ts, e_tp = estimate_scheduling_kernel(
        grid, p, n_lambda, n_mc, seed
    )
    meta = {
        "version": CACHE_VERSION,
        "grid": grid.spec(),
        "params": p.as_dict(),
        "n_mc": n_mc,
        "seed": seed,
        "psi_step": psi_step,
        "n_lambda": n_lambda,
        "fallback_entries": tables.fallback_entries,
        "tables_digest": tables_digest(p, grid, n_mc, seed),
        "cache_digest": cache_digest(p, grid, psi_step, n_lambda, n_mc, seed),
    }
    return KernelCache(
        grid,
        psi_grid,
        binomial_pmf_table(psi_grid, p),
        tables,
        postcell,
        sensing,
        lambda_values,
        e_ts,
        e_tp,
        sched,
        meta,
    )
