"""Experiment driver.

Subcommands:
  single-band  budget sweep of the one-band schemes, CSV out
  train        estimate kernels (or load a cache) and optimize policies
  simulate     run a saved policy closed-loop and append a metrics row
  sweep        (lam, xi) grid of train + simulate, tradeoff CSV out

Every command is deterministic given `--seed` (or the config's seed); a
seed is required.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import logging
import sys
from pathlib import Path

import numpy as np

from . import planner, simulate
from .config import ExperimentConfig, load_config
from .kernels import CbsGrid, KernelCache, build_kernel_cache, cache_digest, tables_digest
from .singleband import adaptive_optimize, adaptive_metrics, nonadaptive_metrics, nonadaptive_optimize

log = logging.getLogger("crsched")

_SIM_SEED_TAG = 0x51


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def _write_csv(path, header, rows, append=False) -> None:
    path = Path(path)
    new = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "a" if append else "w") as fh:
        if new:
            fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _resolve_seed(args, cfg: ExperimentConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise SystemExit("a seed is required: pass --seed or set `seed` in the config")
    return int(seed)


def _suffixed(path, suffix: str) -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix + path.suffix)


def cmd_single_band(args) -> int:
    cfg = load_config(args.config)
    _resolve_seed(args, cfg)  # the sweep is closed-form; seed kept for uniformity
    p = cfg.model_params()
    rows = []
    for c_max in cfg.cmax_values:
        opt = nonadaptive_optimize(c_max, p)
        met = nonadaptive_metrics(opt.psi, opt.r, p)
        frac = met.sensing_cost / met.cost if met.cost > 0 else 0.0
        rows.append(
            ["nonadaptive", c_max, opt.psi, opt.psi, opt.r, met.cost, frac, met.su_throughput]
        )
        pol, tput = adaptive_optimize(c_max, p)
        amet = adaptive_metrics(pol, p)
        afrac = amet.sensing_cost / amet.cost if amet.cost > 0 else 0.0
        rows.append(["adaptive", c_max, pol.psi0, pol.psi1, pol.r, amet.cost, afrac, tput])
        log.info("single-band c_max=%g done", c_max)
    header = ["scheme", "c_max", "psi0", "psi1", "r", "cost", "sensing_fraction", "su_throughput"]
    out = args.out or "single_band.csv"
    _write_csv(out, header, rows)
    log.info("wrote %s", out)
    return 0


def _ensure_kernels(
    cfg: ExperimentConfig,
    xi: float,
    seed: int,
    path: Path | None,
    tables_pool: dict,
) -> KernelCache:
    """Load a cache whose digest matches, else estimate (reusing detection
    tables across xi values, which they do not depend on)."""
    p = cfg.model_params(xi=xi)
    grid = CbsGrid(cfg.level_step, cfg.f_bands)
    want = cache_digest(p, grid, cfg.psi_step, cfg.n_lambda, cfg.n_mc, seed)
    if path is not None and path.exists():
        kern = KernelCache.load(path)
        if kern.meta.get("cache_digest") == want:
            log.info("loaded kernel cache %s", path)
            return kern
        log.info("kernel cache %s has a different digest; recomputing (old cache untouched)", path)
        path = _suffixed(path, f"-{want}")
    t_key = tables_digest(p, grid, cfg.n_mc, seed)
    tables = tables_pool.get(t_key)
    kern = build_kernel_cache(p, grid, cfg.psi_step, cfg.n_lambda, cfg.n_mc, seed, tables=tables)
    tables_pool[t_key] = kern.tables
    if path is not None:
        kern.save(path)
        log.info("wrote kernel cache %s", path)
    return kern


def _policy_path(base: Path, lam: float, xi: float, single: bool) -> Path:
    if single:
        return base
    return _suffixed(base, f"_lam{lam:g}_xi{xi:g}")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(args, cfg)
    kern_base = Path(args.kernels) if args.kernels else None
    policy_base = Path(args.policy) if args.policy else Path("policy.bin")
    single = len(cfg.lambda_values) == 1 and len(cfg.xi_values) == 1
    tables_pool: dict = {}
    for xi in cfg.xi_values:
        kpath = None
        if kern_base is not None:
            kpath = kern_base if len(cfg.xi_values) == 1 else _suffixed(kern_base, f"_xi{xi:g}")
        kern = _ensure_kernels(cfg, xi, seed, kpath, tables_pool)
        for lam in cfg.lambda_values:
            p = cfg.model_params(xi=xi, lam=lam)
            pol = planner.solve(kern, p)
            out = _policy_path(policy_base, lam, xi, single)
            pol.save(out)
            log.info(
                "trained lam=%g xi=%g: gain=%.6g sweeps=%d converged=%s -> %s",
                lam, xi, pol.gain, pol.n_sweeps, pol.converged, out,
            )
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(args, cfg)
    kern = KernelCache.load(args.kernels)
    pol = planner.PolicyTables.load(args.policy)
    if pol.meta.get("cache_digest") != kern.meta.get("cache_digest"):
        raise SystemExit("policy was trained against a different kernel cache")
    lam, xi = pol.meta["lam"], pol.meta["xi"]
    p = cfg.model_params(xi=xi, lam=lam)
    report = simulate.run(
        pol, kern, p, cfg.slots, seed, burn_in=cfg.burn_in(), trace_path=args.trace
    )
    out = args.out or "metrics.csv"
    _write_csv(out, ["lam", "xi"] + simulate.CSV_HEADER, [[lam, xi] + report.csv_row()], append=True)
    log.info(
        "simulated lam=%g xi=%g: t_su=%.4g t_pu=%.4g c_total=%.4g -> %s",
        lam, xi, report.t_su, report.t_pu, report.c_total, out,
    )
    return 0


def _sweep_point(point) -> list:
    kern_path, lam, xi, cfg_text, sim_seed = point
    from .config import parse_config

    cfg = parse_config(cfg_text)
    kern = KernelCache.load(kern_path)
    p = cfg.model_params(xi=xi, lam=lam)
    pol = planner.solve(kern, p)
    report = simulate.run(pol, kern, p, cfg.slots, sim_seed, burn_in=cfg.burn_in())
    share = report.c_sensing / report.c_total if report.c_total > 0 else 0.0
    return [lam, xi, report.t_su, report.t_pu, report.c_total, share]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(args, cfg)
    jobs = args.jobs if args.jobs is not None else cfg.jobs
    kern_base = Path(args.kernels) if args.kernels else Path(args.out or "sweep.csv").with_suffix(".kernels")
    tables_pool: dict = {}
    points = []
    from .config import serialize_config

    cfg_text = serialize_config(cfg)
    idx = 0
    for xi in cfg.xi_values:
        kpath = kern_base if len(cfg.xi_values) == 1 else _suffixed(kern_base, f"_xi{xi:g}")
        _ensure_kernels(cfg, xi, seed, kpath, tables_pool)
        for lam in cfg.lambda_values:
            sim_seed = int(np.random.SeedSequence([seed, _SIM_SEED_TAG, idx]).generate_state(1)[0])
            points.append((str(kpath), lam, xi, cfg_text, sim_seed))
            idx += 1
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, points))
    else:
        rows = [_sweep_point(pt) for pt in points]
    out = args.out or "sweep.csv"
    _write_csv(out, ["lam", "xi", "t_su", "t_pu", "c_total", "sensing_share"], rows)
    log.info("wrote %s (%d rows)", out, len(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crsched",
        description="cross-layer spectrum sensing and scheduling experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, kernels=False, policy=False, out=True, trace=False, jobs=False):
        sp.add_argument("--config", required=True, help="flat key = value config file")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        if kernels:
            sp.add_argument("--kernels", default=None, help="kernel cache file")
        if policy:
            sp.add_argument("--policy", default=None, help="policy tables file")
        if out:
            sp.add_argument("--out", default=None, help="output CSV path")
        if trace:
            sp.add_argument("--trace", default=None, help="per-slot trace CSV path")
        if jobs:
            sp.add_argument("--jobs", type=int, default=None, help="worker processes")

    sp = sub.add_parser("single-band", help="budget sweep of the one-band schemes")
    common(sp)
    sp.set_defaults(fn=cmd_single_band)

    sp = sub.add_parser("train", help="estimate kernels and optimize policies")
    common(sp, kernels=True, policy=True, out=False)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("simulate", help="closed-loop run of a saved policy")
    common(sp, kernels=True, policy=True, trace=True)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("sweep", help="(lam, xi) grid of train + simulate")
    common(sp, kernels=True, jobs=True)
    sp.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
