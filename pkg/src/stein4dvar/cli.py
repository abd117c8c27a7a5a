"""Experiment driver: configured solver grids, seeded realizations, CSV out.

Config files are plain INI (key = value under [section] headers).  The
[problem] section fixes the test problem, [desk]/[paper] give the two
problem scales, and each [solver.NAME] section adds one entry to the solver
grid.  Lists (N, dt) are comma-separated and expand the grid.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys as _sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import diagnostics, mmio
from .blocks import apply_A, apply_S, saddle_rhs, spd_rhs
from .krylov import SolveConfig, matcg, matgmres, vec_baseline_solve
from .precond import PrecondConfig, Preconditioner
from .problems import CovarianceParams, ProblemSpec, make_realization
from .stein import MhatStrategy, prop31_bound, select_mhat


class ConfigError(ValueError):
    pass


@dataclass
class SolverEntry:
    name: str
    formulation: str  # spd or saddle
    preconditioner: str  # Shat, P_D, P_T, P_C, none
    mhat_strategy: str = "sym_first"
    r: str = "0"  # int or "p"
    k: int | None = None  # set: vectorized k-block baseline
    theorem21: bool = False


@dataclass
class ExperimentConfig:
    family: str
    s: int
    p: int
    N_list: list
    dt_list: list
    dx: float
    seed: int
    realizations: int
    solvers: list
    cov: CovarianceParams = field(default_factory=CovarianceParams)
    tol: float = 1e-8
    max_iter: int = 1000


def _parse_strategy(text: str) -> MhatStrategy:
    if ":" in text:
        kind, idx = text.split(":", 1)
        return MhatStrategy(kind=kind.strip(), index=int(idx))
    return MhatStrategy(kind=text.strip())


def _intlist(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _floatlist(text):
    return [float(t) for t in text.split(",") if t.strip()]


def load_config(path, scale: str = "desk") -> ExperimentConfig:
    cp = configparser.ConfigParser()
    try:
        read = cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not read:
        raise ConfigError(f"{path}: cannot read config file")
    if "problem" not in cp:
        raise ConfigError(f"{path}: missing [problem] section")
    prob = cp["problem"]
    overrides = cp[scale] if scale in cp else {}

    def get(key, default=None):
        if key in overrides:
            return overrides[key]
        return prob.get(key, default)

    try:
        cov = CovarianceParams()
        for fld in ("L_B", "L_Q", "sigma_B", "sigma_Q"):
            if get(fld) is not None:
                setattr(cov, fld, float(get(fld)))
        solvers = []
        for sec in cp.sections():
            if not sec.startswith("solver."):
                continue
            sv = cp[sec]
            solvers.append(SolverEntry(
                name=sec.split(".", 1)[1],
                formulation=sv.get("formulation", "spd"),
                preconditioner=sv.get("preconditioner", "Shat"),
                mhat_strategy=sv.get("mhat_strategy", "sym_first"),
                r=sv.get("r", "0"),
                k=int(sv["k"]) if sv.get("k") else None,
                theorem21=sv.getboolean("theorem21", fallback=False),
            ))
        return ExperimentConfig(
            family=get("family", "heat"),
            s=int(get("s", "200")),
            p=int(get("p", "100")),
            N_list=_intlist(get("N", "10")),
            dt_list=_floatlist(get("dt", "4e-7")),
            dx=float(get("dx", "1e-3")),
            seed=int(get("seed", "0")),
            realizations=int(get("realizations", "10")),
            solvers=solvers,
            cov=cov,
            tol=float(get("tol", "1e-8")),
            max_iter=int(get("max_iter", "1000")),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _resolve_r(r_text, p):
    return p if r_text.strip() == "p" else int(r_text)


def solve_one(sysd, entry: SolverEntry, tol=1e-8, max_iter=1000):
    """Run one solver entry on one realization; wall time includes the
    preconditioner precomputation but not the problem construction."""
    r = _resolve_r(entry.r, sysd.p)
    cfg = SolveConfig(tol=tol, max_iter=max_iter)
    t0 = time.perf_counter()
    if entry.k is not None:
        _, rep = vec_baseline_solve(
            sysd, entry.k, cfg,
            kind="Shat" if entry.formulation == "spd" else entry.preconditioner,
        )
        rep.wall_time = time.perf_counter() - t0
        return rep, 0.0
    if entry.preconditioner == "none":
        if entry.formulation == "spd":
            _, rep = matcg(lambda Z: apply_S(sysd, Z), None, spd_rhs(sysd), cfg)
        else:
            _, rep = matgmres(lambda v: apply_A(sysd, v), None, saddle_rhs(sysd), cfg)
        rep.wall_time = time.perf_counter() - t0
        return rep, 0.0
    kind = "Shat" if entry.formulation == "spd" else entry.preconditioner
    pcfg = PrecondConfig(kind=kind, r=r, mhat_strategy=_parse_strategy(entry.mhat_strategy))
    prec = Preconditioner(sysd, pcfg)
    if entry.formulation == "spd":
        cfg = replace(cfg, flexible=r > 0)
        _, rep = matcg(lambda Z: apply_S(sysd, Z), prec.apply_shat_inv, spd_rhs(sysd), cfg)
    else:
        cfg = replace(cfg, theorem21_optimization=entry.theorem21 and kind == "P_D")
        _, rep = matgmres(lambda v: apply_A(sysd, v), prec.apply_saddle_inv, saddle_rhs(sysd), cfg)
    rep.wall_time = time.perf_counter() - t0
    inner = prec.counters["inner_iterations"]
    inner_mean = float(np.mean(inner)) if inner else 0.0
    return rep, inner_mean


CSV_COLUMNS = [
    "formulation", "preconditioner", "mhat_strategy", "r", "k", "N", "dt",
    "iterations_mean", "wall_time_mean", "inner_iter_mean", "converged_fraction",
    "seeds",
]


def run_experiment(cfg: ExperimentConfig, timing: bool = True):
    """Execute the full grid; returns CSV rows (list of dicts) in grid order."""
    grid = [
        (entry, N, dt)
        for entry in cfg.solvers
        for N in cfg.N_list
        for dt in cfg.dt_list
    ]

    def run_cell(cell):
        entry, N, dt = cell
        spec = ProblemSpec(
            family=cfg.family, s=cfg.s, p=cfg.p, N=N, dt=dt, dx=cfg.dx,
            cov=cfg.cov, seed=cfg.seed,
        )
        iters, times, inners, conv, seeds = [], [], [], [], []
        for i in range(cfg.realizations):
            seed = cfg.seed + i
            seeds.append(seed)
            sysd = make_realization(spec, seed=seed)
            try:
                rep, inner_mean = solve_one(sysd, entry, tol=cfg.tol, max_iter=cfg.max_iter)
                iters.append(rep.iterations)
                times.append(rep.wall_time)
                inners.append(inner_mean)
                conv.append(1.0 if rep.converged else 0.0)
            except Exception:
                conv.append(0.0)
        return {
            "formulation": entry.formulation,
            # the k column, not the label, distinguishes vectorized baselines,
            # so figure panels grouped by preconditioner stay merged
            "preconditioner": entry.preconditioner,
            "mhat_strategy": entry.mhat_strategy if entry.k is None else "",
            "r": _resolve_r(entry.r, cfg.p),
            "k": entry.k if entry.k is not None else "",
            "N": N,
            "dt": repr(dt),
            "iterations_mean": f"{np.mean(iters):.4f}" if iters else "",
            "wall_time_mean": f"{np.mean(times):.6f}" if timing and times else "0.000000",
            "inner_iter_mean": f"{np.mean(inners):.4f}" if inners else "",
            "converged_fraction": f"{np.mean(conv):.4f}" if conv else "0.0000",
            "seeds": ";".join(str(s) for s in seeds),
        }

    workers = int(os.environ.get("STEIN4DVAR_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(run_cell, grid))
    else:
        rows = [run_cell(c) for c in grid]
    return rows


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def _cmd_run(args):
    cfg = load_config(args.config, scale=args.scale)
    rows = run_experiment(cfg, timing=not args.no_timing)
    write_csv(rows, args.output)
    print(f"wrote {len(rows)} rows to {args.output}")
    return 0


def _cmd_solve(args):
    sysd = mmio.load_system(args.system)
    entry = SolverEntry(
        name="adhoc",
        formulation=args.formulation,
        preconditioner=args.precond,
        mhat_strategy=args.mhat_strategy,
        r=str(args.r),
        k=args.k,
    )
    rep, inner_mean = solve_one(sysd, entry)
    status = "converged" if rep.converged else "NOT converged"
    print(
        f"{status} in {rep.iterations} iterations, "
        f"final residual {rep.residual_history[-1] if rep.residual_history else 0:.3e}, "
        f"wall time {rep.wall_time:.4f} s, inner CG mean {inner_mean:.1f}"
    )
    return 0 if rep.converged else 1


def _cmd_spectrum(args):
    rep = diagnostics.verify_spectrum(args.case, seed=args.seed)
    print(
        f"{rep.case}: {'PASS' if rep.passed else 'FAIL'} "
        f"(min {rep.measured_min:.6e}, max {rep.measured_max:.6e}, "
        f"units {rep.unit_count}) {rep.detail}"
    )
    if args.output:
        diagnostics.write_reports_csv([rep], args.output)
    return 0 if rep.passed else 1


def _cmd_bound(args):
    cfg = load_config(args.problem, scale=args.scale)
    strategies = ["sym_first", "sym_last", "karcher", "min_norm_heuristic"]
    print(f"{'strategy':<22}{'dt':<12}{'|Mhat|':<14}{'max |D_m|^2':<16}{'bound':<14}")
    for dt in cfg.dt_list:
        spec = ProblemSpec(
            family=cfg.family, s=cfg.s, p=cfg.p, N=cfg.N_list[0], dt=dt, dx=cfg.dx,
            cov=cfg.cov, seed=cfg.seed,
        )
        sysd = make_realization(spec, zero_noise=True)
        for strat in strategies:
            try:
                mhat = select_mhat(sysd.models, _parse_strategy(strat))
            except Exception as exc:
                print(f"{strat:<22}{dt:<12g}skipped: {exc}")
                continue
            rep = prop31_bound(sysd.models, mhat)
            print(
                f"{strat:<22}{dt:<12g}{rep.mhat_norm:<14.6g}"
                f"{rep.max_D:<16.6g}{rep.upper_bound:<14.6g}"
            )
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="stein4dvar",
        description="Solvers and experiments for weak-constraint 4D-Var inner linear systems",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run an experiment grid from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--scale", choices=["desk", "paper"], default="desk")
    p_run.add_argument("--output", default="results.csv")
    p_run.add_argument("--no-timing", action="store_true", help="write zeros for wall times (deterministic output)")
    p_run.set_defaults(func=_cmd_run)

    p_solve = sub.add_parser("solve", help="solve a saved Matrix Market system")
    p_solve.add_argument("--system", required=True)
    p_solve.add_argument("--precond", default="Shat", choices=["Shat", "P_D", "P_T", "P_C", "none"])
    p_solve.add_argument("--formulation", default="spd", choices=["spd", "saddle"])
    p_solve.add_argument("--r", type=int, default=0)
    p_solve.add_argument("--k", type=int, default=None)
    p_solve.add_argument("--mhat-strategy", dest="mhat_strategy", default="sym_first")
    p_solve.set_defaults(func=_cmd_solve)

    p_spec = sub.add_parser("spectrum", help="verify one dense spectral claim")
    p_spec.add_argument("--case", required=True, choices=list(diagnostics.ALL_CASES))
    p_spec.add_argument("--seed", type=int, default=0)
    p_spec.add_argument("--output", default=None)
    p_spec.set_defaults(func=_cmd_spectrum)

    p_bound = sub.add_parser("bound", help="spectral-bound table for a problem config")
    p_bound.add_argument("--problem", required=True)
    p_bound.add_argument("--scale", choices=["desk", "paper"], default="desk")
    p_bound.set_defaults(func=_cmd_bound)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
