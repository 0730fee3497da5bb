"""Benchmark command line: run solver grids and emit summary / trace CSVs.

Subcommands: ``toy``, ``deblur``, ``fused-lasso``, ``synthetic-bench``.
Solvers are named ``{vmipg,vmila}-{h,s,bfgs}``. A flat key=value config file
can set any long flag; command-line values win. Exit codes: 0 ok, 1 solver
failure, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import apps
from .driver import (SolverConfig, UncertifiedSolveError, power_schedule, run)
from .inner_fista import FistaConfig
from .problem import CompositeProblem, IdentityOp, QuadraticLoss, WeightedL1, ZeroFun

SOLVERS = ("vmipg-h", "vmipg-s", "vmipg-bfgs", "vmila-h", "vmila-s", "vmila-bfgs")
_METRIC = {"h": "H", "s": "S", "bfgs": "BFGS0"}


class ConfigError(Exception):
    pass


def _parse_solver(name):
    name = name.strip().lower()
    if name not in SOLVERS:
        raise ConfigError("unknown solver %r (choose from %s)"
                          % (name, ", ".join(SOLVERS)))
    mode, metric = name.split("-")
    return name, mode, _METRIC[metric]


def _read_config_file(path):
    values = {}
    try:
        with open(path, "r", encoding="ascii") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError("config line %d: expected key=value" % lineno)
                key, val = line.split("=", 1)
                values[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise ConfigError("cannot read config file: %s" % exc)
    return values


def _build_parser():
    parser = argparse.ArgumentParser(prog="vmprox")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None)
        sp.add_argument("--solver", action="append", default=None,
                        help="repeatable or comma separated; default vmipg-h")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--trials", type=int, default=1)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--out-dir", default="runs")
        sp.add_argument("--eps-star", type=float, default=None)
        sp.add_argument("--tau-star", type=float, default=1e-6)
        sp.add_argument("--kmax", type=int, default=None)

    sp = sub.add_parser("toy", help="1-D soft-threshold sanity instance")
    common(sp)

    sp = sub.add_parser("deblur", help="Cauchy-noise image deblurring")
    common(sp)
    sp.add_argument("--image", default=None, help="clean image as 8-bit PGM")
    sp.add_argument("--gamma", type=float, default=0.02)
    sp.add_argument("--nu", type=float, default=1.0 / 0.35)
    sp.add_argument("--eps-c", type=float, default=1e7)
    sp.add_argument("--eps-p", type=float, default=1.5)

    sp = sub.add_parser("fused-lasso", help="regression on a LIBSVM file")
    common(sp)
    sp.add_argument("--data", default=None, help="LIBSVM format design/labels")
    sp.add_argument("--alpha1", type=float, default=1e-6)
    sp.add_argument("--alpha2", type=float, default=1e-4)
    sp.add_argument("--gamma", type=float, default=0.5)
    sp.add_argument("--poly-order", type=int, default=0)
    sp.add_argument("--eps-c", type=float, default=1e6)
    sp.add_argument("--eps-p", type=float, default=0.5)

    sp = sub.add_parser("synthetic-bench", help="synthetic regression grid")
    common(sp)
    sp.add_argument("--m", type=int, default=200)
    sp.add_argument("--n", type=int, default=5000)
    sp.add_argument("--sigma-kind", choices=("a", "b"), default="a")
    sp.add_argument("--noise-kind", choices=("I", "II", "III", "IV"), default="I")
    sp.add_argument("--alpha1", type=float, default=5e-7)
    sp.add_argument("--alpha2", type=float, default=5e-4)
    sp.add_argument("--gamma", type=float, default=0.1)
    sp.add_argument("--eps-c", type=float, default=1e6)
    sp.add_argument("--eps-p", type=float, default=0.5)
    return parser


def _toy_problem():
    p = CompositeProblem(theta=QuadraticLoss(np.array([2.0])),
                         A_op=IdentityOp(1), g1=ZeroFun(), B_op=IdentityOp(1),
                         g2=WeightedL1(1.0, np.ones(1)), mu_lower=1e-5)
    return p, np.zeros(1)


def _instances(args):
    """Yield (instance_name, problem, x0, stats_fn, eps_schedule, defaults)."""

    if args.command == "toy":
        p, x0 = _toy_problem()
        return [("toy", p, x0, lambda x: {}, power_schedule(1e2, 1.5),
                 {"eps_star": 1e-10, "kmax": 200})]
    if args.command == "deblur":
        if args.image is None:
            raise ConfigError("deblur needs --image (8-bit PGM)")
        if not os.path.exists(args.image):
            raise ConfigError("image file not found: %s" % args.image)
        clean = apps.read_pgm(args.image)
        out = []
        for t in range(args.trials):
            inst = apps.make_deblur_instance(clean, gamma=args.gamma, nu=args.nu,
                                             seed=args.seed + t)
            p, x0 = apps.build_deblur_problem(inst)
            shape = inst.clean.shape

            def stats(x, inst=inst, shape=shape):
                return {"PSNR": apps.psnr(x.reshape(shape), inst.clean)}

            out.append(("deblur-t%d" % t, p, x0, stats,
                        power_schedule(args.eps_c, args.eps_p),
                        {"eps_star": 1e-4, "kmax": 1000}))
        return out
    if args.command == "fused-lasso":
        if args.data is None:
            raise ConfigError("fused-lasso needs --data (LIBSVM file)")
        if not os.path.exists(args.data):
            raise ConfigError("data file not found: %s" % args.data)
        design, b = apps.read_libsvm(args.data)
        if args.poly_order > 0:
            design = apps.expand_polynomial(design, args.poly_order)
        rng = apps.make_rng(args.seed)
        omega = rng.random(design.shape[1])
        scale = float(np.max(np.abs(design.T @ b)))
        inst = apps.LassoInstance(A=design, b=b, omega=omega,
                                  nu1=args.alpha1 * scale,
                                  nu2=args.alpha2 * scale,
                                  gamma=args.gamma, seed=args.seed)
        p, x0 = apps.build_fused_lasso_problem(inst)
        stats = _lasso_stats(p)
        return [("fused-lasso", p, x0, stats,
                 power_schedule(args.eps_c, args.eps_p),
                 {"eps_star": 1e-7, "kmax": 100000})]
    if args.command == "synthetic-bench":
        out = []
        for t in range(args.trials):
            inst = apps.gen_synthetic(args.m, args.n, args.sigma_kind,
                                      args.noise_kind, seed=args.seed + t,
                                      alpha1=args.alpha1, alpha2=args.alpha2,
                                      gamma=args.gamma)
            p, x0 = apps.build_fused_lasso_problem(inst)
            out.append(("synth-%s%s-t%d" % (args.sigma_kind, args.noise_kind, t),
                        p, x0, _lasso_stats(p),
                        power_schedule(args.eps_c, args.eps_p),
                        {"eps_star": 1e-7, "kmax": 100000}))
        return out
    raise ConfigError("unknown command %r" % args.command)


def _lasso_stats(p):
    def stats(x):
        return {"xnz": apps.count_nonzeros(x),
                "Bxnz": apps.count_nonzeros(p.B_op.apply(x))}
    return stats


def _run_cell(name, p, x0, stats_fn, eps_sched, defaults, solver, args):
    _, mode, metric = _parse_solver(solver)
    if metric == "S" and p.sg_split is None:
        raise ConfigError("solver %s needs a gradient split; not available "
                          "for this problem" % solver)
    eps_star = args.eps_star if args.eps_star is not None else defaults["eps_star"]
    kmax = args.kmax if args.kmax is not None else defaults["kmax"]
    cfg = SolverConfig(stop_eps=eps_star, stop_tau=args.tau_star, k_max=kmax,
                       metric_kind=metric, mode=mode, eps_schedule=eps_sched,
                       vmila_tau_schedule=power_schedule(1e7, 2.1),
                       fista=FistaConfig(max_inner=200000), seed=args.seed)
    t0 = time.perf_counter()
    report = run(p, x0, cfg)
    elapsed = time.perf_counter() - t0
    row = {"instance": name, "solver": solver,
           "iter": report.totals["iter"], "Fval": report.F_final}
    row.update(stats_fn(report.x_final))
    row.update({"time": elapsed, "inner": report.totals["inner"],
                "ls": report.totals["ls"], "stop": report.stop_reason,
                "violations": report.hard_violations})
    return row, report


def _write_trace(path, report):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["k", "F", "dnorm", "alpha", "inner"])
        for r in report.rows:
            writer.writerow([r["k"], repr(r["F"]), repr(r["dnorm"]),
                             repr(r["alpha"]), r["inner"]])


def _write_summary(path, rows):
    if not rows:
        return
    base = ["instance", "solver", "trials", "iter", "Fval"]
    stat_keys = [k for k in ("PSNR", "xnz", "Bxnz") if k in rows[0]]
    tail = ["time", "inner", "ls"]
    groups = {}
    for row in rows:
        groups.setdefault((row["instance"].rsplit("-t", 1)[0], row["solver"]),
                          []).append(row)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(base + stat_keys + tail)
        for (inst, solver) in sorted(groups):
            grp = groups[(inst, solver)]
            def mean(key):
                return float(np.mean([g[key] for g in grp]))
            out = [inst, solver, len(grp), mean("iter"), repr(mean("Fval"))]
            out += [repr(mean(k)) for k in stat_keys]
            out += [repr(mean("time")), mean("inner"), mean("ls")]
            writer.writerow(out)


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            overrides = _read_config_file(args.config)
            passed = {a.split("=")[0].lstrip("-").replace("-", "_")
                      for a in (argv or sys.argv[1:]) if a.startswith("--")}
            for key, val in overrides.items():
                if key in passed or not hasattr(args, key):
                    continue
                current = getattr(args, key)
                if isinstance(current, bool):
                    val = val.lower() in ("1", "true", "yes")
                elif isinstance(current, int):
                    val = int(val)
                elif isinstance(current, float):
                    val = float(val)
                elif key == "solver":
                    val = [val]
                elif current is None:
                    for cast in (int, float):
                        try:
                            val = cast(val)
                            break
                        except ValueError:
                            continue
                setattr(args, key, val)
        solver_args = args.solver or ["vmipg-h"]
        solvers = []
        for entry in solver_args:
            for nm in entry.split(","):
                solvers.append(_parse_solver(nm)[0])
        if args.trials < 1:
            raise ConfigError("trials must be >= 1")
        cells = _instances(args)
        # validate pairings before any solve
        for solver in solvers:
            _, _, metric = _parse_solver(solver)
            for name, p, *_ in cells:
                if metric == "S" and p.sg_split is None:
                    raise ConfigError(
                        "solver %s requires a gradient split, which %s lacks"
                        % (solver, name))
    except ConfigError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2

    os.makedirs(args.out_dir, exist_ok=True)
    grid = [(name, p, x0, st, sched, dflt, solver)
            for (name, p, x0, st, sched, dflt) in cells for solver in solvers]
    rows = []
    failures = []

    def work(cell):
        name, p, x0, st, sched, dflt, solver = cell
        try:
            return _run_cell(name, p, x0, st, sched, dflt, solver, args), None
        except UncertifiedSolveError as exc:
            return None, (name, solver, str(exc))

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(work, grid))
    else:
        results = [work(cell) for cell in grid]

    for (cell, outcome) in zip(grid, results):
        res, failure = outcome
        if failure is not None:
            failures.append(failure)
            continue
        row, report = res
        rows.append(row)
        trace_name = "trace_%s_%s.csv" % (row["instance"], row["solver"])
        _write_trace(os.path.join(args.out_dir, trace_name), report)

    rows.sort(key=lambda r: (r["instance"], r["solver"]))
    _write_summary(os.path.join(args.out_dir, "summary.csv"), rows)
    for name, solver, msg in failures:
        print("solver failure on %s/%s: %s" % (name, solver, msg),
              file=sys.stderr)
    if failures:
        return 1
    for row in rows:
        print("%s %s iter=%s Fval=%.8g time=%.2fs"
              % (row["instance"], row["solver"], row["iter"], row["Fval"],
                 row["time"]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
