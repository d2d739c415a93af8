"""Command line front end.

Subcommands: asym, quasimode, levelset, fem-solve, mc-run, compare.  Every
subcommand reads the same TOML experiment file and writes CSV/SVG reports
into --out.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure, 4 statistical-test failure under mc-run --assert.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .asymptotics import predict
from .compare import ConfigError, ExperimentConfig, load_experiment, run_compare
from .fem import ConvergenceError, solve_mixed, solve_swapped_bc, trace_along_cut
from .geometry import (
    BracketError,
    DuplicateCenterError,
    HypothesisError,
    LevelSetBounds,
    OverlapError,
    levelset_radius,
    modified_boundary_polyline,
)
from .montecarlo import (
    EnvelopeError,
    InsufficientDataError,
    SimParams,
    compute_stats,
    sample_paths,
)
from .quasimode import QuadratureError, Quasimode
from .svg import contour_plot

NUMERICAL_ERRORS = (
    ConvergenceError,
    BracketError,
    QuadratureError,
    EnvelopeError,
    InsufficientDataError,
    FloatingPointError,
)
CONFIG_ERRORS = (
    ConfigError,
    DuplicateCenterError,
    OverlapError,
    HypothesisError,
    OSError,
    ValueError,
)

FMT = "%.17g"


def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _f(value: float) -> str:
    return FMT % value


def _experiment(args) -> ExperimentConfig:
    exp = load_experiment(args.config)
    os.makedirs(args.out, exist_ok=True)
    return exp


def _need_disk(exp: ExperimentConfig, what: str) -> None:
    if exp.domain.dimension != 2:
        raise ConfigError(f"{what} runs on the disk (dimension 2) only")


def cmd_asym(args) -> int:
    exp = _experiment(args)
    pred = predict(exp.domain)
    header = ["kbar", "lambda0", "mean_exit_time", "total_flux",
              "lambda_band", "prob_band"]
    row = [_f(pred.kbar), _f(pred.lambda0), _f(pred.mean_exit_time),
           _f(pred.total_flux), _f(pred.lambda_band), _f(pred.prob_band)]
    for k in range(len(exp.domain.windows)):
        header += [f"flux_{k}", f"prob_{k}"]
        row += [_f(pred.window_fluxes[k]), _f(pred.exit_prob[k])]
    path = os.path.join(args.out, "asym.csv")
    _write_csv(path, header, [row])
    print(f"kbar={pred.kbar:.6g} lambda0={pred.lambda0:.6g} "
          f"mean_exit_time={pred.mean_exit_time:.6g}")
    print(f"wrote {path}")
    return 0


def cmd_quasimode(args) -> int:
    exp = _experiment(args)
    _need_disk(exp, "quasimode eval")
    if args.grid < 2:
        raise ConfigError("--grid must be at least 2")
    phi = Quasimode(exp.domain)
    ticks = np.linspace(-1.0, 1.0, args.grid)
    xx, yy = np.meshgrid(ticks, ticks)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    inside = np.einsum("ij,ij->i", pts, pts) < 1.0
    pts = pts[inside]
    values = phi.eval_phi(pts)
    grads = np.linalg.norm(phi.grad_phi(pts), axis=1)
    rows = ([_f(p[0]), _f(p[1]), _f(v), _f(g)]
            for p, v, g in zip(pts, values, grads))
    path = os.path.join(args.out, "quasimode.csv")
    _write_csv(path, ["x", "y", "phi", "grad_norm"], rows)
    print(f"evaluated {len(pts)} grid points inside the disk")
    print(f"wrote {path}")
    return 0


def cmd_levelset(args) -> int:
    exp = _experiment(args)
    _need_disk(exp, "levelset")
    bounds = LevelSetBounds()
    for k, w in enumerate(exp.domain.windows):
        poly = modified_boundary_polyline(exp.domain, k, args.points, bounds)
        path = os.path.join(args.out, f"levelset_window{k}.csv")
        _write_csv(path, ["x", "y"], ([_f(p[0]), _f(p[1])] for p in poly))
        inward = (-w.center[0], -w.center[1])
        radius = levelset_radius(exp.domain, k, inward, bounds)
        print(f"window {k}: radial root {radius:.6e} in "
              f"[{bounds.r_minus(w.k_eps):.6e}, {bounds.r_plus(w.k_eps):.6e}], "
              f"wrote {path}")
    return 0


def cmd_fem_solve(args) -> int:
    exp = _experiment(args)
    _need_disk(exp, "fem-solve")
    h_max = args.hmax if args.hmax is not None else exp.fem.h_max
    grading = args.grading if args.grading is not None else exp.fem.grading_levels
    nev = args.nev if args.nev is not None else exp.fem.nev

    if args.swap_bc:
        values = solve_swapped_bc(exp.domain, h_max=h_max,
                                  grading_levels=grading, nev=nev)
        path = os.path.join(args.out, "eigen.csv")
        _write_csv(path, ["index", "eigenvalue"],
                   ([str(i), _f(v)] for i, v in enumerate(values)))
        print("swapped-bc eigenvalues:",
              " ".join(f"{v:.6f}" for v in values))
        print(f"wrote {path}")
        return 0

    mesh, system, result = solve_mixed(exp.domain, h_max=h_max,
                                       grading_levels=grading, nev=nev)
    eigen_path = os.path.join(args.out, "eigen.csv")
    _write_csv(eigen_path, ["index", "eigenvalue"],
               ([str(i), _f(v)] for i, v in enumerate(result.eigenvalues)))

    cut = trace_along_cut(mesh, result.u0, y0=0.0)
    cut_path = os.path.join(args.out, "u0_cut.csv")
    _write_csv(cut_path, ["x", "u0"], ([_f(x), _f(v)] for x, v in cut))

    total = result.window_fluxes.sum()
    flux_path = os.path.join(args.out, "fluxes.csv")
    _write_csv(flux_path, ["window", "flux", "probability"],
               ([str(k), _f(f), _f(f / total)]
                for k, f in enumerate(result.window_fluxes)))

    svg_path = os.path.join(args.out, "u0_contour.svg")
    with open(svg_path, "w") as fh:
        fh.write(contour_plot(mesh.vertices, mesh.triangles, result.u0,
                              levels=10, title="FEM ground mode"))

    print(f"lambda0={result.lambda0:.8f} lambda1={result.lambda1:.8f} "
          f"({len(mesh.vertices)} vertices)")
    print(f"wrote {eigen_path}, {cut_path}, {flux_path}, {svg_path}")
    return 0


def _mc_params(args, exp: ExperimentConfig) -> SimParams:
    start = exp.mc.start
    if args.start is not None:
        start = args.start.replace("-", "_")
    return SimParams(
        dt=args.dt if args.dt is not None else exp.mc.dt,
        n_paths=args.n if args.n is not None else exp.mc.n_paths,
        seed=args.seed,
        max_time=exp.mc.max_time,
        start=start,
    )


def cmd_mc_run(args) -> int:
    exp = _experiment(args)
    if args.dim is not None and args.dim != exp.domain.dimension:
        raise ConfigError(
            f"--dim {args.dim} does not match the config dimension "
            f"{exp.domain.dimension}")
    params = _mc_params(args, exp)

    eigen_result = None
    mesh = None
    if params.start == "qsd_fem":
        _need_disk(exp, "qsd-fem start")
        mesh, _, eigen_result = solve_mixed(
            exp.domain, h_max=exp.fem.h_max,
            grading_levels=exp.fem.grading_levels, nev=exp.fem.nev)

    batch = sample_paths(exp.domain, params, eigen_result=eigen_result,
                         mesh=mesh)

    samples_path = os.path.join(args.out, "samples.csv")
    if exp.domain.dimension == 2:
        header = ["exit_time", "window", "angle", "censored"]
        rows = ([_f(t), str(w), _f(a), str(int(c))]
                for t, w, a, c in zip(batch.exit_times, batch.windows,
                                      batch.exit_angles, batch.censored))
    else:
        header = ["exit_time", "window", "dir_x", "dir_y", "dir_z", "censored"]
        rows = ([_f(t), str(w), _f(d[0]), _f(d[1]), _f(d[2]), str(int(c))]
                for t, w, d, c in zip(batch.exit_times, batch.windows,
                                      batch.exit_angles, batch.censored))
    _write_csv(samples_path, header, rows)

    stats = compute_stats(batch, len(exp.domain.windows))
    header = ["n_paths", "n_censored", "censored_fraction", "mean_exit_time",
              "se_mean", "lambda_hat", "ks_statistic", "ks_pvalue",
              "chi_square", "chi_dof", "chi_pvalue"]
    row = [str(stats.n_paths), str(stats.n_censored),
           _f(stats.censored_fraction), _f(stats.mean_exit_time),
           _f(stats.se_mean), _f(stats.lambda_hat), _f(stats.ks_statistic),
           _f(stats.ks_pvalue), _f(stats.chi_square), str(stats.chi_dof),
           _f(stats.chi_pvalue)]
    for k in range(len(exp.domain.windows)):
        header += [f"count_{k}", f"prob_{k}", f"wilson_low_{k}", f"wilson_high_{k}"]
        row += [str(stats.window_counts[k]), _f(stats.window_probs[k]),
                _f(stats.wilson_low[k]), _f(stats.wilson_high[k])]
    stats_path = os.path.join(args.out, "stats.csv")
    _write_csv(stats_path, header, [row])

    print(f"lambda_hat={stats.lambda_hat:.6f} "
          f"mean={stats.mean_exit_time:.6f}+-{stats.se_mean:.6f} "
          f"censored={stats.n_censored}")
    print(f"ks_p={stats.ks_pvalue:.4f} chi_p={stats.chi_pvalue:.4f} "
          f"split={tuple(round(p, 4) for p in stats.window_probs)}")
    print(f"wrote {samples_path}, {stats_path}")

    if args.check:
        failures = []
        if not stats.ks_pvalue > 0.01:
            failures.append(f"exponentiality KS p={stats.ks_pvalue:.4g}")
        if len(exp.domain.windows) >= 2 and not stats.chi_pvalue > 0.01:
            failures.append(f"independence chi2 p={stats.chi_pvalue:.4g}")
        if failures:
            print("assert failed: " + "; ".join(failures), file=sys.stderr)
            return 4
        print("assert passed: exponentiality and independence at p > 0.01")
    return 0


def cmd_compare(args) -> int:
    exp = _experiment(args)
    out_dir = args.out if args.out != "." else (exp.output_dir or ".")
    report = run_compare(exp, out_dir=out_dir, seed=args.seed)
    bad = 0
    for row in report.rows:
        line = f"eps={row.eps:.3e} "
        if row.status == "ok":
            line += (f"kbar={row.kbar:.6f} lambda0_fem={row.lambda0_fem:.6f} "
                     f"gap={row.gap_fem:.3e}")
        else:
            line += row.status
            bad += 1
        print(line)
    print(f"wrote {os.path.join(out_dir, 'compare.csv')}")
    if bad:
        print(f"{bad} of {len(report.rows)} rows failed", file=sys.stderr)
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="experiment TOML file")
    common.add_argument("--out", default=".", metavar="DIR",
                        help="output directory (default: current)")
    common.add_argument("--seed", type=int, default=42,
                        help="RNG seed for sampling subcommands")
    common.add_argument("--threads", type=int, default=1,
                        help="accepted for interface stability; execution is "
                             "serial and results never depend on this value")

    parser = argparse.ArgumentParser(
        prog="narrowescape",
        description="Narrow-escape eigenvalue and exit-law toolkit on the "
                    "unit disk and ball.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("asym", parents=[common],
                       help="leading-order predictions as a one-row CSV")
    p.set_defaults(func=cmd_asym)

    p = sub.add_parser("quasimode", parents=[common],
                       help="evaluate the quasimode on a grid")
    p.add_argument("action", choices=["eval"])
    p.add_argument("--grid", type=int, default=101,
                   help="grid points per axis (default 101)")
    p.set_defaults(func=cmd_quasimode)

    p = sub.add_parser("levelset", parents=[common],
                       help="export the level-set boundary polylines")
    p.add_argument("--points", type=int, default=200,
                   help="points per polyline (default 200)")
    p.set_defaults(func=cmd_levelset)

    p = sub.add_parser("fem-solve", parents=[common],
                       help="solve the mixed eigenproblem on the disk")
    p.add_argument("--hmax", type=float, default=None,
                   help="target interior mesh size")
    p.add_argument("--grading", type=int, default=None,
                   help="boundary grading levels toward window endpoints")
    p.add_argument("--nev", type=int, default=None,
                   help="number of eigenpairs")
    p.add_argument("--swap-bc", action="store_true",
                   help="exchange Dirichlet and Neumann boundary parts")
    p.set_defaults(func=cmd_fem_solve)

    p = sub.add_parser("mc-run", parents=[common],
                       help="sample exit times and locations by simulation")
    p.add_argument("--n", type=int, default=None, help="number of paths")
    p.add_argument("--dt", type=float, default=None, help="time step")
    p.add_argument("--start", choices=["uniform", "qsd-fem"], default=None,
                   help="start distribution (default from config)")
    p.add_argument("--dim", type=int, choices=[2, 3], default=None,
                   help="check the config dimension")
    p.add_argument("--assert", dest="check", action="store_true",
                   help="exit 4 unless exponentiality and independence "
                        "hold at p > 0.01")
    p.set_defaults(func=cmd_mc_run)

    p = sub.add_parser("compare", parents=[common],
                       help="sweep epsilon and compare the three methods")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("config error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
