"""Experiment configs and the asymptotics / FEM / Monte Carlo comparison.

Configs are TOML with a [domain] section, one [[window]] table per window,
and optional [fem], [mc], [sweep] and [output] sections.  Parsing is
strict: unknown keys are errors.  run_compare sweeps epsilon, solves each
row with every requested method and writes compare.csv plus a log-x plot
of the eigenvalue curves.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .asymptotics import predict
from .fem import solve_mixed
from .geometry import DomainConfig, make_window, validate_config
from .montecarlo import SimParams, run_ensemble
from .svg import Series, line_plot


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class FemOptions:
    h_max: float = 0.05
    grading_levels: int = 8
    nev: int = 2


@dataclass(frozen=True)
class McOptions:
    n_paths: int = 10_000
    dt: float = 1e-4
    start: str = "uniform"
    max_time: float | None = None


@dataclass(frozen=True)
class SweepSpec:
    """Strictly decreasing epsilon values, optional per-window power law."""

    epsilons: tuple[float, ...]
    powers: tuple[float, ...] | None = None
    mc: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainConfig
    window_angles: tuple[float, ...]
    fem: FemOptions
    mc: McOptions
    sweep: SweepSpec | None
    output_dir: str | None


def _check_keys(section: dict, allowed: set, where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _need(section: dict, key: str, types, where: str):
    if key not in section:
        raise ConfigError(f"missing key {key!r} in {where}")
    return _typed(section, key, types, where)


def _typed(section: dict, key: str, types, where: str):
    value = section[key]
    if isinstance(value, bool) and bool not in (
        types if isinstance(types, tuple) else (types,)
    ):
        raise ConfigError(f"key {key!r} in {where} has the wrong type")
    if not isinstance(value, types):
        raise ConfigError(f"key {key!r} in {where} has the wrong type")
    return value


def _build_windows(entries, dimension: int):
    wins = []
    for i, entry in enumerate(entries):
        where = f"[[window]] entry {i}"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where} must be a table")
        if dimension == 2:
            _check_keys(entry, {"angle", "epsilon", "k_eps"}, where)
            angle = _need(entry, "angle", (int, float), where)
            kwargs = {"angle": float(angle)}
        else:
            _check_keys(entry, {"center", "epsilon", "k_eps"}, where)
            center = _need(entry, "center", list, where)
            kwargs = {"center": center, "dimension": 3}
        if ("epsilon" in entry) == ("k_eps" in entry):
            raise ConfigError(f"{where} needs exactly one of epsilon or k_eps")
        if "epsilon" in entry:
            kwargs["epsilon"] = float(_typed(entry, "epsilon", (int, float), where))
        else:
            kwargs["k_eps"] = float(_typed(entry, "k_eps", (int, float), where))
        try:
            wins.append(make_window(**kwargs))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return wins


def load_experiment(path: str) -> ExperimentConfig:
    """Parse and validate a TOML experiment file."""
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc

    _check_keys(raw, {"domain", "window", "fem", "mc", "sweep", "output"}, "top level")
    domain_sec = raw.get("domain")
    if not isinstance(domain_sec, dict):
        raise ConfigError("missing [domain] section")
    _check_keys(domain_sec, {"dimension"}, "[domain]")
    dimension = _need(domain_sec, "dimension", int, "[domain]")
    if dimension not in (2, 3):
        raise ConfigError(f"dimension must be 2 or 3, got {dimension}")

    entries = raw.get("window")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("need at least one [[window]] table")
    wins = _build_windows(entries, dimension)
    domain = validate_config(wins, dimension=dimension)
    angles = tuple(w.angle for w in wins) if dimension == 2 else ()

    fem_sec = raw.get("fem", {})
    _check_keys(fem_sec, {"h_max", "grading_levels", "nev"}, "[fem]")
    fem = FemOptions(
        h_max=float(_typed(fem_sec, "h_max", (int, float), "[fem]"))
        if "h_max" in fem_sec else 0.05,
        grading_levels=_typed(fem_sec, "grading_levels", int, "[fem]")
        if "grading_levels" in fem_sec else 8,
        nev=_typed(fem_sec, "nev", int, "[fem]") if "nev" in fem_sec else 2,
    )

    mc_sec = raw.get("mc", {})
    _check_keys(mc_sec, {"n_paths", "dt", "start", "max_time"}, "[mc]")
    start = mc_sec.get("start", "uniform")
    if not isinstance(start, str):
        raise ConfigError("key 'start' in [mc] has the wrong type")
    start = start.replace("-", "_")
    if start not in ("uniform", "qsd_fem"):
        raise ConfigError(f"[mc] start must be uniform or qsd-fem, got {start!r}")
    mc = McOptions(
        n_paths=_typed(mc_sec, "n_paths", int, "[mc]")
        if "n_paths" in mc_sec else 10_000,
        dt=float(_typed(mc_sec, "dt", (int, float), "[mc]"))
        if "dt" in mc_sec else 1e-4,
        start=start,
        max_time=float(_typed(mc_sec, "max_time", (int, float), "[mc]"))
        if "max_time" in mc_sec else None,
    )

    sweep = None
    if "sweep" in raw:
        sweep_sec = raw["sweep"]
        _check_keys(sweep_sec, {"epsilons", "powers", "mc"}, "[sweep]")
        eps = _need(sweep_sec, "epsilons", list, "[sweep]")
        if not eps:
            raise ConfigError("[sweep] epsilons must be nonempty")
        eps = [float(e) for e in eps]
        if any(not 0.0 < e < 1.0 for e in eps):
            raise ConfigError("[sweep] epsilons must lie in (0, 1)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("[sweep] epsilons must be strictly decreasing")
        powers = None
        if "powers" in sweep_sec:
            plist = _typed(sweep_sec, "powers", list, "[sweep]")
            if len(plist) != len(wins):
                raise ConfigError("[sweep] powers must match the window count")
            powers = tuple(float(p) for p in plist)
            if any(p <= 0.0 for p in powers):
                raise ConfigError("[sweep] powers must be positive")
        sweep = SweepSpec(
            epsilons=tuple(eps),
            powers=powers,
            mc=_typed(sweep_sec, "mc", bool, "[sweep]") if "mc" in sweep_sec else False,
        )

    out_sec = raw.get("output", {})
    _check_keys(out_sec, {"directory"}, "[output]")
    output_dir = _typed(out_sec, "directory", str, "[output]") if "directory" in out_sec else None

    return ExperimentConfig(
        domain=domain,
        window_angles=angles,
        fem=fem,
        mc=mc,
        sweep=sweep,
        output_dir=output_dir,
    )


@dataclass(frozen=True)
class CompareRow:
    """One sweep row; nan marks quantities the row did not produce."""

    eps: float
    kbar: float
    lambda0_asym: float
    lambda0_fem: float
    lambda_hat_mc: float
    gap_fem: float
    gap_mc: float
    fitted_c2: float
    probs_asym: tuple
    probs_fem: tuple
    probs_mc: tuple
    status: str


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[CompareRow, ...]
    n_windows: int

    def columns(self) -> list[str]:
        cols = ["eps", "kbar", "lambda0_asym", "lambda0_fem", "lambda_hat_mc",
                "gap_fem", "gap_mc", "fitted_c2"]
        for k in range(self.n_windows):
            cols += [f"p{k}_asym", f"p{k}_fem", f"p{k}_mc"]
        cols.append("status")
        return cols

    def table(self) -> list[list[str]]:
        def cell(v):
            if isinstance(v, str):
                return v
            return "" if math.isnan(v) else f"{v:.12g}"

        out = []
        for r in self.rows:
            row = [cell(v) for v in (r.eps, r.kbar, r.lambda0_asym, r.lambda0_fem,
                                     r.lambda_hat_mc, r.gap_fem, r.gap_mc,
                                     r.fitted_c2)]
            for k in range(self.n_windows):
                for tup in (r.probs_asym, r.probs_fem, r.probs_mc):
                    row.append(cell(tup[k]) if k < len(tup) else "")
            row.append(r.status)
            out.append(row)
        return out


def _nan_tuple(n: int) -> tuple:
    return tuple(math.nan for _ in range(n))


def _compare_row(experiment: ExperimentConfig, eps: float, seed: int) -> CompareRow:
    n = len(experiment.window_angles)
    powers = experiment.sweep.powers or tuple(1.0 for _ in range(n))
    wins = [make_window(angle=a, epsilon=eps**p)
            for a, p in zip(experiment.window_angles, powers)]
    cfg = validate_config(wins, dimension=2)
    pred = predict(cfg)

    mesh, system, result = solve_mixed(
        cfg, h_max=experiment.fem.h_max,
        grading_levels=experiment.fem.grading_levels, nev=experiment.fem.nev)
    fluxes = result.window_fluxes
    probs_fem = tuple(float(f) for f in fluxes / fluxes.sum())
    if abs(sum(probs_fem) - 1.0) > 1e-6 or abs(sum(pred.exit_prob) - 1.0) > 1e-6:
        raise FloatingPointError("window probabilities do not sum to 1")
    lam_fem = result.lambda0

    lam_mc = math.nan
    gap_mc = math.nan
    probs_mc = _nan_tuple(n)
    if experiment.sweep.mc:
        params = SimParams(dt=experiment.mc.dt, n_paths=experiment.mc.n_paths,
                           seed=seed, max_time=experiment.mc.max_time,
                           start=experiment.mc.start)
        if params.start == "qsd_fem":
            stats = run_ensemble(cfg, params, eigen_result=result, mesh=mesh)
        else:
            stats = run_ensemble(cfg, params)
        lam_mc = stats.lambda_hat
        gap_mc = abs(lam_mc / cfg.kbar - 1.0)
        probs_mc = stats.window_probs

    return CompareRow(
        eps=eps,
        kbar=cfg.kbar,
        lambda0_asym=pred.lambda0,
        lambda0_fem=lam_fem,
        lambda_hat_mc=lam_mc,
        gap_fem=abs(lam_fem / cfg.kbar - 1.0),
        gap_mc=gap_mc,
        fitted_c2=abs(lam_fem - cfg.kbar) / cfg.kbar**2,
        probs_asym=pred.exit_prob,
        probs_fem=probs_fem,
        probs_mc=probs_mc,
        status="ok",
    )


def run_compare(experiment: ExperimentConfig, out_dir: str | None = None,
                seed: int = 42) -> ComparisonReport:
    """Sweep epsilon, compare the methods and write the report files.

    Rows that fail keep their place with an error status; the CSV is
    rewritten after every row so partial results survive a crash.
    """
    if experiment.domain.dimension != 2:
        raise ConfigError("compare runs on the disk (dimension 2) only")
    if experiment.sweep is None:
        raise ConfigError("compare needs a [sweep] section")
    out_dir = out_dir or experiment.output_dir or "."
    os.makedirs(out_dir, exist_ok=True)

    n = len(experiment.window_angles)
    rows: list[CompareRow] = []
    for eps in experiment.sweep.epsilons:
        try:
            rows.append(_compare_row(experiment, eps, seed))
        except Exception as exc:
            rows.append(CompareRow(
                eps=eps, kbar=math.nan, lambda0_asym=math.nan,
                lambda0_fem=math.nan, lambda_hat_mc=math.nan,
                gap_fem=math.nan, gap_mc=math.nan, fitted_c2=math.nan,
                probs_asym=_nan_tuple(n), probs_fem=_nan_tuple(n),
                probs_mc=_nan_tuple(n), status=f"error:{type(exc).__name__}",
            ))
        report = ComparisonReport(rows=tuple(rows), n_windows=n)
        write_compare_csv(report, os.path.join(out_dir, "compare.csv"))

    report = ComparisonReport(rows=tuple(rows), n_windows=n)
    _write_lambda_plot(report, os.path.join(out_dir, "lambda_vs_eps.svg"))
    return report


def write_compare_csv(report: ComparisonReport, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(report.columns())
        writer.writerows(report.table())


def _write_lambda_plot(report: ComparisonReport, path: str) -> None:
    ok = [r for r in report.rows if r.status == "ok"]
    if not ok:
        return
    eps = np.array([r.eps for r in ok])[::-1]
    series = [
        Series(eps, np.array([r.lambda0_fem for r in ok])[::-1], "lambda0 fem"),
        Series(eps, np.array([r.lambda0_asym for r in ok])[::-1], "kbar"),
    ]
    if any(not math.isnan(r.lambda_hat_mc) for r in ok):
        series.append(Series(
            eps, np.array([r.lambda_hat_mc for r in ok])[::-1], "lambda mc"))
    text = line_plot(series, title="principal eigenvalue vs window size",
                     xlabel="epsilon", ylabel="lambda0", logx=True)
    with open(path, "w") as fh:
        fh.write(text)
