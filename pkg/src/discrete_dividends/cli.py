"""Command-line entry point regenerating the figure data as CSV.

Usage::

    discrete-dividends fig1 --out-dir out
    discrete-dividends run fig3_T --config my.ini --set fig3_T.values=0.25,0.5,1
    discrete-dividends --print-config

Configuration is INI text with one section per experiment plus
``[general]``. Every key has a default (see ``--print-config``); unknown
sections or keys are rejected before any computation starts.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import experiments as ex
from .dividend_ops import extract_barriers
from .mc_oracle import McConfig, evaluate_policy
from .model import ModelError, ModelParams, OUParams, ReserveGrid, StateGrid2D
from .pde_engine import SchemeConfig, check_monotone

logger = logging.getLogger("discrete_dividends")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 2, 3

_ONE_D = """\
mu = 0.01
sigma = 0.01
rho = 0.04
T = 1.0
n_t = 256
tol = 1e-8
max_iter = 5000
"""

_TWO_D = """\
sigma = 0.1
rho = 0.05
T = 1.0
lambda_f = 0.1
lambda_p = 0.2
k = 0.5
mu_bar = 0.15
sigma_tilde = 0.3
corr = 0.0
x_max = 4.0
n_x = 401
mu_min = -1.2
mu_max = 1.5
n_mu = 109
n_t = 256
tol = 1e-7
max_iter = 2000
halvings = 3
"""

DEFAULT_CONFIG = f"""\
[general]
out_dir = .
seed = 12345
workers = 1
log_level = INFO

[fig1]
{_ONE_D}x_max = 0.2
n_x = 2001

[fig2_mu]
{_ONE_D}values = 0.005, 0.0075, 0.01, 0.0125, 0.015, 0.02
n_x = 2001

[fig2_sigma]
{_ONE_D}values = 0.005, 0.0075, 0.01, 0.0125, 0.015, 0.02
n_x = 2001

[fig3_T]
{_ONE_D}values = 0.125, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0
n_x = 2001

[fig4_surface]
{_ONE_D}lambda_f = 0.0025
lambda_p = 0.0
x_max = 0.1
n_x = 1001
x_stride = 10
t_stride = 8

[fig5_boundaries]
{_TWO_D}issuance = both

[fig6_heatmap]
{_TWO_D}issuance = both
show_x_max = 2.2
show_mu_min = -0.9
show_mu_max = 1.0
show_mu_min_issuance = -1.1

[custom]
{_ONE_D}dimension = 1
lambda_f = 0.1
lambda_p = 0.0
issuance = no
x_max = 0.2
n_x = 2001
k = 0.5
mu_bar = 0.15
sigma_tilde = 0.3
corr = 0.0
mu_min = -1.2
mu_max = 1.5
n_mu = 109
halvings = 3
mc_paths = 0
mc_dt = 0.25
mc_states = 0.01, 0.03, 0.08
"""

EXPERIMENTS = ("fig1", "fig2_mu", "fig2_sigma", "fig3_T", "fig4_surface",
               "fig5_boundaries", "fig6_heatmap", "custom")


class ConfigError(Exception):
    pass


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case (T)
    return cp


def load_config(files=(), overrides=()) -> configparser.ConfigParser:
    """Defaults, then config files, then ``section.key=value`` overrides."""
    defaults = _parser()
    defaults.read_string(DEFAULT_CONFIG)
    cp = _parser()
    cp.read_string(DEFAULT_CONFIG)
    for path in files:
        user = _parser()
        try:
            with open(path) as fh:
                user.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in user.sections():
            for key, value in user[section].items():
                _set(cp, defaults, section, key, value)
    for item in overrides:
        name, sep, value = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        _set(cp, defaults, section, key.strip(), value.strip())
    return cp


def _set(cp, defaults, section, key, value):
    if not defaults.has_section(section):
        raise ConfigError(f"unknown section [{section}]")
    if not defaults.has_option(section, key):
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    cp[section][key] = value


def _num(sec, key, kind=float):
    try:
        return kind(sec[key])
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key} = {sec[key]!r} is not a valid {kind.__name__}") from exc


def _floats(sec, key) -> list:
    try:
        return [float(v) for v in sec[key].split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key} must be a comma-separated list of numbers") from exc


def _modes(sec) -> list:
    value = sec["issuance"].strip().lower()
    table = {"both": [False, True], "yes": [True], "no": [False], "true": [True], "false": [False]}
    if value not in table:
        raise ConfigError(f"[{sec.name}] issuance must be one of both/yes/no")
    return table[value]


def _params(sec, mu=None) -> ModelParams:
    kw = dict(mu=_num(sec, "mu") if mu is None else mu, sigma=_num(sec, "sigma"),
              rho=_num(sec, "rho"), period=_num(sec, "T"))
    for key in ("lambda_f", "lambda_p"):
        if key in sec:
            kw[key] = _num(sec, key)
    return ModelParams(**kw)


def _ou(sec) -> OUParams:
    return OUParams(k=_num(sec, "k"), mu_bar=_num(sec, "mu_bar"),
                    sigma_tilde=_num(sec, "sigma_tilde"), corr=_num(sec, "corr"))


def _grid2d(sec) -> StateGrid2D:
    return StateGrid2D(ReserveGrid(_num(sec, "x_max"), _num(sec, "n_x", int)),
                       _num(sec, "mu_min"), _num(sec, "mu_max"), _num(sec, "n_mu", int))


def prepare(name: str, cp: configparser.ConfigParser) -> dict:
    """Validate everything an experiment needs and build its inputs."""
    sec = cp[name]
    try:
        job = dict(cfg=SchemeConfig(n_t=_num(sec, "n_t", int)), tol=_num(sec, "tol"),
                   max_iter=_num(sec, "max_iter", int))
        if name in ("fig5_boundaries", "fig6_heatmap") or (
                name == "custom" and _num(sec, "dimension", int) == 2):
            ou = _ou(sec)
            job.update(params=_params(sec, mu=ou.mu_bar), ou=ou, grid=_grid2d(sec),
                       halvings=_num(sec, "halvings", int))
            job["modes"] = _modes(sec)
            job["dimension"] = 2
        else:
            job["params"] = _params(sec)
            job["dimension"] = 1
            if "x_max" in sec:
                job["grid"] = ReserveGrid(_num(sec, "x_max"), _num(sec, "n_x", int))
            if name == "custom":
                job["modes"] = _modes(sec)
        if name == "custom":
            if _num(sec, "dimension", int) not in (1, 2):
                raise ConfigError("[custom] dimension must be 1 or 2")
            job.update(mc_paths=_num(sec, "mc_paths", int), mc_dt=_num(sec, "mc_dt"),
                       mc_states=_floats(sec, "mc_states"))
        if name.startswith(("fig2", "fig3")):
            job.update(values=_floats(sec, "values"), n_x=_num(sec, "n_x", int))
            if not job["values"] or min(job["values"]) <= 0:
                raise ConfigError(f"[{name}] values must be positive")
        if name == "fig4_surface":
            job.update(x_stride=_num(sec, "x_stride", int), t_stride=_num(sec, "t_stride", int))
        if name == "fig6_heatmap":
            job["windows"] = {
                False: ex.Window(_num(sec, "show_mu_min"), _num(sec, "show_mu_max"),
                                 _num(sec, "show_x_max")),
                True: ex.Window(_num(sec, "show_mu_min_issuance"), _num(sec, "show_mu_max"),
                                _num(sec, "show_x_max")),
            }
    except ModelError as exc:
        raise ConfigError(f"[{name}] {exc}") from exc
    if job["tol"] <= 0 or job["max_iter"] < 1:
        raise ConfigError(f"[{name}] tol must be positive and max_iter at least 1")
    if job["dimension"] == 1 and "grid" in job:
        report = check_monotone(job["cfg"], job["params"], job["grid"], assemble=False)
        if not report.ok:
            raise ConfigError(f"[{name}] scheme is not monotone: {report.binding}")
    return job


def write_csv(path: Path, rows: list, columns: Optional[list] = None) -> None:
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])
    logger.info("wrote %s (%d rows)", path, len(rows))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _diag_rows(diag) -> list:
    return [dict(iteration=n, distance=d, ratio=r) for n, d, r in diag.rows()]


def _suffix(issuance: bool) -> str:
    return "_issuance" if issuance else ""


def run_experiment(name: str, job: dict, out: Path, seed: int, workers: int) -> bool:
    """Run one experiment and write its files; returns False on non-convergence."""
    out.mkdir(parents=True, exist_ok=True)
    p, cfg = job["params"], job["cfg"]
    ok = True
    if name == "fig1":
        rows, sol, diag_w = ex.fig1_rows(p, cfg, job["grid"], job["tol"], job["max_iter"])
        write_csv(out / "calibrated.csv", rows, ["x", "JBS", "V", "Vwrong", "loss", "losswrong"])
        write_csv(out / "iterations.csv", _diag_rows(sol.diagnostics))
        summary = dict(xbar_c=sol.barrier_continuous, xbar_d=sol.barrier_discrete,
                       xbarchange=sol.barrier_change, loss=sol.loss_at_barrier,
                       losswrong=ex.loss_at(_wrong(rows, sol), sol.v_continuous,
                                            sol.barrier_continuous),
                       iterations=sol.diagnostics.iterations)
        write_csv(out / "summary.csv", [summary])
        ok = sol.diagnostics.converged and diag_w.converged
    elif name.startswith(("fig2", "fig3")):
        param = {"fig2_mu": "mu", "fig2_sigma": "sigma", "fig3_T": "T"}[name]
        pool = ProcessPoolExecutor(workers) if workers > 1 else None
        try:
            rows = ex.sweep(param, job["values"], p, n_t_per_year=round(cfg.n_t / p.period),
                            n_x=job["n_x"], tol=job["tol"], max_iter=job["max_iter"] * 8,
                            executor=pool)
        finally:
            if pool is not None:
                pool.shutdown()
        write_csv(out / f"{name}.csv", rows, [param, "xbarchange", "loss", "xbar_c", "xbar_d"])
        ok = len(rows) == len(job["values"])
    elif name == "fig4_surface":
        surf, issued, v, diag = ex.issuance_surface(p, cfg, job["grid"], job["tol"],
                                                    job["max_iter"], job["x_stride"],
                                                    job["t_stride"])
        write_csv(out / "surface.csv", surf, ["t", "x", "V"])
        write_csv(out / "issuance.csv", issued, ["t", "x", "target"])
        pol = extract_barriers(v)
        write_csv(out / "summary.csv", [dict(
            barrier=float(pol.dividend_barrier[0]), iterations=diag.iterations,
            issuance_nodes=len({row["x"] for row in issued}))])
        ok = diag.converged
    elif name in ("fig5_boundaries", "fig6_heatmap") or job["dimension"] == 2:
        summaries = []
        for issuance in job["modes"]:
            sol = ex.solve_2d(p, job["ou"], cfg, job["grid"], issuance, job["tol"],
                              job["max_iter"], job["halvings"])
            ok &= sol.converged
            sfx = _suffix(issuance)
            write_csv(out / f"boundaries_discrete{sfx}.csv", ex.boundary_rows(sol.policy_discrete))
            write_csv(out / f"boundaries_continuous{sfx}.csv",
                      ex.boundary_rows(sol.policy_continuous))
            stats = dict(issuance=int(issuance), **ex.boundary_comparison(sol))
            if name == "fig6_heatmap":
                rows, heat = ex.heatmap_2d(sol, job["windows"][issuance])
                write_csv(out / f"heatmap{sfx}.csv", rows, ["mu", "x", "loss"])
                stats.update(heat)
            if name == "custom":
                _write_values_2d(out / f"values{sfx}.csv", sol)
            summaries.append(stats)
        write_csv(out / "summary.csv", summaries)
    else:  # custom, one dimension
        for issuance in job["modes"]:
            ok &= _custom_1d(job, issuance, out, seed, workers)
    return ok


def _wrong(rows, sol):
    return sol.v_discrete.with_values(np.array([r["Vwrong"] for r in rows]))


def _write_values_2d(path: Path, sol) -> None:
    x, mu = sol.grid.reserve.nodes, sol.grid.mu_nodes
    loss = ex.loss_analysis(sol.v_discrete, sol.v_continuous)
    rows = [dict(mu=mu[j], x=x[i], V_discrete=sol.v_discrete.values[j, i],
                 V_continuous=sol.v_continuous.values[j, i], loss=loss[j, i])
            for j in range(mu.size) for i in range(x.size)]
    write_csv(path, rows)


def _custom_1d(job, issuance: bool, out: Path, seed: int, workers: int) -> bool:
    from .fixed_point import initial_guess, iterate
    from .reference_continuous import closed_form_1d, continuous_limit

    p, cfg, grid = job["params"], job["cfg"], job["grid"]
    v_d, diag = iterate(initial_guess(grid), p, cfg, tol=job["tol"], max_iter=job["max_iter"],
                        issuance=issuance)
    ex._log_diagnostics("custom fixed point", diag)
    if issuance:
        lim = continuous_limit(p, cfg, grid, issuance=True, tol=job["tol"],
                               max_iter=job["max_iter"], phi0=v_d)
        v_c, ok_c = lim.value, not lim.flagged
    else:
        v_c, _ = closed_form_1d(p, grid)
        ok_c = True
    loss = ex.loss_analysis(v_d, v_c)
    sfx = _suffix(issuance)
    write_csv(out / f"values{sfx}.csv", [dict(x=x, V_discrete=d, V_continuous=c, loss=l) for
                                        x, d, c, l in zip(grid.nodes, v_d.values, v_c.values, loss)])
    pol = extract_barriers(v_d)
    write_csv(out / f"policy{sfx}.csv", [dict(barrier=float(pol.dividend_barrier[0]),
                                              continuous_barrier=float(extract_barriers(v_c).dividend_barrier[0]),
                                              iterations=diag.iterations)])
    if job["mc_paths"] > 0 and not issuance:
        mc = McConfig(n_paths=job["mc_paths"], dt=job["mc_dt"], seed=seed)
        pool = ProcessPoolExecutor(workers) if workers > 1 else None
        rows = []
        try:
            for x0 in job["mc_states"]:
                est, se = evaluate_policy(pol, x0, p, mc, executor=pool)
                rows.append(dict(x0=x0, V=v_d(x0), estimate=est, stderr=se,
                                 z=(est - v_d(x0)) / se if se > 0 else math.nan))
        finally:
            if pool is not None:
                pool.shutdown()
        write_csv(out / "mc.csv", rows)
    return diag.converged and ok_c


def build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="discrete-dividends", description=__doc__.split("\n")[0])
    ap.add_argument("--print-config", action="store_true", help="print the effective configuration")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", default=[], help="INI file (repeatable)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration key")
    common.add_argument("--out-dir", help="directory for CSV artifacts")
    common.add_argument("--seed", type=int, help="Monte Carlo seed")
    common.add_argument("--workers", type=int, help="worker processes for sweeps and MC")
    common.add_argument("--print-config", action="store_true", help="print the effective configuration")
    sub = ap.add_subparsers(dest="command")
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    run = sub.add_parser("run", parents=[common], help="run an experiment by name")
    run.add_argument("experiment", choices=EXPERIMENTS)
    return ap


def main(argv=None) -> int:
    args = build_argparser().parse_args(argv)
    overrides = list(getattr(args, "set", []))
    for flag, key in (("out_dir", "out_dir"), ("seed", "seed"), ("workers", "workers")):
        if getattr(args, flag, None) is not None:
            overrides.append(f"general.{key}={getattr(args, flag)}")
    try:
        cp = load_config(getattr(args, "config", []), overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        buf = io.StringIO()
        cp.write(buf)
        sys.stdout.write(buf.getvalue())
        if args.command is None:
            return EXIT_OK
    if args.command is None:
        build_argparser().print_usage(sys.stderr)
        return EXIT_CONFIG
    name = args.experiment if args.command == "run" else args.command
    gen = cp["general"]
    logging.basicConfig(level=gen.get("log_level", "INFO").upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        seed, workers = _num(gen, "seed", int), _num(gen, "workers", int)
        job = prepare(name, cp)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    ok = run_experiment(name, job, Path(gen["out_dir"]), seed, max(1, workers))
    if not ok:
        logger.error("%s: a solver did not converge", name)
        return EXIT_NONCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
