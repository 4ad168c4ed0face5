import configparser
import csv

import numpy as np
import pytest

from discrete_dividends import experiments as ex
from discrete_dividends.cli import DEFAULT_CONFIG, EXPERIMENTS, main
from discrete_dividends.model import ReserveGrid, ValueFn
from discrete_dividends.pde_engine import SchemeConfig
from discrete_dividends.reference_continuous import barrier_1d

from conftest import FIG1, FIG1_CFG, FIG1_GRID

SMALL_FIG1 = ["--set", "fig1.n_x=401", "--set", "fig1.n_t=64"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_loss_analysis_examples():
    g = ReserveGrid(1.0, 5)
    v = ValueFn(g, g.nodes)
    assert np.isnan(ex.loss_analysis(v, v)[0])  # no value to lose at zero
    assert np.all(ex.loss_analysis(v, v)[1:] == 0.0)
    half = ValueFn(g, 0.5 * g.nodes)
    assert np.allclose(ex.loss_analysis(half, v)[1:], 50.0)
    with pytest.raises(ValueError):
        ex.loss_analysis(v, ValueFn(ReserveGrid(2.0, 5), g.nodes))


def test_calibrated_loss_curve(fig1):
    loss = ex.loss_analysis(fig1.v_discrete, fig1.v_continuous)
    x = fig1.grid.nodes
    assert np.nanmin(loss) >= -1e-6
    assert fig1.loss_at_barrier < 1.4
    # beyond both barriers the two values grow linearly and the relative loss decays
    far = x >= 0.05
    assert np.all(np.diff(loss[far]) < 0)
    gap = fig1.v_continuous.values[far] - fig1.v_discrete.values[far]
    assert np.ptp(gap) < 1e-3 * gap.mean()  # so the relative loss falls like 1 / x


def test_policy_dominance_ordering(fig1, fig1_wrong):
    wrong, v, jbs = fig1_wrong.values, fig1.v_discrete.values, fig1.v_continuous.values
    assert np.all(wrong <= v + 1e-8)
    assert np.all(v <= jbs + 1e-8)


def test_fixed_discrete_barrier_reproduces_value(fig1):
    v, diag = ex.suboptimal_discrete_value(FIG1, FIG1_CFG, fig1.barrier_discrete, FIG1_GRID)
    assert diag.converged
    assert np.max(np.abs(v.values - fig1.v_discrete.values)) < 1e-6


def test_never_paying_is_worse():
    grid = ReserveGrid(0.2, 401)
    cfg = SchemeConfig(n_t=64)
    b = barrier_1d(FIG1)
    never, _ = ex.suboptimal_discrete_value(FIG1, cfg, grid.x_max, grid)
    paying, _ = ex.suboptimal_discrete_value(FIG1, cfg, b, grid)
    assert never(b) <= paying(b) + 1e-8


def test_period_sweep_trend():
    rows = ex.sweep("T", [0.125, 0.25, 0.5, 1.0], FIG1, n_x=1001)
    assert [r["T"] for r in rows] == [0.125, 0.25, 0.5, 1.0]
    assert rows[-1]["xbarchange"] == pytest.approx(-14.0, abs=2.0)
    change = [r["xbarchange"] for r in rows]
    loss = [r["loss"] for r in rows]
    # both shrink as dividend dates become more frequent
    assert all(a > b for a, b in zip(change, change[1:]))
    assert all(a < b for a, b in zip(loss, loss[1:]))


def test_drift_sweep_uses_the_closed_form_barrier():
    rows = ex.sweep("mu", [0.005, 0.015], FIG1, n_x=801)
    for r in rows:
        assert r["xbar_c"] == pytest.approx(barrier_1d(FIG1.replace(mu=r["mu"])), rel=1e-14)
        assert r["xbar_d"] < r["xbar_c"]
    with pytest.raises(ValueError):
        ex.sweep("rho", [0.1], FIG1)


def test_print_config_lists_every_experiment(capsys):
    assert main(["--print-config"]) == 0
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(capsys.readouterr().out)
    assert set(EXPERIMENTS) <= set(cp.sections())
    ref = configparser.ConfigParser(interpolation=None)
    ref.optionxform = str
    ref.read_string(DEFAULT_CONFIG)
    assert {s: dict(cp[s]) for s in ref.sections()} == {s: dict(ref[s]) for s in ref.sections()}


@pytest.mark.parametrize("argv", [
    ["fig1", "--set", "fig1.no_such_key=1"],
    ["fig1", "--set", "nosection.n_x=1"],
    ["fig1", "--set", "fig1.n_x=abc"],
    ["fig1", "--set", "fig1.sigma=0"],
    ["fig1", "--set", "notanoverride"],
    ["fig3_T", "--set", "fig3_T.values=-1, 2"],
    ["fig6_heatmap", "--set", "fig6_heatmap.issuance=maybe"],
    ["fig1", "--config", "/nonexistent/file.ini"],
])
def test_configuration_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--out-dir", str(tmp_path)]) == 2
    assert not any(tmp_path.iterdir())


def test_config_file_and_override_order(tmp_path, capsys):
    ini = tmp_path / "c.ini"
    ini.write_text("[fig1]\nn_x = 801\nrho = 0.05\n")
    assert main(["fig1", "--config", str(ini), "--set", "fig1.n_x=301", "--print-config",
                 "--set", "fig1.max_iter=1", "--out-dir", str(tmp_path / "o")]) == 3
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(capsys.readouterr().out)
    assert cp["fig1"]["n_x"] == "301" and cp["fig1"]["rho"] == "0.05"


def test_fig1_run_writes_deterministic_files(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "fig1", "--out-dir", str(a)] + SMALL_FIG1) == 0
    assert main(["fig1", "--out-dir", str(b)] + SMALL_FIG1) == 0
    rows = read_csv(a / "calibrated.csv")
    assert list(rows[0]) == ["x", "JBS", "V", "Vwrong", "loss", "losswrong"]
    assert len(rows) == 401
    for name in ("calibrated.csv", "iterations.csv", "summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    summary = read_csv(a / "summary.csv")[0]
    assert float(summary["xbar_c"]) == pytest.approx(0.0380, abs=5e-4)


def test_non_convergence_exit_3(tmp_path):
    assert main(["fig1", "--out-dir", str(tmp_path), "--set", "fig1.max_iter=3"] + SMALL_FIG1) == 3


def test_custom_monte_carlo_is_seeded(tmp_path):
    args = ["custom", "--set", "custom.n_x=401", "--set", "custom.n_t=64",
            "--set", "custom.mc_paths=4000", "--set", "custom.mc_dt=0.5"]
    assert main(args + ["--out-dir", str(tmp_path / "a"), "--seed", "3"]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b"), "--seed", "3"]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "c"), "--seed", "4"]) == 0
    mc = [(tmp_path / d / "mc.csv").read_bytes() for d in "abc"]
    assert mc[0] == mc[1] and mc[0] != mc[2]
    rows = read_csv(tmp_path / "a" / "mc.csv")
    assert [float(r["x0"]) for r in rows] == [0.01, 0.03, 0.08]
    assert list(read_csv(tmp_path / "a" / "values.csv")[0]) == ["x", "V_discrete", "V_continuous", "loss"]


def test_sweep_run_columns(tmp_path):
    assert main(["fig3_T", "--out-dir", str(tmp_path), "--set", "fig3_T.values=0.5, 1.0",
                 "--set", "fig3_T.n_x=401"]) == 0
    rows = read_csv(tmp_path / "fig3_T.csv")
    assert list(rows[0])[:3] == ["T", "xbarchange", "loss"]
    assert [float(r["T"]) for r in rows] == [0.5, 1.0]


def test_issuance_surface_run(tmp_path):
    assert main(["fig4_surface", "--out-dir", str(tmp_path), "--set", "fig4_surface.n_x=201",
                 "--set", "fig4_surface.n_t=32", "--set", "fig4_surface.x_stride=1",
                 "--set", "fig4_surface.t_stride=1"]) == 0
    surf = read_csv(tmp_path / "surface.csv")
    assert list(surf[0]) == ["t", "x", "V"]
    assert len(surf) == 33 * 201
    issued = read_csv(tmp_path / "issuance.csv")
    assert issued and {float(r["x"]) for r in issued} == {0.0}


def test_two_dimensional_run(tmp_path):
    small = ["--set", "fig6_heatmap.n_x=81", "--set", "fig6_heatmap.x_max=3",
             "--set", "fig6_heatmap.n_mu=28", "--set", "fig6_heatmap.n_t=32",
             "--set", "fig6_heatmap.halvings=1", "--set", "fig6_heatmap.issuance=no"]
    assert main(["fig6_heatmap", "--out-dir", str(tmp_path)] + small) == 0
    rows = read_csv(tmp_path / "boundaries_discrete.csv")
    assert list(rows[0]) == ["mu", "lower", "upper"] and len(rows) == 28
    assert list(read_csv(tmp_path / "heatmap.csv")[0]) == ["mu", "x", "loss"]
    summary = read_csv(tmp_path / "summary.csv")[0]
    assert {"max_loss", "mean_loss", "dividend_below_fraction"} <= set(summary)
