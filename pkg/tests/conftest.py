"""Shared, session-scoped solves.

The expensive runs (the calibrated 1-D fixed point and the two 2-D
comparisons) are computed once and reused by the unit and acceptance
tests.
"""

import time

import pytest

from discrete_dividends import experiments as ex
from discrete_dividends.fixed_point import initial_guess, iterate
from discrete_dividends.model import ModelParams, OUParams, ReserveGrid, StateGrid2D
from discrete_dividends.pde_engine import SchemeConfig

FIG1 = ModelParams(mu=0.01, sigma=0.01, rho=0.04, period=1.0)
FIG1_GRID = ReserveGrid(0.2, 2001)
FIG1_CFG = SchemeConfig(n_t=256)

FIG5 = ModelParams(mu=0.15, sigma=0.1, rho=0.05, period=1.0, lambda_f=0.1, lambda_p=0.2)
FIG5_OU = OUParams(k=0.5, mu_bar=0.15, sigma_tilde=0.3, corr=0.0)
FIG5_GRID = StateGrid2D(ReserveGrid(4.0, 401), -1.2, 1.5, 109)
FIG5_CFG = SchemeConfig(n_t=256)


@pytest.fixture(scope="session")
def fig1():
    t0 = time.perf_counter()
    sol = ex.solve_1d(FIG1, FIG1_CFG, FIG1_GRID, tol=1e-8)
    sol.elapsed = time.perf_counter() - t0
    return sol


@pytest.fixture(scope="session")
def fig1_wrong(fig1):
    v, diag = ex.suboptimal_discrete_value(FIG1, FIG1_CFG, fig1.barrier_continuous, FIG1_GRID)
    assert diag.converged
    return v


@pytest.fixture(scope="session")
def fig1_fine():
    """Finer grid for comparisons at Monte Carlo precision."""
    v, diag = iterate(initial_guess(ReserveGrid(0.2, 8001)), FIG1, SchemeConfig(n_t=512), tol=1e-9)
    assert diag.converged
    return v


@pytest.fixture(scope="session")
def fig1_extrapolated(fig1_fine):
    """Richardson estimate ``2 V(h, dt) - V(2h, 2dt)`` of the fixed point.

    The scheme is first order in ``(h, dt)`` jointly, and the per-period
    error near ruin is amplified by ``1 / (1 - exp(-rho T))`` in the fixed
    point; extrapolation brings the error below Monte Carlo precision.
    """
    coarse, diag = iterate(initial_guess(ReserveGrid(0.2, 4001)), FIG1, SchemeConfig(n_t=256), tol=1e-9)
    assert diag.converged
    return lambda x: 2.0 * fig1_fine(x) - coarse(x)


@pytest.fixture(scope="session")
def fig4():
    p = FIG1.replace(lambda_f=0.0025, lambda_p=0.0)
    grid = ReserveGrid(0.1, 1001)
    return p, grid, ex.issuance_surface(p, FIG1_CFG, grid, tol=1e-8)


def _solve_2d(issuance):
    t0 = time.perf_counter()
    sol = ex.solve_2d(FIG5, FIG5_OU, FIG5_CFG, FIG5_GRID, issuance, tol=1e-7)
    sol.elapsed = time.perf_counter() - t0
    return sol


@pytest.fixture(scope="session")
def fig5_plain():
    return _solve_2d(False)


@pytest.fixture(scope="session")
def fig5_issuance():
    return _solve_2d(True)


ACCEPTANCE = {}


def report(number: int, ok: bool, detail: str) -> None:
    """Record and print one acceptance line."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
