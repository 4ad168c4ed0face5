import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from discrete_dividends.dividend_ops import issuance_envelope
from discrete_dividends.fixed_point import (
    alpha_constant,
    alpha_fn,
    apply_T,
    initial_guess,
    iterate,
    iteration_bound,
    sup_distance,
    weighted_distance,
)
from discrete_dividends.model import ModelParams, OUParams, ReserveGrid, StateGrid2D, ValueFn, a_star
from discrete_dividends.pde_engine import SchemeConfig

from conftest import FIG1, FIG5, FIG5_OU

SMALL = ReserveGrid(0.2, 401)
CFG = SchemeConfig(n_t=64)
FIG4 = FIG1.replace(lambda_f=0.0025, lambda_p=0.0)


def cone_member(rng, grid, a):
    e = np.sort(rng.random(grid.n_x)) * a * rng.random()
    return ValueFn(grid, grid.nodes + e)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_cone_preservation(seed, issuance):
    p = FIG4 if issuance else FIG1
    a = a_star(p)
    phi = cone_member(np.random.default_rng(seed), SMALL, a)
    out = apply_T(phi, p, CFG, issuance=issuance)
    x = SMALL.nodes
    assert np.all(out.values >= x - 1e-10)
    assert np.all(out.values <= x + a + 1e-10)
    assert np.all(np.diff(out.excess()) >= -1e-10)


def test_identity_start_stays_in_cone():
    out = apply_T(initial_guess(SMALL), FIG1, CFG)
    assert out.in_cone(a_star(FIG1), atol=1e-10)


def test_contraction_on_random_pairs():
    rng = np.random.default_rng(7)
    q = math.exp(-FIG1.rho * FIG1.period)
    for _ in range(10):
        phi = cone_member(rng, SMALL, a_star(FIG1))
        psi = cone_member(rng, SMALL, a_star(FIG1))
        for p, iss in ((FIG1, False), (FIG4, True)):
            d_out = sup_distance(apply_T(phi, p, CFG, issuance=iss), apply_T(psi, p, CFG, issuance=iss))
            assert d_out <= q * sup_distance(phi, psi) + 1e-12


def test_calibrated_ratios_and_iteration_count(fig1):
    diag = fig1.diagnostics
    assert diag.converged
    tail = np.array(diag.ratios[2:])
    assert np.all(tail[~np.isnan(tail)] <= math.exp(-0.04) + 0.01)
    assert diag.iterations <= iteration_bound(FIG1, 1e-8, a_star(FIG1)) + 2


def test_iteration_bound_examples():
    # ln(1e-8 / 0.24503) / -0.04 = 425.6...
    assert iteration_bound(FIG1, 1e-8, a_star(FIG1)) == 426
    assert iteration_bound(FIG1, 1.0, 0.5) == 1


def test_monotone_improvement_from_identity():
    phi = initial_guess(SMALL)
    for _ in range(15):
        nxt = apply_T(phi, FIG1, CFG)
        assert np.all(nxt.values >= phi.values - 1e-12)
        phi = nxt


def test_fixed_point_sandwich(fig1):
    v = fig1.v_discrete
    x = v.grid.nodes
    a = a_star(FIG1)
    assert np.all(v.values >= x - 1e-12)
    assert np.all(v.values <= x + a + 1e-12)
    assert np.all(np.diff(v.excess()) >= -1e-12)
    assert v.values[0] == 0.0


def test_boundary_value_with_issuance(fig4):
    p, grid, (_, _, v, diag) = fig4
    assert diag.converged
    assert v.values[0] == pytest.approx(max(issuance_envelope(v, p).values[0], 0.0), abs=1e-8)
    assert v.values[0] > 0  # refinancing beats ruin here


def test_independent_of_initialization():
    q = math.exp(-FIG1.rho * FIG1.period)
    tol = 1e-8
    lo, d1 = iterate(initial_guess(SMALL), FIG1, CFG, tol=tol)
    hi, d2 = iterate(ValueFn(SMALL, SMALL.nodes + a_star(FIG1)), FIG1, CFG, tol=tol)
    assert d1.converged and d2.converged
    # iterates climb from below and descend from above
    assert np.all(hi.values >= lo.values)
    # a step below tol leaves each run within tol q / (1 - q) of the fixed point
    assert sup_distance(lo, hi) <= 2 * tol * q / (1 - q)
    # stopping so that each run is within tol of the fixed point gives 2 tol
    step = tol * (1 - q) / q
    lo, _ = iterate(lo, FIG1, CFG, tol=step)
    hi, _ = iterate(hi, FIG1, CFG, tol=step)
    assert sup_distance(lo, hi) <= 2 * tol


def test_non_convergence_is_flagged():
    v, diag = iterate(initial_guess(SMALL), FIG1, CFG, tol=1e-8, max_iter=3)
    assert not diag.converged and diag.iterations == 3
    assert len(diag.distances) == len(diag.ratios) == 3
    with pytest.raises(ValueError):
        iterate(initial_guess(SMALL), FIG1, CFG, tol=0.0)


def brute_weighted(phi, psi, alpha, mu):
    best = 0.0
    for j in range(phi.shape[0]):
        for i in range(phi.shape[1]):
            best = max(best, abs(phi[j, i] - psi[j, i]) / alpha(mu[j]))
    return best


def test_weighted_distance_examples():
    g = StateGrid2D(ReserveGrid(1.0, 5), -1.0, 1.0, 5)
    alpha = alpha_fn(FIG5_OU, FIG5)
    rng = np.random.default_rng(3)
    phi, psi = rng.random(g.shape), rng.random(g.shape)
    a, b = ValueFn(g, phi), ValueFn(g, psi)
    assert weighted_distance(a, a, alpha) == 0.0
    assert weighted_distance(a, b, alpha) == pytest.approx(brute_weighted(phi, psi, alpha, g.mu_nodes),
                                                           rel=1e-15)
    shifted = ValueFn(g, phi + alpha(g.mu_nodes)[:, None])
    assert weighted_distance(shifted, a, alpha) == pytest.approx(1.0, rel=1e-14)


def test_alpha_examples():
    A = (0.15 + 0.3 * math.sqrt((math.e - 1) / (0.5 * math.pi))) / (math.exp(0.025) - 1)
    assert alpha_constant(FIG5_OU, FIG5) == pytest.approx(A, rel=1e-14)
    assert math.isfinite(A) and A >= 1
    alpha = alpha_fn(FIG5_OU, FIG5)
    neg = alpha(np.array([-3.0, -0.5, 0.0]))
    assert np.all(neg == alpha.A) and alpha.A == pytest.approx(A, rel=1e-14)
    assert alpha(0.4) == pytest.approx(A + 0.4)
    # a tiny mean reversion target and noise fall back to the floor of one
    assert alpha_constant(OUParams(k=0.5, mu_bar=0.0, sigma_tilde=1e-6), ModelParams(rho=0.5)) == 1.0


def test_alpha_growth_condition_monte_carlo():
    alpha = alpha_fn(FIG5_OU, FIG5)
    rng = np.random.default_rng(99)
    bound = math.exp(FIG5.rho * FIG5.period / 2)
    for mu in np.linspace(-1.2, 1.5, 20):
        mean, sd = FIG5_OU.transition(np.array([mu]), FIG5.period)
        draws = alpha(mean[0] + sd * rng.standard_normal(1_000_000))
        est, se = draws.mean(), draws.std(ddof=1) / math.sqrt(draws.size)
        assert est <= bound * alpha(mu) + 3 * se
