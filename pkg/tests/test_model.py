import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from discrete_dividends.model import (
    ModelError,
    ModelParams,
    OUParams,
    Policy,
    ReserveGrid,
    StateGrid2D,
    ValueFn,
    a_star,
    default_x_max,
    make_cost,
    warn_if_domain_small,
)

pos = st.floats(1e-3, 2.0)


def test_cost_examples():
    assert make_cost(ModelParams(lambda_f=0.1, lambda_p=0.2))(0.0) == 0.0
    assert make_cost(ModelParams(lambda_f=0.1, lambda_p=0.2))(1.0) == pytest.approx(1.3, abs=1e-15)
    assert make_cost(ModelParams(lambda_f=0.0025, lambda_p=0.0))(0.01) == pytest.approx(0.0125, abs=1e-15)


def test_cost_rejects_negative_size():
    with pytest.raises(ModelError):
        make_cost(ModelParams())(-0.1)


@given(a=pos, b=pos, lf=st.floats(1e-4, 1.0), lp=st.floats(0.0, 1.0))
def test_cost_superadditive_and_dominates_size(a, b, lf, lp):
    c = make_cost(ModelParams(lambda_f=lf, lambda_p=lp))
    assert c(a + b) <= c(a) + c(b) + 1e-12
    assert c(a) >= a


def test_a_star_examples():
    assert a_star(ModelParams(mu=0.01, period=1.0, rho=0.04)) == pytest.approx(0.24503, abs=1e-5)
    assert a_star(ModelParams(mu=0.0)) == 0.0
    assert a_star(ModelParams(mu=-0.3)) == 0.0
    # direct evaluation, written as the fixed point of A = e^{-rho T}(A + mu T)
    q = math.exp(-0.05)
    assert a_star(ModelParams(mu=0.15, period=1.0, rho=0.05)) == pytest.approx(q * 0.15 / (1 - q), rel=1e-12)
    assert a_star(ModelParams(mu=0.15, period=1.0, rho=0.05)) == pytest.approx(2.9256, abs=1e-4)


@given(mu=st.floats(0.0, 1.0), rho=st.floats(1e-3, 0.5), T=st.floats(0.01, 5.0))
def test_a_star_is_fixed_by_one_period_growth(mu, rho, T):
    p = ModelParams(mu=mu, rho=rho, period=T)
    a = a_star(p)
    assert math.exp(-rho * T) * (a + mu * T) == pytest.approx(a, rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("field,value", [("sigma", 0.0), ("rho", -1.0), ("period", 0.0),
                                         ("lambda_f", 0.0), ("lambda_p", -0.1), ("zeta_max", 0.0)])
def test_params_invariants(field, value):
    with pytest.raises(ModelError):
        ModelParams(**{field: value})


def test_ou_invariants_and_transition():
    with pytest.raises(ModelError):
        OUParams(k=0.0)
    with pytest.raises(ModelError):
        OUParams(corr=1.5)
    ou = OUParams(k=0.5, mu_bar=0.15, sigma_tilde=0.3)
    mean, sd = ou.transition(np.array([1.0]), 2.0)
    assert mean[0] == pytest.approx(0.15 + 0.85 * math.exp(-1.0))
    assert sd == pytest.approx(0.3 * math.sqrt((1 - math.exp(-2.0)) / 1.0))


def test_grids():
    g = ReserveGrid(0.2, 2001)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 0.2
    assert g.h == pytest.approx(1e-4)
    assert g.snap(0.03239) == 324
    with pytest.raises(ModelError):
        ReserveGrid(1.0, 2)
    with pytest.raises(ModelError):
        g.snap(0.3)
    g2 = StateGrid2D(g, -1.0, 1.0, 5)
    assert g2.shape == (5, 2001)
    assert g2.mu_nodes.tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]
    with pytest.raises(ModelError):
        StateGrid2D(g, 1.0, 1.0, 5)
    with pytest.raises(ModelError):
        StateGrid2D(g, 0.0, 1.0, 2)


def test_value_fn_is_immutable_and_checked():
    g = ReserveGrid(1.0, 5)
    raw = np.arange(5.0)
    v = ValueFn(g, raw)
    raw[0] = 7.0
    assert v.values[0] == 0.0
    with pytest.raises(ValueError):
        v.values[1] = 3.0
    with pytest.raises(ModelError):
        ValueFn(g, np.ones(4))
    with pytest.raises(ModelError):
        ValueFn(g, np.array([0, 1, np.nan, 2, 3]))
    assert v(0.125) == pytest.approx(0.5)


def test_cone_membership():
    g = ReserveGrid(1.0, 5)
    assert ValueFn(g, g.nodes + 0.1 * g.nodes).in_cone(0.1)
    assert not ValueFn(g, g.nodes + 0.2 * g.nodes).in_cone(0.1)
    assert not ValueFn(g, g.nodes + np.array([0, 0.05, 0.0, 0.05, 0.05])).in_cone(0.1)


def test_policy_slices():
    pol = Policy(dividend_barrier=np.array([0.0, 0.5, 1.0]),
                 liquidation_barrier=np.array([np.nan, 0.2, np.nan]),
                 fully_liquidating=np.array([True, False, False]), mu=np.array([-1.0, 0.0, 1.0]))
    assert pol.barrier_at(np.array([0.1, 0.9])).tolist() == [0.5, 1.0]
    assert pol.liquidation_at(np.array([-2.0, 0.0, 1.0])).tolist() == [np.inf, 0.2, -np.inf]


def test_domain_default_and_warning():
    p = ModelParams(mu=0.01, rho=0.04)
    assert default_x_max(p, 0.0) == pytest.approx(4 * (a_star(p) + 0.01))
    assert default_x_max(p, 10.0) == 40.0
    with pytest.warns(RuntimeWarning):
        warn_if_domain_small(0.6, 1.0)
