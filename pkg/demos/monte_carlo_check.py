"""Simulate the extracted barrier policy and compare with the PDE value.

    python demos/monte_carlo_check.py
"""
from discrete_dividends.dividend_ops import extract_barriers
from discrete_dividends.fixed_point import initial_guess, iterate
from discrete_dividends.mc_oracle import McConfig, evaluate_policy
from discrete_dividends.model import ModelParams, ReserveGrid
from discrete_dividends.pde_engine import SchemeConfig

params = ModelParams(mu=0.01, sigma=0.01, rho=0.04)
v, _ = iterate(initial_guess(ReserveGrid(0.2, 4001)), params, SchemeConfig(n_t=256), tol=1e-9)
policy = extract_barriers(v)
mc = McConfig(n_paths=200_000, dt=0.5, seed=1)

print(f"barrier {policy.dividend_barrier[0]:.5f}, horizon {mc.horizon(params, 0.2)} periods")
for x0 in (0.005, 0.02, 0.05):
    est, se = evaluate_policy(policy, x0, params, mc)
    # the grid value sits slightly low near ruin (first order in the step sizes)
    print(f"x0 = {x0:5.3f}  PDE {v(x0):.5f}  MC {est:.5f} +- {se:.5f}")
