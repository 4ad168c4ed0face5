"""Random profitability: boundaries and losses on a coarse grid.

A reduced version of the full run (the command line driver defaults to a
401 x 109 grid); it finishes in a couple of minutes.

    python demos/profitability_2d.py
"""
from discrete_dividends import experiments as ex
from discrete_dividends.model import ModelParams, OUParams, ReserveGrid, StateGrid2D
from discrete_dividends.pde_engine import SchemeConfig

params = ModelParams(mu=0.15, sigma=0.1, rho=0.05, lambda_f=0.1, lambda_p=0.2)
ou = OUParams(k=0.5, mu_bar=0.15, sigma_tilde=0.3)
grid = StateGrid2D(ReserveGrid(4.0, 161), -1.2, 1.5, 55)
cfg = SchemeConfig(n_t=64)

sol = ex.solve_2d(params, ou, cfg, grid, issuance=False, n_halvings=2)
print("comparison", ex.boundary_comparison(sol))
_, summary = ex.heatmap_2d(sol, ex.Window(-0.9, 1.0, 2.2))
print(f"peak loss {summary['max_loss']:.1f}% at mu={summary['mu_at_max']:.2f}, x={summary['x_at_max']:.2f}")
print(f"mean loss {summary['mean_loss']:.2f}%")

print("   mu   liquidation   dividend (discrete / continuous)")
for j in range(0, grid.n_mu, 6):
    d, c = sol.policy_discrete, sol.policy_continuous
    print(f"{grid.mu_nodes[j]:5.2f}   {d.liquidation_barrier[j]:5.2f} / {c.liquidation_barrier[j]:5.2f}"
          f"   {d.dividend_barrier[j]:5.2f} / {c.dividend_barrier[j]:5.2f}")
