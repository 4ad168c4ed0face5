"""Constant profitability without issuance: barriers and losses.

Solves the discrete-date fixed point, compares it with the closed-form
continuous-dividend value and with the value of keeping the continuous
barrier at the dividend dates.

    python demos/calibrated_1d.py
"""
import numpy as np

from discrete_dividends import experiments as ex
from discrete_dividends.model import ModelParams, ReserveGrid
from discrete_dividends.pde_engine import SchemeConfig

params = ModelParams(mu=0.01, sigma=0.01, rho=0.04, period=1.0)
grid = ReserveGrid(0.2, 2001)
cfg = SchemeConfig(n_t=256)

rows, sol, _ = ex.fig1_rows(params, cfg, grid)
print(f"continuous barrier  {sol.barrier_continuous:.5f}")
print(f"discrete barrier    {sol.barrier_discrete:.5f}  ({sol.barrier_change:+.1f}%)")
print(f"iterations          {sol.diagnostics.iterations}")

loss = np.array([r["loss"] for r in rows])
loss_wrong = np.array([r["losswrong"] for r in rows])
i = grid.snap(sol.barrier_continuous)
print(f"loss at the continuous barrier       {loss[i]:.3f}%")
print(f"same, continuous barrier kept        {loss_wrong[i]:.3f}%")

# relative loss along the reserve axis
for x in (0.005, 0.02, 0.05, 0.1, 0.2):
    j = grid.snap(x)
    print(f"  x = {x:5.3f}   loss {loss[j]:6.3f}%   wrong barrier {loss_wrong[j]:6.3f}%")
