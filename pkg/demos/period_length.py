"""How often dividends are paid: barrier shift and loss against the period.

    python demos/period_length.py
"""
from discrete_dividends import experiments as ex
from discrete_dividends.model import ModelParams

params = ModelParams(mu=0.01, sigma=0.01, rho=0.04)
rows = ex.sweep("T", [0.25, 0.5, 1.0, 2.0], params, n_t_per_year=256, n_x=2001)
print("    T   barrier change   loss at continuous barrier")
for r in rows:
    print(f"{r['T']:5.2f}   {r['xbarchange']:12.2f}%   {r['loss']:12.3f}%")
