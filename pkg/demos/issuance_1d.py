"""Cheap refinancing: where and how far the firm issues equity.

With a small fixed cost and no proportional cost the dividend barrier
drops sharply, and issuance happens only once reserves are exhausted.

    python demos/issuance_1d.py
"""
import numpy as np

from discrete_dividends import experiments as ex
from discrete_dividends.dividend_ops import extract_barriers
from discrete_dividends.model import ModelParams, ReserveGrid
from discrete_dividends.pde_engine import SchemeConfig

params = ModelParams(mu=0.01, sigma=0.01, rho=0.04, lambda_f=0.0025, lambda_p=0.0)
grid = ReserveGrid(0.1, 1001)
cfg = SchemeConfig(n_t=256)

_, issued, v, diag = ex.issuance_surface(params, cfg, grid)
print(f"dividend barrier {extract_barriers(v).dividend_barrier[0]:.4f} after {diag.iterations} iterations")
print(f"value at zero reserves {v.values[0]:.5f}")

nodes = sorted({r["x"] for r in issued})
targets = np.array([r["target"] for r in issued])
print(f"issuance at reserve levels {nodes}")
print(f"post-issuance reserves between {targets.min():.4f} and {targets.max():.4f}")
