"""Experiment drivers: loss curves, parameter sweeps and 2-D loss maps.

Every driver returns plain rows (lists of dicts) or arrays; writing files
is left to the caller so that results can be checked without touching
the disk.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dividend_ops import extract_barriers, fixed_barrier_payout
from .fixed_point import initial_guess, iterate
from .model import (
    IterationDiagnostics,
    ModelParams,
    OUParams,
    Policy,
    ReserveGrid,
    StateGrid2D,
    ValueFn,
    warn_if_domain_small,
)
from .pde_engine import SchemeConfig, march_layers
from .reference_continuous import barrier_1d, closed_form_1d, continuous_limit

logger = logging.getLogger(__name__)

LOSS_FLOOR = 1e-12


def loss_analysis(v_discrete: ValueFn, v_continuous: ValueFn) -> np.ndarray:
    """Relative loss ``100 (V_c - V_d) / V_c`` per node; NaN where ``V_c`` vanishes."""
    if v_discrete.grid != v_continuous.grid:
        raise ValueError("value functions live on different grids")
    vc, vd = v_continuous.values, v_discrete.values
    ok = vc >= LOSS_FLOOR
    return np.where(ok, 100.0 * (vc - vd) / np.where(ok, vc, 1.0), np.nan)


def loss_at(v_discrete: ValueFn, v_continuous: ValueFn, x: float) -> float:
    vc = v_continuous(x)
    return 100.0 * (vc - v_discrete(x)) / vc


def _log_diagnostics(label: str, diag: IterationDiagnostics) -> None:
    tail = [r for r in diag.ratios[2:] if not math.isnan(r)]
    logger.info("%s: %d iterations, last distance %.3g, max ratio %.5f%s", label,
                diag.iterations, diag.distances[-1] if diag.distances else float("nan"),
                max(tail) if tail else float("nan"), "" if diag.converged else " (NOT CONVERGED)")


def suboptimal_discrete_value(params: ModelParams, cfg: SchemeConfig, barrier_c: float,
                              grid: ReserveGrid, tol: float = 1e-8, max_iter: int = 5000,
                              ) -> tuple[ValueFn, IterationDiagnostics]:
    """Discrete-dividend value when the dividend date always pays down to ``barrier_c``."""
    payout = lambda phi: fixed_barrier_payout(phi, barrier_c)  # noqa: E731
    return iterate(initial_guess(grid), params, cfg, tol=tol, max_iter=max_iter, payout=payout)


@dataclass
class Solution1D:
    params: ModelParams
    grid: ReserveGrid
    v_discrete: ValueFn
    v_continuous: ValueFn
    barrier_discrete: float
    barrier_continuous: float
    diagnostics: IterationDiagnostics

    @property
    def barrier_change(self) -> float:
        return 100.0 * (self.barrier_discrete - self.barrier_continuous) / self.barrier_continuous

    @property
    def loss_at_barrier(self) -> float:
        return loss_at(self.v_discrete, self.v_continuous, self.barrier_continuous)


def solve_1d(params: ModelParams, cfg: SchemeConfig, grid: ReserveGrid, tol: float = 1e-8,
             max_iter: int = 5000) -> Solution1D:
    """Discrete fixed point and continuous closed form on the same grid."""
    v_c, b_c = closed_form_1d(params, grid)
    v_d, diag = iterate(initial_guess(grid), params, cfg, tol=tol, max_iter=max_iter)
    _log_diagnostics(f"1-D fixed point {params}", diag)
    b_d = float(extract_barriers(v_d).dividend_barrier[0])
    warn_if_domain_small(max(b_c, b_d), grid.x_max)
    return Solution1D(params, grid, v_d, v_c, b_d, b_c, diag)


def fig1_rows(params: ModelParams, cfg: SchemeConfig, grid: ReserveGrid, tol: float = 1e-8,
              max_iter: int = 5000) -> tuple[list, Solution1D, IterationDiagnostics]:
    """Columns ``x, JBS, V, Vwrong, loss, losswrong`` on every node."""
    sol = solve_1d(params, cfg, grid, tol, max_iter)
    v_wrong, diag_w = suboptimal_discrete_value(params, cfg, sol.barrier_continuous, grid,
                                                tol, max_iter)
    _log_diagnostics("fixed continuous barrier", diag_w)
    loss = loss_analysis(sol.v_discrete, sol.v_continuous)
    loss_w = loss_analysis(v_wrong, sol.v_continuous)
    rows = [dict(x=x, JBS=c, V=d, Vwrong=w, loss=l, losswrong=lw)
            for x, c, d, w, l, lw in zip(grid.nodes, sol.v_continuous.values,
                                         sol.v_discrete.values, v_wrong.values, loss, loss_w)]
    return rows, sol, diag_w


def sweep_grid(params: ModelParams, n_x: int, x_max: Optional[float] = None) -> ReserveGrid:
    """Default domain ``[0, 5 b*]`` around the continuous barrier."""
    if x_max is None:
        x_max = 5.0 * barrier_1d(params)
    return ReserveGrid(x_max, n_x)


def _sweep_point(name: str, value: float, params: ModelParams, n_t_per_year: int, n_x: int,
                 x_max: Optional[float], tol: float, max_iter: int) -> Optional[dict]:
    key = {"T": "period"}.get(name, name)
    try:
        p = params.replace(**{key: value})
        cfg = SchemeConfig(n_t=max(2, round(n_t_per_year * p.period)))
        sol = solve_1d(p, cfg, sweep_grid(p, n_x, x_max), tol, max_iter)
    except Exception as exc:  # a failed point becomes a missing row
        logger.error("sweep %s=%g failed: %s", name, value, exc)
        return None
    if not sol.diagnostics.converged:
        logger.error("sweep %s=%g did not converge", name, value)
        return None
    return {name: value, "xbar_c": sol.barrier_continuous, "xbar_d": sol.barrier_discrete,
            "xbarchange": sol.barrier_change, "loss": sol.loss_at_barrier}


def sweep(name: str, values: Sequence[float], params: ModelParams, n_t_per_year: int = 256,
          n_x: int = 2001, x_max: Optional[float] = None, tol: float = 1e-8,
          max_iter: int = 20000, executor: Optional[Executor] = None) -> list:
    """Barrier change and loss at the continuous barrier for each parameter value.

    ``name`` is one of ``mu``, ``sigma`` or ``T``. The time step is held at
    ``1 / n_t_per_year`` across the sweep.
    """
    if name not in ("mu", "sigma", "T"):
        raise ValueError(f"cannot sweep over {name!r}")
    args = [(name, float(v), params, n_t_per_year, n_x, x_max, tol, max_iter) for v in values]
    if executor is None:
        rows = [_sweep_point(*a) for a in args]
    else:
        rows = list(executor.map(_sweep_point, *zip(*args)))
    return [r for r in rows if r is not None]


def issuance_surface(params: ModelParams, cfg: SchemeConfig, grid: ReserveGrid, tol: float = 1e-8,
                     max_iter: int = 5000, x_stride: int = 1, t_stride: int = 1):
    """Value during one period of the issuance model, on calendar time ``t``.

    Returns ``(surface_rows, issuance_rows, fixed_point, diagnostics)``;
    the issuance rows list every node where an issuance is optimal.
    """
    v, diag = iterate(initial_guess(grid), params, cfg, tol=tol, max_iter=max_iter, issuance=True)
    _log_diagnostics("issuance model", diag)
    trace: list = []
    rows = []
    x = grid.nodes
    for n, (tau, layer) in enumerate(march_layers(v, params, cfg, issuance=True, trace=trace)):
        if n % t_stride and n != cfg.n_t:
            continue
        t = params.period - tau
        rows.extend(dict(t=t, x=xi, V=vi) for xi, vi in zip(x[::x_stride], layer.values[::x_stride]))
    issued = [dict(t=layer.time_in_period, x=float(x[i]), target=float(z))
              for layer in trace for i, z in zip(layer.active, layer.targets)]
    return rows, issued, v, diag


@dataclass
class Solution2D:
    grid: StateGrid2D
    issuance: bool
    v_discrete: ValueFn
    v_continuous: ValueFn
    policy_discrete: Policy
    policy_continuous: Policy
    diagnostics: IterationDiagnostics
    limit_gaps: list = field(default_factory=list)
    limit_flagged: bool = False

    @property
    def converged(self) -> bool:
        return self.diagnostics.converged and not self.limit_flagged


def solve_2d(params: ModelParams, ou: OUParams, cfg: SchemeConfig, grid: StateGrid2D,
             issuance: bool, tol: float = 1e-7, max_iter: int = 2000,
             n_halvings: int = 3) -> Solution2D:
    """Discrete fixed point and its period-halving continuous limit.

    The continuous limit starts from the discrete solution, which is a
    lower bound for it.
    """
    v_d, diag = iterate(initial_guess(grid), params, cfg, tol=tol, max_iter=max_iter,
                        issuance=issuance, ou=ou)
    _log_diagnostics(f"2-D fixed point (issuance={issuance})", diag)
    lim = continuous_limit(params, cfg, grid, ou=ou, issuance=issuance, tol=tol,
                           max_iter=max_iter, n_halvings=n_halvings, phi0=v_d)
    logger.info("2-D continuous limit gaps %s", lim.gaps)
    return Solution2D(grid, issuance, v_d, lim.value, extract_barriers(v_d),
                      extract_barriers(lim.value), diag, lim.gaps, lim.flagged)


def boundary_rows(policy: Policy) -> list:
    """``mu, lower, upper``: liquidation and dividend boundaries per slice.

    Fully liquidating slices have ``upper = 0`` and no lower boundary.
    """
    return [dict(mu=m, lower=lo, upper=up) for m, lo, up in
            zip(policy.mu, policy.liquidation_barrier, policy.dividend_barrier)]


@dataclass(frozen=True)
class Window:
    """Displayed part of the state space."""

    mu_min: float
    mu_max: float
    x_max: float

    def mask(self, grid: StateGrid2D) -> np.ndarray:
        mu = grid.mu_nodes[:, None]
        x = grid.reserve.nodes[None, :]
        eps = 1e-9
        return (mu >= self.mu_min - eps) & (mu <= self.mu_max + eps) & (x <= self.x_max + eps)


def heatmap_2d(sol: Solution2D, window: Window) -> tuple[list, dict]:
    """Per-node losses inside ``window`` and summary statistics."""
    loss = loss_analysis(sol.v_discrete, sol.v_continuous)
    mask = window.mask(sol.grid)
    shown = np.where(mask, loss, np.nan)
    mu, x = sol.grid.mu_nodes, sol.grid.reserve.nodes
    rows = [dict(mu=mu[j], x=x[i], loss=loss[j, i]) for j, i in np.argwhere(mask)]
    j, i = np.unravel_index(np.nanargmax(shown), shown.shape)
    summary = dict(issuance=int(sol.issuance), max_loss=float(shown[j, i]), mu_at_max=float(mu[j]),
                   x_at_max=float(x[i]), mean_loss=float(np.nanmean(shown)),
                   undefined_nodes=int(np.sum(mask & np.isnan(loss))))
    return rows, summary


def boundary_comparison(sol: Solution2D) -> dict:
    """How the discrete boundaries sit relative to the continuous ones.

    ``dividend_below_fraction`` counts slices with a strictly lower discrete
    dividend boundary; the liquidation check allows equality, since both
    boundaries live on the same nodes.
    """
    d, c = sol.policy_discrete, sol.policy_continuous
    both = ~d.fully_liquidating & ~c.fully_liquidating
    lower_both = ~np.isnan(d.liquidation_barrier) & ~np.isnan(c.liquidation_barrier)
    return dict(
        slices_with_barriers=int(both.sum()),
        dividend_below_fraction=float(np.mean(d.dividend_barrier[both] < c.dividend_barrier[both]))
        if both.any() else float("nan"),
        slices_with_liquidation=int(lower_both.sum()),
        liquidation_above_everywhere=bool(np.all(
            d.liquidation_barrier[lower_both] >= c.liquidation_barrier[lower_both])),
    )
