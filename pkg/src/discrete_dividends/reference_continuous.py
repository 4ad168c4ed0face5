"""Continuous-dividend reference values.

``closed_form_1d`` is the classical barrier solution for a Brownian cash
flow without issuance. ``continuous_limit`` approximates the continuous
payment problem with the discrete machinery by shrinking the period.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fixed_point import alpha_fn, initial_guess, iterate, sup_distance, weighted_distance
from .model import ModelParams, OUParams, ReserveGrid, StateGrid2D, ValueFn
from .pde_engine import SchemeConfig

logger = logging.getLogger(__name__)


def characteristic_roots(params: ModelParams) -> tuple[float, float]:
    """Roots of ``sigma^2/2 r^2 + mu r - rho = 0`` as ``(r_plus, r_minus)``."""
    mu, s2 = params.mu, params.sigma**2
    disc = math.sqrt(mu * mu + 2.0 * s2 * params.rho)
    return (-mu + disc) / s2, (-mu - disc) / s2


def barrier_1d(params: ModelParams) -> float:
    rp, rm = characteristic_roots(params)
    return max(0.0, math.log(rm * rm / (rp * rp)) / (rp - rm))


def closed_form_1d(params: ModelParams, grid: ReserveGrid) -> tuple[ValueFn, float]:
    """Value of optimal continuous dividends and its barrier ``b*``.

    On ``[0, b*]`` the value solves ``sigma^2/2 V'' + mu V' - rho V = 0``
    with ``V(0) = 0`` and smooth fit ``V'(b*) = 1``; above ``b*`` it grows
    with slope one.
    """
    b = barrier_1d(params)
    return ValueFn(grid, closed_form_values(params, grid.nodes, b)), b


def closed_form_values(params: ModelParams, x, b: Optional[float] = None) -> np.ndarray:
    b = barrier_1d(params) if b is None else b
    rp, rm = characteristic_roots(params)
    # scaled by exp(-rp b) to keep the exponentials bounded
    denom = rp - rm * math.exp((rm - rp) * b)

    def inner(y):
        return (np.exp(rp * (y - b)) - np.exp(rm * y - rp * b)) / denom

    x = np.asarray(x, dtype=float)
    return np.where(x <= b, inner(np.minimum(x, b)), inner(b) + (x - b))


@dataclass
class ContinuousLimit:
    value: ValueFn
    periods: list
    gaps: list
    iterations: list = field(default_factory=list)
    flagged: bool = False


def continuous_limit(params: ModelParams, cfg: SchemeConfig, grid, ou: Optional[OUParams] = None,
                     issuance: bool = False, j0: int = 4, n_halvings: int = 3,
                     tol: float = 1e-8, max_iter: int = 2000,
                     phi0: Optional[ValueFn] = None) -> ContinuousLimit:
    """Fixed points for periods ``T / 2^j``, ``j = j0 .. j0 + n_halvings``.

    The time step is kept near ``period / n_t`` (at least two steps per
    shortened period). The stopping tolerance shrinks with the contraction
    gap ``1 - exp(-rho dT)`` so that the a-posteriori error bound stays the
    same as for the full period. Each level starts from the previous one.
    The returned value is the last level; ``gaps`` holds the distances
    between successive levels and ``flagged`` is set if they fail to shrink.
    """
    two_d = isinstance(grid, StateGrid2D)
    if two_d:
        alpha = alpha_fn(ou, params)
        distance = lambda a, b: weighted_distance(a, b, alpha)  # noqa: E731
    else:
        distance = sup_distance
    phi = initial_guess(grid) if phi0 is None else phi0
    base_gap = -math.expm1(-params.rho * params.period)
    periods, gaps, iters, prev = [], [], [], None
    for j in range(j0, j0 + n_halvings + 1):
        scale = 2**j
        p_j = params.replace(period=params.period / scale)
        cfg_j = cfg.replace(n_t=max(2, round(cfg.n_t / scale)))
        tol_j = tol * -math.expm1(-p_j.rho * p_j.period) / base_gap
        phi, diag = iterate(phi, p_j, cfg_j, tol=tol_j, max_iter=max_iter * scale,
                            issuance=issuance, ou=ou)
        logger.info("period %.5g: %d iterations", p_j.period, diag.iterations)
        periods.append(p_j.period)
        iters.append(diag.iterations)
        if prev is not None:
            gaps.append(distance(phi, prev))
        prev = phi
    flagged = any(b >= a for a, b in zip(gaps, gaps[1:]))
    if flagged:
        logger.warning("continuous-limit gaps do not decrease: %s", gaps)
    return ContinuousLimit(value=phi, periods=periods, gaps=gaps, iterations=iters, flagged=flagged)


def continuous_limit_2d(params: ModelParams, ou: OUParams, cfg: SchemeConfig, grid: StateGrid2D,
                        issuance: bool = False, n_halvings: int = 3, **kwargs) -> ContinuousLimit:
    return continuous_limit(params, cfg, grid, ou=ou, issuance=issuance,
                            n_halvings=n_halvings, **kwargs)
