"""Value iteration for the period map ``T = D o L``.

The period map is a contraction with constant ``exp(-rho T)`` in the sup
norm (one dimension). With random profitability the iteration is measured
in the weighted metric ``sup |phi - psi| / alpha(mu)``, in which the
constant is ``exp(-rho T / 2)``.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Optional

import numpy as np

from .dividend_ops import payout_envelope
from .model import (
    IterationDiagnostics,
    ModelParams,
    OUParams,
    StateGrid2D,
    ValueFn,
    check_same_grid,
)
from .pde_engine import SchemeConfig, solve_one_period

logger = logging.getLogger(__name__)

Payout = Callable[[ValueFn], ValueFn]


def alpha_constant(ou: OUParams, params: ModelParams) -> float:
    """Lower bound for ``A`` in ``alpha(mu) = mu^+ + A``, floored at one."""
    T = params.period
    growth = ou.mu_bar + ou.sigma_tilde * math.sqrt(math.expm1(2 * ou.k * T) / (ou.k * math.pi))
    return max(growth / math.expm1(params.rho * T / 2), 1.0)


def alpha_fn(ou: OUParams, params: ModelParams) -> Callable[[np.ndarray], np.ndarray]:
    a = alpha_constant(ou, params)

    def alpha(mu):
        return np.maximum(np.asarray(mu, dtype=float), 0.0) + a

    alpha.A = a
    return alpha


def weighted_distance(phi: ValueFn, psi: ValueFn, alpha) -> float:
    """``max |phi - psi| / alpha(mu)`` over all nodes."""
    check_same_grid(phi, psi)
    grid = phi.grid
    weights = alpha(grid.mu_nodes) if callable(alpha) else np.asarray(alpha, dtype=float)
    return float(np.max(np.abs(phi.values - psi.values) / weights[:, None]))


def sup_distance(phi: ValueFn, psi: ValueFn) -> float:
    check_same_grid(phi, psi)
    return float(np.max(np.abs(phi.values - psi.values)))


def initial_guess(grid) -> ValueFn:
    """``phi_0(x) = x`` (in every profitability slice)."""
    x = grid.reserve.nodes if isinstance(grid, StateGrid2D) else grid.nodes
    return ValueFn(grid, np.broadcast_to(x, grid.shape))


def apply_T(phi: ValueFn, params: ModelParams, cfg: SchemeConfig, issuance: bool = False,
            ou: Optional[OUParams] = None, payout: Payout = payout_envelope) -> ValueFn:
    """One period: issuance-controlled PDE march followed by the dividend date."""
    return payout(solve_one_period(phi, params, cfg, issuance=issuance, ou=ou))


def iterate(phi0: ValueFn, params: ModelParams, cfg: SchemeConfig, tol: float = 1e-8,
            max_iter: int = 2000, issuance: bool = False, ou: Optional[OUParams] = None,
            payout: Payout = payout_envelope, on_iteration=None
            ) -> tuple[ValueFn, IterationDiagnostics]:
    """Iterate the period map until successive iterates are ``tol`` apart.

    Non-convergence within ``max_iter`` is reported through
    ``diagnostics.converged`` rather than raised.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    two_d = isinstance(phi0.grid, StateGrid2D)
    if two_d:
        alpha = alpha_fn(ou, params)
        distance = lambda a, b: weighted_distance(a, b, alpha)  # noqa: E731
    else:
        distance = sup_distance
    diag = IterationDiagnostics()
    phi = phi0
    for n in range(max_iter):
        nxt = apply_T(phi, params, cfg, issuance=issuance, ou=ou, payout=payout)
        d = distance(nxt, phi)
        diag.record(d)
        if on_iteration is not None:
            on_iteration(diag.iterations, d, diag.ratios[-1])
        phi = nxt
        if d < tol:
            diag.converged = True
            break
    if not diag.converged:
        logger.warning("value iteration stopped after %d iterations at distance %.3g",
                       diag.iterations, diag.distances[-1])
    return phi, diag


def iteration_bound(params: ModelParams, tol: float, initial_distance: float) -> int:
    """A-priori iteration count from the geometric contraction bound."""
    if initial_distance <= tol:
        return 1
    return math.ceil(math.log(tol / initial_distance) / (-params.rho * params.period))
