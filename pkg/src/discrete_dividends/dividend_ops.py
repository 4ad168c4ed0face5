"""Dividend-date payout, issuance interventions and policy extraction.

All operators act along the reserve axis (the last axis of the values
array), so the same code serves one-dimensional value functions and
profitability slices of two-dimensional ones.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .model import ModelError, ModelParams, Policy, StateGrid2D, ValueFn, reserve_grid


def _payout(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    # the outer max only removes rounding where no dividend is paid
    return np.maximum(values, x + np.maximum.accumulate(values - x, axis=-1))


def payout_envelope(phi: ValueFn) -> ValueFn:
    """Optimal dividend-date payout ``sup_{0<=l<=x} phi(x - l) + l``.

    On a grid this is ``x + max_{y<=x} (phi(y) - y)``, one prefix-maximum
    sweep per slice.
    """
    return phi.with_values(_payout(phi.values, phi.x))


def _fixed_payout(values: np.ndarray, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    idx = np.broadcast_to(idx, values.shape[:-1])
    at_barrier = np.take_along_axis(values, idx[..., None], axis=-1)
    x_b = x[idx][..., None]
    above = np.arange(x.size) > idx[..., None]
    return np.where(above, at_barrier + (x - x_b), values)


def fixed_barrier_payout(phi: ValueFn, barrier) -> ValueFn:
    """Pay ``x - barrier`` whenever reserves exceed ``barrier``.

    ``barrier`` is a scalar, or one value per profitability slice in two
    dimensions. Barriers are snapped to the nearest node.
    """
    grid = reserve_grid(phi.grid)
    b = np.atleast_1d(np.asarray(barrier, dtype=float))
    idx = np.array([grid.snap(float(v)) for v in b.ravel()]).reshape(b.shape)
    if phi.values.ndim == 1:
        if idx.size != 1:
            raise ModelError("one-dimensional payout needs a scalar barrier")
        idx = idx.reshape(())
    return phi.with_values(_fixed_payout(phi.values, phi.x, idx))


def _issuance_objective(values: np.ndarray, x: np.ndarray, lambda_p: float) -> np.ndarray:
    """``phi(y) - (1 + lambda_p) y`` on the nodes plus the extension node ``x_max + h``."""
    h = x[1] - x[0]
    w = values - (1.0 + lambda_p) * x
    # extension node: phi(x_max) + h - (1 + lambda_p)(x_max + h)
    return np.concatenate([w, w[..., -1:] - lambda_p * h], axis=-1)


def _window(x: np.ndarray, zeta_max: float) -> int:
    m = int(min(x.size, np.floor(zeta_max / (x[1] - x[0]) + 1e-9)))
    if m < 1:
        raise ModelError("zeta_max is smaller than the grid spacing")
    return m


def _issuance(values: np.ndarray, x: np.ndarray, lambda_f: float, lambda_p: float,
              zeta_max: float = np.inf) -> np.ndarray:
    """Issuance envelope over node targets above each node.

    Candidate targets are the nodes above ``x`` plus one extension node at
    ``x_max + h`` carrying the slope-one continuation.
    """
    n = x.size
    w = _issuance_objective(values, x, lambda_p)
    m = _window(x, zeta_max)
    if m >= n:
        best = np.maximum.accumulate(w[..., ::-1], axis=-1)[..., ::-1][..., 1:]
    else:
        padded = np.concatenate([w, np.full(w.shape[:-1] + (m,), -np.inf)], axis=-1)
        win = np.lib.stride_tricks.sliding_window_view(padded[..., 1:], m, axis=-1)[..., :n, :]
        best = win.max(axis=-1)
    return (1.0 + lambda_p) * x - lambda_f + best


def _issuance_targets(values: np.ndarray, x: np.ndarray, lambda_p: float, zeta_max: float,
                      nodes: np.ndarray) -> np.ndarray:
    """Smallest optimal target index for each ``(row, col)`` in ``nodes``.

    Objective values within the rounding tolerance of the maximum count as
    ties. Index ``n_x`` denotes the extension node.
    """
    values = np.atleast_2d(values)
    w = _issuance_objective(values, x, lambda_p)
    m = _window(x, zeta_max)
    tol = _tie_tol(values)
    out = np.empty(len(nodes), dtype=int)
    for k, (r, i) in enumerate(nodes):
        cand = w[r, i + 1:i + 1 + m]
        out[k] = i + 1 + int(np.argmax(cand >= cand.max() - tol))
    return out


def issuance_envelope(phi: ValueFn, params: ModelParams) -> ValueFn:
    """Best value reachable by one immediate issuance, ``sup_z phi(x+z) - c(z)``."""
    return phi.with_values(_issuance(phi.values, phi.x, params.lambda_f, params.lambda_p,
                                     params.zeta_max))


def issuance_target(phi: ValueFn, params: ModelParams, x: float, mu_index: Optional[int] = None
                    ) -> Optional[float]:
    """Smallest optimal issuance size at node ``x``, or None if issuing does not pay."""
    grid = reserve_grid(phi.grid)
    i = grid.snap(x)
    values = phi.values
    if values.ndim == 2:
        if mu_index is None:
            raise ModelError("mu_index is required in two dimensions")
        values = values[mu_index]
    env = _issuance(values, phi.x, params.lambda_f, params.lambda_p, params.zeta_max)
    if not env[i] > values[i]:
        return None
    j = _issuance_targets(values, phi.x, params.lambda_p, params.zeta_max, [(0, i)])[0]
    return float((j - i) * grid.h)


def _tie_tol(values: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(np.max(np.abs(values))))


def _barrier_indices(values: np.ndarray, x: np.ndarray, atol: float):
    e = values - x
    top = e.max(axis=-1, keepdims=True)
    upper = np.argmax(e >= top - atol, axis=-1)
    # pay-to-zero region: every node on [0, x_i] has excess <= phi(0)
    inside = np.maximum.accumulate(e, axis=-1) <= e[..., :1] + atol
    run = np.argmin(inside, axis=-1)
    run = np.where(inside.all(axis=-1), x.size, run)  # number of leading True
    lower = np.minimum(run - 1, upper - 1)
    return upper, lower


def extract_barriers(phi: ValueFn, atol: Optional[float] = None) -> Policy:
    """Dividend barrier (and liquidation barrier) per profitability slice.

    The dividend barrier is the smallest node maximizing ``phi(y) - y``.
    The liquidation barrier is the top of the region ``[0, x]`` on which a
    dividend date pays everything out; it is NaN when that region is empty.
    """
    atol = _tie_tol(phi.values) if atol is None else atol
    x = phi.x
    values = np.atleast_2d(phi.values)
    upper, lower = _barrier_indices(values, x, atol)
    full = upper == 0
    liq = np.where(lower >= 1, x[np.maximum(lower, 0)], np.nan)
    liq = np.where(full, np.nan, liq)
    mu = phi.grid.mu_nodes if isinstance(phi.grid, StateGrid2D) else None
    return Policy(dividend_barrier=x[upper], liquidation_barrier=liq,
                  fully_liquidating=full, mu=mu)
