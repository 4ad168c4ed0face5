"""One-period optimal issuance problem solved by a semi-Lagrangian march.

The layer variable ``tau`` is the time remaining until the next dividend
date: ``v(0, .) = phi`` and the one-period value is ``v(period, .)``. Each
step of size ``dt`` performs

1. advection: every node samples the previous layer at the characteristic
   foot by monotone linear interpolation,
2. diffusion with implicitness weight ``theta`` (tridiagonal solves),
3. discounting by ``exp(-rho dt)``,
4. the issuance obstacle ``v >= I(v)`` and the ruin / issuance value at
   ``x = 0``.

At ``x_max`` the layer keeps the slope ``edge_slope * exp(-rho tau)``
(``edge_slope = 1`` for data growing like ``x``, as every payout-envelope
output does); feet above
``x_max`` use that linear continuation and feet below zero take the value
at ``x = 0``. In two dimensions the profitability axis carries the
Ornstein-Uhlenbeck drift (exact conditional mean at the foot), implicit
diffusion mirrored at the upper edge and switched off at the lower edge.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from scipy import sparse
from scipy.linalg import lapack

from .dividend_ops import _issuance, _issuance_targets
from .model import (
    ModelError,
    ModelParams,
    OUParams,
    ReserveGrid,
    StateGrid2D,
    ValueFn,
    reserve_grid,
)


class SchemeError(ModelError):
    """The requested time step breaks monotonicity of the scheme."""


@dataclass(frozen=True)
class SchemeConfig:
    n_t: int = 256
    theta: float = 1.0
    obstacle_mode: Literal["every_node", "boundary"] = "every_node"
    interpolation: str = "linear"
    # slope of the data beyond x_max; the layer at tau keeps edge_slope * exp(-rho tau)
    edge_slope: float = 1.0

    def __post_init__(self):
        if self.n_t < 2:
            raise SchemeError(f"n_t must be at least 2, got {self.n_t}")
        if not 0.0 <= self.theta <= 1.0:
            raise SchemeError(f"theta must lie in [0, 1], got {self.theta}")
        if self.obstacle_mode not in ("every_node", "boundary"):
            raise SchemeError(f"unknown obstacle_mode {self.obstacle_mode!r}")
        if self.interpolation != "linear":
            raise SchemeError("only monotone linear interpolation is supported")
        if not (math.isfinite(self.edge_slope) and self.edge_slope >= 0):
            raise SchemeError(f"edge_slope must be finite and non-negative, got {self.edge_slope}")

    def dt(self, params: ModelParams) -> float:
        return params.period / self.n_t

    def replace(self, **changes) -> "SchemeConfig":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return SchemeConfig(**values)


@dataclass
class MonotonicityReport:
    ok: bool
    min_weight: float
    row_sum_error: float
    binding: Optional[str] = None
    details: dict = field(default_factory=dict)


@dataclass
class IssuanceLayer:
    """Issuance activity of one time layer."""

    tau: float
    time_in_period: float
    active: np.ndarray  # node indices (or (mu, x) index pairs) where issuance is optimal
    targets: np.ndarray  # post-issuance reserve level at those nodes


def _explicit_weights(cfg: SchemeConfig, params: ModelParams, grid, ou: Optional[OUParams]):
    dt = cfg.dt(params)
    x_grid = reserve_grid(grid)
    weights = {"x": 1.0 - (1.0 - cfg.theta) * params.sigma**2 * dt / x_grid.h**2}
    if isinstance(grid, StateGrid2D) and ou is not None:
        weights["mu"] = 1.0 - (1.0 - cfg.theta) * ou.sigma_tilde**2 * dt / grid.h_mu**2
    return weights


def check_monotone(cfg: SchemeConfig, params: ModelParams, grid,
                   ou: Optional[OUParams] = None, assemble: bool = True) -> MonotonicityReport:
    """Inspect the stencil weights of one scheme step.

    The explicit diffusion weight must be non-negative (the implicit part is
    an M-matrix for any ``dt``), interpolation weights lie in ``[0, 1]`` by
    construction, and every row of the assembled one-step map must sum to
    ``exp(-rho dt)``. A non-zero correlation adds an explicit central
    mixed-derivative stencil, which is never monotone.
    """
    weights = _explicit_weights(cfg, params, grid, ou)
    name, w_min = min(weights.items(), key=lambda kv: kv[1])
    binding = None
    ok = w_min >= 0
    if not ok:
        binding = f"explicit {name}-diffusion weight {w_min:.3g} < 0; need dt <= h^2 / sigma^2 / (1 - theta)"
    if ou is not None and ou.corr != 0:
        ok = False
        binding = binding or "explicit mixed-derivative term (corr != 0) has negative weights"

    row_err = 0.0
    details = {"weights": weights}
    if assemble and ok and isinstance(grid, ReserveGrid) and grid.n_x <= 4001:
        stepper = _Stepper(grid, params, cfg)
        # linear part of the step: the boundary value is carried by node 0
        eye = np.eye(grid.n_x)
        cols = stepper.linear_part(eye)
        details["min_entry"] = float(cols.min())
        row_err = float(np.max(np.abs(cols.sum(axis=1) - math.exp(-params.rho * stepper.dt))))
        if cols.min() < -1e-12:
            ok = False
            binding = f"assembled step has a negative weight {cols.min():.3g}"
        w_min = min(w_min, float(cols.min()))
    return MonotonicityReport(ok=ok, min_weight=float(w_min), row_sum_error=row_err,
                              binding=binding, details=details)


def _advection_operator(pos: np.ndarray, rows_lo: np.ndarray, rows_hi: np.ndarray,
                        w_hi: np.ndarray, n_x: int, h: float):
    """Sparse linear-interpolation operator for fixed characteristic feet.

    ``pos[j, i]`` is the fractional reserve index of the foot of node
    ``(j, i)``; the foot lies between source rows ``rows_lo[j]`` and
    ``rows_hi[j]`` with weight ``w_hi[j]`` on the upper one. Feet below zero
    clamp to node 0. Feet above the last node use the linear continuation,
    whose slope-dependent part is returned separately as ``ext`` so that
    ``advected = M @ u.ravel() + slope * ext``.
    """
    n_rows = pos.shape[0]
    pos = np.maximum(pos, 0.0)
    k = np.minimum(np.floor(pos).astype(np.intp), n_x - 2)
    frac = np.minimum(pos - k, 1.0)
    beyond = np.maximum(pos - (n_x - 1), 0.0)
    target = np.arange(n_rows * n_x).reshape(n_rows, n_x)
    data, ri, ci = [], [], []
    for src, wr in ((rows_lo, 1.0 - w_hi), (rows_hi, w_hi)):
        base = (src * n_x)[:, None]
        wr = np.broadcast_to(np.asarray(wr, dtype=float).reshape(-1, 1), pos.shape)
        for col, wc in ((k, 1.0 - frac), (k + 1, frac)):
            data.append((wr * wc).ravel())
            ri.append(target.ravel())
            ci.append((base + col).ravel())
    m = sparse.csr_matrix((np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))),
                          shape=(n_rows * n_x,) * 2)
    ext = (beyond * h).reshape(n_rows, n_x)
    return m, ext


class _Tridiag:
    """LU-factored tridiagonal matrix given in banded storage."""

    def __init__(self, ab: np.ndarray):
        self.lu = lapack.dgttrf(ab[2, :-1], ab[1], ab[0, 1:])
        if self.lu[-1] != 0:
            raise SchemeError("singular diffusion matrix")

    def solve(self, b: np.ndarray) -> np.ndarray:
        dl, d, du, du2, ipiv, _ = self.lu
        x, info = lapack.dgttrs(dl, d, du, du2, ipiv, b)
        return x


def _diffusion_bands(n: int, a: float) -> np.ndarray:
    """Implicit matrix: Dirichlet row 0, ``-a, 1+2a, -a`` inside, Neumann row ``n-1``."""
    ab = np.zeros((3, n))
    ab[0, 2:] = -a
    ab[1, 1:-1] = 1.0 + 2.0 * a
    ab[2, :-2] = -a
    ab[1, 0] = 1.0
    ab[1, -1] = 1.0
    ab[2, -2] = -1.0
    return ab


def _mu_bands(n: int, b: float) -> np.ndarray:
    """Profitability diffusion: none at the lower edge, mirrored at the upper edge."""
    ab = np.zeros((3, n))
    ab[0, 2:] = -b
    ab[1, 1:] = 1.0 + 2.0 * b
    ab[2, :-2] = -b
    ab[1, 0] = 1.0
    ab[2, -2] = -2.0 * b
    return ab


def _explicit_diffusion(w: np.ndarray, c: float) -> np.ndarray:
    if c == 0.0:
        return w
    out = w.copy()
    out[..., 1:-1] += c * (w[..., :-2] - 2.0 * w[..., 1:-1] + w[..., 2:])
    return out


class _Stepper:
    """Precomputed operators of one scheme step on a fixed grid.

    Values are handled as ``(n_rows, n_x)`` arrays; a one-dimensional grid
    is a single row.
    """

    def __init__(self, grid, params: ModelParams, cfg: SchemeConfig,
                 ou: Optional[OUParams] = None, issuance: bool = False):
        two_d = isinstance(grid, StateGrid2D)
        report = check_monotone(cfg, params, grid, ou, assemble=False)
        if not report.ok:
            if ou is not None and ou.corr != 0 and min(report.details["weights"].values()) >= 0:
                warnings.warn(report.binding, RuntimeWarning, stacklevel=3)
            else:
                raise SchemeError(report.binding)
        self.params, self.cfg, self.issuance = params, cfg, issuance
        self.dt = dt = cfg.dt(params)
        xg = reserve_grid(grid)
        self.h = xg.h
        self.x = xg.nodes
        self.x_ext = np.append(self.x, xg.x_max + xg.h)
        n_x = xg.n_x
        if two_d:
            mu = grid.mu_nodes
            foot_mu, _ = ou.transition(mu, dt)
            pm = (foot_mu - grid.mu_min) / grid.h_mu
            lo = np.clip(np.floor(pm).astype(np.intp), 0, grid.n_mu - 2)
            w_hi = np.clip(pm - lo, 0.0, 1.0)
            hi = lo + 1
        else:
            mu = np.array([params.mu])
            lo = hi = np.zeros(1, dtype=np.intp)
            w_hi = np.zeros(1)
        self.shape = (mu.size, n_x)
        pos = np.arange(n_x)[None, :] + (mu * dt / self.h)[:, None]
        self.advect, self.ext = _advection_operator(pos, lo, hi, w_hi, n_x, self.h)

        d = 0.5 * params.sigma**2 * dt / self.h**2
        self.solve_x = _Tridiag(_diffusion_bands(n_x, cfg.theta * d))
        self.cx_explicit = (1.0 - cfg.theta) * d
        self.solve_mu = None
        self.cmu_explicit = 0.0
        self.mixed = 0.0
        if two_d:
            b = 0.5 * ou.sigma_tilde**2 * dt / grid.h_mu**2
            self.solve_mu = _Tridiag(_mu_bands(grid.n_mu, cfg.theta * b))
            self.cmu_explicit = (1.0 - cfg.theta) * b
            self.mixed = ou.corr * params.sigma * ou.sigma_tilde * dt / (4.0 * self.h * grid.h_mu)
        self.disc = math.exp(-params.rho * dt)

    def _diffuse(self, w: np.ndarray, g: np.ndarray, slope: float) -> np.ndarray:
        if self.mixed != 0.0:
            cross = np.zeros_like(w)
            cross[1:-1, 1:-1] = w[2:, 2:] - w[2:, :-2] - w[:-2, 2:] + w[:-2, :-2]
            w = w + self.mixed * cross
        w = _explicit_diffusion(w, self.cx_explicit)
        rhs = np.asfortranarray(w.T)
        rhs[0] = g
        rhs[-1] = self.h * slope
        y = self.solve_x.solve(rhs).T
        if self.solve_mu is not None:
            if self.cmu_explicit:
                z = y.copy()
                z[1:-1] += self.cmu_explicit * (y[:-2] - 2 * y[1:-1] + y[2:])
                z[-1] += 2 * self.cmu_explicit * (y[-2] - y[-1])
                y = z
            y = self.solve_mu.solve(np.asfortranarray(y))
        return self.disc * y

    def linear_part(self, u: np.ndarray) -> np.ndarray:
        """Homogeneous part of a step for a stack of one-dimensional inputs ``(n_x, k)``.

        Used for weight inspection: node 0 carries its own value through the
        step, and the slope terms at ``x_max`` are dropped.
        """
        cols = []
        for col in np.asarray(u, dtype=float).T:
            w = (self.advect @ col).reshape(self.shape)
            cols.append(self._diffuse(w, np.full(self.shape[0], col[0]), 0.0)[0])
        return np.array(cols).T

    def step(self, u: np.ndarray, tau: float, trace: Optional[list] = None) -> np.ndarray:
        slope = self.cfg.edge_slope * math.exp(-self.params.rho * tau)
        w = (self.advect @ u.ravel()).reshape(self.shape) + slope * self.ext
        g = u[:, 0] if self.issuance else np.zeros(self.shape[0])
        y = self._diffuse(w, g, slope)
        return self._boundary(np.ascontiguousarray(y), tau + self.dt, trace)

    def _boundary(self, y: np.ndarray, tau_new: float, trace) -> np.ndarray:
        if not self.issuance:
            y[:, 0] = 0.0
            return y
        p = self.params
        env = _issuance(y, self.x, p.lambda_f, p.lambda_p, p.zeta_max)
        active = np.zeros(y.shape, dtype=bool)
        if self.cfg.obstacle_mode == "every_node":
            active[:, 1:] = env[:, 1:] > y[:, 1:]
            if active.any():
                y[:, 1:] = np.where(active[:, 1:], env[:, 1:], y[:, 1:])
                env = _issuance(y, self.x, p.lambda_f, p.lambda_p, p.zeta_max)
        active[:, 0] = env[:, 0] > 0.0
        y[:, 0] = np.maximum(env[:, 0], 0.0)
        if trace is not None:
            idx = np.argwhere(active)
            # targets are read off the layer after the obstacle, the one the policy faces
            targets = self.x_ext[_issuance_targets(y, self.x, p.lambda_p, p.zeta_max, idx)]
            trace.append(IssuanceLayer(
                tau=tau_new, time_in_period=p.period - tau_new,
                active=idx[:, 1] if self.shape[0] == 1 else idx, targets=targets))
        return y


def _stepper(grid, params, cfg, ou, issuance):
    if isinstance(grid, StateGrid2D) and ou is None:
        raise ModelError("a two-dimensional grid needs OUParams")
    return _Stepper(grid, params, cfg, ou if isinstance(grid, StateGrid2D) else None, issuance)


def step_one_dt(v: ValueFn, tau: float, params: ModelParams, cfg: SchemeConfig,
                issuance: bool = False, ou: Optional[OUParams] = None) -> ValueFn:
    """Advance layer ``v`` at remaining time ``tau`` by one step ``dt``."""
    dt = cfg.dt(params)
    if tau + dt > params.period * (1 + 1e-12):
        raise ModelError("step would leave the period")
    stepper = _stepper(v.grid, params, cfg, ou, issuance)
    u = np.array(v.values).reshape(stepper.shape)
    return v.with_values(stepper.step(u, tau).reshape(v.grid.shape))


def _march(phi: ValueFn, params, cfg, ou, issuance, trace) -> ValueFn:
    stepper = _stepper(phi.grid, params, cfg, ou, issuance)
    u = np.array(phi.values).reshape(stepper.shape)
    for n in range(cfg.n_t):
        u = stepper.step(u, n * stepper.dt, trace)
    return phi.with_values(u.reshape(phi.grid.shape))


def march_layers(phi: ValueFn, params: ModelParams, cfg: SchemeConfig, issuance: bool = False,
                 ou: Optional[OUParams] = None, trace: Optional[list] = None):
    """Yield ``(tau, layer)`` for ``tau = 0, dt, ..., period``."""
    stepper = _stepper(phi.grid, params, cfg, ou, issuance)
    u = np.array(phi.values).reshape(stepper.shape)
    yield 0.0, phi
    for n in range(cfg.n_t):
        u = stepper.step(u, n * stepper.dt, trace)
        yield (n + 1) * stepper.dt, phi.with_values(u.reshape(phi.grid.shape))


def solve_one_period_1d(phi: ValueFn, params: ModelParams, cfg: SchemeConfig,
                        issuance: bool = False, trace: Optional[list] = None) -> ValueFn:
    """One-period value with issuance as the only control (no dividends)."""
    if isinstance(phi.grid, StateGrid2D):
        raise ModelError("expected a one-dimensional value function")
    return _march(phi, params, cfg, None, issuance, trace)


def solve_one_period_2d(phi: ValueFn, params: ModelParams, ou: OUParams, cfg: SchemeConfig,
                        issuance: bool = False, trace: Optional[list] = None) -> ValueFn:
    """Two-dimensional counterpart with Ornstein-Uhlenbeck profitability."""
    if not isinstance(phi.grid, StateGrid2D):
        raise ModelError("expected a value function on a StateGrid2D")
    return _march(phi, params, cfg, ou, issuance, trace)


def solve_one_period(phi: ValueFn, params: ModelParams, cfg: SchemeConfig,
                     issuance: bool = False, ou: Optional[OUParams] = None,
                     trace: Optional[list] = None) -> ValueFn:
    return _march(phi, params, cfg, ou, issuance, trace)
