"""Problem data, grids and sampled value functions.

Everything here is an immutable value object. Arrays stored on a
:class:`ValueFn` are flagged read-only so a value function can be shared
between operators and worker processes without defensive copies.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np


class ModelError(ValueError):
    """Invalid problem data or a structural mismatch between grids."""


@dataclass(frozen=True)
class ModelParams:
    """Scalar coefficients of the dividend problem.

    Units: reserves for ``lambda_f`` and ``zeta_max``, reserves per year for
    ``mu``, reserves per sqrt(year) for ``sigma``, 1/year for ``rho`` and
    years for ``period``.
    """

    mu: float = 0.01
    sigma: float = 0.01
    rho: float = 0.04
    period: float = 1.0
    lambda_f: float = 0.1
    lambda_p: float = 0.0
    zeta_max: float = math.inf

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelError(f"sigma must be positive, got {self.sigma}")
        if not self.rho > 0:
            raise ModelError(f"rho must be positive, got {self.rho}")
        if not self.period > 0:
            raise ModelError(f"period must be positive, got {self.period}")
        if not self.lambda_f > 0:
            raise ModelError(f"lambda_f must be positive, got {self.lambda_f}")
        if not self.lambda_p >= 0:
            raise ModelError(f"lambda_p must be non-negative, got {self.lambda_p}")
        if not self.zeta_max > 0:
            raise ModelError(f"zeta_max must be positive, got {self.zeta_max}")
        if not math.isfinite(self.mu):
            raise ModelError("mu must be finite")

    def replace(self, **changes) -> "ModelParams":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return ModelParams(**values)


@dataclass(frozen=True)
class OUParams:
    """Ornstein-Uhlenbeck profitability ``dmu = k (mu_bar - mu) dt + sigma_tilde dW~``."""

    k: float = 0.5
    mu_bar: float = 0.15
    sigma_tilde: float = 0.3
    corr: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise ModelError(f"k must be positive, got {self.k}")
        if not self.sigma_tilde > 0:
            raise ModelError(f"sigma_tilde must be positive, got {self.sigma_tilde}")
        if not abs(self.corr) <= 1:
            raise ModelError(f"corr must lie in [-1, 1], got {self.corr}")

    def transition(self, mu: np.ndarray, dt: float) -> tuple[np.ndarray, float]:
        """Mean and standard deviation of ``mu_{t+dt}`` given ``mu_t = mu``."""
        decay = math.exp(-self.k * dt)
        mean = self.mu_bar + (np.asarray(mu, dtype=float) - self.mu_bar) * decay
        sd = self.sigma_tilde * math.sqrt((1.0 - decay**2) / (2.0 * self.k))
        return mean, sd


@dataclass(frozen=True)
class ReserveGrid:
    """Uniform grid ``0 = x_0 < ... < x_{n_x-1} = x_max``."""

    x_max: float
    n_x: int

    def __post_init__(self):
        if self.n_x < 3:
            raise ModelError(f"n_x must be at least 3, got {self.n_x}")
        if not self.x_max > 0:
            raise ModelError(f"x_max must be positive, got {self.x_max}")

    @property
    def h(self) -> float:
        return self.x_max / (self.n_x - 1)

    @property
    def nodes(self) -> np.ndarray:
        x = np.arange(self.n_x) * self.h
        x[-1] = self.x_max
        return x

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_x,)

    def snap(self, x: float) -> int:
        """Index of the node nearest to ``x``."""
        if not 0.0 <= x <= self.x_max * (1 + 1e-12):
            raise ModelError(f"{x} lies outside [0, {self.x_max}]")
        return int(min(self.n_x - 1, round(x / self.h)))


@dataclass(frozen=True)
class StateGrid2D:
    """Tensor grid over profitability (rows) and reserves (columns)."""

    reserve: ReserveGrid
    mu_min: float
    mu_max: float
    n_mu: int

    def __post_init__(self):
        if not self.mu_min < self.mu_max:
            raise ModelError("mu_min must be smaller than mu_max")
        if self.n_mu < 3:
            raise ModelError(f"n_mu must be at least 3, got {self.n_mu}")

    @property
    def h_mu(self) -> float:
        return (self.mu_max - self.mu_min) / (self.n_mu - 1)

    @property
    def mu_nodes(self) -> np.ndarray:
        return np.linspace(self.mu_min, self.mu_max, self.n_mu)

    @property
    def nodes(self) -> np.ndarray:
        return self.reserve.nodes

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_mu, self.reserve.n_x)


Grid = Union[ReserveGrid, StateGrid2D]


def reserve_grid(grid: Grid) -> ReserveGrid:
    return grid.reserve if isinstance(grid, StateGrid2D) else grid


@dataclass(frozen=True, eq=False)
class ValueFn:
    """A function sampled on a grid.

    In two dimensions ``values`` has shape ``(n_mu, n_x)`` so that every
    operator acting on reserves works along the last axis.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != self.grid.shape:
            raise ModelError(f"values of shape {v.shape} do not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ModelError("value function contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return reserve_grid(self.grid).nodes

    def excess(self) -> np.ndarray:
        """``value(x) - x``."""
        return self.values - self.x

    def with_values(self, values: np.ndarray) -> "ValueFn":
        return ValueFn(self.grid, values)

    def __call__(self, x: float) -> float:
        if isinstance(self.grid, StateGrid2D):
            raise ModelError("pointwise evaluation is only defined in one dimension")
        return float(np.interp(x, self.x, self.values))

    def in_cone(self, a: float, atol: float = 1e-10) -> bool:
        """Membership test for ``x <= phi <= x + a`` with monotone excess."""
        e = self.excess()
        return bool(
            np.all(e >= -atol)
            and np.all(e <= a + atol)
            and np.all(np.diff(e, axis=-1) >= -atol)
        )


def check_same_grid(a: ValueFn, b: ValueFn) -> None:
    if a.grid != b.grid:
        raise ModelError("value functions live on different grids")


@dataclass(frozen=True)
class Policy:
    """Dividend and issuance rules extracted from a value function.

    Barrier arrays have one entry per profitability slice (a single entry in
    one dimension). ``liquidation_barrier`` is NaN where there is no
    pay-to-zero region; ``fully_liquidating`` marks slices with barrier 0.
    ``issuance_targets`` maps ``(time_in_period, x)`` to the post-issuance
    reserve level, and is empty where no issuance happens.
    """

    dividend_barrier: np.ndarray
    liquidation_barrier: np.ndarray
    fully_liquidating: np.ndarray
    mu: Optional[np.ndarray] = None
    issuance_targets: dict = field(default_factory=dict)

    def barrier_at(self, mu: Optional[np.ndarray] = None) -> np.ndarray:
        """Dividend barrier at profitability ``mu`` (nearest slice)."""
        if self.mu is None or mu is None:
            return np.full(np.shape(mu) if mu is not None else (), self.dividend_barrier[0])
        return self.dividend_barrier[self._slice(mu)]

    def liquidation_at(self, mu: Optional[np.ndarray] = None) -> np.ndarray:
        lower = np.where(np.isnan(self.liquidation_barrier), -np.inf, self.liquidation_barrier)
        lower = np.where(self.fully_liquidating, np.inf, lower)
        if self.mu is None or mu is None:
            return np.full(np.shape(mu) if mu is not None else (), lower[0])
        return lower[self._slice(mu)]

    def _slice(self, mu: np.ndarray) -> np.ndarray:
        h = self.mu[1] - self.mu[0]
        idx = np.rint((np.asarray(mu) - self.mu[0]) / h).astype(int)
        return np.clip(idx, 0, self.mu.size - 1)


@dataclass
class IterationDiagnostics:
    """Per-iteration record of a fixed-point run."""

    distances: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    ratio_floor: float = 1e-13

    def record(self, distance: float) -> None:
        if self.distances and self.distances[-1] > self.ratio_floor:
            self.ratios.append(distance / self.distances[-1])
        else:
            self.ratios.append(float("nan"))
        self.distances.append(float(distance))
        self.iterations += 1

    def rows(self):
        for n, (d, r) in enumerate(zip(self.distances, self.ratios), start=1):
            yield n, d, r


def make_cost(params: ModelParams):
    """Issuance cost ``c(zeta) = (lambda_f + (1 + lambda_p) zeta) 1{zeta > 0}``."""

    def cost(zeta):
        z = np.asarray(zeta, dtype=float)
        if np.any(z < 0):
            raise ModelError("issuance size must be non-negative")
        c = np.where(z > 0, params.lambda_f + (1.0 + params.lambda_p) * z, 0.0)
        return float(c) if c.ndim == 0 else c

    return cost


def a_star(params: ModelParams) -> float:
    """Smallest excess bound ``A`` with ``e^{-rho T}(A + mu T) <= A``."""
    rt = params.rho * params.period
    return max(params.mu, 0.0) * params.period / math.expm1(rt)


def default_x_max(params: ModelParams, barrier_estimate: float = 0.0) -> float:
    """Truncation edge for the reserve axis: four times the larger scale."""
    return 4.0 * max(barrier_estimate, a_star(params) + max(params.mu, 0.0) * params.period)


def warn_if_domain_small(barrier: float, x_max: float) -> None:
    if barrier > 0.5 * x_max:
        warnings.warn(
            f"dividend barrier {barrier:.4g} exceeds half the domain [0, {x_max:.4g}]; "
            "the artificial boundary may bias the solution",
            RuntimeWarning,
            stacklevel=3,
        )
