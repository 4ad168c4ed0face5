"""Monte Carlo evaluation of explicit dividend / issuance policies.

Paths are simulated in fixed-size blocks. Block ``b`` draws its Gaussian
increments from ``SeedSequence(seed, spawn_key=(b, 0))`` and the bridge
uniforms from ``spawn_key=(b, 1)``, so the estimate depends only on
``(seed, n_paths, block_size)`` and not on how blocks are spread over
workers, and switching the bridge correction off leaves the increments
unchanged. Blocks report ``(count, mean, M2)`` and are merged with the
pairwise update of Chan et al., which is associative.
"""

from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import ModelError, ModelParams, OUParams, Policy, a_star, make_cost


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    dt: float = 0.25
    seed: int = 12345
    horizon_periods: Optional[int] = None
    bridge_ruin: bool = True
    stderr_target: float = 1e-5
    block_size: int = 1 << 16

    def __post_init__(self):
        if self.n_paths < 1:
            raise ModelError("n_paths must be at least 1")
        if not self.dt > 0:
            raise ModelError("dt must be positive")

    def horizon(self, params: ModelParams, x_scale: float) -> int:
        """Periods to simulate so the truncated tail is below a tenth of the target error."""
        if self.horizon_periods is not None:
            return self.horizon_periods
        bound = x_scale + a_star(params)
        rt = params.rho * params.period
        return max(1, math.ceil(math.log(bound / (0.1 * self.stderr_target)) / rt))


def _block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block, stream))))


def _crossed(u: Optional[np.ndarray], a, b, var) -> np.ndarray:
    """Ruin during a step from ``a`` to ``b`` with increment variance ``var``.

    ``u`` holds one uniform per path for the bridge test, or None to detect
    only end-of-step ruin.
    """
    down = b < 0
    if u is None:
        return down
    with np.errstate(over="ignore", invalid="ignore"):
        p = np.exp(-2.0 * np.maximum(a, 0.0) * np.maximum(b, 0.0) / var)
    return down | (u < p)


def issuance_schedule(policy: Policy, params: ModelParams) -> Optional[Callable[[float], float]]:
    """Issuance target at ``x = 0`` as a function of time in the period."""
    items = sorted((t, target) for (t, x), target in policy.issuance_targets.items() if x == 0)
    if not items:
        return None
    times = np.array([t for t, _ in items])
    targets = np.array([v for _, v in items])

    def level(t_in_period: float) -> float:
        return float(targets[np.argmin(np.abs(times - t_in_period))])

    return level


def _simulate_block(policy: Policy, x0: float, mu0: Optional[float], params: ModelParams,
                    ou: Optional[OUParams], mc: McConfig, block: int, n: int,
                    horizon: int) -> tuple[int, float, float]:
    rng = _block_rng(mc.seed, block)
    rng_u = _block_rng(mc.seed, block, 1)
    steps = max(1, round(params.period / mc.dt))
    dt = params.period / steps
    cost = make_cost(params)
    issue_at = issuance_schedule(policy, params)
    sig2dt = params.sigma**2 * dt
    sq = math.sqrt(dt)

    x = np.full(n, float(x0))
    mu = None if ou is None else np.full(n, float(mu0))
    total = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    if ou is not None:
        decay = math.exp(-ou.k * dt)
        ou_sd = ou.sigma_tilde * math.sqrt(-math.expm1(-2 * ou.k * dt) / (2 * ou.k))
        rho_c = ou.corr

    for period in range(horizon + 1):
        disc = math.exp(-params.rho * period * params.period)
        # dividend date
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        xs = x[idx]
        ms = None if mu is None else mu[idx]
        b = policy.barrier_at(ms)
        liquidate = xs <= policy.liquidation_at(ms)
        pay = np.where(liquidate, xs, np.maximum(xs - b, 0.0))
        total[idx] += disc * pay
        x[idx] = xs - pay
        alive[idx[liquidate]] = False
        if period == horizon:
            break
        # continuous part of the period
        for s in range(steps):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            xs = x[idx]
            # full-size draws keep path i on the same numbers whatever happens to others
            z = rng.standard_normal(n)[idx]
            if mu is None:
                drift = params.mu
            else:
                ms = mu[idx]
                drift = ms
                zt = rng.standard_normal(n)[idx]
                if rho_c:
                    z = rho_c * zt + math.sqrt(1 - rho_c**2) * z
                mu[idx] = ou.mu_bar + (ms - ou.mu_bar) * decay + ou_sd * zt
            xn = xs + drift * dt + params.sigma * sq * z
            u = rng_u.random(n)[idx] if mc.bridge_ruin else None
            hit = _crossed(u, xs, xn, sig2dt)
            t_now = period * params.period + (s + 1) * dt
            if issue_at is not None and hit.any():
                target = issue_at((s + 1) * dt)
                total[idx[hit]] -= math.exp(-params.rho * t_now) * cost(target)
                xn = np.where(hit, target, xn)
            else:
                alive[idx[hit]] = False
                xn = np.where(hit, 0.0, xn)
            x[idx] = xn
    return _moments(total)


def _moments(values: np.ndarray) -> tuple[int, float, float]:
    m = float(values.mean())
    return values.size, m, float(np.square(values - m).sum())


def _merge(parts) -> tuple[float, float]:
    """Mean and standard error of the pooled sample."""
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:
        tot = n + nb
        delta = mb - mean
        mean += delta * nb / tot
        m2 += m2b + delta * delta * n * nb / tot
        n = tot
    var = m2 / (n - 1) if n > 1 else 0.0
    return mean, math.sqrt(var / n)


def evaluate_policy(policy: Policy, x0: float, params: ModelParams, mc: McConfig,
                    mu0: Optional[float] = None, ou: Optional[OUParams] = None,
                    executor: Optional[Executor] = None) -> tuple[float, float]:
    """Discounted dividends net of issuance costs, with its standard error.

    At every dividend date reserves above the barrier are paid out (all
    reserves when below the liquidation barrier or in a fully liquidating
    slice). Between dates reserves follow Euler steps, profitability the
    exact Ornstein-Uhlenbeck transition. Hitting zero triggers issuance to
    the policy's target when it has one, ruin otherwise.
    """
    if (ou is None) != (mu0 is None):
        raise ModelError("mu0 and ou must be given together")
    horizon = mc.horizon(params, max(x0, float(np.max(policy.dividend_barrier))))
    blocks = [(b, min(mc.block_size, mc.n_paths - b * mc.block_size))
              for b in range(math.ceil(mc.n_paths / mc.block_size))]
    args = [(policy, x0, mu0, params, ou, mc, b, n, horizon) for b, n in blocks]
    if executor is None:
        parts = [_simulate_block(*a) for a in args]
    else:
        parts = list(executor.map(_simulate_block, *zip(*args)))
    return _merge(parts)


def one_period_expectation(phi: Callable, x0: float, params: ModelParams, horizon: float,
                           n_paths: int, seed: int = 0, mu0: Optional[float] = None,
                           ou: Optional[OUParams] = None, n_steps: int = 1,
                           block_size: int = 1 << 20) -> tuple[float, float]:
    """``E[exp(-rho t) phi(X_t, mu_t) 1{no ruin before t}]`` with no control.

    In one dimension a single Gaussian step with the bridge crossing
    probability is exact. With random profitability the horizon is split
    into ``n_steps`` Euler steps for reserves and exact steps for ``mu``.
    """
    dt = horizon / n_steps
    parts = []
    for b in range(math.ceil(n_paths / block_size)):
        n = min(block_size, n_paths - b * block_size)
        rng, rng_u = _block_rng(seed, b), _block_rng(seed, b, 1)
        x = np.full(n, float(x0))
        mu = None if ou is None else np.full(n, float(mu0))
        alive = np.ones(n, dtype=bool)
        for _ in range(n_steps):
            z = rng.standard_normal(n)
            if mu is None:
                xn = x + params.mu * dt + params.sigma * math.sqrt(dt) * z
            else:
                xn = x + mu * dt + params.sigma * math.sqrt(dt) * z
                mean, sd = ou.transition(mu, dt)
                mu = mean + sd * rng.standard_normal(n)
            alive &= ~_crossed(rng_u.random(n), x, xn, params.sigma**2 * dt)
            x = xn
        val = np.exp(-params.rho * horizon) * np.where(alive, phi(x) if mu is None else phi(x, mu), 0.0)
        parts.append(_moments(val))
    return _merge(parts)
