"""Monte Carlo simulation of lognormal FMM rates under the risk-neutral measure.

Paths are generated in fixed-size blocks. Block ``b`` draws its normals from
``SeedSequence(seed, spawn_key=(b,))``, so path ``i`` is the same whatever the
number of workers, and block results are merged in block order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .market_model import DomainError, MarketData, gamma_all
from .payoffs import SwaptionSpec, deflated_swap_value

Z_95 = 1.959963984540054


class CorrelationFactorError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class MCConfig:
    num_paths: int = 1_000_000
    num_steps: int = 100
    seed: int = 12345
    antithetic: bool = False
    block_size: int = 1 << 15
    workers: int = 1

    def __post_init__(self):
        if self.num_paths < 2:
            raise DomainError("num_paths must be at least 2")
        if self.num_steps < 1:
            raise DomainError("num_steps must be at least 1")
        if self.antithetic and (self.num_paths % 2 or self.block_size % 2):
            raise DomainError("antithetic sampling needs even path and block counts")


@dataclass(frozen=True)
class CIEstimate:
    mean: float
    half_width: float
    std_error: float
    num_paths: int

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high


def correlation_factor(rho, tol: float = 1e-12) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == rho``.

    Falls back to a pivot-tolerant elimination when ``rho`` is only
    semi-definite (e.g. perfectly correlated rates).
    """
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise CorrelationFactorError("correlation must be a square matrix")
    if not np.allclose(rho, rho.T) or not np.allclose(np.diag(rho), 1.0):
        raise CorrelationFactorError("correlation must be symmetric with unit diagonal")
    try:
        return np.linalg.cholesky(rho)
    except np.linalg.LinAlgError:
        pass
    n = rho.shape[0]
    low = np.zeros_like(rho)
    for j in range(n):
        pivot = rho[j, j] - low[j, :j] @ low[j, :j]
        if pivot < -tol:
            raise CorrelationFactorError("correlation matrix is not positive semi-definite")
        if pivot <= tol:
            rest = rho[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]
            if np.any(np.abs(rest) > 1e-8):
                raise CorrelationFactorError("correlation matrix is not positive semi-definite")
            continue
        low[j, j] = math.sqrt(pivot)
        low[j + 1 :, j] = (rho[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


def simulation_times(md: MarketData, horizon: float, num_steps: int) -> np.ndarray:
    """Uniform grid on ``[0, horizon]`` merged with every tenor date inside it."""
    uniform = np.linspace(0.0, horizon, num_steps + 1)
    dates = md.tenor.dates[md.tenor.dates <= horizon]
    # snap round-off neighbours onto the tenor dates so fixings freeze exactly
    near = np.abs(uniform[:, None] - dates[None, :]) < 1e-12 * max(horizon, 1.0)
    hit = near.any(axis=1)
    uniform[hit] = dates[near[hit].argmax(axis=1)]
    return np.union1d(uniform, dates)


def step_log(rates: np.ndarray, t: float, dt: float, dw: np.ndarray, md: MarketData) -> np.ndarray:
    """One log-Euler step of the lognormal FMM for a batch of states.

    ``rates`` and ``dw`` have shape (paths, N); ``dw`` holds the correlated
    Brownian increments over ``[t, t + dt]``. Rates whose decay factor is
    zero at ``t`` are returned unchanged.
    """
    rates = np.asarray(rates, dtype=float)
    if np.any(rates <= 0.0):
        raise DomainError("log-Euler step needs strictly positive rates")
    g = gamma_all(t, md.tenor)
    sg = md.vols * g
    tau = md.tau
    v = tau * sg * rates / (1.0 + tau * rates)
    # mu_k / R_k = sigma_k gamma_k sum_{i<=k} rho_ik tau_i sigma_i gamma_i R_i / (1 + tau_i R_i)
    drift_over_r = sg * (v @ np.triu(md.correlation))
    return rates * np.exp((drift_over_r - 0.5 * sg**2) * dt + sg * dw)


def _simulate_block(
    md: MarketData,
    times: np.ndarray,
    factor: np.ndarray,
    n: int,
    rng: np.random.Generator,
    antithetic: bool,
) -> np.ndarray:
    n_draw = n // 2 if antithetic else n
    rates = np.broadcast_to(md.initial_forwards, (n, md.n_rates)).copy()
    for t0, t1 in zip(times[:-1], times[1:]):
        dt = t1 - t0
        z = rng.standard_normal((n_draw, md.n_rates))
        if antithetic:
            z = np.concatenate([z, -z])
        rates = step_log(rates, t0, dt, math.sqrt(dt) * (z @ factor.T), md)
    return rates


def simulate_terminal_rates(
    md: MarketData, horizon: float, cfg: MCConfig, block: int = 0
) -> np.ndarray:
    """Rates at ``horizon`` for the paths of one block (for inspection and tests)."""
    sizes = _block_sizes(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(block,)))
    return _simulate_block(
        md,
        simulation_times(md, horizon, cfg.num_steps),
        correlation_factor(md.correlation),
        sizes[block],
        rng,
        cfg.antithetic,
    )


def _block_sizes(cfg: MCConfig) -> list[int]:
    full, rest = divmod(cfg.num_paths, cfg.block_size)
    return [cfg.block_size] * full + ([rest] if rest else [])


def mc_expectation(
    md: MarketData,
    horizon: float,
    payoff: Callable[[np.ndarray], np.ndarray],
    cfg: MCConfig,
) -> list[CIEstimate]:
    """Estimate ``E[payoff(R(horizon))]`` for a vector-valued payoff.

    ``payoff`` maps terminal rates (paths, N) to an array (paths, m); one
    :class:`CIEstimate` is returned per column. With antithetic sampling the
    standard error is computed from the pair averages.
    """
    times = simulation_times(md, horizon, cfg.num_steps)
    factor = correlation_factor(md.correlation)
    sizes = _block_sizes(cfg)

    def run(block: int):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(block,)))
        rates = _simulate_block(md, times, factor, sizes[block], rng, cfg.antithetic)
        values = np.asarray(payoff(rates), dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if cfg.antithetic:
            half = values.shape[0] // 2
            values = 0.5 * (values[:half] + values[half:])
        return values.shape[0], values.sum(axis=0), (values**2).sum(axis=0)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(run, range(len(sizes))))
    else:
        results = [run(b) for b in range(len(sizes))]

    count = sum(r[0] for r in results)
    n_cols = results[0][1].size
    estimates = []
    for c in range(n_cols):
        s1 = math.fsum(r[1][c] for r in results)
        s2 = math.fsum(r[2][c] for r in results)
        mean = s1 / count
        var = max(s2 / count - mean * mean, 0.0) * count / (count - 1)
        se = math.sqrt(var / count)
        estimates.append(CIEstimate(mean, Z_95 * se, se, cfg.num_paths))
    return estimates


def price_swaptions_mc(
    specs: list[SwaptionSpec], md: MarketData, cfg: MCConfig
) -> list[CIEstimate]:
    """Price several European swaptions with a common expiry on the same paths."""
    if not specs:
        return []
    a = specs[0].a
    for spec in specs:
        if not spec.is_european:
            raise DomainError("Monte Carlo pricing supports European swaptions only")
        if spec.a != a:
            raise DomainError("all swaptions priced together must share the expiry")
        if spec.b > md.n_rates:
            raise DomainError(f"swap end T_{spec.b} beyond the tenor")
    tau = md.tau

    def payoff(rates):
        # rates 1..a have frozen at their fixings, so this is max(IRS, 0) / B(T_a)
        return np.stack(
            [
                np.maximum(deflated_swap_value(rates, s.a, s.b, s.strike, tau), 0.0)
                for s in specs
            ],
            axis=1,
        )

    return mc_expectation(md, md.tenor.dates[a], payoff, cfg)


def price_swaption_mc(spec: SwaptionSpec, md: MarketData, cfg: MCConfig) -> CIEstimate:
    """Risk-neutral price ``E[max(IRS(T_a), 0) / P(T_a, T_0)]`` of a European swaption."""
    return price_swaptions_mc([spec], md, cfg)[0]
