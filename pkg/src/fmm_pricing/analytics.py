"""Pricing pipelines, implied volatility and convergence studies."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import brentq
from scipy.stats import norm

from .amfr_w1 import DEFAULT_KAPPA, IntegratorConfig, integrate
from .market_model import DomainError, MarketData, annuity, atm_strike, initial_discount_curve
from .monte_carlo import CIEstimate, MCConfig, price_swaptions_mc
from .payoffs import SwaptionSpec
from .pde_grid import (
    Grid,
    GridConfig,
    assemble_operators,
    build_grid,
    exercise_values,
    smooth_payoff,
)


class NoSolutionError(DomainError):
    """No Black volatility reproduces the given price."""


@dataclass(frozen=True)
class PriceReport:
    spec: SwaptionSpec
    method: str
    price: float
    ci: CIEstimate | None = None
    implied_vol: float | None = None
    metadata: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def __post_init__(self):
        if self.method not in ("MC", "PDE"):
            raise DomainError(f"unknown method {self.method!r}")
        if (self.ci is not None) != (self.method == "MC"):
            raise DomainError("a confidence interval is reported for MC prices only")


@dataclass(frozen=True)
class ConvergenceRow:
    L: int
    l2_error: float
    linf_error: float
    l2_order: float | None
    linf_order: float | None
    runtime: float


@dataclass(frozen=True)
class PDESolution:
    """Nodal solution at reversed time ``T_a`` together with its grid."""

    grid: Grid
    values: np.ndarray
    price: float
    n_steps: int
    dt: float
    runtime: float


# --- interpolation and Black formula -------------------------------------


def multilinear_interp(grid: Grid, values: np.ndarray, point) -> float:
    """N-linear interpolation of nodal ``values`` at ``point``."""
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.size != grid.ndim:
        raise DomainError(f"query has {point.size} coordinates, grid has {grid.ndim}")
    for k, (x, ax) in enumerate(zip(point, grid.axes)):
        if not ax.nodes[0] <= x <= ax.nodes[-1]:
            raise DomainError(f"coordinate {k + 1} = {x} outside [{ax.nodes[0]}, {ax.nodes[-1]}]")
    interp = RegularGridInterpolator(grid.points, np.asarray(values, dtype=float), method="linear")
    return float(interp(point[None, :])[0])


def black_call(forward: float, strike: float, stdev: float) -> float:
    """Undiscounted Black call ``E[(F - K)^+]`` for total standard deviation ``stdev``."""
    intrinsic = max(forward - strike, 0.0)
    if stdev <= 0.0:
        return intrinsic
    d1 = (math.log(forward / strike) + 0.5 * stdev * stdev) / stdev
    return forward * norm.cdf(d1) - strike * norm.cdf(d1 - stdev)


def black_swaption_price(spec: SwaptionSpec, md: MarketData, vol: float) -> float:
    """Payer swaption price under the annuity measure with flat Black volatility."""
    expiry = md.tenor.dates[spec.a]
    return annuity(md, spec.a, spec.b) * black_call(
        atm_strike(md, spec.a, spec.b), spec.strike, vol * math.sqrt(expiry)
    )


def implied_vol(price: float, spec: SwaptionSpec, md: MarketData, tol: float = 1e-12) -> float:
    """Black volatility matching ``price``; raises :class:`NoSolutionError` if unattainable."""
    ann = annuity(md, spec.a, spec.b)
    fwd = atm_strike(md, spec.a, spec.b)
    lower = ann * max(fwd - spec.strike, 0.0)
    upper = ann * fwd
    if not lower <= price < upper:
        raise NoSolutionError(
            f"price {price:.6e} outside the attainable range [{lower:.6e}, {upper:.6e})"
        )
    if price == lower:
        return 0.0
    target = lambda v: black_swaption_price(spec, md, v) - price  # noqa: E731
    hi = 1.0
    while target(hi) < 0.0:
        hi *= 2.0
        if hi > 1e3:
            raise NoSolutionError("implied volatility above 1000")
    return float(brentq(target, 0.0, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


def _safe_implied_vol(price, spec, md):
    try:
        return implied_vol(price, spec, md)
    except NoSolutionError:
        return None


# --- PDE pipeline ---------------------------------------------------------


def default_dt(md: MarketData, resolution: int, exponent: int | None = None) -> float:
    """``tau_1 / 2^r`` when ``exponent`` is given, else ``tau_1 / (2L)``."""
    tau1 = md.tau[0]
    return tau1 / 2.0**exponent if exponent is not None else tau1 / (2.0 * resolution)


def solve_swaption_pde(
    spec: SwaptionSpec,
    md: MarketData,
    grid_cfg: GridConfig = GridConfig(),
    dt: float | None = None,
    theta: float = 0.5,
    nu: float | None = None,
    kappa: float = DEFAULT_KAPPA,
    progress: Callable[[int, int], None] | None = None,
) -> PDESolution:
    """Integrate the pricing PDE from the last exercise date back to time 0.

    The grid has one axis per rate ``1..b``. Earlier exercise dates ``T_e``
    become jumps ``Y <- max(Y, g_e)`` at reversed time ``T_a - T_e``.
    """
    if spec.b > md.n_rates:
        raise DomainError(f"swap end T_{spec.b} beyond the tenor")
    start = time.perf_counter()
    md_b = md.truncated(spec.b)
    atm = atm_strike(md_b, spec.a, spec.b)
    grid = build_grid(spec, md_b, grid_cfg, atm)
    expiry = float(md_b.tenor.dates[spec.a])
    if dt is None:
        dt = default_dt(md_b, max(grid_cfg.per_axis(spec.b)[0]))
    jumps = []
    for e in spec.exercise_dates[:-1]:
        payoff = exercise_values(grid, e, spec.b, spec.strike, md_b)
        jumps.append((expiry - float(md_b.tenor.dates[e]), lambda Y, g=payoff: np.maximum(Y, g)))
    cfg = IntegratorConfig(dt=dt, horizon=expiry, theta=theta, nu=nu, kappa=kappa, jumps=jumps)
    ops = assemble_operators(grid, md_b, expiry)
    values = integrate(ops, smooth_payoff(grid, spec, md_b), cfg, progress)
    price = multilinear_interp(grid, values, md_b.initial_forwards)
    return PDESolution(grid, values, price, cfg.n_steps, dt, time.perf_counter() - start)


def price_swaption_pde(
    spec: SwaptionSpec,
    md: MarketData,
    grid_cfg: GridConfig = GridConfig(),
    dt: float | None = None,
    theta: float = 0.5,
    nu: float | None = None,
    kappa: float = DEFAULT_KAPPA,
    progress: Callable[[int, int], None] | None = None,
) -> PriceReport:
    """PDE price at ``(R_1(0), .., R_b(0))`` as a :class:`PriceReport`.

    ``P(T_0, T_0) = 1``, so the relative price at time 0 is the price.
    """
    sol = solve_swaption_pde(spec, md, grid_cfg, dt, theta, nu, kappa, progress)
    meta = {
        "shape": sol.grid.shape,
        "mesh": grid_cfg.mesh,
        "r_max": tuple(ax.r_max for ax in sol.grid.axes),
        "dt": sol.dt,
        "steps": sol.n_steps,
    }
    iv = _safe_implied_vol(sol.price, spec, md) if spec.is_european else None
    return PriceReport(spec, "PDE", sol.price, None, iv, meta, sol.runtime)


# --- Monte Carlo pipeline -------------------------------------------------


def price_mc_reports(specs: Sequence[SwaptionSpec], md: MarketData, cfg: MCConfig) -> list[PriceReport]:
    """MC prices with 95% intervals for a strike ladder sharing one expiry."""
    start = time.perf_counter()
    estimates = price_swaptions_mc(list(specs), md, cfg)
    elapsed = time.perf_counter() - start
    meta = {"paths": cfg.num_paths, "steps": cfg.num_steps, "seed": cfg.seed, "antithetic": cfg.antithetic}
    return [
        PriceReport(s, "MC", est.mean, est, _safe_implied_vol(est.mean, s, md), dict(meta), elapsed)
        for s, est in zip(specs, estimates)
    ]


@dataclass(frozen=True)
class CrossCheck:
    spec: SwaptionSpec
    pde: PriceReport
    mc: PriceReport

    @property
    def inside(self) -> bool:
        return self.mc.ci.contains(self.pde.price)


def cross_validate(
    specs: Sequence[SwaptionSpec],
    md: MarketData,
    mc_cfg: MCConfig,
    pde_kwargs: dict | None = None,
) -> list[CrossCheck]:
    """Price each swaption both ways and check the PDE value against the MC interval."""
    mc = price_mc_reports(specs, md, mc_cfg)
    pde_kwargs = pde_kwargs or {}
    return [CrossCheck(s, price_swaption_pde(s, md, **pde_kwargs), m) for s, m in zip(specs, mc)]


def strike_ladder(md: MarketData, a: int, b: int, multiples=(1.2, 1.1, 1.0, 0.9, 0.8), exercise=()) -> list[SwaptionSpec]:
    atm = atm_strike(md, a, b)
    return [SwaptionSpec(a, b, m * atm, tuple(exercise)) for m in multiples]


def intrinsic_value(spec: SwaptionSpec, md: MarketData) -> float:
    """Zero-volatility price: the positive part of the swap on today's curve."""
    p = initial_discount_curve(md)
    tau = md.tau
    swap = sum(p[i] * tau[i - 1] * (md.initial_forwards[i - 1] - spec.strike) for i in range(spec.a + 1, spec.b + 1))
    return max(float(swap), 0.0)


# --- convergence ----------------------------------------------------------


def estimate_orders(errors: Sequence[float]) -> list[float | None]:
    """``log2(e(L) / e(2L))`` attached to the finer resolution; the first is None."""
    out: list[float | None] = [None]
    for coarse, fine in zip(errors[:-1], errors[1:]):
        out.append(math.log2(coarse / fine) if coarse > 0.0 and fine > 0.0 else float("nan"))
    return out


def restrict_to(coarse: Grid, fine: Grid, values: np.ndarray) -> np.ndarray:
    """Fine-grid values on the coarse nodes.

    Uses injection when every coarse node is a fine node (doubled M on the
    same axis limits nests the nodes); otherwise interpolates multilinearly.
    """
    index = []
    for ca, fa in zip(coarse.axes, fine.axes):
        ratio, rem = divmod(fa.M, ca.M)
        if rem or not np.allclose(fa.nodes[::ratio], ca.nodes, rtol=1e-12, atol=1e-15):
            index = None
            break
        index.append(slice(None, None, ratio))
    if index is not None:
        return values[tuple(index)]
    interp = RegularGridInterpolator(fine.points, values, method="linear")
    mesh = np.stack(np.meshgrid(*coarse.points, indexing="ij"), axis=-1)
    return interp(mesh.reshape(-1, coarse.ndim)).reshape(coarse.shape)


def convergence_study(
    spec: SwaptionSpec,
    md: MarketData,
    resolutions: Sequence[int],
    reference: int | PDESolution,
    mesh: str = "sinh",
    r_max=None,
    dt: float | None = None,
    theta: float = 0.5,
    nu: float | None = None,
    kappa: float = DEFAULT_KAPPA,
    progress: Callable[[str], None] | None = None,
) -> list[ConvergenceRow]:
    """Spatial errors against a fine reference solution on the coarse nodes.

    ``l2`` is the root mean square over the coarse nodes. ``reference`` is a
    resolution or an already computed :class:`PDESolution`. All runs share
    ``dt`` (default ``tau_1 / 2^11``).
    """
    resolutions = [int(L) for L in resolutions]
    if len(resolutions) < 2:
        raise DomainError("a convergence study needs at least two resolutions")
    if any(b != 2 * a for a, b in zip(resolutions, resolutions[1:])):
        raise DomainError("resolutions must double from one row to the next")
    if dt is None:
        dt = default_dt(md, 0, 11)
    kw = dict(dt=dt, theta=theta, nu=nu, kappa=kappa)
    if isinstance(reference, PDESolution):
        ref = reference
    else:
        if reference <= resolutions[-1]:
            raise DomainError("the reference resolution must exceed every studied one")
        if progress:
            progress(f"reference L={reference}")
        ref = solve_swaption_pde(spec, md, GridConfig(reference, r_max, mesh), **kw)
    l2, linf, times = [], [], []
    for L in resolutions:
        if progress:
            progress(f"L={L}")
        sol = solve_swaption_pde(spec, md, GridConfig(L, r_max, mesh), **kw)
        err = sol.values - restrict_to(sol.grid, ref.grid, ref.values)
        l2.append(float(np.sqrt(np.mean(err * err))))
        linf.append(float(np.max(np.abs(err))))
        times.append(sol.runtime)
    o2, oinf = estimate_orders(l2), estimate_orders(linf)
    return [ConvergenceRow(*row) for row in zip(resolutions, l2, linf, o2, oinf, times)]
