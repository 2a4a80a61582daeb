"""Static market data and the scalar ingredients of the FMM dynamics.

Rates are indexed 1..N as in the usual tenor notation; arrays holding one
value per rate use position ``k - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, Sequence

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class SingularDenominatorError(ArithmeticError):
    """A compounding factor ``1 + tau * R`` is not strictly positive."""


class IncompleteStateError(ValueError):
    """A fixing required by a discount factor is missing."""


@dataclass(frozen=True)
class TenorStructure:
    """Dates ``0 = T_0 < T_1 < ... < T_N`` in years."""

    dates: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype=float)
        if dates.ndim != 1 or dates.size < 2:
            raise DomainError("tenor needs at least T_0 and T_1")
        if dates[0] != 0.0:
            raise DomainError(f"T_0 must be 0, got {dates[0]}")
        if np.any(np.diff(dates) <= 0.0):
            raise DomainError("tenor dates must be strictly increasing")
        dates.setflags(write=False)
        object.__setattr__(self, "dates", dates)

    @classmethod
    def from_end_dates(cls, ends: Sequence[float]) -> "TenorStructure":
        return cls(np.concatenate([[0.0], np.asarray(ends, dtype=float)]))

    @property
    def n_rates(self) -> int:
        return self.dates.size - 1

    @property
    def year_fractions(self) -> np.ndarray:
        """``tau_k = T_k - T_{k-1}`` for k = 1..N."""
        return np.diff(self.dates)

    def tau(self, k: int) -> float:
        return float(self.dates[k] - self.dates[k - 1])


class VolSpec:
    """Base class for the local volatility shapes ``nu_k = sigma_k * f(x)``."""

    lower_bound: ClassVar[float] = -np.inf

    def shape(self, x):
        raise NotImplementedError

    def nu(self, sigma, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower_bound):
            raise DomainError(
                f"rate below the lower bound {self.lower_bound} of {type(self).__name__}"
            )
        return sigma * self.shape(x)


@dataclass(frozen=True)
class Normal(VolSpec):
    lower_bound: ClassVar[float] = -np.inf

    def shape(self, x):
        return np.ones_like(x)


@dataclass(frozen=True)
class Lognormal(VolSpec):
    lower_bound: ClassVar[float] = 0.0

    def shape(self, x):
        return x


@dataclass(frozen=True)
class ShiftedLognormal(VolSpec):
    shift: float = 0.0

    def __post_init__(self):
        if not self.shift > 0.0:
            raise DomainError("shift must be positive")

    @property
    def lower_bound(self) -> float:
        return -self.shift

    def shape(self, x):
        return x + self.shift


@dataclass(frozen=True)
class CEV(VolSpec):
    beta: float = 1.0
    lower_bound: ClassVar[float] = 0.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise DomainError("CEV exponent must lie in [0, 1]")

    def shape(self, x):
        return np.power(x, self.beta)


@dataclass(frozen=True)
class MarketData:
    """Tenor, initial forwards ``R_k(0)``, constant vols ``sigma_k`` and ``rho``."""

    tenor: TenorStructure
    initial_forwards: np.ndarray
    vols: np.ndarray
    correlation: np.ndarray

    def __post_init__(self):
        n = self.tenor.n_rates
        fwd = np.asarray(self.initial_forwards, dtype=float)
        vols = np.asarray(self.vols, dtype=float)
        rho = np.asarray(self.correlation, dtype=float)
        if fwd.shape != (n,) or vols.shape != (n,):
            raise DomainError(f"expected {n} forwards and {n} vols")
        if np.any(vols < 0.0):
            raise DomainError("vols must be nonnegative")
        if rho.ndim == 0:
            rho = constant_correlation(n, float(rho))
        if rho.shape != (n, n):
            raise DomainError(f"correlation must be {n}x{n}")
        check_correlation(rho)
        for arr in (fwd, vols, rho):
            arr.setflags(write=False)
        object.__setattr__(self, "initial_forwards", fwd)
        object.__setattr__(self, "vols", vols)
        object.__setattr__(self, "correlation", rho)

    @property
    def n_rates(self) -> int:
        return self.tenor.n_rates

    @property
    def tau(self) -> np.ndarray:
        return self.tenor.year_fractions

    def truncated(self, n: int) -> "MarketData":
        """Market data restricted to the first ``n`` rates."""
        return MarketData(
            TenorStructure(self.tenor.dates[: n + 1]),
            self.initial_forwards[:n],
            self.vols[:n],
            self.correlation[:n, :n],
        )

    def with_vols(self, vols) -> "MarketData":
        return MarketData(self.tenor, self.initial_forwards, vols, self.correlation)


@dataclass(frozen=True)
class RateState:
    t: float
    rates: np.ndarray = field(repr=True)


def constant_correlation(n: int, rho: float) -> np.ndarray:
    out = np.full((n, n), rho, dtype=float)
    np.fill_diagonal(out, 1.0)
    return out


def check_correlation(rho: np.ndarray, tol: float = 1e-10) -> None:
    if not np.allclose(rho, rho.T, atol=0.0, rtol=0.0):
        raise DomainError("correlation matrix must be symmetric")
    if not np.all(np.diag(rho) == 1.0):
        raise DomainError("correlation matrix must have unit diagonal")
    if np.any(np.abs(rho) > 1.0):
        raise DomainError("correlation entries must lie in [-1, 1]")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise DomainError("correlation matrix is not positive semi-definite")


def table1_market_data(n: int = 5, rho: float = 0.5) -> MarketData:
    """The five-rate hypothetical data set used in the numerical experiments."""
    full = MarketData(
        TenorStructure.from_end_dates([0.25, 0.5, 0.75, 1.0, 1.25]),
        np.array([0.01, 0.013, 0.014, 0.015, 0.016]),
        np.array([0.2, 0.15, 0.25, 0.26, 0.27]),
        constant_correlation(5, rho),
    )
    return full if n == 5 else full.truncated(n)


def eta(t: float, tenor: TenorStructure) -> int:
    """Index of the first tenor date not earlier than ``t``."""
    dates = tenor.dates
    if t < dates[0] or t > dates[-1]:
        raise DomainError(f"t={t} outside [{dates[0]}, {dates[-1]}]")
    return int(np.searchsorted(dates, t, side="left"))


def gamma(k: int, t, tenor: TenorStructure):
    """Linear volatility decay of rate ``k`` across its application period."""
    start, end = tenor.dates[k - 1], tenor.dates[k]
    return np.clip((end - np.asarray(t, dtype=float)) / (end - start), 0.0, 1.0)


def gamma_all(t: float, tenor: TenorStructure) -> np.ndarray:
    """``gamma_k(t)`` for every k at once."""
    start, end = tenor.dates[:-1], tenor.dates[1:]
    return np.clip((end - t) / (end - start), 0.0, 1.0)


def gamma_slope(t: float, tenor: TenorStructure) -> np.ndarray:
    """Left derivative in ``t`` of every ``gamma_k``.

    The left limit is used so that a step ending at a tenor date sees the
    slope of the period it lies in.
    """
    start, end = tenor.dates[:-1], tenor.dates[1:]
    inside = (start < t) & (t <= end)
    return np.where(inside, -1.0 / (end - start), 0.0)


def nu(k: int, t: float, x, spec: VolSpec, sigma) -> np.ndarray:
    """Instantaneous volatility of rate ``k`` at level ``x``."""
    return spec.nu(sigma, x)


def _compounding(tau, x):
    den = 1.0 + tau * np.asarray(x, dtype=float)
    if np.any(den <= 0.0):
        raise SingularDenominatorError("1 + tau * R must be positive")
    return den


def drift_mu(k: int, t: float, state: RateState, md: MarketData, spec: VolSpec) -> float:
    """Risk-neutral drift of rate ``k``; the sum starts at ``eta(t)``."""
    g = gamma_all(t, md.tenor)
    if g[k - 1] == 0.0:
        return 0.0
    x = np.asarray(state.rates, dtype=float)
    tau = md.tau
    lo = max(eta(t, md.tenor), 1)
    idx = np.arange(lo - 1, k)
    vol = spec.nu(md.vols, x) * g
    terms = md.correlation[idx, k - 1] * tau[idx] * vol[idx] / _compounding(tau[idx], x[idx])
    return float(vol[k - 1] * terms.sum())


def discount_factor(
    rates_at_ti: np.ndarray,
    i: int,
    j: int,
    tenor: TenorStructure,
    fixings: np.ndarray | None = None,
) -> np.ndarray:
    """Extended bond price ``P(T_i, T_j)``.

    Parameters
    ----------
    rates_at_ti : array (..., N)
        Forward rates ``R_k(T_i)``; used when ``i < j``.
    fixings : array (..., N), optional
        Realised fixings ``R_k(T_k)``; used when ``i > j``. NaN marks a
        missing value. Defaults to ``rates_at_ti``, which is correct once the
        fixed rates have frozen.
    """
    tau = tenor.year_fractions
    if i == j:
        return np.ones(np.shape(rates_at_ti)[:-1])
    if i < j:
        x = np.asarray(rates_at_ti, dtype=float)[..., i:j]
        if np.any(np.isnan(x)):
            raise IncompleteStateError(f"missing forward among R_{i + 1}..R_{j}")
        return np.prod(1.0 / _compounding(tau[i:j], x), axis=-1)
    src = rates_at_ti if fixings is None else fixings
    x = np.asarray(src, dtype=float)[..., j:i]
    if np.any(np.isnan(x)):
        raise IncompleteStateError(f"missing fixing among R_{j + 1}(T_{j + 1})..R_{i}(T_{i})")
    return np.prod(_compounding(tau[j:i], x), axis=-1)


def initial_discount_curve(md: MarketData) -> np.ndarray:
    """``P(0, T_k)`` for k = 0..N built from the initial forwards."""
    return np.concatenate([[1.0], np.cumprod(1.0 / _compounding(md.tau, md.initial_forwards))])


def annuity(md: MarketData, a: int, b: int) -> float:
    p = initial_discount_curve(md)
    return float(np.sum(md.tau[a:b] * p[a + 1 : b + 1]))


def atm_strike(md: MarketData, a: int, b: int) -> float:
    """Forward par swap rate for the swap over ``(T_a, T_b]``."""
    if not 0 <= a < b <= md.n_rates:
        raise DomainError(f"need 0 <= a < b <= N, got a={a}, b={b}")
    p = initial_discount_curve(md)
    w = md.tau[a:b] * p[a + 1 : b + 1]
    return float(np.sum(w * md.initial_forwards[a:b]) / np.sum(w))
