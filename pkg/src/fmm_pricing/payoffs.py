"""Swap values and swaption payoffs, plain and deflated by the bank account."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .market_model import DomainError, TenorStructure, discount_factor


@dataclass(frozen=True)
class SwaptionSpec:
    """Payer swaption on the swap paying ``tau_i (R_i(T_i) - K)`` for i = a+1..b.

    ``exercise_dates`` lists the tenor indices at which the holder may enter
    the swap ``T_e x (T_b - T_e)``; the last one must be ``a``. A European
    swaption has ``exercise_dates == (a,)``.
    """

    a: int
    b: int
    strike: float
    exercise_dates: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise DomainError(f"need 0 < a < b, got a={self.a}, b={self.b}")
        ex = tuple(int(e) for e in self.exercise_dates) or (self.a,)
        if any(e1 >= e2 for e1, e2 in zip(ex, ex[1:])):
            raise DomainError("exercise dates must be strictly increasing")
        if ex[0] < 1 or ex[-1] != self.a:
            raise DomainError("exercise dates must lie in 1..a and end at a")
        object.__setattr__(self, "exercise_dates", ex)

    @property
    def is_european(self) -> bool:
        return len(self.exercise_dates) == 1

    def with_strike(self, strike: float) -> "SwaptionSpec":
        return SwaptionSpec(self.a, self.b, strike, self.exercise_dates)


def irs_value(rates_at_ta, spec: SwaptionSpec, tenor: TenorStructure):
    """Value at ``T_a`` of the payer swap; ``rates_at_ta`` has shape (..., N)."""
    x = np.asarray(rates_at_ta, dtype=float)
    tau = tenor.year_fractions
    total = np.zeros(x.shape[:-1])
    for i in range(spec.a + 1, spec.b + 1):
        p = discount_factor(x, spec.a, i, tenor)
        total = total + p * tau[i - 1] * (x[..., i - 1] - spec.strike)
    return total


def deflated_swap_value(x, a: int, b: int, strike: float, tau) -> np.ndarray:
    """Swap ``T_a x (T_b - T_a)`` at ``T_a`` divided by the bank account ``P(T_a, T_0)``.

    Assumes rates ``1..a`` have fixed, so the bank account is the product of
    their compounding factors. Works on any array whose last axis carries at
    least ``b`` rates, or on a list of broadcastable per-rate arrays.
    """
    xs = [x[..., k] for k in range(b)] if isinstance(x, np.ndarray) else list(x)
    disc = 1.0
    for k in range(a):
        disc = disc / (1.0 + tau[k] * xs[k])
    total = 0.0
    for k in range(a, b):
        disc = disc / (1.0 + tau[k] * xs[k])
        total = total + disc * tau[k] * (xs[k] - strike)
    return total


def relative_payoff_u0(x, spec: SwaptionSpec, tenor: TenorStructure):
    """Swaption payoff at ``T_a`` expressed in units of the ``T_0`` extended bond."""
    return np.maximum(
        deflated_swap_value(x, spec.a, spec.b, spec.strike, tenor.year_fractions), 0.0
    )
