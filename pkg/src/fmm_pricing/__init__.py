"""Swaption pricing under the generalized Forward Market Model for RFRs.

Two pricers share one market description: a Monte Carlo simulation of the
forward rates under the bank-account measure, and a finite-difference
solver for the pricing PDE stepped with the one-stage AMFR-W method.
"""

from .analytics import (
    ConvergenceRow,
    PriceReport,
    black_swaption_price,
    convergence_study,
    cross_validate,
    implied_vol,
    multilinear_interp,
    price_mc_reports,
    price_swaption_pde,
    solve_swaption_pde,
    strike_ladder,
)
from .market_model import (
    CEV,
    DomainError,
    Lognormal,
    MarketData,
    Normal,
    RateState,
    ShiftedLognormal,
    TenorStructure,
    annuity,
    atm_strike,
    discount_factor,
    drift_mu,
    table1_market_data,
)
from .monte_carlo import CIEstimate, MCConfig, price_swaption_mc, price_swaptions_mc
from .payoffs import SwaptionSpec, irs_value, relative_payoff_u0
from .pde_grid import GridConfig, assemble_operators, build_grid, smooth_payoff

__version__ = "0.1.0"

__all__ = [
    "CEV",
    "CIEstimate",
    "ConvergenceRow",
    "DomainError",
    "GridConfig",
    "Lognormal",
    "MCConfig",
    "MarketData",
    "Normal",
    "PriceReport",
    "RateState",
    "ShiftedLognormal",
    "SwaptionSpec",
    "TenorStructure",
    "annuity",
    "assemble_operators",
    "atm_strike",
    "black_swaption_price",
    "build_grid",
    "convergence_study",
    "cross_validate",
    "discount_factor",
    "drift_mu",
    "implied_vol",
    "irs_value",
    "multilinear_interp",
    "price_mc_reports",
    "price_swaption_mc",
    "price_swaption_pde",
    "price_swaptions_mc",
    "relative_payoff_u0",
    "smooth_payoff",
    "solve_swaption_pde",
    "strike_ladder",
    "table1_market_data",
]
