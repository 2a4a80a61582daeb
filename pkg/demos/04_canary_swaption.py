"""
Canary swaption: early exercise on a four-dimensional grid
==========================================================

A Canary swaption is a Bermudan with only a few exercise dates. Here the
holder may enter the swap over ``[T_3, T_4]`` at ``T_1``, ``T_2`` or ``T_3``.
Stepping back from ``T_3``, the PDE solution is replaced by
``max(Y, exercise value)`` whenever an earlier exercise date is reached; the
exercise value at ``T_e`` is the deflated value of the remaining swap.

Extra exercise rights can only add value, so every Canary price must be at
least the European one.
"""

# %%
import argparse

from fmm_pricing import table1_market_data
from fmm_pricing.analytics import solve_swaption_pde, strike_ladder
from fmm_pricing.payoffs import SwaptionSpec
from fmm_pricing.pde_grid import GridConfig

parser = argparse.ArgumentParser()
parser.add_argument("--resolution", type=int, default=16)
args = parser.parse_args()

md = table1_market_data()
L = args.resolution
cfg = GridConfig(L)
dt = 0.25 / L

# %%
print(f"{'K/K_ATM':>8} {'European':>13} {'Canary':>13} {'premium':>10}")
for m, spec in zip((1.2, 1.1, 1.0, 0.9, 0.8), strike_ladder(md, 3, 4)):
    euro = solve_swaption_pde(spec, md, cfg, dt=dt)
    canary = solve_swaption_pde(SwaptionSpec(3, 4, spec.strike, (1, 2, 3)), md, cfg, dt=dt)
    print(f"{m:8.1f} {euro.price:13.6e} {canary.price:13.6e} {canary.price - euro.price:10.3e}")

# %%
# The premium for early exercise grows in the money, where entering the
# swap early locks in a positive value.
