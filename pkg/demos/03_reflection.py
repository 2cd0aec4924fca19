# %% [markdown]
# # Reflection: a target no smooth flow reaches
#
# The map x -> 1 - x reverses orientation, so no diffeomorphism of the
# interval realises it. The optimal plan splits mass instead, and it is
# symmetric under reflecting both ends of the coupling.

# %%
import numpy as np

from chflows.config import preset_config
from chflows.diagnostics import base_transport_plan, determinism_index
from chflows.discretization import build_cost_matrices, build_gibbs, build_grid
from chflows.mmot_solver import sinkhorn_solve

cfg = preset_config("reflection")
grid = build_grid(cfg.nx, cfg.nr, cfg.r_lo, cfg.r_hi, cfg.K, cfg.T)
factors = build_gibbs(build_cost_matrices(grid, cfg.boundary), grid, cfg.eps, cfg.alpha)
duals, report = sinkhorn_solve(factors, cfg.tolerance)

mid = base_transport_plan(factors, duals, (cfg.K + 1) // 2).matrix
print("asymmetry:", np.abs(mid - mid[::-1, ::-1]).max())
print("determinism at mid-time:", round(determinism_index(mid), 3))

# %% [markdown]
# A coarse look at the mid-time plan: rows are start positions, columns
# are positions halfway through. Mass spreads across the whole row.

# %%
shades = " .:-=+*#%@"
for row in mid / mid.max():
    print("".join(shades[min(int(v * 10), 9)] for v in row))
