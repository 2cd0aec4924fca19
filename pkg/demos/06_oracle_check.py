# %% [markdown]
# # Checking the solver against brute force
#
# On a 3 x 2 grid with three time levels every path can be listed. The
# reference solver maximises the dual directly over that list, so its
# answer does not share any code with the message-passing solver.

# %%
import numpy as np

from chflows.diagnostics import plan_action, plan_entropy
from chflows.discretization import build_cost_matrices, build_gibbs, build_grid, identity_map
from chflows.mmot_solver import all_marginals, sinkhorn_solve
from chflows.oracle import exhaustive_solve

grid = build_grid(3, 2, 0.5, 1.0, 3)
factors = build_gibbs(build_cost_matrices(grid, identity_map()), grid, eps=0.1, alpha=1.0)
duals, _ = sinkhorn_solve(factors, tolerance=1e-12)
ref = exhaustive_solve(grid, identity_map(), 0.1, 1.0)

print("paths listed:", len(ref.paths))
print("marginals:", np.abs(all_marginals(factors, duals) - ref.marginals).max())
print("action:   ", abs(plan_action(factors, duals).total - ref.action))
print("entropy:  ", abs(plan_entropy(factors, duals) - ref.entropy))
