# %% [markdown]
# # Smooth Lagrangian flows and short-time optimality
#
# Without pressure each particle follows a cone geodesic. The implicit
# midpoint integrator recovers it at second order.

# %%
import numpy as np

from chflows.cone_geometry import ConePoint, cone_distance, cone_geodesic
from chflows.smooth_reference import (
    LagrangianState,
    geodesic_initial_state,
    gv_condition_check,
    integrate_geodesic,
)

p, q = ConePoint(0.0, 1.0), ConePoint(1.0, 1.0)
s0 = geodesic_initial_state(p, q)
errors = []
for steps in (20, 40, 80, 160):
    tr = integrate_geodesic(s0, 1.0, steps)
    errors.append(max(cone_distance(tr.point(i, 0), cone_geodesic(p, q, t)) for i, t in enumerate(tr.ts)))
print("errors", np.array(errors))
print("observed orders", np.log2(np.array(errors[:-1]) / errors[1:]))

# %% [markdown]
# The sufficient condition for short-time optimality compares the pressure
# against 3 / (2 T^2). For particles at rest on r = 1 the radius ratio is 2
# and the pressure must stay below 3/26.

# %%
rest = integrate_geodesic(LagrangianState(0.5, 1.0, 0.0, 0.0), 1.0, 4)
for c in (0.1, 3 / 26, 0.12):
    rep = gv_condition_check(rest, lambda t, x: np.full(np.broadcast(t, x).shape, c), 1.0)
    print(f"P = {c:.5f}: condition holds = {rep.rho_condition}, margin = {rep.margin:+.4f}")
