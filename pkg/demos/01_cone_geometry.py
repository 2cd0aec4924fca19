# %% [markdown]
# # Geometry of the cone over [0, 1]
#
# A point ``[x, r]`` sits at base position ``x`` and radius ``r``. All
# points with ``r = 0`` collapse to the apex. Unrolling the cone onto the
# plane with ``(x, r) -> (r cos x, r sin x)`` turns geodesics into segments.

# %%
import numpy as np

from chflows.cone_geometry import APEX, ConePoint, cone_distance, cone_geodesic, develop

a, b = ConePoint(0.0, 1.0), ConePoint(1.0, 1.0)
print("d([0,1], [1,1]) =", round(cone_distance(a, b), 6))
print("same, measured in the plane:", round(float(np.linalg.norm(np.subtract(develop(a), develop(b)))), 6))

# %% [markdown]
# The geodesic between two points on the unit circle dips towards the apex:
# its midpoint has radius ``cos(1/2)``.

# %%
for s in np.linspace(0, 1, 5):
    p = cone_geodesic(a, b, s)
    print(f"s={s:.2f}  x={p.x:.4f}  r={p.r:.4f}")

# %% [markdown]
# Every apex representation is the same point, and distances to it are radii.

# %%
print(ConePoint(0.3, 0.0) == APEX, cone_distance(APEX, ConePoint(0.7, 2.5)))
