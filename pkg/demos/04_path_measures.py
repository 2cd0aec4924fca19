# %% [markdown]
# # Path measures and dilations
#
# A path measure on the cone is a weighted family of sampled paths. Only
# radii squared enter the constraints, so dividing a path's radii by
# theta and multiplying its weight by theta^2 changes nothing that matters.

# %%
import math

import numpy as np

from chflows.generalized_flows import (
    DiscretePathMeasure,
    dilate,
    homogeneous_marginal,
    rescale_to_unit,
    sigma_r0,
)

ts = np.linspace(0, 1, 3)
m = DiscretePathMeasure([[0.2] * 3, [0.6] * 3], [[1.0] * 3, [3.0] * 3], [0.5, 0.5], ts)
print("mass", m.mass, "action", m.total_action())

# %% [markdown]
# Rescaling with sigma = starting radius puts every path at the same radius
# C = sqrt(5) and gives a probability measure.

# %%
u, C = rescale_to_unit(m, sigma_r0(m))
print("C =", C, "vs sqrt(5) =", math.sqrt(5))
print("weights", u.weights, "radii", u.rs[:, 0])

# %% [markdown]
# Homogeneous marginals do not notice an arbitrary dilation.

# %%
d = dilate(m, np.array([0.3, 7.0]))
print(homogeneous_marginal(m, 2, 5))
print(homogeneous_marginal(d, 2, 5))
