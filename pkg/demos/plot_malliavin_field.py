"""
Stochastic derivative of the flow
=================================

Perturbing the noise after time s moves each particle by eta_s(u, t),
the solution of a linear recursion launched at s with the diffusion
coefficient.  We compare the recursion with a central finite difference
along the direction W + eps * int h for h the indicator of [0.25, 1).
"""

import matplotlib.pyplot as plt
import numpy as np

from interact_clark import malliavin as ma
from interact_clark import rng
from interact_clark.coefficients import CoefficientSet
from interact_clark.flow_sim import EnsembleState, TimeGrid, euler_solve, quantile_atoms, sample_brownian

grid = TimeGrid(0.0, 1.0, 1024)
path = sample_brownian(grid, rng.path_seed(0, rng.BROWNIAN, 0))
e0 = EnsembleState.initial(*quantile_atoms("gaussian", 16))
cs = CoefficientSet.from_names("tanh_kernel", (0.2, 1.0), "sin_bounded", (1.0, 0.25))

traj = euler_solve(cs, e0, path)
fields = ma.MalliavinFields(cs, traj, path)

###############################################################################
# Fields launched at s = 0 and s = 0.5

fig, ax = plt.subplots(figsize=(6, 4))
for s, style in ((0, "-"), (512, "--")):
    f = fields[s]
    t = grid.time(np.arange(s, grid.n_steps + 1))
    ax.plot(t, f.values[:, ::4], style, lw=0.8)
ax.set_xlabel("t")
ax.set_title("eta_s(u_i, t) for s = 0 (solid) and s = 0.5 (dashed)")

###############################################################################
# Directional derivative against finite differences

h = ma.indicator(grid, 0.25, 1.0)
print("max relative gap:", ma.fd_directional_check(cs, e0, path, h, 1e-4))
plt.show()
