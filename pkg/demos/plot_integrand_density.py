"""
A density for the integrand
===========================

The integrand pairs test functions with a signed density: Theta_phi(t)
equals int phi g_t.  Smoothing the inner samples with the derivative of a
Gaussian kernel gives g_hat, and for a single particle without drift g_t
is minus the derivative of the heat kernel centred at W(t).
"""

import matplotlib.pyplot as plt
import numpy as np

from interact_clark import density_est as de
from interact_clark import gaussian_oracle as go
from interact_clark import rng
from interact_clark.coefficients import CoefficientSet
from interact_clark.flow_sim import EnsembleState, TimeGrid, euler_solve, sample_brownian
from interact_clark.observables import get

grid = TimeGrid(0.0, 1.0, 256)
path = sample_brownian(grid, rng.path_seed(0, rng.BROWNIAN, 0))
cs = CoefficientSet.from_names("zero")
k = grid.index_of(0.5)
state = euler_solve(cs, EnsembleState.initial([0.0]), path).state(k)

###############################################################################
# Two bandwidth rules.  The density rule of thumb undersmooths a derivative.

fig, ax = plt.subplots(figsize=(6, 4))
for policy in ("silverman", "derivative"):
    g = de.integrand_density(cs, state, grid, k, 100_000, rng.substream(0, rng.DENSITY, 0, k), policy)
    err = np.max(np.abs(g.values + go.heat_kernel_dv(0.5, g.v - path.values[k])))
    print(f"{policy}: h = {g.bandwidth:.3f}, sup error {err:.3f}")
    ax.plot(g.v, g.values, lw=0.8, label=policy)
ax.plot(g.v, -go.heat_kernel_dv(0.5, g.v - path.values[k]), "k", lw=1, label="exact")
ax.legend()

###############################################################################
# Pairing g_hat with test functions recovers the nested estimate

obs = [get("v"), get("sin"), get("bump")]
thetas = [g.samples.contributions(o).mean() for o in obs]
print("relative errors:", de.pairing_consistency(g, obs, thetas))
plt.show()
