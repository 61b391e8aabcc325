"""
Particles driven by one Brownian motion
=======================================

Every particle of the flow sees the same noise, so on the zero-drift
scenario the whole cloud just translates with W.  A bounded interaction
(the tanh kernel) pulls the cloud together, and the Picard iteration for
the pathwise fixed point converges geometrically to the Euler solution.
"""

import matplotlib.pyplot as plt
import numpy as np

from interact_clark import rng
from interact_clark.coefficients import CoefficientSet
from interact_clark.flow_sim import EnsembleState, TimeGrid, euler_solve, picard_solve, sample_brownian

grid = TimeGrid(0.0, 1.0, 256)
path = sample_brownian(grid, rng.path_seed(0, rng.BROWNIAN, 0))
e0 = EnsembleState.initial(np.linspace(-2, 2, 9))

###############################################################################
# Zero drift: x_i(t) = u_i + W(t) exactly

free = euler_solve(CoefficientSet.from_names("zero"), e0, path)
print("max |x - u - W|:", np.max(np.abs(free.positions - e0.positions - path.values[:, None])))

###############################################################################
# Interaction through the empirical measure

tanh = CoefficientSet.from_names("tanh_kernel", (0.2, 1.0))
traj = euler_solve(tanh, e0, path)

fig, ax = plt.subplots(1, 2, figsize=(10, 4))
ax[0].plot(grid.times, free.positions, color="0.7", lw=0.8)
ax[0].plot(grid.times, traj.positions, lw=0.8)
ax[0].set_xlabel("t")
ax[0].set_title("tanh kernel (colour) vs free translation (grey)")

###############################################################################
# Picard iterates: successive sup-distances shrink by a constant factor

x, deltas = picard_solve(tanh, e0, path, 8)
deltas = np.asarray(deltas)
print("delta ratios:", np.round(deltas[2:] / deltas[1:-1], 4))
print("sup |picard - euler|:", np.max(np.abs(x.positions - traj.positions)))

ax[1].semilogy(np.arange(deltas.size), deltas, "o-")
ax[1].set_xlabel("iteration n")
ax[1].set_title("sup |x^(n+1) - x^(n)|")
plt.tight_layout()
plt.show()
