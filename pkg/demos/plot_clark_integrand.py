"""
Clark-Ocone integrand by nested Monte Carlo
===========================================

For a test function phi the terminal pairing <phi, mu_1> is a functional
of the Brownian path.  Its integrand Theta_phi(t) is a conditional mean of
sum_i w_i phi'(x_i(1)) eta_t(u_i, 1), which we estimate from inner
continuations launched at each grid time.  With a single particle at 0 and
no drift the answer is known in closed form.
"""

import matplotlib.pyplot as plt
import numpy as np

from interact_clark import clark_ocone as co
from interact_clark import gaussian_oracle as go
from interact_clark import rng
from interact_clark.coefficients import CoefficientSet
from interact_clark.flow_sim import EnsembleState, TimeGrid, quantile_atoms, sample_brownian
from interact_clark.observables import get

grid = TimeGrid(0.0, 1.0, 128)
path = sample_brownian(grid, rng.path_seed(0, rng.BROWNIAN, 0))
zero = CoefficientSet.from_names("zero")
delta0 = EnsembleState.initial([0.0])

###############################################################################
# Degenerate case: Theta against the Gaussian quadrature oracle

est = co.clark_integrand_path(zero, delta0, path, [get("sin"), get("v2")], 1000)
fig, ax = plt.subplots(1, 2, figsize=(10, 4))
for a, name in zip(ax, ("sin", "v2")):
    theta, se = est.of(name)
    a.fill_between(est.times, theta - 2 * se, theta + 2 * se, alpha=0.3)
    a.plot(est.times, go.exact_integrand(get(name), path), "k", lw=1)
    a.set_title(f"Theta for phi = {name}")
    a.set_xlabel("t")

###############################################################################
# Representation residuals with interaction
#
# alpha - E_hat - sum Theta_hat dW should be centred; its spread comes from
# the time step and the inner sample size.

tanh = CoefficientSet.from_names("tanh_kernel", (0.2, 1.0))
e0 = EnsembleState.initial(*quantile_atoms("gaussian", 2))
grid = TimeGrid(0.0, 1.0, 64)
for rep in co.verify_representation(tanh, e0, grid, [get("sin"), get("bump")], 100, 2000, 64):
    print(f"{rep.name}: mean {rep.mean_resid:+.4f} +- {rep.stderr_mean_resid:.4f}, "
          f"rms {rep.rms_resid:.4f}")
plt.tight_layout()
plt.show()
