"""Nested Monte Carlo estimate of the Clark-Ocone integrand of <phi, mu_T>.

At each grid time t_k the conditional expectation

    Theta_phi(t_k) = E( sum_i w_i phi'(x_i(T)) eta_{t_k}(u_i, T) | F_{t_k} )

is estimated by freezing the ensemble at t_k and simulating ``n_inner``
independent continuations of the flow together with the variational
recursion started at b(x_i(t_k)).  Inner noise for launch k of outer path m
comes from the stream ``(base_seed, INNER, m, k)``; row j of the drawn block
is inner path j, so a larger ``n_inner`` extends a smaller one.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from . import rng
from .coefficients import CoefficientSet
from .exceptions import ConfigError, DomainError, NumericError
from .flow_sim import (BrownianPath, EnsembleState, FlowTrajectory, TimeGrid, euler_solve,
                       pair_with_measure, sample_brownian)
from .observables import Observable


@dataclass(frozen=True, eq=False)
class InnerSamples:
    """Terminal positions and derivatives of the inner continuations."""

    positions: np.ndarray  # (n_inner, n_particles)
    eta: np.ndarray        # (n_inner, n_particles)
    weights: np.ndarray

    @property
    def n_inner(self) -> int:
        return self.positions.shape[0]

    def contributions(self, obs: Observable) -> np.ndarray:
        """Per inner path: sum_i w_i phi'(X_i) eta_i."""
        return (obs.df(self.positions) * self.eta) @ self.weights


def inner_samples(cs: CoefficientSet, state: EnsembleState, grid: TimeGrid, k: int,
                  n_inner: int, gen: np.random.Generator) -> InnerSamples:
    """Simulate ``n_inner`` continuations of the flow from ``state`` at t_k to t_end."""
    if n_inner < 2:
        raise ConfigError("n_inner must be >= 2")
    if abs(state.time - float(grid.time(k))) > 1e-9:
        raise DomainError(f"state time {state.time} is not grid point {k}")
    n_rem = grid.n_steps - k
    if n_rem < 1:
        raise DomainError("no steps left after the launch time")
    Z = gen.standard_normal((n_inner, n_rem))
    X = np.empty((n_inner, state.n_particles))
    E = np.empty_like(X)
    status = K.launch(np.ascontiguousarray(state.positions), state.weights,
                      np.ascontiguousarray(Z.T), grid.dt,
                      *cs.kernel_args, X, E)
    if status[0] >= 0:
        raise NumericError(f"inner path {status[0]} at launch {k} became non-finite",
                           step=k, particle=int(status[1]))
    return InnerSamples(X, E, state.weights)


def _as_list(observables):
    if isinstance(observables, Observable):
        return [observables], True
    return list(observables), False


def _mean_and_stderr(samples: np.ndarray):
    n = samples.shape[-1]
    return samples.mean(axis=-1), samples.std(axis=-1, ddof=1) / np.sqrt(n)


def inner_conditional_estimate(cs: CoefficientSet, state: EnsembleState, grid: TimeGrid, k: int,
                               observables, n_inner: int, gen: np.random.Generator):
    """(Theta_hat, stderr) at t_k; arrays when several observables are given."""
    obs_list, single = _as_list(observables)
    s = inner_samples(cs, state, grid, k, n_inner, gen)
    vals = np.stack([s.contributions(o) for o in obs_list])
    theta, se = _mean_and_stderr(vals)
    if single:
        return float(theta[0]), float(se[0])
    return theta, se


@dataclass(frozen=True, eq=False)
class ClarkIntegrandEstimate:
    grid: TimeGrid
    names: tuple
    theta: np.ndarray   # (n_observables, n_steps), value at left point t_k
    stderr: np.ndarray
    n_inner: int

    @property
    def times(self) -> np.ndarray:
        return self.grid.time(np.arange(self.grid.n_steps))

    def of(self, name: str):
        i = self.names.index(name)
        return self.theta[i], self.stderr[i]

    def to_csv(self, fh, name: Optional[str] = None) -> None:
        """Rows ``t,theta_hat,stderr`` for one observable."""
        theta, se = self.of(name or self.names[0])
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "theta_hat", "stderr"])
        for t, th, s in zip(self.times, theta, se):
            w.writerow([repr(float(t)), repr(float(th)), repr(float(s))])


def clark_integrand_path(cs: CoefficientSet, ensemble0: EnsembleState, path: BrownianPath,
                         observables, n_inner, base_seed: int = 0, outer_index: int = 0,
                         trajectory: Optional[FlowTrajectory] = None):
    """Theta_hat at every left grid point of one outer path.

    ``n_inner`` may be a sequence of sizes; the largest is simulated once and
    every smaller size uses the leading inner paths, giving one estimate per
    size (identical to separate runs at each size).
    """
    obs_list, _ = _as_list(observables)
    sizes = [int(n_inner)] if np.ndim(n_inner) == 0 else sorted(int(v) for v in n_inner)
    grid = path.grid
    traj = trajectory if trajectory is not None else euler_solve(cs, ensemble0, path)
    n = grid.n_steps
    theta = np.empty((len(sizes), len(obs_list), n))
    se = np.empty_like(theta)
    for k in range(n):
        gen = rng.substream(base_seed, rng.INNER, outer_index, k)
        s = inner_samples(cs, traj.state(k), grid, k, sizes[-1], gen)
        vals = np.stack([s.contributions(o) for o in obs_list])
        for q, size in enumerate(sizes):
            theta[q, :, k], se[q, :, k] = _mean_and_stderr(vals[:, :size])
    names = tuple(o.name for o in obs_list)
    ests = [ClarkIntegrandEstimate(grid, names, theta[q], se[q], size) for q, size in enumerate(sizes)]
    return ests[0] if np.ndim(n_inner) == 0 else ests


def terminal_pairing(cs: CoefficientSet, ensemble0: EnsembleState, path: BrownianPath,
                     obs: Observable) -> float:
    """alpha = sum_i w_i phi(x_i(T))."""
    return pair_with_measure(obs, euler_solve(cs, ensemble0, path).terminal)


def representation_residual(alpha: float, mean_estimate: float, integrand: ClarkIntegrandEstimate,
                            path: BrownianPath, name: Optional[str] = None) -> float:
    """alpha - E_hat[alpha] - sum_k Theta_hat(t_k) dW_k (left-point Ito sum)."""
    if integrand.grid != path.grid:
        raise DomainError("integrand and path are on different grids")
    theta, _ = integrand.of(name or integrand.names[0])
    return float(alpha - mean_estimate - np.sum(theta * path.increments))


@dataclass(frozen=True, eq=False)
class RepresentationReport:
    name: str
    M_outer: int
    M_mean: int
    n_inner: int
    n_steps: int
    residuals: np.ndarray
    mean_estimate: float
    mean_estimate_stderr: float

    @property
    def mean_resid(self) -> float:
        return float(self.residuals.mean())

    @property
    def stderr_mean_resid(self) -> float:
        """Includes the error of the independent mean estimate, which every
        residual shares."""
        s = self.residuals.std(ddof=1) / np.sqrt(self.residuals.size)
        return float(np.hypot(s, self.mean_estimate_stderr))

    @property
    def rms_resid(self) -> float:
        return float(np.sqrt(np.mean(self.residuals ** 2)))

    def row(self):
        return [self.M_outer, self.M_mean, self.n_inner, self.n_steps, repr(self.mean_resid),
                repr(self.stderr_mean_resid), repr(self.rms_resid)]


SUMMARY_HEADER = ["M_outer", "M_mean", "n_inner", "n_steps", "mean_resid",
                  "stderr_mean_resid", "rms_resid"]


def write_summary_csv(reports, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for r in reports:
        w.writerow(r.row())


def estimate_mean(cs, ensemble0, grid, observables, M_mean, base_seed=0):
    """Independent-batch estimate of E alpha and its stderr for each observable."""
    obs_list, _ = _as_list(observables)
    vals = np.empty((len(obs_list), M_mean))
    for m in range(M_mean):
        path = sample_brownian(grid, rng.path_seed(base_seed, rng.MEAN, m))
        term = euler_solve(cs, ensemble0, path).terminal
        for j, o in enumerate(obs_list):
            vals[j, m] = pair_with_measure(o, term)
    return vals.mean(axis=1), vals.std(axis=1, ddof=1) / np.sqrt(M_mean)


def outer_residuals(cs, ensemble0, grid, observables, n_inner, mean_estimates, indices,
                    base_seed=0, threads=1, keep_integrands=False):
    """Residuals of outer paths ``indices``.

    Shape (n_observables, len(indices)), or (n_sizes, n_observables,
    len(indices)) when ``n_inner`` is a sequence of nested sizes.
    """
    obs_list, _ = _as_list(observables)
    nested = np.ndim(n_inner) != 0
    sizes = sorted(n_inner) if nested else [n_inner]

    def one(m):
        path = sample_brownian(grid, rng.path_seed(base_seed, rng.OUTER, m))
        traj = euler_solve(cs, ensemble0, path)
        ests = clark_integrand_path(cs, ensemble0, path, obs_list, sizes, base_seed, m, traj)
        term = traj.terminal
        alphas = [pair_with_measure(o, term) for o in obs_list]
        r = [[representation_residual(alphas[j], mean_estimates[j], est, path, o.name)
              for j, o in enumerate(obs_list)] for est in ests]
        return r, (ests if keep_integrands else None)

    indices = list(indices)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, indices))
    else:
        results = [one(m) for m in indices]
    res = np.empty((len(sizes), len(obs_list), len(indices)))
    for col, (r, _) in enumerate(results):
        res[:, :, col] = r
    kept = [e if nested else (e[0] if e else None) for _, e in results]
    return (res if nested else res[0]), kept


def verify_representation(cs: CoefficientSet, ensemble0: EnsembleState, grid: TimeGrid,
                          observables, M_outer: int, M_mean: int, n_inner: int,
                          base_seed: int = 0, threads: int = 1):
    """Residual statistics of the estimated representation.

    E alpha comes from ``M_mean`` paths independent of the ``M_outer`` outer
    paths.  Several observables share all random numbers and give a list of
    reports.
    """
    if M_outer < 2 or M_mean < 2:
        raise ConfigError("M_outer and M_mean must be >= 2")
    obs_list, single = _as_list(observables)
    means, mean_se = estimate_mean(cs, ensemble0, grid, obs_list, M_mean, base_seed)
    res, _ = outer_residuals(cs, ensemble0, grid, obs_list, n_inner, means, range(M_outer),
                             base_seed, threads)
    reports = [RepresentationReport(o.name, M_outer, M_mean, n_inner, grid.n_steps, res[j],
                                    float(means[j]), float(mean_se[j]))
               for j, o in enumerate(obs_list)]
    return reports[0] if single else reports
