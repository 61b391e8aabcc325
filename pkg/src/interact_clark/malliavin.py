"""Stochastic derivative of the flow via the variational recursion.

For a launch index s the derivative eta_s(u_i, t_k) starts at b(x_i(t_s))
and evolves as

    eta_i <- eta_i + [A_i eta_i + sum_j w_j B_ij eta_j] dt + b'(x_i) eta_i dW_k

with A_i = sum_j w_j da/dx(x_i, x_j) and B_ij = da/dy(x_i, x_j) evaluated on
the trajectory at t_k.
"""
from __future__ import annotations

import csv
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import rng
from .coefficients import CoefficientSet, eval_diffusion
from .exceptions import ConfigError, DomainError, NumericError
from .flow_sim import (BrownianPath, EnsembleState, FlowTrajectory, TimeGrid,
                       euler_solve, sample_brownian)


@dataclass(frozen=True, eq=False)
class MalliavinField:
    """eta_s(u_i, t_k) for k >= s_index; ``values[k - s_index, i]``."""

    s_index: int
    values: np.ndarray
    trajectory: FlowTrajectory
    path: BrownianPath

    def at(self, k: int) -> np.ndarray:
        if k < self.s_index:
            raise DomainError(f"eta_s is undefined before s (k={k} < s_index={self.s_index})")
        if k > self.trajectory.grid.n_steps:
            raise DomainError(f"grid index {k} beyond the terminal time")
        return self.values[k - self.s_index]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]


def _check_pair(traj, path):
    if traj.grid != path.grid:
        raise DomainError("trajectory and path must share one grid")


def variational_solve(cs: CoefficientSet, traj: FlowTrajectory, path: BrownianPath,
                      s_index: int, initial=None) -> MalliavinField:
    """Solve the variational recursion launched at grid index ``s_index``.

    ``initial`` overrides the initial vector b(x(t_s)); the recursion is
    linear in it.
    """
    _check_pair(traj, path)
    n = traj.grid.n_steps
    if not 0 <= s_index <= n:
        raise DomainError(f"s_index {s_index} outside grid 0..{n}")
    x = np.ascontiguousarray(traj.positions)
    if initial is None:
        eta0, _ = eval_diffusion(cs, x[s_index])
    else:
        eta0 = np.asarray(initial, dtype=float)
    out = np.empty((n + 1 - s_index, x.shape[1]))
    status = K.variational(x, traj.weights, path.increments, traj.grid.dt,
                           *cs.kernel_args, s_index, np.atleast_1d(eta0), out)
    if status[0] >= 0:
        raise NumericError(f"variational_solve: non-finite eta at step {status[0]}",
                           step=int(status[0]), particle=int(status[1]))
    return MalliavinField(s_index, out, traj, path)


def variational_all(cs: CoefficientSet, traj: FlowTrajectory, path: BrownianPath) -> np.ndarray:
    """Full field ``eta[s, k, i]`` for every launch s, NaN where k < s."""
    _check_pair(traj, path)
    n = traj.grid.n_steps
    out = np.empty((n + 1, n + 1, traj.atoms.size))
    status = K.variational_all(np.ascontiguousarray(traj.positions), traj.weights,
                               path.increments, traj.grid.dt, *cs.kernel_args, out)
    if status[0] >= 0:
        raise NumericError(f"variational_all: non-finite eta at step {status[0]}",
                           step=int(status[0]), particle=int(status[1]))
    return out


def propagator(cs: CoefficientSet, traj: FlowTrajectory, path: BrownianPath,
               r_index: int, t_index: int) -> np.ndarray:
    """Matrix J with eta(t) = J eta(r) for the discrete recursion."""
    _check_pair(traj, path)
    if not 0 <= r_index <= t_index <= traj.grid.n_steps:
        raise DomainError("need 0 <= r_index <= t_index <= n_steps")
    n = traj.atoms.size
    J = np.eye(n)
    M = np.empty((n, n))
    for k in range(r_index, t_index):
        K.step_matrix(np.ascontiguousarray(traj.positions[k]), traj.weights, traj.grid.dt,
                      path.increments[k], *cs.kernel_args, M)
        J = M @ J
    return J


class MalliavinFields(Mapping):
    """Lazily solved fields keyed by launch index; each is cached once solved."""

    def __init__(self, cs: CoefficientSet, traj: FlowTrajectory, path: BrownianPath):
        _check_pair(traj, path)
        self.cs, self.trajectory, self.path = cs, traj, path
        self._cache = {}

    def __getitem__(self, s_index):
        if not 0 <= s_index <= self.trajectory.grid.n_steps:
            raise KeyError(s_index)
        if s_index not in self._cache:
            self._cache[s_index] = variational_solve(self.cs, self.trajectory, self.path, s_index)
        return self._cache[s_index]

    def __iter__(self):
        return iter(range(self.trajectory.grid.n_steps + 1))

    def __len__(self):
        return self.trajectory.grid.n_steps + 1


def indicator(grid: TimeGrid, start: float, end: float) -> np.ndarray:
    """Step function 1_[start, end) sampled at the left grid points."""
    t = grid.time(np.arange(grid.n_steps))
    return ((t >= start - 1e-12) & (t < end - 1e-12)).astype(float)


def directional_derivative(fields, h, particle: int, terminal_index: int) -> float:
    """sum_{m < k} eta_{t_m}(u_i, t_k) h(t_m) dt.

    ``fields`` maps launch indices to :class:`MalliavinField`; only indices
    where h is nonzero are looked up.
    """
    h = np.asarray(h, dtype=float)
    total = 0.0
    for m in np.flatnonzero(h[:terminal_index]):
        try:
            f = fields[int(m)]
        except KeyError:
            raise DomainError(f"no Malliavin field for launch index {m}") from None
        total += f.at(terminal_index)[particle] * h[m] * f.trajectory.grid.dt
    return float(total)


def fd_directional_check(cs: CoefficientSet, ensemble0: EnsembleState, path: BrownianPath,
                         h, eps: float = 1e-4) -> float:
    """Max relative gap between central differences along W +- eps int h and
    the variational-recursion directional derivative at the terminal time."""
    if eps <= 0:
        raise ConfigError("eps must be positive")
    h = np.asarray(h, dtype=float)
    n = path.grid.n_steps
    xp = euler_solve(cs, ensemble0, path.shifted(h, eps)).positions[-1]
    xm = euler_solve(cs, ensemble0, path.shifted(h, -eps)).positions[-1]
    fd = (xp - xm) / (2 * eps)
    traj = euler_solve(cs, ensemble0, path)
    fields = MalliavinFields(cs, traj, path)
    dd = np.array([directional_derivative(fields, h, i, n) for i in range(ensemble0.n_particles)])
    scale = np.maximum(np.abs(fd), np.abs(dd))
    gap = np.abs(fd - dd)
    rel = np.divide(gap, scale, out=np.zeros_like(gap), where=scale > 0)
    return float(rel.max())


def moment_estimate(cs: CoefficientSet, ensemble0: EnsembleState, grid: TimeGrid,
                    p: float, M: int, base_seed: int = 0):
    """Monte Carlo estimate of sup_{s <= t, i} E|eta_s(u_i, t)|^p.

    Returns ``(estimate, stderr)``; the stderr is that of the maximizing
    (s, t, i) cell.
    """
    if p <= 0:
        raise ConfigError("p must be positive")
    if M < 2:
        raise ConfigError("need at least two paths")
    n = grid.n_steps
    s1 = np.zeros((n + 1, n + 1, ensemble0.n_particles))
    s2 = np.zeros_like(s1)
    for m in range(M):
        path = sample_brownian(grid, rng.path_seed(base_seed, rng.MOMENT, m))
        traj = euler_solve(cs, ensemble0, path)
        v = np.abs(variational_all(cs, traj, path)) ** p
        s1 += np.nan_to_num(v)
        s2 += np.nan_to_num(v * v)
    mean = s1 / M
    valid = np.triu(np.ones((n + 1, n + 1), dtype=bool))[:, :, None]  # k >= s
    valid = np.broadcast_to(valid, mean.shape)
    masked = np.where(valid, mean, -np.inf)
    idx = np.unravel_index(np.argmax(masked), masked.shape)
    var = max(s2[idx] / M - mean[idx] ** 2, 0.0) * M / (M - 1)
    return float(mean[idx]), float(np.sqrt(var / M))


FIELD_HEADER = ["s", "t", "particle_index", "eta"]


def write_field_csv(fields, fh) -> None:
    """Rows ``s,t,particle_index,eta`` for each field in ``fields``."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FIELD_HEADER)
    for f in fields:
        grid = f.trajectory.grid
        s = repr(float(grid.time(f.s_index)))
        for k in range(f.s_index, grid.n_steps + 1):
            t = repr(float(grid.time(k)))
            for i, v in enumerate(f.at(k)):
                w.writerow([s, t, i, repr(float(v))])
