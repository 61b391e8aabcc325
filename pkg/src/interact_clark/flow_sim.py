"""Weighted particle flow driven by one shared Wiener path.

The initial measure is a finite set of atoms ``u_i`` with weights ``w_i``;
the measure at time t is ``sum_i w_i delta_{x_i(t)}``.  All particles see
the same Brownian increment at every step (this is not McKean-Vlasov
simulation with independent noises).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from . import _kernels as K
from . import rng
from .coefficients import CoefficientSet
from .exceptions import ConfigError, DomainError, NumericError


@dataclass(frozen=True)
class TimeGrid:
    t_start: float = 0.0
    t_end: float = 1.0
    n_steps: int = 256

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ConfigError("t_end must exceed t_start", [("grid.t_end", "must be > t_start")])
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigError("n_steps must be a positive integer", [("grid.n_steps", "must be >= 1")])
        if self.t_start < 0:
            raise ConfigError("t_start must be >= 0", [("grid.t_start", "must be >= 0")])

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    def time(self, k):
        """Grid point(s) t_start + k dt; the only place grid times are formed."""
        return self.t_start + np.asarray(k) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.time(np.arange(self.n_steps + 1))

    def index_of(self, t: float) -> int:
        k = int(round((t - self.t_start) / self.dt))
        if not 0 <= k <= self.n_steps or abs(self.time(k) - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"t={t} is not a grid point")
        return k

    def tail(self, k: int) -> "TimeGrid":
        """Sub-grid from t_k to t_end with the same spacing."""
        if not 0 <= k < self.n_steps:
            raise DomainError(f"grid index {k} leaves no steps")
        return TimeGrid(float(self.time(k)), self.t_end, self.n_steps - k)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    grid: TimeGrid
    increments: np.ndarray
    seed: Optional[int] = None
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape != (self.grid.n_steps,):
            raise DomainError(f"expected {self.grid.n_steps} increments, got {inc.shape}")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)
        vals = np.concatenate([[0.0], np.cumsum(inc)])
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def shifted(self, h: np.ndarray, eps: float) -> "BrownianPath":
        """Cameron-Martin shift W + eps * int h, with h given at left grid points."""
        h = np.asarray(h, dtype=float)
        return BrownianPath(self.grid, self.increments + eps * h * self.grid.dt)

    def with_increments_after(self, k: int, new_tail: np.ndarray) -> "BrownianPath":
        inc = self.increments.copy()
        inc[k:] = new_tail
        return BrownianPath(self.grid, inc, None)


def sample_brownian(grid: TimeGrid, seed: int) -> BrownianPath:
    """Path whose increments come from the Philox stream keyed by ``seed``."""
    z = rng.substream(seed).standard_normal(grid.n_steps)
    return BrownianPath(grid, z * np.sqrt(grid.dt), int(seed))


@dataclass(frozen=True, eq=False)
class EnsembleState:
    atoms: np.ndarray
    weights: np.ndarray
    positions: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        x = np.asarray(self.positions, dtype=float).ravel()
        if not (atoms.shape == w.shape == x.shape) or atoms.size == 0:
            raise ConfigError("atoms, weights and positions must be non-empty and equally long")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("weights must be nonnegative and sum to 1",
                              [("mu0.weights", "must be a probability vector")])
        bad = np.flatnonzero(~np.isfinite(x))
        if bad.size:
            raise NumericError(f"non-finite position for particle {bad[0]}", particle=int(bad[0]))
        for arr in (atoms, w, x):
            arr.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "positions", x)

    @classmethod
    def initial(cls, atoms, weights=None, time: float = 0.0) -> "EnsembleState":
        atoms = np.asarray(atoms, dtype=float).ravel()
        if weights is None:
            weights = np.full(atoms.size, 1.0 / atoms.size)
        return cls(atoms, weights, atoms.copy(), time)

    @property
    def n_particles(self) -> int:
        return self.atoms.size

    def mean(self) -> float:
        return float(np.sum(self.weights * self.positions))

    def moved(self, positions, time) -> "EnsembleState":
        return EnsembleState(self.atoms, self.weights, positions, time)


def quantile_atoms(distribution: str, n: int):
    """``n`` equal-weight atoms at the midpoint quantiles of a named law.

    ``uniform`` is on [-1, 1], ``gaussian`` is standard normal and
    ``two_point`` puts half the atoms at -1 and half at +1.
    """
    if n < 1:
        raise ConfigError("need at least one particle", [("mu0.n_particles", "must be >= 1")])
    q = (np.arange(n) + 0.5) / n
    if distribution == "uniform":
        atoms = 2.0 * q - 1.0
    elif distribution == "gaussian":
        atoms = stats.norm.ppf(q)
    elif distribution == "two_point":
        atoms = np.where(q < 0.5, -1.0, 1.0)
    else:
        raise ConfigError(f"unknown distribution {distribution!r}",
                          [("mu0.distribution", "must be uniform, gaussian or two_point")])
    return atoms, np.full(n, 1.0 / n)


@dataclass(frozen=True, eq=False)
class FlowTrajectory:
    grid: TimeGrid
    atoms: np.ndarray
    weights: np.ndarray
    positions: np.ndarray  # (n_steps + 1, n_particles)
    path: Optional[BrownianPath] = None

    def state(self, k: int) -> EnsembleState:
        return EnsembleState(self.atoms, self.weights, self.positions[k], float(self.grid.time(k)))

    @property
    def states(self):
        return [self.state(k) for k in range(self.grid.n_steps + 1)]

    @property
    def terminal(self) -> EnsembleState:
        return self.state(self.grid.n_steps)

    def to_csv(self, fh) -> None:
        """Rows ``t,particle_index,atom,weight,position``."""
        write_trajectory_csv(self, fh)


def _raise_numeric(status, what):
    step, particle = status
    if step >= 0:
        raise NumericError(f"{what}: non-finite value at step {step}, particle {particle}",
                           step=int(step), particle=int(particle))


def mean_field_drift(ensemble: EnsembleState, cs: CoefficientSet) -> np.ndarray:
    """d_i = sum_j w_j a(x_i, x_j)."""
    d = np.empty(ensemble.n_particles)
    dcode, dp, _, _ = cs.kernel_args
    K.mean_field(np.ascontiguousarray(ensemble.positions), ensemble.weights, dcode, dp, d)
    bad = np.flatnonzero(~np.isfinite(d))
    if bad.size:
        raise NumericError(f"non-finite drift for particle {bad[0]}", particle=int(bad[0]))
    return d


def _check_start(ensemble0, grid):
    if abs(ensemble0.time - grid.t_start) > 1e-12:
        raise DomainError(f"ensemble time {ensemble0.time} differs from grid start {grid.t_start}")


def euler_solve(cs: CoefficientSet, ensemble0: EnsembleState, path: BrownianPath) -> FlowTrajectory:
    """Left-point Euler-Maruyama, every particle driven by the same increment."""
    grid = path.grid
    _check_start(ensemble0, grid)
    out = np.empty((grid.n_steps + 1, ensemble0.n_particles))
    status = K.euler_path(np.ascontiguousarray(ensemble0.positions), ensemble0.weights,
                          path.increments, grid.dt, *cs.kernel_args, out)
    _raise_numeric(status, "euler_solve")
    return FlowTrajectory(grid, ensemble0.atoms, ensemble0.weights, out, path)


def picard_solve(cs: CoefficientSet, ensemble0: EnsembleState, path: BrownianPath, n_iter: int):
    """Successive approximations with coefficients frozen at the previous iterate.

    Starts from ``x^0(u, t) = u`` and returns ``(x^{n_iter}, deltas)`` where
    ``deltas[n] = max |x^{n+1} - x^n|`` for ``n = 0..n_iter``.  The last entry
    needs one extra sweep and serves as the error indicator of the returned
    iterate.  Each sweep uses the Euler grid and increments of ``path``, so the
    iteration converges to :func:`euler_solve` on that path.
    """
    if n_iter < 1:
        raise ConfigError("n_iter must be >= 1")
    grid = path.grid
    _check_start(ensemble0, grid)
    prev = np.tile(ensemble0.positions, (grid.n_steps + 1, 1))
    deltas = []
    returned = None
    for n in range(n_iter + 1):
        nxt = np.empty_like(prev)
        status = K.euler_frozen(prev, ensemble0.weights, path.increments, grid.dt,
                                *cs.kernel_args, nxt)
        _raise_numeric(status, f"picard sweep {n + 1}")
        deltas.append(float(np.max(np.abs(nxt - prev))))
        prev = nxt
        if n + 1 == n_iter:
            returned = nxt
    traj = FlowTrajectory(grid, ensemble0.atoms, ensemble0.weights, returned, path)
    return traj, deltas


def pair_with_measure(phi: Callable, ensemble: EnsembleState) -> float:
    """<phi, mu_t> = sum_i w_i phi(x_i)."""
    vals = np.asarray(phi(ensemble.positions), dtype=float)
    vals = np.broadcast_to(vals, ensemble.positions.shape)
    if not np.all(np.isfinite(vals)):
        raise NumericError("test function returned a non-finite value")
    return float(np.sum(ensemble.weights * vals))


def linear_attraction_exact(kappa: float, atoms, weights, path: BrownianPath) -> np.ndarray:
    """Closed-form flow for a = kappa (y - x), b = 1 on the same path.

    The weighted mean moves as m0 + W(t) and deviations from it decay like
    exp(-kappa t).  Returns positions of shape (n_steps + 1, n_particles).
    """
    atoms = np.asarray(atoms, dtype=float)
    m0 = float(np.sum(np.asarray(weights) * atoms))
    t = path.grid.times - path.grid.t_start
    return m0 + path.values[:, None] + (atoms[None, :] - m0) * np.exp(-kappa * t)[:, None]


TRAJECTORY_HEADER = ["t", "particle_index", "atom", "weight", "position"]


def write_trajectory_csv(traj: FlowTrajectory, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER)
    times = traj.grid.times
    for k in range(traj.grid.n_steps + 1):
        for i in range(traj.atoms.size):
            w.writerow([repr(float(times[k])), i, repr(float(traj.atoms[i])),
                        repr(float(traj.weights[i])), repr(float(traj.positions[k, i]))])
