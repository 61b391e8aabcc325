"""Exact Clark representation of f(W(1)) for standard Brownian motion.

With the heat kernel p_t(u) = (2 pi t)^{-1/2} exp(-u^2 / (2t)),

    f(W(1)) = int f p_1 + int_0^1 xi(t) dW(t),
    xi(t)   = int f'(W(t) + v) p_{1-t}(v) dv = -int f(W(t) + v) p'_{1-t}(v) dv.

Both forms of xi are computed by Gauss-Hermite quadrature; the second is
the integration-by-parts form and is used as a cross-check.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import rng
from .exceptions import ConfigError, DomainError
from .flow_sim import BrownianPath, TimeGrid, sample_brownian
from .observables import Observable

DEFAULT_NODES = 40
_SQRT_PI = np.sqrt(np.pi)


def heat_kernel(t, u):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("heat kernel needs t > 0")
    u = np.asarray(u, dtype=float)
    out = np.exp(-u * u / (2 * t)) / np.sqrt(2 * np.pi * t)
    return float(out) if out.ndim == 0 else out


def heat_kernel_dv(t, u):
    """Spatial derivative -(u / t) p_t(u)."""
    p = heat_kernel(t, u)
    out = -(np.asarray(u, dtype=float) / np.asarray(t, dtype=float)) * p
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=None)
def _gh(n_nodes: int):
    if n_nodes < 1:
        raise ConfigError("n_nodes must be positive")
    z, w = np.polynomial.hermite.hermgauss(n_nodes)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


def _tau(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= 1):
        raise DomainError("semigroup evaluation needs 0 <= t < 1")
    return 1.0 - t


def semigroup_prime(df, t, x, n_nodes: int = DEFAULT_NODES):
    """(P_{1-t} f')(x) = E f'(x + sqrt(1-t) Z), broadcasting over t and x."""
    z, w = _gh(n_nodes)
    tau = _tau(t)
    x = np.asarray(x, dtype=float)
    scale = np.sqrt(2 * tau)[..., None] if np.ndim(tau) else np.sqrt(2 * tau)
    vals = df(x[..., None] + scale * z)
    out = vals @ w / _SQRT_PI
    return float(out) if np.ndim(out) == 0 else out


def semigroup_ibp(f, t, x, n_nodes: int = DEFAULT_NODES):
    """-int f(x + v) p'_{1-t}(v) dv, the integrated-by-parts form."""
    z, w = _gh(n_nodes)
    tau = _tau(t)
    x = np.asarray(x, dtype=float)
    s = np.sqrt(2 * tau)
    if np.ndim(tau):
        s = s[..., None]
        tau = tau[..., None]
    # p'(v) = -(v / tau) p(v) and v = s z
    vals = f(x[..., None] + s * z) * (s * z / tau)
    out = vals @ w / _SQRT_PI
    return float(out) if np.ndim(out) == 0 else out


def mean_pairing(f, n_nodes: int = DEFAULT_NODES) -> float:
    """E f(W(1)) = int f p_1."""
    z, w = _gh(n_nodes)
    return float(f(np.sqrt(2.0) * z) @ w / _SQRT_PI)


def _check_unit_grid(grid: TimeGrid):
    if grid.t_start != 0.0 or grid.t_end != 1.0:
        raise DomainError("the delta_{W(1)} representation lives on [0, 1]")


def exact_integrand(obs: Observable, path: BrownianPath, n_nodes: int = DEFAULT_NODES) -> np.ndarray:
    """xi(t_k) = (P_{1-t_k} f')(W(t_k)) at the left grid points."""
    _check_unit_grid(path.grid)
    n = path.grid.n_steps
    return semigroup_prime(obs.df, path.grid.time(np.arange(n)), path.values[:n], n_nodes)


def _residuals(obs, W, dW, t_left, mean, n_nodes):
    xi = semigroup_prime(obs.df, t_left, W[..., :-1], n_nodes)
    return obs.f(W[..., -1]) - mean - np.sum(xi * dW, axis=-1)


def delta_representation_residual(obs: Observable, path: BrownianPath,
                                  n_nodes: int = DEFAULT_NODES) -> float:
    """f(W(1)) - E f(W(1)) - sum_k xi(t_k) dW_k on one path."""
    _check_unit_grid(path.grid)
    t_left = path.grid.time(np.arange(path.grid.n_steps))
    return float(_residuals(obs, path.values, path.increments, t_left,
                            mean_pairing(obs.f, n_nodes), n_nodes))


@dataclass(frozen=True)
class ExampleSummary:
    f_name: str
    n_steps: int
    M: int
    mean_resid: float
    stderr: float
    rms_resid: float
    ibp_check: float
    residuals: np.ndarray

    def row(self):
        return [self.f_name, self.n_steps, self.M, repr(self.mean_resid), repr(self.stderr),
                repr(self.rms_resid), repr(self.ibp_check)]


IBP_TIMES = (0.0, 0.25, 0.5, 0.75)
IBP_POINTS = (-1.5, -0.5, 0.5, 1.5)


def ibp_cross_check(obs: Observable, n_nodes: int = DEFAULT_NODES) -> float:
    """Max |f'-smoothed - (-p')-smoothed| over a 4 x 4 set of (t, x)."""
    t, x = np.meshgrid(IBP_TIMES, IBP_POINTS, indexing="ij")
    a = semigroup_prime(obs.df, t, x, n_nodes)
    b = semigroup_ibp(obs.f, t, x, n_nodes)
    return float(np.max(np.abs(a - b)))


def verify_example(obs: Observable, M: int, grid: TimeGrid, base_seed: int = 0,
                   n_nodes: int = DEFAULT_NODES, chunk: int = 256) -> ExampleSummary:
    """Residual statistics of the representation over ``M`` seeded paths."""
    if M < 2:
        raise ConfigError("need at least two paths")
    _check_unit_grid(grid)
    mean = mean_pairing(obs.f, n_nodes)
    t_left = grid.time(np.arange(grid.n_steps))
    res = np.empty(M)
    for start in range(0, M, chunk):
        idx = range(start, min(M, start + chunk))
        paths = [sample_brownian(grid, rng.path_seed(base_seed, rng.EXAMPLE, m)) for m in idx]
        W = np.stack([p.values for p in paths])
        dW = np.stack([p.increments for p in paths])
        res[start:start + len(paths)] = _residuals(obs, W, dW, t_left, mean, n_nodes)
    return ExampleSummary(
        f_name=obs.name, n_steps=grid.n_steps, M=M,
        mean_resid=float(res.mean()),
        stderr=float(res.std(ddof=1) / np.sqrt(M)),
        rms_resid=float(np.sqrt(np.mean(res * res))),
        ibp_check=ibp_cross_check(obs, n_nodes),
        residuals=res,
    )


EXAMPLE_HEADER = ["f_name", "n_steps", "M", "mean_resid", "stderr", "rms_resid", "ibp_check"]


def write_example_csv(summaries, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(EXAMPLE_HEADER)
    for s in summaries:
        w.writerow(s.row())
