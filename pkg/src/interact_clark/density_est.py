"""Signed density g_t of the Clark integrand by kernel-derivative smoothing.

From inner continuations launched at t we collect terminal positions X and
coefficients c = w_i eta_t(u_i, T).  The estimate

    g_hat(v) = -(1/n_inner) sum c K_h'(v - X)

satisfies int phi g_hat = (1/n_inner) sum c (phi' * K_h)(X), a smoothed
version of the nested Monte Carlo integrand estimate, so pairing g_hat with
test functions reproduces Theta_phi(t).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from .clark_ocone import InnerSamples, inner_samples
from .coefficients import CoefficientSet
from .exceptions import BandwidthError, ConfigError, DomainError
from .flow_sim import EnsembleState, TimeGrid

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def select_bandwidth(X, policy="silverman") -> float:
    """Bandwidth from a named rule or a positive number.

    ``silverman``   1.06 sigma n^(-1/5), the density rule of thumb;
    ``derivative``  sigma (4 / (5 n))^(1/7), normal-reference rule for the
                    first derivative of a density.
    """
    X = np.asarray(X, dtype=float).ravel()
    if not isinstance(policy, str):
        h = float(policy)
        if not h > 0:
            raise BandwidthError(f"bandwidth must be positive, got {h}")
        return h
    sigma = X.std(ddof=1) if X.size > 1 else 0.0
    if not sigma > 0:
        raise BandwidthError("all samples coincide; cannot choose a bandwidth")
    n = X.size
    if policy == "silverman":
        return 1.06 * sigma * n ** (-0.2)
    if policy == "derivative":
        return sigma * (4.0 / (5.0 * n)) ** (1.0 / 7.0)
    raise ConfigError(f"unknown bandwidth policy {policy!r}",
                      [("experiment.bandwidth", "silverman, derivative or a positive number")])


@dataclass(frozen=True, eq=False)
class IntegrandDensityEstimate:
    t: float
    v: np.ndarray
    values: np.ndarray
    bandwidth: float
    n_samples: int
    n_inner: int
    samples: Optional[InnerSamples] = None

    def pair(self, phi) -> float:
        """Trapezoid value of int phi g_hat."""
        return float(trapezoid(np.asarray(phi(self.v), dtype=float) * self.values, self.v))

    def total(self) -> float:
        return float(trapezoid(self.values, self.v))

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DENSITY_HEADER)
        t = repr(float(self.t))
        for v, g in zip(self.v, self.values):
            w.writerow([t, repr(float(v)), repr(float(g))])


DENSITY_HEADER = ["t", "v", "g_hat"]


def kernel_derivative_density(X, c, n_inner: int, bandwidth="silverman", n_grid: int = 512,
                              t: float = float("nan"), chunk: int = 1 << 16) -> IntegrandDensityEstimate:
    """g_hat on a uniform grid over [min X - 4h, max X + 4h]."""
    X = np.asarray(X, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    if X.shape != c.shape:
        raise ConfigError("positions and coefficients must have the same size")
    if n_grid < 2:
        raise ConfigError("n_grid must be >= 2")
    h = select_bandwidth(X, bandwidth)
    v = np.linspace(X.min() - 4 * h, X.max() + 4 * h, n_grid)
    g = np.zeros(n_grid)
    for start in range(0, X.size, chunk):
        z = (v[:, None] - X[None, start:start + chunk]) / h
        # K_h'(u) = -(u / h^2) phi(u / h) / h with u = v - X
        kprime = -z * np.exp(-0.5 * z * z) * (_INV_SQRT_2PI / (h * h))
        g -= kprime @ c[start:start + chunk]
    g /= n_inner
    return IntegrandDensityEstimate(t, v, g, h, X.size, n_inner)


def integrand_density(cs: CoefficientSet, state: EnsembleState, grid: TimeGrid, k: int,
                      n_inner: int, gen: np.random.Generator, bandwidth="silverman",
                      n_grid: int = 512) -> IntegrandDensityEstimate:
    """Estimate g_t at grid time t_k from ``n_inner`` inner continuations.

    The samples are kept on the result so the nested Monte Carlo integrand
    can be computed from exactly the same draws.
    """
    if n_inner < 100:
        raise ConfigError("integrand_density needs n_inner >= 100")
    s = inner_samples(cs, state, grid, k, n_inner, gen)
    coeff = s.eta * s.weights[None, :]
    est = kernel_derivative_density(s.positions, coeff, n_inner, bandwidth, n_grid, float(grid.time(k)))
    return IntegrandDensityEstimate(est.t, est.v, est.values, est.bandwidth, est.n_samples,
                                    n_inner, s)


def pairing_consistency(ghat: IntegrandDensityEstimate, observables, thetas, support_tol: float = 1e-3):
    """|int phi g_hat - Theta_hat_phi| / (1 + |Theta_hat_phi|) for each phi.

    Raises DomainError when phi * g_hat is not negligible at the grid ends,
    i.e. the grid does not cover the effective support of the pairing.
    """
    out = []
    for obs, theta in zip(observables, thetas):
        prod = np.asarray(obs(ghat.v), dtype=float) * ghat.values
        peak = np.max(np.abs(prod))
        if peak > 0 and max(abs(prod[0]), abs(prod[-1])) > support_tol * peak:
            raise DomainError(f"grid does not cover the effective support of {obs.name}")
        pairing = float(trapezoid(prod, ghat.v))
        out.append(abs(pairing - theta) / (1.0 + abs(theta)))
    return np.asarray(out)


CONSISTENCY_HEADER = ["phi_name", "theta_hat", "pairing", "rel_error"]


def write_consistency_csv(ghat: IntegrandDensityEstimate, observables, thetas, fh) -> None:
    errs = pairing_consistency(ghat, observables, thetas)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CONSISTENCY_HEADER)
    for obs, theta, err in zip(observables, thetas, errs):
        w.writerow([obs.name, repr(float(theta)), repr(ghat.pair(obs)), repr(float(err))])
