"""Coefficient families for the interacting flow.

The drift kernel ``a(x, y)`` is averaged against the transported initial
measure; the diffusion ``b(x)`` multiplies the single shared Wiener
increment.  Every family carries exact partial derivatives and a uniform
bound, so downstream code never differentiates numerically.

Drift families::

    zero                 a = 0
    constant(c)          a = c
    linear_attraction(k) a = k (y - x)           (unbounded, oracle only)
    tanh_kernel(al, g)   a = al tanh(g (y - x))

Diffusion families::

    unit                 b = 1
    sin_bounded(b0, b1)  b = b0 + b1 sin(x),  b0 > |b1|
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .exceptions import ConfigError

DRIFT_FAMILIES = {
    "zero": (K.DRIFT_ZERO, 0),
    "constant": (K.DRIFT_CONSTANT, 1),
    "linear_attraction": (K.DRIFT_LINEAR, 1),
    "tanh_kernel": (K.DRIFT_TANH, 2),
}
DIFFUSION_FAMILIES = {
    "unit": (K.DIFF_UNIT, 0),
    "sin_bounded": (K.DIFF_SIN, 2),
}


def _params(family, params, n_expected):
    params = tuple(float(p) for p in params)
    if len(params) != n_expected:
        raise ConfigError(
            f"family {family!r} takes {n_expected} parameter(s), got {len(params)}",
            [("params", f"expected {n_expected} values")],
        )
    if not all(math.isfinite(p) for p in params):
        raise ConfigError(f"non-finite parameter for {family!r}", [("params", "must be finite")])
    return params


@dataclass(frozen=True)
class DriftKernel:
    family: str
    params: tuple = ()

    def __post_init__(self):
        if self.family not in DRIFT_FAMILIES:
            raise ConfigError(
                f"unknown drift family {self.family!r}",
                [("family", f"must be one of {sorted(DRIFT_FAMILIES)}")],
            )
        code, n = DRIFT_FAMILIES[self.family]
        object.__setattr__(self, "params", _params(self.family, self.params, n))

    @property
    def code(self) -> int:
        return DRIFT_FAMILIES[self.family][0]

    @property
    def bound(self) -> float:
        """sup of |a|, |da/dx|, |da/dy| and the second partials."""
        p = self.params
        if self.family == "zero":
            return 0.0
        if self.family == "constant":
            return abs(p[0])
        if self.family == "linear_attraction":
            return 0.0 if p[0] == 0 else math.inf
        alpha, gamma = abs(p[0]), abs(p[1])
        # max |tanh''| = 4 / (3 sqrt 3)
        return max(alpha, alpha * gamma, alpha * gamma**2 * 4.0 / (3.0 * math.sqrt(3.0)))


@dataclass(frozen=True)
class Diffusion:
    family: str
    params: tuple = ()

    def __post_init__(self):
        if self.family not in DIFFUSION_FAMILIES:
            raise ConfigError(
                f"unknown diffusion family {self.family!r}",
                [("family", f"must be one of {sorted(DIFFUSION_FAMILIES)}")],
            )
        _, n = DIFFUSION_FAMILIES[self.family]
        params = _params(self.family, self.params, n)
        if self.family == "sin_bounded" and not params[0] > abs(params[1]):
            raise ConfigError(
                "sin_bounded requires b0 > |b1| so b stays away from zero",
                [("params", "b0 must exceed |b1|")],
            )
        object.__setattr__(self, "params", params)

    @property
    def code(self) -> int:
        return DIFFUSION_FAMILIES[self.family][0]

    @property
    def bound(self) -> float:
        if self.family == "unit":
            return 1.0
        b0, b1 = self.params
        return abs(b0) + abs(b1)


@dataclass(frozen=True)
class CoefficientSet:
    """The pair (a, b) driving the flow.

    ``bound`` is the uniform constant C on a, its partials, b and b'.  It is
    infinite for ``linear_attraction``, which is admitted only because it has
    a closed-form flow (``conforming`` is False for it).
    """

    drift: DriftKernel
    diffusion: Diffusion = field(default_factory=lambda: Diffusion("unit"))

    @classmethod
    def from_names(cls, drift, drift_params=(), diffusion="unit", diffusion_params=()):
        return cls(DriftKernel(drift, tuple(drift_params)),
                   Diffusion(diffusion, tuple(diffusion_params)))

    @property
    def bound(self) -> float:
        return max(self.drift.bound, self.diffusion.bound)

    @property
    def conforming(self) -> bool:
        return math.isfinite(self.bound)

    # arguments in the order the compiled kernels expect
    @property
    def kernel_args(self):
        return (self.drift.code, np.asarray(self.drift.params + (0.0, 0.0), dtype=float),
                self.diffusion.code, np.asarray(self.diffusion.params + (0.0, 0.0), dtype=float))

    def to_dict(self) -> dict:
        return {
            "drift": {"family": self.drift.family, "params": list(self.drift.params)},
            "diffusion": {"family": self.diffusion.family, "params": list(self.diffusion.params)},
            "bound": self.bound,
        }


def _check(cs):
    if not isinstance(cs, CoefficientSet):
        raise ConfigError(f"expected a CoefficientSet, got {type(cs).__name__}")


def _drift_all(cs, x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    shape = x.shape
    xf, yf = np.ascontiguousarray(x).ravel(), np.ascontiguousarray(y).ravel()
    a, a1, a2 = (np.empty(xf.shape) for _ in range(3))
    dcode, dp, _, _ = cs.kernel_args
    K.drift_array(dcode, dp, xf, yf, a, a1, a2)
    return a.reshape(shape), a1.reshape(shape), a2.reshape(shape)


def _unwrap(arr):
    return float(arr) if arr.ndim == 0 else arr


def eval_drift_kernel(cs: CoefficientSet, x, y):
    """a(x, y); broadcasts over arrays."""
    _check(cs)
    return _unwrap(_drift_all(cs, x, y)[0])


def eval_drift_partials(cs: CoefficientSet, x, y):
    """(da/dx, da/dy) at (x, y)."""
    _check(cs)
    _, a1, a2 = _drift_all(cs, x, y)
    return _unwrap(a1), _unwrap(a2)


def eval_diffusion(cs: CoefficientSet, x):
    """(b(x), b'(x))."""
    _check(cs)
    x = np.asarray(x, dtype=float)
    xf = np.ascontiguousarray(x).ravel()
    b, bp = np.empty(xf.shape), np.empty(xf.shape)
    _, _, bcode, bpar = cs.kernel_args
    K.diffusion_array(bcode, bpar, xf, b, bp)
    return _unwrap(b.reshape(x.shape)), _unwrap(bp.reshape(x.shape))


def derivative_consistency_check(cs: CoefficientSet, grid_halfwidth: float = 10.0,
                                 n: int = 20, step: float = 1e-5) -> float:
    """Largest |analytic - central difference| / (1 + |analytic|).

    Covers da/dx and da/dy on an ``n`` x ``n`` grid over
    ``[-grid_halfwidth, grid_halfwidth]^2`` and b' on the grid's axis.
    """
    if n < 2 or grid_halfwidth <= 0:
        raise ConfigError("need n >= 2 and grid_halfwidth > 0")
    g = np.linspace(-grid_halfwidth, grid_halfwidth, n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    a1, a2 = eval_drift_partials(cs, X, Y)
    fd1 = (eval_drift_kernel(cs, X + step, Y) - eval_drift_kernel(cs, X - step, Y)) / (2 * step)
    fd2 = (eval_drift_kernel(cs, X, Y + step) - eval_drift_kernel(cs, X, Y - step)) / (2 * step)
    _, bp = eval_diffusion(cs, g)
    fdb = (eval_diffusion(cs, g + step)[0] - eval_diffusion(cs, g - step)[0]) / (2 * step)
    errs = [np.abs(a1 - fd1) / (1 + np.abs(a1)),
            np.abs(a2 - fd2) / (1 + np.abs(a2)),
            np.abs(bp - fdb) / (1 + np.abs(bp))]
    return float(max(e.max() for e in errs))
