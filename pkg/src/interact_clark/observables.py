"""Named test functions phi paired against the flow measure."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import ConfigError


@dataclass(frozen=True)
class Observable:
    """A test function with its derivative."""

    name: str
    f: Callable
    df: Callable

    def __call__(self, v):
        return self.f(v)

    def scaled(self, c: float) -> "Observable":
        return Observable(f"{c}*{self.name}", lambda v: c * self.f(v), lambda v: c * self.df(v))

    def __add__(self, other: "Observable") -> "Observable":
        return Observable(f"{self.name}+{other.name}",
                          lambda v: self.f(v) + other.f(v),
                          lambda v: self.df(v) + other.df(v))


def _one(v):
    return np.ones_like(np.asarray(v, dtype=float))


def _zero(v):
    return np.zeros_like(np.asarray(v, dtype=float))


OBSERVABLES = {
    "one": Observable("one", _one, _zero),
    "v": Observable("v", lambda v: np.asarray(v, dtype=float), _one),
    "v2": Observable("v2", lambda v: np.asarray(v, dtype=float) ** 2, lambda v: 2.0 * np.asarray(v, dtype=float)),
    "sin": Observable("sin", np.sin, np.cos),
    "cos": Observable("cos", np.cos, lambda v: -np.sin(v)),
    "bump": Observable("bump", lambda v: np.exp(-0.5 * np.square(v)),
                       lambda v: -np.asarray(v, dtype=float) * np.exp(-0.5 * np.square(v))),
}


def get(name: str) -> Observable:
    try:
        return OBSERVABLES[name]
    except KeyError:
        raise ConfigError(f"unknown test function {name!r}",
                          [("test_functions", f"must be among {sorted(OBSERVABLES)}")]) from None
