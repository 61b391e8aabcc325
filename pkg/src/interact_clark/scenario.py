"""Scenario files: one JSON document per experiment.

The shipped ``scenario.schema.json`` is the reference for every field and
its default.  Loading validates against it, fills defaults, builds the
coefficient set and initial ensemble, and reports every problem as a
``(field_path, message)`` pair on a single :class:`ConfigError`.
"""
from __future__ import annotations

import copy
import hashlib
import json
import warnings
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Optional

import numpy as np
from jsonschema import Draft202012Validator

from . import observables as obs_mod
from .coefficients import DIFFUSION_FAMILIES, DRIFT_FAMILIES, CoefficientSet, Diffusion, DriftKernel
from .exceptions import ConfigError
from .flow_sim import EnsembleState, TimeGrid, quantile_atoms


class ScenarioWarning(UserWarning):
    pass


@lru_cache(maxsize=None)
def schema() -> dict:
    text = resources.files(__package__).joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def _path(parts) -> str:
    return ".".join(str(p) for p in parts) or "<root>"


def _fill_defaults(node: dict, doc: dict) -> None:
    for key, sub in node.get("properties", {}).items():
        if key not in doc:
            if "default" in sub:
                doc[key] = copy.deepcopy(sub["default"])
            elif sub.get("type") == "object" and key not in node.get("required", ()):
                doc[key] = {}
        if isinstance(doc.get(key), dict):
            target = sub
            if "$ref" in sub:
                target = schema()["$defs"][sub["$ref"].rsplit("/", 1)[-1]]
            _fill_defaults(target, doc[key])


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    coefficients: CoefficientSet
    declared_bound: Optional[float]
    atoms: np.ndarray
    weights: np.ndarray
    grid: TimeGrid
    test_functions: tuple
    base_seed: int
    experiment: MappingProxyType
    document: dict
    warnings: tuple = ()

    @property
    def ensemble0(self) -> EnsembleState:
        return EnsembleState.initial(self.atoms, self.weights, self.grid.t_start)

    @property
    def observables(self):
        return [obs_mod.get(n) for n in self.test_functions]

    @property
    def sha256(self) -> str:
        """Hash of the normalized document (defaults filled, seed applied)."""
        blob = json.dumps(self.document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, base_seed: int) -> "Scenario":
        doc = copy.deepcopy(self.document)
        doc["seeds"]["base_seed"] = int(base_seed)
        return scenario_from_dict(doc, name=self.name)


def _coefficients(doc, violations):
    c = doc["coefficients"]
    parts = {}
    for role, table, cls in (("drift", DRIFT_FAMILIES, DriftKernel),
                             ("diffusion", DIFFUSION_FAMILIES, Diffusion)):
        fam = c[role]["family"]
        if fam not in table:
            violations.append((f"coefficients.{role}.family",
                               f"unknown {role} family {fam!r}; expected one of {sorted(table)}"))
            continue
        try:
            parts[role] = cls(fam, tuple(c[role]["params"]))
        except ConfigError as exc:
            for field, msg in exc.violations or [("params", str(exc))]:
                violations.append((f"coefficients.{role}.{field}", f"{exc} ({msg})"))
    if len(parts) < 2:
        return None
    return CoefficientSet(parts["drift"], parts["diffusion"])


def _measure(doc, violations, notes):
    mu = doc["mu0"]
    if "atoms" in mu:
        atoms = np.asarray(mu["atoms"], dtype=float)
        if "weights" not in mu:
            return atoms, np.full(atoms.size, 1.0 / atoms.size)
        w = np.asarray(mu["weights"], dtype=float)
        if w.size != atoms.size:
            violations.append(("mu0.weights", f"{w.size} weights for {atoms.size} atoms"))
            return None, None
        total = w.sum()
        if not total > 0:
            violations.append(("mu0.weights", "weights sum to zero and cannot be normalized"))
            return None, None
        if abs(total - 1.0) > 1e-12:
            notes.append(f"mu0.weights sum to {float(total)!r}; normalized to sum 1")
            w = w / total
        return atoms, w
    return quantile_atoms(mu["distribution"], mu["n_particles"])


def scenario_from_dict(doc: dict, name: Optional[str] = None) -> Scenario:
    """Validate ``doc`` and build a :class:`Scenario`; ``doc`` is not modified."""
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object", [("<root>", "expected an object")])
    doc = copy.deepcopy(doc)
    errors = sorted(Draft202012Validator(schema()).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        violations = [(_path(e.path), e.message) for e in errors]
        raise ConfigError("scenario does not match the schema: "
                          + "; ".join(f"{p}: {m}" for p, m in violations), violations)
    _fill_defaults(schema(), doc)

    violations, notes = [], []
    cs = _coefficients(doc, violations)
    atoms, weights = _measure(doc, violations, notes)
    exp = doc["experiment"]
    lo, hi = exp["h_window"]
    if not lo < hi:
        violations.append(("experiment.h_window", "start must be below end"))
    if violations:
        raise ConfigError("invalid scenario: " + "; ".join(f"{p}: {m}" for p, m in violations),
                          violations)
    if weights is not None and "atoms" in doc["mu0"]:
        doc["mu0"]["weights"] = [float(v) for v in weights]

    declared = doc["coefficients"].get("bound")
    if declared is not None and declared < cs.bound:
        notes.append(f"coefficients.bound={declared!r} is below the computed bound {cs.bound!r}")
    n_steps = doc["grid"]["n_steps"]
    if n_steps & (n_steps - 1):
        notes.append(f"grid.n_steps={n_steps} is not a power of two")
    for msg in notes:
        warnings.warn(msg, ScenarioWarning, stacklevel=2)

    grid = TimeGrid(0.0, float(doc["grid"]["t_end"]), int(n_steps))
    return Scenario(
        name=name or doc.get("name", "scenario"),
        coefficients=cs,
        declared_bound=doc["coefficients"].get("bound"),
        atoms=atoms, weights=weights, grid=grid,
        test_functions=tuple(doc["test_functions"]),
        base_seed=int(doc["seeds"]["base_seed"]),
        experiment=MappingProxyType(exp),
        document=doc,
        warnings=tuple(notes),
    )


def load_scenario(path, seed_override: Optional[int] = None) -> Scenario:
    """Read and validate a scenario file.  ``seed_override`` replaces base_seed."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", [("<file>", str(exc))]) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}",
                          [("<root>", exc.msg)]) from None
    if seed_override is not None and isinstance(doc, dict):
        doc.setdefault("seeds", {})["base_seed"] = int(seed_override)
    return scenario_from_dict(doc, name=doc.get("name", path.stem) if isinstance(doc, dict) else None)
