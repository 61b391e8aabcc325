import json
from importlib import resources

import numpy as np
import pytest

from interact_clark.scenario import load_scenario, scenario_from_dict

SCENARIOS = resources.files("interact_clark") / "scenarios"

_LINES = []


def scenario_path(name):
    return SCENARIOS / f"{name}.json"


def scenario(name, **overrides):
    """Shipped scenario ``name`` with nested overrides, e.g. grid={"n_steps": 64}."""
    if not overrides:
        return load_scenario(scenario_path(name))
    doc = json.loads(scenario_path(name).read_text())
    for key, val in overrides.items():
        if isinstance(val, dict):
            doc.setdefault(key, {}).update(val)
        else:
            doc[key] = val
    return scenario_from_dict(doc, name=name)


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion and assert it."""

    def report(number, label, ok, detail=""):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip()
        print(line)
        _LINES.append(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
