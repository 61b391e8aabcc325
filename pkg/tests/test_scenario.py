import json
import warnings

import numpy as np
import pytest

from conftest import SCENARIOS, scenario
from interact_clark.exceptions import ConfigError
from interact_clark.scenario import ScenarioWarning, load_scenario, scenario_from_dict

MINIMAL = {"coefficients": {"drift": {"family": "zero"}}, "mu0": {"atoms": [0.0]}}


def fields(exc):
    return [p for p, _ in exc.value.violations]


def test_defaults_filled():
    sc = scenario_from_dict(MINIMAL)
    assert sc.grid.n_steps == 256 and sc.grid.t_end == 1.0
    assert sc.test_functions == ("v", "sin") and sc.base_seed == 0
    assert sc.experiment["n_inner"] == 256 and sc.experiment["bandwidth"] == "silverman"
    assert sc.document["coefficients"]["diffusion"] == {"family": "unit", "params": []}
    assert sc.coefficients.bound == 1.0
    assert MINIMAL == {"coefficients": {"drift": {"family": "zero"}}, "mu0": {"atoms": [0.0]}}


@pytest.mark.parametrize("path", sorted(p.name for p in SCENARIOS.iterdir() if p.name.endswith(".json")))
def test_shipped_scenarios_load_cleanly(path):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sc = load_scenario(SCENARIOS / path)
    assert sc.name == path[:-5]
    assert np.isclose(sc.weights.sum(), 1.0)


def test_weights_normalized_with_warning():
    doc = dict(MINIMAL, mu0={"atoms": [-1.0, 1.0], "weights": [2.0, 2.0]})
    with pytest.warns(ScenarioWarning, match="normalized"):
        sc = scenario_from_dict(doc)
    assert np.array_equal(sc.weights, [0.5, 0.5])
    assert sc.document["mu0"]["weights"] == [0.5, 0.5]


@pytest.mark.parametrize("mu0, msg", [({"atoms": [0.0, 1.0], "weights": [0.0, 0.0]}, "sum to zero"),
                                      ({"atoms": [0.0, 1.0], "weights": [1.0]}, "1 weights for 2")])
def test_bad_weights(mu0, msg):
    with pytest.raises(ConfigError, match=msg) as exc:
        scenario_from_dict(dict(MINIMAL, mu0=mu0))
    assert fields(exc) == ["mu0.weights"]


def test_unknown_family_reports_field():
    doc = dict(MINIMAL, coefficients={"drift": {"family": "cubic"}, "diffusion": {"family": "nope"}})
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict(doc)
    assert fields(exc) == ["coefficients.drift.family", "coefficients.diffusion.family"]


def test_bad_params_report_field():
    doc = dict(MINIMAL, coefficients={"drift": {"family": "tanh_kernel", "params": [0.2]}})
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict(doc)
    assert all(p.startswith("coefficients.drift.") for p in fields(exc))


@pytest.mark.parametrize("patch, field", [
    ({"grid": {"n_steps": 0}}, "grid.n_steps"),
    ({"mu0": {"atoms": [0.0], "distribution": "uniform", "n_particles": 3}}, "mu0"),
    ({"test_functions": ["v", "exp"]}, "test_functions.1"),
    ({"experiment": {"bandwidth": -0.1}}, "experiment.bandwidth"),
    ({"experiment": {"density_n_inner": 50}}, "experiment.density_n_inner"),
    ({"extra": 1}, "<root>"),
])
def test_schema_violations(patch, field):
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict(dict(MINIMAL, **patch))
    assert field in fields(exc)


def test_h_window_order():
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict(dict(MINIMAL, experiment={"h_window": [0.5, 0.25]}))
    assert fields(exc) == ["experiment.h_window"]


def test_warnings_for_bound_and_grid():
    doc = dict(MINIMAL, coefficients={"drift": {"family": "zero"}, "bound": 0.5},
               grid={"n_steps": 100})
    with pytest.warns(ScenarioWarning) as rec:
        sc = scenario_from_dict(doc)
    msgs = [str(w.message) for w in rec]
    assert any("below the computed bound" in m for m in msgs)
    assert any("not a power of two" in m for m in msgs)
    assert len(sc.warnings) == 2


def test_seed_override_and_hash(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(MINIMAL))
    a = load_scenario(p)
    b = load_scenario(p, seed_override=7)
    assert a.name == "s" and b.base_seed == 7
    assert a.sha256 == load_scenario(p).sha256 != b.sha256
    assert b.sha256 == a.with_seed(7).sha256
    # defaults are part of the hash, so spelling them out changes nothing
    full = dict(MINIMAL, grid={"t_end": 1.0, "n_steps": 256}, seeds={"base_seed": 0})
    assert scenario_from_dict(full).sha256 == a.sha256


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  'x': 1\n}")
    with pytest.raises(ConfigError, match="invalid JSON at line 2"):
        load_scenario(bad)


def test_overrides_helper():
    sc = scenario("tanh", grid={"n_steps": 64})
    assert sc.grid.n_steps == 64 and sc.coefficients.drift.family == "tanh_kernel"
