"""``interact-clark`` command line runner.

    interact-clark <command> --config FILE [--out-dir DIR] [--threads N] [--assert]

Each command writes its CSVs and a ``manifest.json`` into ``--out-dir``.
``INTERACT_CLARK_SEED`` overrides ``seeds.base_seed`` of the scenario.

Exit status: 0 success, 2 configuration error, 3 numeric error, 4 an
``--assert`` threshold failed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import warnings
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, rng
from . import clark_ocone as co
from . import density_est as de
from . import gaussian_oracle as go
from . import malliavin as ma
from .coefficients import eval_diffusion
from .exceptions import BandwidthError, ConfigError, DomainError, InteractClarkError, NumericError
from .flow_sim import euler_solve, picard_solve, sample_brownian
from .scenario import Scenario, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ASSERT = 4

COMMANDS = ("simulate", "picard-check", "malliavin-check", "clark-verify", "delta-example", "density")
SEED_ENV = "INTERACT_CLARK_SEED"


class _Run:
    """Output bookkeeping for one command: files, timings and checks."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.outputs = []
        self.timings = {}
        self.checks = []

    def write(self, name, writer):
        path = self.out_dir / name
        with open(path, "w", newline="") as fh:
            writer(fh)
        self.outputs.append(name)

    def check(self, label, value, threshold, ok):
        self.checks.append({"check": label, "value": float(value), "threshold": float(threshold),
                            "passed": bool(ok)})

    @contextmanager
    def timed(self, label):
        t0 = time.perf_counter()
        yield
        self.timings[label] = round(time.perf_counter() - t0, 6)


def _outer_path(sc: Scenario):
    return sample_brownian(sc.grid, rng.path_seed(sc.base_seed, rng.BROWNIAN, 0))


def _simulate(sc: Scenario, run: _Run, threads: int):
    path = _outer_path(sc)
    with run.timed("euler"):
        traj = euler_solve(sc.coefficients, sc.ensemble0, path)
    run.write("trajectory.csv", traj.to_csv)

    def brownian(fh):
        fh.write("t,W\n")
        for t, w in zip(sc.grid.times, path.values):
            fh.write(f"{float(t)!r},{float(w)!r}\n")

    run.write("brownian.csv", brownian)


def _picard(sc: Scenario, run: _Run, threads: int):
    path = _outer_path(sc)
    n_iter = sc.experiment["n_iter"]
    with run.timed("picard"):
        traj, deltas = picard_solve(sc.coefficients, sc.ensemble0, path, n_iter)
        euler = euler_solve(sc.coefficients, sc.ensemble0, path)
    sup = float(np.max(np.abs(traj.positions - euler.positions)))

    def iterations(fh):
        fh.write("n,delta,ratio\n")
        for n, d in enumerate(deltas):
            ratio = deltas[n] / deltas[n - 1] if n > 0 and deltas[n - 1] > 0 else float("nan")
            fh.write(f"{n},{d!r},{ratio!r}\n")

    def summary(fh):
        fh.write("n_iter,delta_last,sup_picard_euler\n")
        fh.write(f"{n_iter},{deltas[n_iter]!r},{sup!r}\n")

    run.write("picard.csv", iterations)
    run.write("picard_summary.csv", summary)
    for n in range(2, min(6, n_iter - 1) + 1):
        if deltas[n] > 0:
            r = deltas[n + 1] / deltas[n]
            run.check(f"delta_{n + 1}/delta_{n}", r, 0.5, r <= 0.5)
    run.check("sup |x^n_iter - euler| / delta_n_iter", sup, 10 * deltas[n_iter],
              sup <= 10 * deltas[n_iter])


def _malliavin(sc: Scenario, run: _Run, threads: int):
    path = _outer_path(sc)
    cs, grid = sc.coefficients, sc.grid
    exp = sc.experiment
    with run.timed("fields"):
        traj = euler_solve(cs, sc.ensemble0, path)
        fields = ma.MalliavinFields(cs, traj, path)
        s_idx = sorted({min(grid.n_steps, int(round(s / grid.dt))) for s in exp["s_values"]})
        chosen = [fields[s] for s in s_idx]
    init_gap = 0.0
    for f in chosen:
        b, _ = eval_diffusion(cs, traj.positions[f.s_index])
        init_gap = max(init_gap, float(np.max(np.abs(f.at(f.s_index) - b))))
    h = ma.indicator(grid, *exp["h_window"])
    with run.timed("fd_check"):
        fd = ma.fd_directional_check(cs, sc.ensemble0, path, h, exp["epsilon"])
    run.write("malliavin_field.csv", lambda fh: ma.write_field_csv(chosen, fh))

    def summary(fh):
        fh.write("epsilon,h_start,h_end,n_steps,fd_rel_error,init_max_abs_diff\n")
        lo, hi = exp["h_window"]
        fh.write(f"{exp['epsilon']!r},{float(lo)!r},{float(hi)!r},{grid.n_steps},{fd!r},{init_gap!r}\n")

    run.write("malliavin_summary.csv", summary)
    run.check("fd relative error", fd, 1e-3, fd <= 1e-3)
    run.check("initial condition exact", init_gap, 0.0, init_gap == 0.0)


def _clark(sc: Scenario, run: _Run, threads: int):
    exp = sc.experiment
    obs = sc.observables
    cs, e0, grid = sc.coefficients, sc.ensemble0, sc.grid
    with run.timed("mean"):
        means, mean_se = co.estimate_mean(cs, e0, grid, obs, exp["M_mean"], sc.base_seed)
    with run.timed("outer"):
        res, kept = co.outer_residuals(cs, e0, grid, obs, exp["n_inner"], means,
                                       range(exp["M_outer"]), sc.base_seed, threads,
                                       keep_integrands=True)
    for j, o in enumerate(obs):
        rep = co.RepresentationReport(o.name, exp["M_outer"], exp["M_mean"], exp["n_inner"],
                                      grid.n_steps, res[j], float(means[j]), float(mean_se[j]))
        run.write(f"clark_summary_{o.name}.csv", lambda fh, r=rep: co.write_summary_csv([r], fh))
        run.write(f"clark_integrand_{o.name}_outer0.csv",
                  lambda fh, n=o.name: kept[0].to_csv(fh, n))
        run.check(f"|mean_resid| / stderr ({o.name})", abs(rep.mean_resid),
                  3 * rep.stderr_mean_resid, abs(rep.mean_resid) <= 3 * rep.stderr_mean_resid)


def _delta(sc: Scenario, run: _Run, threads: int):
    exp = sc.experiment
    summaries = []
    with run.timed("paths"):
        for o in sc.observables:
            summaries.append(go.verify_example(o, exp["M"], sc.grid, sc.base_seed, exp["n_nodes"]))
    run.write("delta_example.csv", lambda fh: go.write_example_csv(summaries, fh))
    for s in summaries:
        run.check(f"|mean_resid| / stderr ({s.f_name})", abs(s.mean_resid), 3 * s.stderr,
                  abs(s.mean_resid) <= 3 * s.stderr or s.rms_resid <= 1e-12)
        run.check(f"ibp cross-check ({s.f_name})", s.ibp_check, 1e-8, s.ibp_check <= 1e-8)
        if s.f_name in ("one", "v"):
            run.check(f"rms_resid exact ({s.f_name})", s.rms_resid, 1e-12, s.rms_resid <= 1e-12)


def _density(sc: Scenario, run: _Run, threads: int):
    exp = sc.experiment
    cs, grid = sc.coefficients, sc.grid
    path = _outer_path(sc)
    k = grid.index_of(exp["density_time"])
    obs = sc.observables
    with run.timed("density"):
        traj = euler_solve(cs, sc.ensemble0, path)
        gen = rng.substream(sc.base_seed, rng.DENSITY, 0, k)
        ghat = de.integrand_density(cs, traj.state(k), grid, k, exp["density_n_inner"], gen,
                                    exp["bandwidth"], exp["n_grid"])
    thetas = [float(np.mean(ghat.samples.contributions(o))) for o in obs]
    errs = de.pairing_consistency(ghat, obs, thetas)
    run.write("density.csv", ghat.to_csv)
    run.write("density_consistency.csv", lambda fh: de.write_consistency_csv(ghat, obs, thetas, fh))
    for o, e in zip(obs, errs):
        run.check(f"pairing rel error ({o.name})", e, 0.1, e <= 0.1)
    total = abs(ghat.total())
    run.check("|int g_hat|", total, 0.01, total <= 0.01)


_HANDLERS = {
    "simulate": _simulate,
    "picard-check": _picard,
    "malliavin-check": _malliavin,
    "clark-verify": _clark,
    "delta-example": _delta,
    "density": _density,
}


def run(command: str, scenario: Scenario, out_dir, threads: int = 1) -> dict:
    """Execute ``command`` and write its outputs; returns the manifest."""
    if command not in _HANDLERS:
        raise ConfigError(f"unknown command {command!r}", [("command", f"one of {COMMANDS}")])
    if threads < 1:
        raise ConfigError("threads must be >= 1", [("--threads", "must be >= 1")])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    r = _Run(out_dir)
    t0 = time.perf_counter()
    _HANDLERS[command](scenario, r, threads)
    r.timings["total"] = round(time.perf_counter() - t0, 6)
    manifest = {
        "tool": "interact-clark",
        "version": __version__,
        "command": command,
        "scenario": scenario.name,
        "scenario_sha256": scenario.sha256,
        "base_seed": scenario.base_seed,
        "threads": threads,
        "outputs": [{"file": f, "sha256": hashlib.sha256((out_dir / f).read_bytes()).hexdigest()}
                    for f in r.outputs],
        "checks": r.checks,
        "warnings": list(scenario.warnings),
        "timings_s": r.timings,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def _parser():
    p = argparse.ArgumentParser(prog="interact-clark",
                                description="Flows with interaction and their Clark-Ocone integrands.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--out-dir", default=".", help="directory for CSVs and manifest.json")
    p.add_argument("--threads", type=int, default=1, help="worker threads over outer paths")
    p.add_argument("--assert", dest="assert_", action="store_true",
                   help="exit with status 4 when a documented threshold fails")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    seed = os.environ.get(SEED_ENV)
    try:
        if seed is not None:
            try:
                seed = int(seed)
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer", [(SEED_ENV, "not an integer")]) from None
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda m, *a, **k: print(f"warning: {m}", file=sys.stderr)
            scenario = load_scenario(args.config, seed_override=seed)
        manifest = run(args.command, scenario, args.out_dir, args.threads)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        for field, msg in getattr(exc, "violations", []):
            print(f"  {field}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, BandwidthError) as exc:
        print(f"numeric error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InteractClarkError as exc:
        print(f"error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for c in manifest["checks"]:
        mark = "PASS" if c["passed"] else "FAIL"
        print(f"{mark}  {c['check']}: {c['value']:.3e} (threshold {c['threshold']:.3e})")
    print(f"wrote {len(manifest['outputs'])} file(s) to {args.out_dir}")
    if args.assert_ and not all(c["passed"] for c in manifest["checks"]):
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
