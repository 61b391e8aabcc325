import io
import math

import numpy as np
import pytest

from interact_clark.coefficients import CoefficientSet, eval_diffusion
from interact_clark.exceptions import ConfigError, DomainError
from interact_clark.flow_sim import (BrownianPath, EnsembleState, TimeGrid, euler_solve,
                                     quantile_atoms, sample_brownian)
from interact_clark.malliavin import (FIELD_HEADER, MalliavinFields, directional_derivative,
                                      fd_directional_check, indicator, moment_estimate,
                                      propagator, variational_all, variational_solve,
                                      write_field_csv)

ZERO = CoefficientSet.from_names("zero")
LIN = CoefficientSet.from_names("linear_attraction", (1.0,))
TANH = CoefficientSet.from_names("tanh_kernel", (0.2, 1.0))
TANH_SIN = CoefficientSet.from_names("tanh_kernel", (0.2, 1.0), "sin_bounded", (1.0, 0.25))
GRID = TimeGrid(0.0, 1.0, 64)
E0 = EnsembleState.initial(*quantile_atoms("gaussian", 6))


def setup(cs, seed=1, grid=GRID, e0=E0):
    path = sample_brownian(grid, seed)
    return euler_solve(cs, e0, path), path


@pytest.mark.parametrize("cs", [ZERO, LIN])
def test_eta_identically_one(cs):
    traj, path = setup(cs)
    for s in (0, 17, 63, 64):
        assert np.max(np.abs(variational_solve(cs, traj, path, s).values - 1.0)) <= 1e-12


def test_linear_one_step_identity():
    # each update is (1 - dt) eta_i + dt * weighted mean of eta
    traj, path = setup(LIN)
    eta0 = np.linspace(0.5, 2.0, 6)
    f = variational_solve(LIN, traj, path, 10, initial=eta0)
    dt = GRID.dt
    expected = (1 - dt) * eta0 + dt * np.sum(E0.weights * eta0)
    assert np.allclose(f.at(11), expected, atol=1e-15)


@pytest.mark.parametrize("cs", [ZERO, LIN, TANH, TANH_SIN])
def test_initial_condition_bit_exact(cs):
    traj, path = setup(cs)
    for s in range(GRID.n_steps + 1):
        b, _ = eval_diffusion(cs, traj.positions[s])
        assert np.array_equal(variational_solve(cs, traj, path, s).at(s), b)


def test_queries_before_launch_fail():
    traj, path = setup(TANH)
    f = variational_solve(TANH, traj, path, 20)
    with pytest.raises(DomainError):
        f.at(19)
    with pytest.raises(DomainError):
        f.at(65)
    with pytest.raises(DomainError):
        variational_solve(TANH, traj, path, 65)


def test_gronwall_bound_tanh():
    traj, path = setup(TANH, grid=TimeGrid(0, 1, 256))
    for s in (0, 64, 128):
        f = variational_solve(TANH, traj, path, s)
        bound = math.exp(0.4 * (1.0 - traj.grid.time(s)))
        assert np.abs(f.values).max() <= bound + 1e-12


def test_linearity_in_initial_data():
    traj, path = setup(TANH_SIN)
    e = np.linspace(-1, 1, 6)
    a = variational_solve(TANH_SIN, traj, path, 5, initial=2 * e).values
    b = variational_solve(TANH_SIN, traj, path, 5, initial=e).values
    assert np.allclose(a, 2 * b, rtol=0, atol=1e-12)


def test_cocycle():
    traj, path = setup(TANH)
    s, r, t = 5, 30, 64
    f = variational_solve(TANH, traj, path, s)
    J = propagator(TANH, traj, path, r, t)
    assert np.allclose(f.at(t), J @ f.at(r), rtol=0, atol=1e-14)
    J2 = propagator(TANH, traj, path, s, r)
    assert np.allclose(propagator(TANH, traj, path, s, t), J @ J2, atol=1e-14)


def test_unit_noise_invariance():
    # with b = 1 the recursion has no noise term: changing dW with the
    # trajectory held fixed leaves eta unchanged
    traj, path = setup(TANH)
    other = sample_brownian(GRID, 99)
    a = variational_solve(TANH, traj, path, 3).values
    b = variational_solve(TANH, traj, other, 3).values
    assert np.array_equal(a, b)


def test_variational_all_matches_single_launches():
    traj, path = setup(TANH_SIN)
    full = variational_all(TANH_SIN, traj, path)
    for s in (0, 10, 64):
        assert np.array_equal(full[s, s:], variational_solve(TANH_SIN, traj, path, s).values)
    assert np.isnan(full[10, 9]).all()


def test_directional_examples():
    traj, path = setup(ZERO)
    fields = MalliavinFields(ZERO, traj, path)
    n = GRID.n_steps
    assert directional_derivative(fields, np.zeros(n), 0, n) == 0.0
    assert directional_derivative(fields, np.ones(n), 2, n) == pytest.approx(1.0, abs=1e-14)
    traj, path = setup(LIN)
    fields = MalliavinFields(LIN, traj, path)
    h = indicator(GRID, 0.25, 1.0)
    assert directional_derivative(fields, h, 1, n) == pytest.approx(0.75, abs=1e-12)
    assert len(fields._cache) == int(h.sum())


def test_missing_field_is_domain_error():
    with pytest.raises(DomainError):
        directional_derivative({}, np.ones(4), 0, 4)


def test_fd_examples():
    h = indicator(GRID, 0.0, 1.0)
    assert fd_directional_check(ZERO, E0, sample_brownian(GRID, 2), np.random.default_rng(0).random(64)) <= 1e-10
    assert fd_directional_check(LIN, E0, sample_brownian(GRID, 2), h, 1e-4) <= 1e-6
    with pytest.raises(ConfigError):
        fd_directional_check(LIN, E0, sample_brownian(GRID, 2), h, 0.0)


def test_fd_tanh_fine_grid():
    g = TimeGrid(0, 1, 1024)
    err = fd_directional_check(TANH, E0, sample_brownian(g, 3), indicator(g, 0.25, 1.0), 1e-4)
    assert err <= 1e-3


def _exact_discrete_derivative(cs, traj, path, h):
    # d x(T) / d(eps) for dW_m -> dW_m + eps h_m dt: the increment enters
    # at step m with coefficient b(x_m) and propagates from index m + 1
    n = traj.grid.n_steps
    total = np.zeros(traj.atoms.size)
    for m in np.flatnonzero(h):
        b, _ = eval_diffusion(cs, traj.positions[m])
        total += propagator(cs, traj, path, m + 1, n) @ b * h[m] * traj.grid.dt
    return total


def test_fd_sin_bounded_matches_exact_discrete_derivative():
    g = TimeGrid(0, 1, 256)
    path = sample_brownian(g, 4)
    h = indicator(g, 0.25, 1.0)
    traj = euler_solve(TANH_SIN, E0, path)
    exact = _exact_discrete_derivative(TANH_SIN, traj, path, h)
    eps = 1e-4
    xp = euler_solve(TANH_SIN, E0, path.shifted(h, eps)).terminal.positions
    xm = euler_solve(TANH_SIN, E0, path.shifted(h, -eps)).terminal.positions
    assert np.allclose((xp - xm) / (2 * eps), exact, rtol=1e-7)


def test_fd_sin_bounded_gap_is_launch_convention():
    # the recursion launched at s with eta = b(x_s) differs from the exact
    # discrete derivative by the O(sqrt(dt)) factor (1 + b'(x_s) dW_s + ...)
    g = TimeGrid(0, 1, 1024)
    h = indicator(g, 0.25, 1.0)
    errs = [fd_directional_check(TANH_SIN, E0, sample_brownian(g, s), h, 1e-4) for s in range(3)]
    assert max(errs) <= 1e-3
    coarse = TimeGrid(0, 1, 64)
    hc = indicator(coarse, 0.25, 1.0)
    errs_c = [fd_directional_check(TANH_SIN, E0, sample_brownian(coarse, s), hc, 1e-4) for s in range(3)]
    assert np.mean(errs_c) > np.mean(errs)


def test_moment_examples():
    est, se = moment_estimate(ZERO, E0, TimeGrid(0, 1, 16), 3.0, 100)
    assert est == 1.0 and se == 0.0
    est, _ = moment_estimate(LIN, E0, TimeGrid(0, 1, 16), 2.0, 100)
    assert est == pytest.approx(1.0, abs=1e-12)
    est, se = moment_estimate(TANH, E0, TimeGrid(0, 1, 32), 2.0, 100)
    assert np.isfinite(est) and est <= math.exp(0.8) + 3 * se


def test_field_csv():
    traj, path = setup(TANH, grid=TimeGrid(0, 1, 4), e0=EnsembleState.initial([0.0, 1.0]))
    f = variational_solve(TANH, traj, path, 2)
    buf = io.StringIO()
    write_field_csv([f], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(FIELD_HEADER)
    assert len(lines) == 1 + 3 * 2
    assert lines[1].startswith("0.5,0.5,0,")
