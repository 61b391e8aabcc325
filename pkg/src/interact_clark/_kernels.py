"""Compiled inner loops.

All particle sums run sequentially over ``j = 0..N-1`` so every reduction
has a fixed order and results do not depend on threading.  Kernels return
``(step, particle)`` of the first non-finite value, or ``(-1, -1)``.
"""
import math

import numpy as np
from numba import njit

DRIFT_ZERO = 0
DRIFT_CONSTANT = 1
DRIFT_LINEAR = 2
DRIFT_TANH = 3

DIFF_UNIT = 0
DIFF_SIN = 1

_OK = (-1, -1)


@njit(cache=True, nogil=True, inline="always")
def _tanh(z):
    # exactly odd, relative error ~1e-15; exp is much cheaper than tanh or
    # expm1 here and has no cancellation once |z| >= 0.25
    az = abs(z)
    if az < 0.25:
        e = math.expm1(2.0 * az)
        t = e / (e + 2.0)
    elif az > 20.0:
        t = 1.0
    else:
        e = math.exp(-2.0 * az)
        t = (1.0 - e) / (1.0 + e)
    return math.copysign(t, z)


@njit(cache=True, nogil=True, inline="always")
def drift_terms(code, p, x, y):
    """(a(x, y), da/dx, da/dy)."""
    if code == DRIFT_ZERO:
        return 0.0, 0.0, 0.0
    if code == DRIFT_CONSTANT:
        return p[0], 0.0, 0.0
    if code == DRIFT_LINEAR:
        return p[0] * (y - x), -p[0], p[0]
    # DRIFT_TANH: alpha * tanh(gamma * (y - x))
    th = _tanh(p[1] * (y - x))
    s = p[0] * p[1] * (1.0 - th * th)
    return p[0] * th, -s, s


@njit(cache=True, nogil=True, inline="always")
def diffusion_terms(code, p, x):
    """(b(x), b'(x))."""
    if code == DIFF_UNIT:
        return 1.0, 0.0
    return p[0] + p[1] * math.sin(x), p[1] * math.cos(x)


@njit(cache=True, nogil=True)
def drift_array(code, p, x, y, a, a1, a2):
    for k in range(x.shape[0]):
        a[k], a1[k], a2[k] = drift_terms(code, p, x[k], y[k])


@njit(cache=True, nogil=True)
def diffusion_array(code, p, x, b, bp):
    for k in range(x.shape[0]):
        b[k], bp[k] = diffusion_terms(code, p, x[k])


@njit(cache=True, nogil=True)
def mean_field(x, w, code, p, d):
    n = x.shape[0]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            a, _, _ = drift_terms(code, p, x[i], x[j])
            acc += w[j] * a
        d[i] = acc


@njit(cache=True, nogil=True)
def _first_bad(row):
    for i in range(row.shape[0]):
        if not math.isfinite(row[i]):
            return i
    return -1


@njit(cache=True, nogil=True)
def euler_path(x0, w, dW, dt, dcode, dp, bcode, bp, out):
    n_steps = dW.shape[0]
    n = x0.shape[0]
    d = np.empty(n)
    out[0, :] = x0
    for k in range(n_steps):
        mean_field(out[k], w, dcode, dp, d)
        for i in range(n):
            b, _ = diffusion_terms(bcode, bp, out[k, i])
            out[k + 1, i] = out[k, i] + d[i] * dt + b * dW[k]
        bad = _first_bad(out[k + 1])
        if bad >= 0:
            return k, bad
    return _OK


@njit(cache=True, nogil=True)
def euler_frozen(prev, w, dW, dt, dcode, dp, bcode, bp, out):
    """One Picard sweep: drift and diffusion evaluated on ``prev``."""
    n_steps = dW.shape[0]
    n = prev.shape[1]
    d = np.empty(n)
    out[0, :] = prev[0]
    for k in range(n_steps):
        mean_field(prev[k], w, dcode, dp, d)
        for i in range(n):
            b, _ = diffusion_terms(bcode, bp, prev[k, i])
            out[k + 1, i] = out[k, i] + d[i] * dt + b * dW[k]
        bad = _first_bad(out[k + 1])
        if bad >= 0:
            return k, bad
    return _OK


@njit(cache=True, nogil=True)
def _linear_coeffs(x, w, dcode, dp, bcode, bp, A, Bw, bprime):
    n = x.shape[0]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            _, a1, a2 = drift_terms(dcode, dp, x[i], x[j])
            acc += w[j] * a1
            Bw[i, j] = w[j] * a2
        A[i] = acc
        _, bprime[i] = diffusion_terms(bcode, bp, x[i])


@njit(cache=True, nogil=True)
def _variational_step(eta, A, Bw, bprime, dt, dWk, out):
    n = eta.shape[0]
    for i in range(n):
        c = 0.0
        for j in range(n):
            c += Bw[i, j] * eta[j]
        out[i] = eta[i] + (A[i] * eta[i] + c) * dt + bprime[i] * eta[i] * dWk


@njit(cache=True, nogil=True)
def variational(traj, w, dW, dt, dcode, dp, bcode, bp, s, eta0, out):
    """eta launched at grid index ``s``; ``out[k - s]`` holds eta(t_k)."""
    n_steps = dW.shape[0]
    n = traj.shape[1]
    A = np.empty(n)
    Bw = np.empty((n, n))
    bprime = np.empty(n)
    out[0, :] = eta0
    for k in range(s, n_steps):
        _linear_coeffs(traj[k], w, dcode, dp, bcode, bp, A, Bw, bprime)
        _variational_step(out[k - s], A, Bw, bprime, dt, dW[k], out[k - s + 1])
        bad = _first_bad(out[k - s + 1])
        if bad >= 0:
            return k, bad
    return _OK


@njit(cache=True, nogil=True)
def variational_all(traj, w, dW, dt, dcode, dp, bcode, bp, out):
    """Every launch time at once; ``out[s, k]`` = eta_s(t_k), NaN for k < s."""
    n_steps = dW.shape[0]
    n = traj.shape[1]
    A = np.empty(n)
    Bw = np.empty((n, n))
    bprime = np.empty(n)
    out[:, :, :] = np.nan
    for s in range(n_steps + 1):
        for i in range(n):
            out[s, s, i], _ = diffusion_terms(bcode, bp, traj[s, i])
    for k in range(n_steps):
        _linear_coeffs(traj[k], w, dcode, dp, bcode, bp, A, Bw, bprime)
        for s in range(k + 1):
            _variational_step(out[s, k], A, Bw, bprime, dt, dW[k], out[s, k + 1])
            bad = _first_bad(out[s, k + 1])
            if bad >= 0:
                return k, bad
    return _OK


@njit(cache=True, nogil=True)
def step_matrix(x, w, dt, dWk, dcode, dp, bcode, bp, M):
    n = x.shape[0]
    A = np.empty(n)
    bprime = np.empty(n)
    _linear_coeffs(x, w, dcode, dp, bcode, bp, A, M, bprime)
    for i in range(n):
        for j in range(n):
            M[i, j] *= dt
        M[i, i] += 1.0 + A[i] * dt + bprime[i] * dWk


@njit(cache=True, nogil=True)
def launch(x0, w, Zt, dt, dcode, dp, bcode, bp, X, E):
    """Inner continuations from the frozen ensemble ``x0``.

    Column ``m`` of ``Zt`` (shape (n_steps_left, n_inner)) holds the standard
    normals of inner path ``m``.  The flow and the variational recursion
    (started at b(x0)) are co-evolved for all inner paths at once; terminal
    positions go to ``X[m]`` and terminal derivatives to ``E[m]``.

    Every drift family is a difference kernel a = k(y - x) and all but
    ``constant`` have odd k, so each unordered pair is evaluated once and the
    diagonal term k(0) once per call.
    """
    n_rem, n_inner = Zt.shape
    n = x0.shape[0]
    sq = math.sqrt(dt)
    sign = 1.0 if dcode == DRIFT_CONSTANT else -1.0
    a0, a10, a20 = drift_terms(dcode, dp, 0.0, 0.0)
    # particle-major so the innermost loops run over inner paths
    x = np.empty((n, n_inner))
    eta = np.empty((n, n_inner))
    d = np.empty((n, n_inner))
    A = np.empty((n, n_inner))
    c = np.empty((n, n_inner))
    for i in range(n):
        b, _ = diffusion_terms(bcode, bp, x0[i])
        for m in range(n_inner):
            x[i, m] = x0[i]
            eta[i, m] = b
    for k in range(n_rem):
        for i in range(n):
            for m in range(n_inner):
                d[i, m] = w[i] * a0
                A[i, m] = w[i] * a10
                c[i, m] = w[i] * a20 * eta[i, m]
        for i in range(n):
            for j in range(i + 1, n):
                for m in range(n_inner):
                    a, a1, a2 = drift_terms(dcode, dp, x[i, m], x[j, m])
                    d[i, m] += w[j] * a
                    A[i, m] += w[j] * a1
                    c[i, m] += w[j] * a2 * eta[j, m]
                    d[j, m] += w[i] * sign * a
                    A[j, m] += w[i] * a1
                    c[j, m] += w[i] * a2 * eta[i, m]
        for i in range(n):
            for m in range(n_inner):
                dWk = Zt[k, m] * sq
                b, bpr = diffusion_terms(bcode, bp, x[i, m])
                e = eta[i, m]
                x[i, m] = x[i, m] + d[i, m] * dt + b * dWk
                eta[i, m] = e + (A[i, m] * e + c[i, m]) * dt + bpr * e * dWk
    for m in range(n_inner):
        for i in range(n):
            if not (math.isfinite(x[i, m]) and math.isfinite(eta[i, m])):
                return m, i
            X[m, i] = x[i, m]
            E[m, i] = eta[i, m]
    return _OK
