"""Compiled inner loops.

The SO metric dominates the cost of every ADORP experiment.  The kernel here
is the same estimator as :func:`adhoc_relay.schemes.so_metrics` written as
scalar loops, so that only active interferers are touched.

Fading draws are the hot spot, so the kernel carries its own generator: a
splitmix64 counter feeding a 256-layer ziggurat for Exp(1) (Marsaglia and
Tsang).  The state is a single uint64 held in a one-element array, which
makes every call a pure function of its seed.
"""

from __future__ import annotations

import math

import numba
import numpy as np

_U = np.uint64
_GOLDEN = _U(0x9E3779B97F4A7C15)
_M1 = _U(0xBF58476D1CE4E5B9)
_M2 = _U(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = _U(30), _U(27), _U(31), _U(11)
_LOW8 = _U(255)
_TWO53 = float(2**53)
_INV53 = 1.0 / _TWO53
_ZIG_R = 7.69711747013104972


def _ziggurat_tables():
    ke = np.zeros(256)
    we = np.zeros(256)
    fe = np.zeros(256)
    de = _ZIG_R
    te = de
    ve = 3.949659822581572e-3
    q = ve / math.exp(-de)
    ke[0] = (de / q) * _TWO53
    ke[1] = 0.0
    we[0] = q / _TWO53
    we[255] = de / _TWO53
    fe[0] = 1.0
    fe[255] = math.exp(-de)
    for i in range(254, 0, -1):
        de = -math.log(ve / de + math.exp(-de))
        ke[i + 1] = (de / te) * _TWO53
        te = de
        fe[i] = math.exp(-de)
        we[i] = de / _TWO53
    return ke, we, fe


_KE, _WE, _FE = _ziggurat_tables()


@numba.njit(cache=True, inline="always")
def _next(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(cache=True, inline="always")
def _uniform(state):
    return float(_next(state) >> _S11) * _INV53


@numba.njit(cache=True)
def _exp_tail(state, iz, jz, ke, we, fe):
    while True:
        if iz == 0:
            return _ZIG_R - math.log(1.0 - _uniform(state))
        x = jz * we[iz]
        if fe[iz] + _uniform(state) * (fe[iz - 1] - fe[iz]) < math.exp(-x):
            return x
        u = _next(state)
        iz = int(u & _LOW8)
        jz = float(u >> _S11)
        if jz < ke[iz]:
            return jz * we[iz]


@numba.njit(cache=True, inline="always")
def _exponential(state, ke, we, fe):
    u = _next(state)
    iz = int(u & _LOW8)
    jz = float(u >> _S11)
    if jz < ke[iz]:
        return jz * we[iz]
    return _exp_tail(state, iz, jz, ke, we, fe)


@numba.njit(cache=True)
def _poisson(state, mean):
    # inversion by sequential search; split large means to keep exp(-mean) representable
    total = 0
    while mean > 0.0:
        mu = min(mean, 500.0)
        mean -= mu
        k = 0
        p = math.exp(-mu)
        c = p
        u = _uniform(state)
        while u > c:
            k += 1
            p *= mu / k
            c += p
            if p == 0.0 and c < u:
                break
        total += k
    return total


@numba.njit(cache=True)
def exponential_draws(seed, n):
    """``n`` Exp(1) draws from the kernel generator (exposed for testing)."""
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)
    out = np.empty(n)
    for i in range(n):
        out[i] = _exponential(state, _KE, _WE, _FE)
    return out


@numba.njit(cache=True)
def poisson_draws(seed, mean, n):
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)
    out = np.empty(n, np.int64)
    for i in range(n):
        out[i] = _poisson(state, mean)
    return out


@numba.njit(cache=True, inline="always")
def _gain(d2, alpha):
    if alpha == 4.0:
        return 1.0 / (d2 * d2)
    if alpha == 3.0:
        return 1.0 / (d2 * math.sqrt(d2))
    return d2 ** (-0.5 * alpha)


@numba.njit(cache=True)
def so_rate_sums(seed, samples, p_tx, ext_mean_count, r_a, r_out, alpha, known_xy, cand, s, base_j, sigma_v2, rho):
    """Per-candidate sums of the rate and squared rate over ``samples`` draws.

    ``base_j`` is a deterministic interference floor per candidate (mean of
    the far field), already multiplied by ``rho``.
    """
    ke, we, fe = _KE, _WE, _FE
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)
    n = known_xy.shape[0]
    nc = cand.shape[0]
    g = np.zeros((n, nc))
    for l in range(n):
        for c in range(nc):
            if l != cand[c]:
                dx = known_xy[l, 0] - known_xy[cand[c], 0]
                dy = known_xy[l, 1] - known_xy[cand[c], 1]
                g[l, c] = _gain(dx * dx + dy * dy, alpha)
    cx = np.empty(nc)
    cy = np.empty(nc)
    for c in range(nc):
        cx[c] = known_xy[cand[c], 0]
        cy[c] = known_xy[cand[c], 1]
    sum_r = np.zeros(nc)
    sum_r2 = np.zeros(nc)
    j = np.empty(nc)
    ra2 = r_a * r_a
    span = r_out * r_out - ra2
    two_pi = 2.0 * math.pi
    for _ in range(samples):
        for c in range(nc):
            j[c] = 0.0
        for l in range(n):
            if _uniform(state) < p_tx:
                for c in range(nc):
                    j[c] += _exponential(state, ke, we, fe) * g[l, c]
        m = _poisson(state, ext_mean_count) if ext_mean_count > 0 else 0
        for _e in range(m):
            rad = math.sqrt(ra2 + _uniform(state) * span)
            ang = two_pi * _uniform(state)
            ex = rad * math.cos(ang)
            ey = rad * math.sin(ang)
            for c in range(nc):
                dx = ex - cx[c]
                dy = ey - cy[c]
                j[c] += _exponential(state, ke, we, fe) * _gain(dx * dx + dy * dy, alpha)
        for c in range(nc):
            den = rho * j[c] + base_j[c] + sigma_v2
            r = math.log2(1.0 + s[c] / den) if den > 0 else math.inf
            sum_r[c] += r
            sum_r2[c] += r * r
    return sum_r, sum_r2
