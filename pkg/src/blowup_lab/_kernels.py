"""Compiled inner loop for the radial method-of-lines solver."""

import math

import numba as nb
import numpy as np

# status codes returned by advance()
REACHED = 0
THRESHOLD = 1
NONFINITE = 2
MAX_STEPS = 3


@nb.njit(cache=True)
def _force(su, kv, lo, m, n, p, dr, cr, nonlinear):
    # kv = u_rr + (n-1)/r u_r + |u_r|^p on [lo, m); kv[m] = 0 (clamped boundary)
    idr2 = 1.0 / (dr * dr)
    i2dr = 0.5 / dr
    j0 = lo
    if lo == 0:
        # symmetry u(-dr) = u(dr) and the n * u_rr limit at the origin
        kv[0] = 2.0 * n * (su[1] - su[0]) * idr2
        j0 = 1
    if nonlinear:
        if p == 2.0:
            for j in range(j0, m):
                d1 = (su[j + 1] - su[j - 1]) * i2dr
                kv[j] = (su[j + 1] - 2.0 * su[j] + su[j - 1]) * idr2 + cr[j] * d1 + d1 * d1
        else:
            for j in range(j0, m):
                d1 = (su[j + 1] - su[j - 1]) * i2dr
                kv[j] = (su[j + 1] - 2.0 * su[j] + su[j - 1]) * idr2 + cr[j] * d1 + abs(d1) ** p
    else:
        for j in range(j0, m):
            d1 = (su[j + 1] - su[j - 1]) * i2dr
            kv[j] = (su[j + 1] - 2.0 * su[j] + su[j - 1]) * idr2 + cr[j] * d1
    kv[m] = 0.0


@nb.njit(cache=True)
def max_gradient(u, lo, m, dr):
    g = 0.0
    for j in range(max(lo, 1), m):
        d = abs(u[j + 1] - u[j - 1])
        if not d <= g:  # also propagates nan
            g = d
    return g * 0.5 / dr


@nb.njit(cache=True)
def advance(u, v, t, t_end, n, p, dr, cfl, R, thr, nonlinear, trail, buf, margin, spread,
            max_steps, cr, ct, cs, work):
    """Classical RK4 steps in place until t_end, threshold, non-finite or max_steps.

    Returns (status, t, g, steps, t_prev, g_prev) where g is max |u_r| at t.
    ``trail < 0`` disables the trailing window; otherwise nodes more than
    ``trail`` (plus ``buf`` cells) behind the light cone t are frozen.
    Both edges of the active range get an extra ``spread`` * (t/dr)^(1/3)
    cells, the width of the dispersive precursor of the semi-discrete scheme;
    ahead of the cone ``margin`` more cells are kept.
    """
    N = u.shape[0] - 1
    k1 = work[0]
    k2 = work[1]
    k3 = work[2]
    k4 = work[3]
    su = work[4]
    steps = 0
    t_prev = t
    g_prev = 0.0
    while True:
        reach = int(math.ceil(spread * (t / dr) ** (1.0 / 3.0)))
        m = min(N, int(math.ceil((t + R) / dr)) + margin + reach)
        lo = 0
        if trail >= 0.0:
            lo = max(0, int((t - trail) / dr) - buf - reach)
        g = max_gradient(u, lo, m, dr)
        if not math.isfinite(g):
            return NONFINITE, t, g, steps, t_prev, g_prev
        if g >= thr:
            return THRESHOLD, t, g, steps, t_prev, g_prev
        if t >= t_end:
            return REACHED, t, g, steps, t_prev, g_prev
        if steps >= max_steps:
            return MAX_STEPS, t, g, steps, t_prev, g_prev
        dt = cfl * dr
        if nonlinear and g > 0.0:
            a = p * g ** (p - 1.0)
            dt = min(dt, ct / a, cs * math.sqrt(dr / a))
        if t + dt > t_end:
            dt = t_end - t
        h = 0.5 * dt
        if lo > 0:
            su[lo - 1] = u[lo - 1]
        _force(u, k1, lo, m, n, p, dr, cr, nonlinear)
        for j in range(lo, m + 1):
            su[j] = u[j] + h * v[j]
        _force(su, k2, lo, m, n, p, dr, cr, nonlinear)
        for j in range(lo, m + 1):
            su[j] = u[j] + h * (v[j] + h * k1[j])
        _force(su, k3, lo, m, n, p, dr, cr, nonlinear)
        for j in range(lo, m + 1):
            su[j] = u[j] + dt * (v[j] + h * k2[j])
        _force(su, k4, lo, m, n, p, dr, cr, nonlinear)
        for j in range(lo, m + 1):
            u[j] += dt * v[j] + dt * dt / 6.0 * (k1[j] + k2[j] + k3[j])
            v[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        t_prev = t
        g_prev = g
        if t + dt >= t_end and dt == t_end - t:
            t = t_end
        else:
            t += dt
        steps += 1


def make_work(size):
    return np.zeros((5, size))
