"""Compiled fleet kernels.

Preference parameters are packed column-wise into an ``(N, NCOLS)`` float array
so numba can take them without object overhead.  The arithmetic mirrors
:mod:`ringtraffic.behavior` operation for operation.
"""

import math

import numpy as np
from numba import njit

V_STAR, KAPPA1, W1, K2V, K20, W2, K3C, K3V, K3D, W3, LENGTH, LAM, GAMMA = range(13)
NCOLS = 13


def pack(fleet) -> np.ndarray:
    out = np.empty((len(fleet), NCOLS))
    for i, p in enumerate(fleet):
        out[i] = (
            p.v_star, p.kappa1, p.w1, p.kappa2_v, p.kappa2_0, p.w2,
            p.kappa3_c, p.kappa3_v, p.kappa3_d, p.w3, p.length, p.lam, p.gamma,
        )
    return out


@njit(cache=True)
def agent_utilities(i, x, v, a, prefs, grid, H, dt, C, out):
    """Effective utility of every grid action for agent ``i`` (leader i+1)."""
    n = x.shape[0]
    j = (i + 1) % n
    if j == i:
        gap0 = C
    else:
        gap0 = (x[j] - x[i]) % C
    Li = prefs[i, LENGTH]
    Lj = prefs[j, LENGTH]
    v_star = prefs[i, V_STAR]
    width = prefs[i, KAPPA1] * v_star
    for g in range(grid.shape[0]):
        u = grid[g]
        speed0 = v[i] + a[i] * dt + u * dt
        z = (speed0 - v_star) / width
        u1 = math.exp(-z * z)
        u2 = math.exp(-prefs[i, K2V] * (speed0 + prefs[i, K20]))

        xe = 0.0
        ve = v[i]
        ae = a[i]
        xl = gap0
        vl = v[j]
        al = a[j]
        u3 = 0.0
        for h in range(H + 1):
            xe_n = xe + ve * dt
            ve_n = ve + ae * dt
            xl_n = xl + vl * dt
            vl_n = vl + al * dt
            gap = (xl_n + vl_n * dt - Lj / 2) - (xe_n + ve_n * dt + Li / 2)
            if gap <= 0.0:
                val = 1.0
            else:
                speed = ve_n + u * dt
                closing = speed - vl_n
                if closing < 0.0:
                    closing = 0.0
                scale = prefs[i, K3C] + prefs[i, K3V] * abs(speed) + prefs[i, K3D] * closing
                r = gap / scale
                val = math.exp(-r * r - 2.0 * r)
            if val > u3:
                u3 = val
            xe = xe_n
            ve = ve_n
            ae = u
            xl = xl_n
            vl = vl_n
            al = 0.0
        out[g] = prefs[i, W1] * u1 + prefs[i, W2] * u2 + prefs[i, W3] * u3


@njit(cache=True)
def fleet_actions(x, v, a, prefs, grid, H, dt, C):
    """Boltzmann-averaged action of every agent from one shared snapshot."""
    n = x.shape[0]
    G = grid.shape[0]
    util = np.empty(G)
    actions = np.empty(n)
    for i in range(n):
        agent_utilities(i, x, v, a, prefs, grid, H, dt, C, util)
        lam = prefs[i, LAM]
        zmax = lam * util[0]
        for g in range(1, G):
            if lam * util[g] > zmax:
                zmax = lam * util[g]
        num = 0.0
        den = 0.0
        for g in range(G):
            w = math.exp(lam * util[g] - zmax)
            num += grid[g] * w
            den += w
        actions[i] = num / den
    return actions


@njit(cache=True)
def advance(x, v, a, u, u_prev, prefs, dt, C, noise_x, noise_v, noise_a):
    """Commit one period given applied actions ``u``; returns new (x, v, a)."""
    n = x.shape[0]
    x1 = np.empty(n)
    v1 = np.empty(n)
    a1 = np.empty(n)
    for i in range(n):
        g = prefs[i, GAMMA]
        a1[i] = g * a[i] + (u[i] - g * u_prev[i]) + noise_a[i]
        v1[i] = v[i] + a[i] * dt + noise_v[i]
        xn = (x[i] + v[i] * dt + noise_x[i]) % C
        if xn >= C:
            xn = 0.0
        x1[i] = xn
    return x1, v1, a1
