"""Compiled inner loop of the path simulator."""

import math

import numpy as np
from numba import njit

# path record columns: t, x, regime (1-based), u1, u2, disc_L1, disc_L2
REC_COLS = 7


@njit(cache=True, nogil=True)
def _extraction(k, x, u1_max):
    u1 = k * x
    if u1 < 0.0:
        return 0.0
    if u1 > u1_max:
        return u1_max
    return u1


@njit(cache=True, nogil=True)
def run_path(
    x0, reg0, horizon, dt, n_steps,
    sw_times, sw_states, normals, jump_times, jump_sizes,
    drift, vol, gam, r, theta, a, rho, u1_max,
    gains, taxes, out_pay, out_x, record, rec,
):
    """Simulate one path under every policy row of ``gains``/``taxes``.

    All policies share the same regime path, Gaussian draws and jumps.
    Returns (terminal regime, number of absorption events, recorded nodes).
    """
    n_pol = gains.shape[0]
    n_sw = sw_times.shape[0]
    n_jump = jump_times.shape[0]
    reg = reg0
    absorbed = 0
    node = 0
    for p in range(n_pol):
        x = x0
        reg = reg0
        t = 0.0
        sp = 0
        jp = 0
        zp = 0
        acc1 = 0.0
        acc2 = 0.0
        keep = record and p == 0
        if keep:
            u1 = _extraction(gains[p, reg], x, u1_max)
            rec[0, 0] = 0.0
            rec[0, 1] = x
            rec[0, 2] = reg + 1
            rec[0, 3] = u1
            rec[0, 4] = taxes[p, reg]
            rec[0, 5] = 0.0
            rec[0, 6] = 0.0
            node = 1
        for n in range(n_steps):
            t_end = horizon if n == n_steps - 1 else (n + 1) * dt
            while t < t_end:
                switching = sp < n_sw and sw_times[sp] < t_end
                t_next = sw_times[sp] if switching else t_end
                tau = t_next - t
                if tau > 0.0:
                    u2 = taxes[p, reg]
                    u1 = _extraction(gains[p, reg], x, u1_max)
                    profit = x * u1 - a * u1 * u1
                    disc = math.exp(-r * t) * tau
                    acc1 += disc * theta * (1.0 - u2) * profit
                    acc2 += disc * (1.0 - theta + theta * u2) * profit
                    xn = x * (1.0 + drift[reg] * tau + vol[reg] * math.sqrt(tau) * normals[zp]) - rho * u1 * tau
                    zp += 1
                    g = gam[reg]
                    while jp < n_jump and jump_times[jp] < t_next:
                        xn *= 1.0 + g * jump_sizes[jp]
                        jp += 1
                    if xn <= 0.0:
                        if x > 0.0 and xn < 0.0:
                            absorbed += 1
                        xn = 0.0
                    x = xn
                t = t_next
                if switching:
                    reg = sw_states[sp]
                    sp += 1
                if keep:
                    row = node if tau > 0.0 else node - 1
                    rec[row, 0] = t
                    rec[row, 1] = x
                    rec[row, 2] = reg + 1
                    rec[row, 3] = _extraction(gains[p, reg], x, u1_max)
                    rec[row, 4] = taxes[p, reg]
                    rec[row, 5] = acc1
                    rec[row, 6] = acc2
                    if tau > 0.0:
                        node += 1
        out_pay[p, 0] = acc1
        out_pay[p, 1] = acc2
        out_x[p] = x
    return reg, absorbed, node


def empty_record():
    return np.zeros((0, REC_COLS))
