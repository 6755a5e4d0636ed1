"""Compiled coordinate-descent kernel for the elastic net in Gram form."""

import numpy as np
from numba import njit


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def cd_gram(G, c, beta, lam_l1, lam_l2, max_sweeps, kkt_tol, history):
    """Cyclic coordinate descent on

        b' G b - 2 c' b + lam_l2 ||b||^2 + 2 lam_l1 ||b||_1

    updating ``beta`` in place. ``history[k]`` receives the objective after
    sweep ``k``. Returns ``(sweeps, max_kkt_violation)``; the loop exits once
    the violation drops below ``kkt_tol``.
    """
    d = beta.shape[0]
    q = G @ beta
    viol = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        for j in range(d):
            denom = G[j, j] + lam_l2
            old = beta[j]
            if denom <= 0.0:
                new = 0.0
            else:
                z = c[j] - (q[j] - G[j, j] * old)
                new = _soft(z, lam_l1) / denom
            if new != old:
                delta = new - old
                for k in range(d):
                    q[k] += G[k, j] * delta
                beta[j] = new
        obj = 0.0
        viol = 0.0
        for j in range(d):
            b = beta[j]
            obj += b * q[j] - 2.0 * c[j] * b + lam_l2 * b * b + 2.0 * lam_l1 * abs(b)
            g = q[j] - c[j] + lam_l2 * b
            if b > 0.0:
                v = abs(g + lam_l1)
            elif b < 0.0:
                v = abs(g - lam_l1)
            else:
                v = abs(g) - lam_l1
                if v < 0.0:
                    v = 0.0
            if v > viol:
                viol = v
        if sweeps < history.shape[0]:
            history[sweeps] = obj
        sweeps += 1
        if viol <= kkt_tol:
            break
    return sweeps, viol
