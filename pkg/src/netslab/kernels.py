"""Coordinate-ascent inner loops.

Both kernels are sequential over slots (each update sees the previous ones),
so they cannot be vectorized away. They are compiled with numba when it is
available; with ``NETSLAB_DISABLE_NUMBA=1`` the same bodies run as numpy.
"""

import numpy as np

from ._accel import njit

PROB_FLOOR = 1e-12


@njit
def sweep_w(Xt, resid, m, sigma2, sq_norms, tau, lap_weight, blocks, block_offsets, offsets, slot_network):
    """One pass of Gaussian coordinate updates over every slot, in slot order.

    ``resid`` (= y - X~ m) and ``m`` are updated in place. ``lap_weight[k]``
    is r_k / s1. Returns the first slot whose mean came out non-finite, or -1.
    """
    P = m.shape[0]
    for j in range(P):
        k = slot_network[j]
        base = offsets[k]
        d = offsets[k + 1] - base
        start = block_offsets[k] + (j - base) * d
        row = blocks[start:start + d]
        cross = np.dot(row, m[base:base + d]) - row[j - base] * m[j]
        xj = Xt[j]
        rhs = tau * (np.dot(xj, resid) + sq_norms[j] * m[j]) - lap_weight[k] * cross
        new = sigma2[j] * rhs
        if not np.isfinite(new):
            return j
        delta = new - m[j]
        if delta != 0.0:
            resid -= delta * xj
            m[j] = new
    return -1


@njit
def _prob(logit):
    if logit >= 0.0:
        p = 1.0 / (1.0 + np.exp(-logit))
    else:
        e = np.exp(logit)
        p = e / (1.0 + e)
    return min(max(p, PROB_FLOOR), 1.0 - PROB_FLOOR)


@njit
def sweep_beta(eta, evidence, digamma_gap, offsets, n_mains, local):
    """Inclusion-probability updates, networks in order, slots in order.

    ``evidence[j]`` is the expected log-density gap slab minus spike for slot
    j's coefficient; ``digamma_gap[j]`` is E[log zeta_j] - E[log(1 - zeta_j)].
    A main slot also collects, from every interaction it parents, the
    partner's current inclusion probability times that interaction's evidence.
    """
    K = n_mains.shape[0]
    for k in range(K):
        base = offsets[k]
        stop = offsets[k + 1]
        p = n_mains[k]
        for u in range(p):
            j = base + u
            s = evidence[j] + digamma_gap[j]
            for i in range(base + p, stop):
                a = local[i, 0]
                b = local[i, 1]
                if a == u:
                    s += eta[base + b] * evidence[i]
                elif b == u:
                    s += eta[base + a] * evidence[i]
            eta[j] = _prob(s)
        for i in range(base + p, stop):
            eta[i] = _prob(evidence[i] + digamma_gap[i])
