"""Fused compiled kernel for the property-measurement update.

Computes the same quantities as ``mixture_posterior_terms`` ->
``posterior_moments`` -> ``project`` in one pass over the ``(K, J)`` arrays.
The composed functions remain the reference; tests hold the two together.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OK = 0
ALL_SUPPRESSED = 1
DEGENERATE = 2

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_MIN_DENOM = 1e-300


@njit(cache=True)
def bmm_update(a, mu, lam, alpha, beta, y, floor, weighted, out_a, out_mu, out_lam, out_alpha, out_beta):
    K, J = mu.shape
    a0 = 0.0
    for i in range(K):
        a0 += a[i]

    logt = np.empty(K)
    for i in range(K):
        s = math.log(a[i] / a0)
        for j in range(J):
            l = lam[i, j]
            ls = l + 1.0
            al = alpha[i, j]
            b = beta[i, j]
            d = mu[i, j] - y[j]
            bs = b + l * d * d / (2.0 * ls)
            s += (
                -_HALF_LOG_2PI
                + 0.5 * (math.log(l) - math.log(ls))
                + math.lgamma(al + 0.5)
                - math.lgamma(al)
                + al * math.log(b)
                - (al + 0.5) * math.log(bs)
            )
        logt[i] = s

    mx = -np.inf
    for i in range(K):
        if logt[i] > mx:
            mx = logt[i]
    if not math.isfinite(mx):
        return ALL_SUPPRESSED
    r = np.empty(K)
    tot = 0.0
    for i in range(K):
        r[i] = math.exp(logt[i] - mx)
        tot += r[i]
    tot2 = 0.0
    for i in range(K):
        r[i] /= tot
        if r[i] < floor:
            r[i] = 0.0
        tot2 += r[i]
    for i in range(K):
        r[i] /= tot2

    n1 = a0 + 1.0
    n12 = n1 * (a0 + 2.0)
    for i in range(K):
        ai = a[i]
        ri = r[i]
        if K == 1:
            out_a[i] = ai + 1.0  # exact: w == 1 carries no weight moments
        else:
            ew = (ai + ri) / n1
            ew2 = (ai * (ai + 1.0) + 2.0 * ri * (ai + 1.0)) / n12
            var_w = ew2 - ew * ew
            if not var_w > _MIN_DENOM:
                return DEGENERATE
            na = ew * (ew - ew2) / var_w
            if not na > 0.0:
                return DEGENERATE
            out_a[i] = na
        for j in range(J):
            m = mu[i, j]
            l = lam[i, j]
            al = alpha[i, j]
            b = beta[i, j]
            yj = y[j]
            ls = l + 1.0
            ms = (l * m + yj) / ls
            als = al + 0.5
            bs = b + l * (m - yj) ** 2 / (2.0 * ls)
            et = al / b
            ets = als / bs
            em = ri * ms + (1.0 - ri) * m
            etau = ri * ets + (1.0 - ri) * et
            etau2 = ri * ((als + als * als) / (bs * bs)) + (1.0 - ri) * ((al + al * al) / (b * b))
            em2t = ri * (1.0 / ls + ms * ms * ets) + (1.0 - ri) * (1.0 / l + m * m * et)
            var_tau = etau2 - etau * etau
            if weighted:
                emt = ri * ms * ets + (1.0 - ri) * m * et
                em = emt / etau
                inv_lam = em2t - emt * em
            else:
                inv_lam = em2t - em * em * etau
            if not (var_tau > _MIN_DENOM and inv_lam > _MIN_DENOM):
                return DEGENERATE
            out_mu[i, j] = em
            out_lam[i, j] = 1.0 / inv_lam
            out_alpha[i, j] = etau * etau / var_tau
            out_beta[i, j] = etau / var_tau
    return OK
