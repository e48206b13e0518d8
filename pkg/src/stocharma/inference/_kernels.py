"""Compiled forward filtering / backward smoothing over the clique chain.

Clique ``t`` holds ``w_t = (E_t, E_{t-1}, ..., E_{t-q}, Y_t, Y_{t-1}, ..., Y_{t-p})``
and the separator to clique ``t+1`` is
``z_t = (E_t, ..., E_{t-q+1}, Y_t, ..., Y_{t-p+1})``.

Known quantities (observed ``Y`` and initial errors with zero prior
variance) are carried as exact point masses: their covariance rows are
identically zero, and the backward pass only inverts the random block.
"""

import math

import numpy as np
from numba import njit

OK = 0
BAD_VARIANCE = 1
SINGULAR = 2

LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def separator_indices(p, q):
    """Positions of ``z_{t-1}`` and ``z_t`` inside ``w_t``."""
    d = p + q
    prev = np.empty(d, dtype=np.int64)
    cur = np.empty(d, dtype=np.int64)
    for u in range(q):
        prev[u] = u + 1
        cur[u] = u
    for u in range(q, d):
        prev[u] = u + 2
        cur[u] = u + 1
    return prev, cur


@njit(cache=True)
def forward(y, xoff, xvar, p, q, R, zeta, beta0, beta, alpha, gamma, sigma, init_var):
    """Filter ``y[R:]`` given the fixed prefix ``y[R-p:R]``.

    Returns filtered clique moments, one-step predictive moments for every
    position ``t >= R``, the log-likelihood of the observed entries and a
    status code.
    """
    T = y.shape[0]
    N = T - R
    n = p + q + 2
    d = p + q
    yi = q + 1
    prev, cur = separator_indices(p, q)

    mf = np.zeros((N, n))
    Pf = np.zeros((N, n, n))
    pred_m = np.full(T, np.nan)
    pred_v = np.full(T, np.nan)

    a = np.zeros(n)
    a[0] = beta0
    for j in range(q):
        a[j + 1] = beta[j]
    for i in range(p):
        a[yi + 1 + i] = alpha[i]

    mz = np.zeros(d)
    Pz = np.zeros((d, d))
    for j in range(q):
        Pz[j, j] = init_var
    for i in range(p):
        mz[q + i] = y[R - 1 - i]

    ll = 0.0
    col = np.zeros(n)
    for s in range(N):
        t = R + s
        mw = np.zeros(n)
        Pw = np.zeros((n, n))
        for u in range(d):
            mw[prev[u]] = mz[u]
            for v in range(d):
                Pw[prev[u], prev[v]] = Pz[u, v]
        Pw[0, 0] = gamma

        mu = zeta + xoff[t]
        for k in range(n):
            mu += a[k] * mw[k]
        var = sigma + xvar[t]
        for k in range(n):
            c = 0.0
            for l in range(n):
                c += a[l] * Pw[l, k]
            col[k] = c
        for k in range(n):
            var += col[k] * a[k]
        for k in range(n):
            Pw[yi, k] = col[k]
            Pw[k, yi] = col[k]
        Pw[yi, yi] = var
        mw[yi] = mu
        pred_m[t] = mu
        pred_v[t] = var

        if not np.isnan(y[t]):
            if not var > 0.0:
                return mf, Pf, pred_m, pred_v, ll, BAD_VARIANCE, t
            r = y[t] - mu
            gain = Pw[:, yi].copy()
            for k in range(n):
                mw[k] += gain[k] * r / var
                for l in range(n):
                    Pw[k, l] -= gain[k] * gain[l] / var
            for k in range(n):
                Pw[yi, k] = 0.0
                Pw[k, yi] = 0.0
            mw[yi] = y[t]
            ll += -0.5 * (LOG_2PI + math.log(var) + r * r / var)

        for k in range(n):
            for l in range(k + 1, n):
                m = 0.5 * (Pw[k, l] + Pw[l, k])
                Pw[k, l] = m
                Pw[l, k] = m
        mf[s] = mw
        Pf[s] = Pw
        for u in range(d):
            mz[u] = mw[cur[u]]
            for v in range(d):
                Pz[u, v] = Pw[cur[u], cur[v]]
    return mf, Pf, pred_m, pred_v, ll, OK, -1


@njit(cache=True)
def backward(mf, Pf, p, q, tol):
    """Smooth filtered clique moments; returns (means, covs, status, index)."""
    N, n = mf.shape
    d = p + q
    prev, cur = separator_indices(p, q)
    ms = mf.copy()
    Ps = Pf.copy()
    for s in range(N - 2, -1, -1):
        rand = np.zeros(d, dtype=np.int64)
        nr = 0
        for u in range(d):
            if Pf[s, cur[u], cur[u]] > 0.0:
                rand[nr] = u
                nr += 1
        if nr == 0:
            continue
        Prr = np.empty((nr, nr))
        dm = np.empty(nr)
        dP = np.empty((nr, nr))
        for i in range(nr):
            ci = cur[rand[i]]
            pi = prev[rand[i]]
            dm[i] = ms[s + 1, pi] - mf[s, ci]
            for j in range(nr):
                cj = cur[rand[j]]
                pj = prev[rand[j]]
                Prr[i, j] = Pf[s, ci, cj]
                dP[i, j] = Ps[s + 1, pi, pj] - Pf[s, ci, cj]
        lam, V = np.linalg.eigh(Prr)
        if not lam[0] > tol * lam[nr - 1]:
            return ms, Ps, SINGULAR, s
        inv = (V / lam) @ V.T
        C = np.empty((n, nr))
        for k in range(n):
            for j in range(nr):
                C[k, j] = Pf[s, k, cur[rand[j]]]
        J = C @ inv
        ms[s] = mf[s] + J @ dm
        P = Pf[s] + J @ dP @ J.T
        Ps[s] = 0.5 * (P + P.T)
    return ms, Ps, OK, -1
