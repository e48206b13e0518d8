"""Brute-force reference inference.

Builds the full joint normal over ``(E_{R+1-q..T}, Y_{R+1..T})`` from the
model equations, conditions on the observed ``Y`` by block partitioning,
and reads off the same quantities the clique chain produces. Cost is
cubic in ``T`` so it is only meant for small test instances.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg, stats

from ..errors import ChainTooShort, TooLarge
from .chain import SuffStats, initial_error_variance, x_labels
from .gaussian import Gaussian

MAX_CLIQUES = 200


def _joint(structure, params, y, cross, init_var):
    p, q, R = structure.p, structure.q, structure.R
    T = y.size
    nY = T - R
    nE = nY + q
    # E index for time s (1-based): s - (R + 1 - q)
    e_of = lambda s: s - (R + 1 - q)  # noqa: E731
    y_of = lambda s: s - (R + 1)  # noqa: E731

    L = np.zeros((nY, nY))
    B = np.zeros((nY, nE))
    const = np.full(nY, params.zeta)
    if structure.n_cross:
        const += cross[R:] @ params.eta
    for t in range(R + 1, T + 1):
        r = y_of(t)
        B[r, e_of(t)] = params.beta0
        for j in range(1, q + 1):
            B[r, e_of(t - j)] = params.beta[j - 1]
        for i in range(1, p + 1):
            s = t - i
            if s > R:
                L[r, y_of(s)] = params.alpha[i - 1]
            else:
                const[r] += params.alpha[i - 1] * y[s - 1]
    G = linalg.solve_triangular(np.eye(nY) - L, np.eye(nY), lower=True)
    dE = np.full(nE, params.gamma)
    dE[:q] = init_var
    DE = np.diag(dE)
    mean = np.concatenate([np.zeros(nE), G @ const])
    GB = G @ B
    cov_yy = GB @ DE @ GB.T + params.sigma * (G @ G.T)
    cov_ye = GB @ DE
    cov = np.block([[DE, cov_ye.T], [cov_ye, cov_yy]])
    labels = [f"E@{s}" for s in range(R + 1 - q, T + 1)] + [f"Y@{s}" for s in range(R + 1, T + 1)]
    return labels, mean, 0.5 * (cov + cov.T)


def _condition(mean, cov, obs_idx, values):
    n = mean.size
    if not len(obs_idx):
        return mean.copy(), cov.copy(), 0.0
    o = np.asarray(obs_idx)
    u = np.setdiff1d(np.arange(n), o)
    Soo = cov[np.ix_(o, o)]
    Suo = cov[np.ix_(u, o)]
    cf = linalg.cho_factor(Soo)
    resid = values - mean[o]
    post_mean = mean.copy()
    post_mean[u] = mean[u] + Suo @ linalg.cho_solve(cf, resid)
    post_mean[o] = values
    post_cov = np.zeros_like(cov)
    post_cov[np.ix_(u, u)] = cov[np.ix_(u, u)] - Suo @ linalg.cho_solve(cf, Suo.T)
    post_cov = 0.5 * (post_cov + post_cov.T)
    ll = stats.multivariate_normal(mean[o], Soo, allow_singular=False).logpdf(values)
    return post_mean, post_cov, float(ll)


def dense_posterior(structure, params, observations, cross_values=None, initial_errors="zero"):
    """Joint posterior over all latent and observed variables plus log-likelihood."""
    y = np.asarray(observations, dtype=float).reshape(-1)
    T, R = y.size, structure.R
    if T <= R:
        raise ChainTooShort(f"series of length {T} needs more than R={R} values")
    if T - R > MAX_CLIQUES:
        raise TooLarge(f"dense oracle is capped at {MAX_CLIQUES} cliques")
    cross = np.zeros((T, 0)) if cross_values is None else np.asarray(cross_values, dtype=float).reshape(T, -1)
    init_var = initial_error_variance(initial_errors, params.gamma)
    labels, mean, cov = _joint(structure, params, y, cross, init_var)
    nE = T - R + structure.q
    obs_t = [t for t in range(R + 1, T + 1) if not np.isnan(y[t - 1])]
    obs_idx = [nE + t - (R + 1) for t in obs_t]
    values = np.array([y[t - 1] for t in obs_t])
    post_mean, post_cov, ll = _condition(mean, cov, obs_idx, values)
    return Gaussian(labels, post_mean, post_cov), ll


def _linear_form(post: Gaussian, y, R, label_terms):
    """Coefficient row over the posterior variables plus a constant.

    ``label_terms`` is a list of ``(kind, time)`` with kind ``"E"``/``"Y"``;
    ``Y`` at times ``<= R`` are fixed data.
    """
    rows = np.zeros((len(label_terms), len(post)))
    consts = np.zeros(len(label_terms))
    for r, (kind, s) in enumerate(label_terms):
        if kind == "Y" and s <= R:
            consts[r] = y[s - 1]
        else:
            rows[r, post.index(f"{kind}@{s}")] = 1.0
    return rows, consts


def dense_oracle(structure, params, observations, cross_values=None, initial_errors="zero"):
    """Reference (SuffStats, last-separator marginal, log-likelihood)."""
    y = np.asarray(observations, dtype=float).reshape(-1)
    T, R, p, q = y.size, structure.R, structure.p, structure.q
    post, ll = dense_posterior(structure, params, y, cross_values, initial_errors)
    cross = np.zeros((T, 0)) if cross_values is None else np.asarray(cross_values, dtype=float).reshape(T, -1)
    first_e = 0 if structure.free_beta0 else 1
    k = (q + 1 - first_e) + p + structure.n_cross

    acc = dict(e=0.0, ee=0.0, y=0.0, yy=0.0, x=np.zeros(k), yx=np.zeros(k), xx=np.zeros((k, k)), xe=np.zeros(k))
    for t in range(R + 1, T + 1):
        terms = [("E", t), ("Y", t)]
        terms += [("E", t - j) for j in range(first_e, q + 1)]
        terms += [("Y", t - i) for i in range(1, p + 1)]
        A, c = _linear_form(post, y, R, terms)
        m = A @ post.mean + c
        S = A @ post.cov @ A.T
        nc = structure.n_cross
        m = np.concatenate([m, cross[t - 1]])
        M2 = np.outer(m, m)
        M2[: len(terms), : len(terms)] += S
        e, yy = 0, 1
        X = list(range(2, len(terms))) + list(range(len(terms), len(terms) + nc))
        acc["e"] += m[e]
        acc["ee"] += M2[e, e]
        acc["y"] += m[yy]
        acc["yy"] += M2[yy, yy]
        acc["x"] += m[X]
        acc["yx"] += M2[yy, X]
        acc["xx"] += M2[np.ix_(X, X)]
        acc["xe"] += M2[X, e]

    if initial_errors == "prior":
        init_ee = 0.0
        for s in range(R + 1 - q, R + 1):
            i = post.index(f"E@{s}")
            init_ee += post.cov[i, i] + post.mean[i] ** 2
        init_count = q
    else:
        init_ee, init_count = 0.0, 0

    stats_ = SuffStats(
        free_beta0=structure.free_beta0, count=T - R,
        sum_e=acc["e"], sum_ee=acc["ee"], sum_y=acc["y"], sum_yy=acc["yy"],
        sum_x=acc["x"], sum_yx=acc["yx"], sum_xx=0.5 * (acc["xx"] + acc["xx"].T), sum_xe=acc["xe"],
        init_ee=init_ee, init_count=init_count, x_labels=x_labels(structure),
    )

    sep = [("E", T - j) for j in range(q)] + [("Y", T - i) for i in range(p)]
    A, c = _linear_form(post, y, R, sep)
    labels = [f"{kind}@{s}" for kind, s in sep]
    marginal = Gaussian(labels, A @ post.mean + c, A @ post.cov @ A.T)
    return stats_, marginal, ll
