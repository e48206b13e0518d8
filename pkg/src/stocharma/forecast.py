"""Posterior predictive distributions for future observations."""

from __future__ import annotations

import math

import numpy as np

from .data import fill_initial
from .errors import ShortHistory
from .inference import Gaussian, last_clique_marginal, make_chain, predictive_moments
from .model import SeriesModel


def _prepare(model: SeriesModel, history, cross, extra):
    st, par = model
    y = np.asarray(history, dtype=float).reshape(-1)
    if y.size < st.R:
        raise ShortHistory(f"history of length {y.size} is shorter than R={st.R}")
    y = fill_initial(y, st.R) if st.R else y.copy()
    total = y.size + extra
    if st.n_cross:
        if cross is None:
            cross = np.full((total, st.n_cross), np.nan)
        cross = np.asarray(cross, dtype=float).reshape(-1, st.n_cross)
        if cross.shape[0] < total:
            pad = np.full((total - cross.shape[0], st.n_cross), np.nan)
            cross = np.vstack([cross, pad])
        cross = cross[:total]
    else:
        cross = None
    return y, cross


def closed_form_one_step(model: SeriesModel, history, cross=None, initial_errors="zero") -> Gaussian:
    """Mean ``zeta + E[E].beta + y.alpha + c.eta`` and variance
    ``sigma + beta Sigma beta' + beta0^2 gamma``.

    Requires the last ``p`` observations and the next cross values to be
    observed.
    """
    st, par = model
    y, cross = _prepare(model, history, cross, 1)
    T = y.size
    tail = y[T - st.p:] if st.p else np.empty(0)
    c_next = cross[T] if cross is not None else np.empty(0)
    if np.isnan(tail).any() or np.isnan(c_next).any():
        raise ValueError("closed form needs observed recent values and cross predictors")
    chain = make_chain(st, par, y, None if cross is None else cross[:T], initial_errors)
    marg = last_clique_marginal(chain)
    e_mean = marg.mean[: st.q]
    Sigma = marg.cov[: st.q, : st.q]
    mean = par.zeta + e_mean @ par.beta + tail[::-1] @ par.alpha + c_next @ par.eta
    var = par.sigma + par.beta @ Sigma @ par.beta + par.beta0**2 * par.gamma
    return Gaussian.scalar(f"Y@{T + 1}", float(mean), float(var))


def multi_step(model: SeriesModel, history, cross=None, h: int = 1, initial_errors="zero"):
    """Marginal predictive Gaussians for ``Y_{T+1} .. Y_{T+h}``.

    The chain is extended by ``h`` cliques whose ``Y`` are unobserved;
    cross values at future times are used where given (``cross`` has
    ``T + h`` rows, ``NaN`` where unknown) and otherwise drawn from
    ``N(0, 1)``.
    """
    if h < 1:
        raise ValueError("h must be at least 1")
    st, par = model
    y, cross = _prepare(model, history, cross, h)
    T = y.size
    ext = np.concatenate([y, np.full(h, np.nan)])
    chain = make_chain(st, par, ext, cross, initial_errors)
    pm, pv = predictive_moments(chain)
    return [Gaussian.scalar(f"Y@{T + k}", float(pm[T + k - 1]), float(pv[T + k - 1])) for k in range(1, h + 1)]


def one_step(model: SeriesModel, history, cross=None, method="auto", initial_errors="zero") -> Gaussian:
    """Predictive distribution of the next value.

    ``method="closed"`` uses the last-clique marginal directly and needs a
    fully observed regressor set; ``"clique"`` extends the chain by one
    clique; ``"auto"`` picks the closed form when it applies.
    """
    st = model.structure
    if method == "clique":
        return multi_step(model, history, cross, 1, initial_errors)[0]
    if method == "closed":
        return closed_form_one_step(model, history, cross, initial_errors)
    if method != "auto":
        raise ValueError("method must be 'auto', 'closed' or 'clique'")
    y = np.asarray(history, dtype=float)
    if y.size < st.R:
        raise ShortHistory(f"history of length {y.size} is shorter than R={st.R}")
    tail_ok = not (st.p and np.isnan(y[y.size - st.p:]).any())
    cross_ok = True
    if st.n_cross:
        c = None if cross is None else np.asarray(cross, dtype=float).reshape(-1, st.n_cross)
        cross_ok = c is not None and c.shape[0] > y.size and not np.isnan(c[y.size]).any()
    if tail_ok and cross_ok:
        return closed_form_one_step(model, history, cross, initial_errors)
    return multi_step(model, history, cross, 1, initial_errors)[0]


def predictive_density(model: SeriesModel, history, y_actual, cross=None, initial_errors="zero") -> float:
    """``log N(y_actual; mu*, sigma*)`` of the one-step forecast."""
    g = one_step(model, history, cross, initial_errors=initial_errors)
    return g.logpdf(y_actual)


def log_normal_pdf(x, mean, var):
    x, mean, var = np.asarray(x, float), np.asarray(mean, float), np.asarray(var, float)
    return -0.5 * (np.log(2.0 * math.pi * var) + (x - mean) ** 2 / var)
