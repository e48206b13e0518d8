"""Holdout scoring, the sign test and the classic ARMA baselines."""

from __future__ import annotations

import math
import warnings
from typing import NamedTuple

import numpy as np
from scipy import optimize, signal, stats

from .baseline import next_mean, one_step_means
from .data import fill_initial
from .errors import AllTies, EmptyHoldout, MissingData, NonConvergenceWarning, TooShort
from .forecast import log_normal_pdf
from .inference import Gaussian, make_chain, predictive_moments
from .model import ModelStructure, Parameters, SeriesModel


# -- scores ----------------------------------------------------------------

def holdout_moments(model: SeriesModel, series_full, holdout_start, cross=None, initial_errors="zero"):
    """Rolling one-step predictive moments for positions ``holdout_start..``.

    A single forward pass over the whole series gives, at every position,
    the predictive distribution given everything before it, which is the
    rolling one-step forecast with earlier holdout values revealed.
    """
    st, par = model
    y = np.asarray(series_full, dtype=float).reshape(-1)
    if holdout_start < st.R:
        raise TooShort(f"holdout must start after the first R={st.R} positions")
    if holdout_start >= y.size:
        raise EmptyHoldout("holdout region is empty")
    y = fill_initial(y, st.R)
    chain = make_chain(st, par, y, cross, initial_errors)
    pm, pv = predictive_moments(chain)
    return y[holdout_start:], pm[holdout_start:], pv[holdout_start:]


def pointwise_scores(y, mean, var):
    obs = ~np.isnan(y)
    if not obs.any():
        raise EmptyHoldout("no observed values in the holdout")
    return log_normal_pdf(y[obs], mean[obs], var[obs])


def sequential_predictive_score(model: SeriesModel, series_full, holdout_start, cross=None, initial_errors="zero"):
    """Average one-step log predictive density over the holdout.

    Parameters
    ----------
    model : SeriesModel
    series_full : array_like
        Training values followed by the holdout, on the model scale.
    holdout_start : int
        Index of the first holdout position.
    cross : array_like, optional
        ``(len(series_full), k)`` cross-predictor columns.

    Missing holdout values are skipped; earlier holdout values count as
    observed history for later ones.
    """
    y, m, v = holdout_moments(model, series_full, holdout_start, cross, initial_errors)
    return float(np.mean(pointwise_scores(y, m, v)))


def arma_holdout_moments(params: Parameters, series_full, holdout_start, cross=None, sigma=0.0):
    y = np.asarray(series_full, dtype=float).reshape(-1)
    if holdout_start >= y.size:
        raise EmptyHoldout("holdout region is empty")
    if np.isnan(y).any():
        raise MissingData("classic ARMA scoring needs a complete series")
    R = max(params.p, params.q)
    if holdout_start < R:
        raise TooShort(f"holdout must start after the first R={R} positions")
    yhat, _ = one_step_means(params, y, cross)
    var = np.full(y.size - holdout_start, params.gamma + sigma)
    return y[holdout_start:], yhat[holdout_start:], var


def arma_predictive_score(params: Parameters, series_full, holdout_start, cross=None, sigma=0.0):
    """Sequential score of a classic ARMA model, optionally smoothed by ``sigma``."""
    y, m, v = arma_holdout_moments(params, series_full, holdout_start, cross, sigma)
    return float(np.mean(pointwise_scores(y, m, v)))


def smoothed_arma_predictive(arma_params: Parameters, history, sigma, cross=None) -> Gaussian:
    """Classic ARMA one-step forecast with ``sigma`` added to its variance."""
    y = np.asarray(history, dtype=float).reshape(-1)
    mean = next_mean(arma_params, y, cross)
    return Gaussian.scalar(f"Y@{y.size + 1}", mean, arma_params.gamma + sigma)


# -- sign test ---------------------------------------------------------------

class SignTest(NamedTuple):
    wins_a: int
    wins_b: int
    ties: int
    p_value: float
    significant: bool
    all_ties: bool = False


def sign_test(scores_a, scores_b, alpha=0.05, strict=False) -> SignTest:
    """One-sided sign test that method ``a`` scores higher than ``b``.

    Ties are excluded; ``p_value = P(X >= wins_a)`` for
    ``X ~ Binomial(wins_a + wins_b, 1/2)``. Pairs with a ``NaN`` score are
    dropped. When every pair ties the p-value is ``NaN`` and the result is
    flagged (or :class:`AllTies` is raised with ``strict=True``).
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("score sequences differ in length")
    keep = ~(np.isnan(a) | np.isnan(b))
    a, b = a[keep], b[keep]
    wins_a = int(np.count_nonzero(a > b))
    wins_b = int(np.count_nonzero(b > a))
    ties = a.size - wins_a - wins_b
    n = wins_a + wins_b
    if n == 0:
        if strict:
            raise AllTies("every pair of scores ties")
        return SignTest(wins_a, wins_b, ties, math.nan, False, True)
    p = float(stats.binomtest(wins_a, n, 0.5, alternative="greater").pvalue)
    return SignTest(wins_a, wins_b, ties, p, p <= alpha)


# -- classic ARMA by conditional least squares -----------------------------

def _design(y, cross, p, R):
    n = y.size - R
    cols = [np.ones(n)]
    cols += [y[R - i:y.size - i] for i in range(1, p + 1)]
    if cross is not None and cross.shape[1]:
        cols += [cross[R:, k] for k in range(cross.shape[1])]
    return np.column_stack(cols)


def _css_problem(y, cross, p, q, R):
    """Residual and Jacobian functions for ``theta = (zeta, alpha, eta, beta)``."""
    Z = _design(y, cross, p, R)
    target = y[R:]
    nz = Z.shape[1]

    def errors(theta):
        a = np.concatenate([[1.0], theta[nz:]])
        with np.errstate(over="ignore", invalid="ignore"):
            e = signal.lfilter([1.0], a, target - Z @ theta[:nz])
        return e, a

    def resid(theta):
        e, _ = errors(theta)
        return np.where(np.isfinite(e), e, 1e150)

    def jac(theta):
        e, a = errors(theta)
        J = np.empty((target.size, theta.size))
        with np.errstate(over="ignore", invalid="ignore"):
            J[:, :nz] = -signal.lfilter([1.0], a, Z, axis=0)
            for j in range(1, q + 1):
                lagged = np.concatenate([np.zeros(j), e[:-j]])[: target.size]
                J[:, nz + j - 1] = -signal.lfilter([1.0], a, lagged)
        return np.where(np.isfinite(J), J, 0.0)

    return Z, resid, jac


def fit_classic_arma(series, structure: ModelStructure, cross=None, seed=0, n_starts=3, max_nfev=2000) -> Parameters:
    """Conditional least-squares ARMA fit (errors before ``R`` fixed at zero).

    The sum of squared recursive errors is minimized by Levenberg-Marquardt
    from ``n_starts`` seeded starting points: the least-squares AR fit with
    zero MA terms, then random MA perturbations of it. ``gamma`` is the
    mean squared error at the optimum and ``sigma`` is 0. The lowest cost
    among starts that terminate successfully is kept.

    Warns with :class:`NonConvergenceWarning` (returning the best point
    found) when no start terminates successfully.
    """
    y = np.asarray(series, dtype=float).reshape(-1)
    if np.isnan(y).any():
        raise MissingData("classic ARMA fitting needs a complete series")
    p, q, R = structure.p, structure.q, structure.R
    k = structure.n_cross
    if k:
        if cross is None:
            raise ValueError("cross predictor values are required")
        cross = np.asarray(cross, dtype=float).reshape(y.size, k)
        if np.isnan(cross).any():
            raise MissingData("classic ARMA fitting needs complete cross predictor values")
    Z, resid, jac = _css_problem(y, cross, p, q, R)
    n_par = Z.shape[1] + q
    if y.size - R < max(n_par, 1):
        raise TooShort(f"{y.size - R} errors cannot determine {n_par} parameters")

    base = np.linalg.lstsq(Z, y[R:], rcond=None)[0]
    rng = np.random.default_rng(seed)
    starts = [np.concatenate([base, np.zeros(q)])]
    for _ in range(n_starts - 1):
        starts.append(np.concatenate([base, rng.uniform(-0.5, 0.5, q)]))

    if q == 0:
        # without MA terms the problem is linear and the start is the optimum
        best, ok = starts[0], True
    else:
        # rank by (did not terminate, cost): a start that exhausts max_nfev
        # wanders in a flat or explosive region, and its end point is
        # sensitive to round-off, so it is used only when no start converged
        best, best_rank = None, (True, math.inf)
        for theta0 in starts:
            res = optimize.least_squares(resid, theta0, jac=jac, method="lm", max_nfev=max_nfev)
            rank = (res.status <= 0, res.cost)
            if rank < best_rank:
                best, best_rank = res.x, rank
        ok = not best_rank[0]
    if not ok:
        warnings.warn("ARMA least-squares fit did not converge", NonConvergenceWarning, stacklevel=2)

    nz = Z.shape[1]
    e = resid(best)
    return Parameters(
        zeta=float(best[0]),
        beta0=1.0,
        beta=best[nz:],
        alpha=best[1:1 + p],
        eta=best[1 + p:nz],
        gamma=float(np.mean(e**2)),
        sigma=0.0,
    )


def run_experiment(spec, n_jobs=None):
    """Run a declarative experiment; see :mod:`stocharma.experiment`."""
    from .experiment import run_experiment as _run

    return _run(spec, n_jobs=n_jobs)
