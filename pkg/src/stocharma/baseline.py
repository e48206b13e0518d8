"""Classic ARMA with deterministic observation nodes.

The one-step forecast is ``Yhat_t = zeta + sum_j beta_j E_{t-j} +
sum_i alpha_i y_{t-i} + eta . c_t`` and the error is recovered as
``E_t = (y_t - Yhat_t) / beta0``. Errors before the first forecast
(``t <= R``) are set to zero, which is the conditional-likelihood
treatment of the series start.
"""

from __future__ import annotations

import numpy as np

from .errors import ChainTooShort, MissingData
from .model import Parameters


def _check(params: Parameters, y, cross):
    if np.isnan(y).any():
        raise MissingData("the recursive errors need a complete series")
    k = params.eta.size
    if k:
        if cross is None:
            raise ValueError("cross predictor values are required")
        cross = np.asarray(cross, dtype=float).reshape(y.size, k)
        if np.isnan(cross).any():
            raise MissingData("the recursive errors need complete cross predictor values")
    return cross


def one_step_means(params: Parameters, series, cross=None):
    """Forecasts ``Yhat_t`` for ``t = R+1..T`` together with the errors.

    Returns
    -------
    yhat : ndarray
        ``yhat[i]`` forecasts ``series[i]``; ``NaN`` for ``i < R``.
    errors : ndarray
        Recursive errors, zero for ``i < R``.
    """
    y = np.asarray(series, dtype=float).reshape(-1)
    cross = _check(params, y, cross)
    p, q = params.p, params.q
    R = max(p, q)
    if y.size <= R:
        raise ChainTooShort(f"series of length {y.size} needs more than R={R} values")
    e = np.zeros(y.size)
    yhat = np.full(y.size, np.nan)
    for t in range(R, y.size):
        m = params.zeta
        for j in range(1, q + 1):
            m += params.beta[j - 1] * e[t - j]
        for i in range(1, p + 1):
            m += params.alpha[i - 1] * y[t - i]
        if params.eta.size:
            m += cross[t] @ params.eta
        yhat[t] = m
        e[t] = (y[t] - m) / params.beta0
    return yhat, e


def arma_errors(params: Parameters, series, cross=None):
    """Recursive one-step errors ``E_t = (y_t - Yhat_t) / beta0``."""
    return one_step_means(params, series, cross)[1]


def reconstruct(params: Parameters, errors, head, cross=None):
    """Rebuild a series from its errors and first ``R`` values.

    Inverts :func:`arma_errors`: ``y_t = Yhat_t + beta0 E_t`` for ``t > R``.
    """
    e = np.asarray(errors, dtype=float)
    p, q = params.p, params.q
    R = max(p, q)
    y = np.empty(e.size)
    y[:R] = np.asarray(head, dtype=float)[:R]
    k = params.eta.size
    if k:
        cross = np.asarray(cross, dtype=float).reshape(e.size, k)
    for t in range(R, e.size):
        m = params.zeta
        for j in range(1, q + 1):
            m += params.beta[j - 1] * e[t - j]
        for i in range(1, p + 1):
            m += params.alpha[i - 1] * y[t - i]
        if k:
            m += cross[t] @ params.eta
        y[t] = m + params.beta0 * e[t]
    return y


def next_mean(params: Parameters, history, cross=None):
    """Classic ARMA forecast of the value following ``history``.

    ``cross`` has one more row than ``history``; its last row holds the
    cross predictor values for the forecast time.
    """
    y = np.asarray(history, dtype=float).reshape(-1)
    ext = np.append(y, 0.0)
    _, e = one_step_means(params, ext, cross)
    return float(ext[-1] - params.beta0 * e[-1])


__all__ = ["arma_errors", "next_mean", "one_step_means", "reconstruct"]
