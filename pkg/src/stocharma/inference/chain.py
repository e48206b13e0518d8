"""Exact inference for one series over its clique chain.

Cliques ``(Y_t, E_t, X_t)`` for ``t = R+1..T`` overlap in the separator
``(E_{t-q+1..t}, Y_{t-p+1..t})``. A forward pass enters the evidence and
yields the prediction-error decomposition of the log-likelihood; a
backward pass turns the filtered clique marginals into posterior ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ChainTooShort, MissingCrossValues, NumericalFailure
from ..model import ModelStructure, Parameters, check_parameters
from . import _kernels
from .gaussian import Gaussian

PIVOT_TOL = 1e-12
INITIAL_ERRORS = ("zero", "prior")


def initial_error_variance(mode, gamma):
    """Prior variance of the pre-sample errors ``E_{R-q+1..R}``.

    ``"zero"`` conditions on them being 0 (the conditional-likelihood
    convention shared with the recursive ARMA errors); ``"prior"`` gives
    each an independent ``N(0, gamma)``.
    """
    if mode == "zero":
        return 0.0
    if mode == "prior":
        return float(gamma)
    raise ValueError(f"initial_errors must be one of {INITIAL_ERRORS}")


def cross_offsets(params: Parameters, cross):
    """Mean shift ``eta . c_t`` and extra variance from unobserved entries.

    Unobserved cross-predictor values are treated as independent ``N(0, 1)``
    draws on the standardized scale.
    """
    T = cross.shape[0]
    if cross.shape[1] == 0:
        return np.zeros(T), np.zeros(T)
    miss = np.isnan(cross)
    xoff = np.where(miss, 0.0, cross) @ params.eta
    xvar = miss.astype(float) @ (params.eta**2)
    return xoff, xvar


@dataclass
class SuffStats:
    """Posterior sums over ``t = R+1..T`` feeding the M-step.

    ``X_t`` is ``(E_{t-1..t-q}, Y_{t-1..t-p}, C_t)`` for a fixed ``beta0``
    and ``(E_{t..t-q}, Y_{t-1..t-p}, C_t)`` when ``beta0`` is free, so it
    lines up with :meth:`Parameters.phi`.
    """

    free_beta0: bool
    count: int
    sum_e: float
    sum_ee: float
    sum_y: float
    sum_yy: float
    sum_x: np.ndarray
    sum_yx: np.ndarray
    sum_xx: np.ndarray
    sum_xe: np.ndarray
    init_ee: float = 0.0
    init_count: int = 0
    x_labels: list = field(default_factory=list)

    def as_vector(self):
        return np.concatenate([
            [self.count, self.sum_e, self.sum_ee, self.sum_y, self.sum_yy, self.init_ee, self.init_count],
            self.sum_x, self.sum_yx, self.sum_xx.ravel(), self.sum_xe,
        ])


@dataclass
class CliqueChain:
    structure: ModelStructure
    params: Parameters
    y: np.ndarray
    cross: np.ndarray
    initial_errors: str = "zero"
    _filtered: tuple | None = field(default=None, repr=False)
    _smoothed: tuple | None = field(default=None, repr=False)

    @property
    def T(self):
        return self.y.size

    @property
    def R(self):
        return self.structure.R

    @property
    def n_cliques(self):
        return self.T - self.R

    def clique_labels(self, t):
        """Variables of the clique at (1-based) time ``t`` in kernel order."""
        st = self.structure
        es = [f"E@{t - j}" for j in range(st.q + 1)]
        ys = [f"Y@{t - i}" for i in range(st.p + 1)]
        cs = [f"C{k}@{t}" for k in range(st.n_cross)]
        return es + ys + cs

    def separator_labels(self, t):
        st = self.structure
        return [f"E@{t - j}" for j in range(st.q)] + [f"Y@{t - i}" for i in range(st.p)]

    @property
    def cliques(self):
        return [self.clique_labels(t) for t in range(self.R + 1, self.T + 1)]

    @property
    def evidence(self):
        ev = {f"Y@{i + 1}": float(v) for i, v in enumerate(self.y) if not np.isnan(v)}
        for k in range(self.structure.n_cross):
            for i in range(self.R, self.T):
                if not np.isnan(self.cross[i, k]):
                    ev[f"C{k}@{i + 1}"] = float(self.cross[i, k])
        return ev

    def filtered(self):
        if self._filtered is None:
            par, st = self.params, self.structure
            xoff, xvar = cross_offsets(par, self.cross)
            mf, Pf, pm, pv, ll, status, where = _kernels.forward(
                self.y, xoff, xvar, st.p, st.q, st.R,
                par.zeta, par.beta0, np.asarray(par.beta, dtype=float), np.asarray(par.alpha, dtype=float),
                par.gamma, par.sigma, initial_error_variance(self.initial_errors, par.gamma),
            )
            if status != _kernels.OK:
                raise NumericalFailure(f"non-positive predictive variance at time {where + 1}")
            self._filtered = (mf, Pf, pm, pv, ll)
        return self._filtered

    def smoothed(self):
        if self._smoothed is None:
            mf, Pf = self.filtered()[:2]
            ms, Ps, status, where = _kernels.backward(mf, Pf, self.structure.p, self.structure.q, PIVOT_TOL)
            if status != _kernels.OK:
                raise NumericalFailure(
                    f"separator covariance at time {self.R + where + 1} is singular beyond tolerance"
                )
            self._smoothed = (ms, Ps)
        return self._smoothed


def _as_cross(structure, cross_values, T):
    k = structure.n_cross
    if cross_values is None:
        if k:
            raise ValueError("structure has cross predictors but no cross values were given")
        return np.zeros((T, 0))
    cross = np.asarray(cross_values, dtype=float).reshape(T, k) if k else np.zeros((T, 0))
    return cross


def make_chain(structure, params, observations, cross_values=None, initial_errors="zero"):
    """Like :func:`build_chain` but allows an empty chain (``T == R``)."""
    check_parameters(structure, params)
    y = np.array(observations, dtype=float).reshape(-1)
    R = structure.R
    if y.size < R:
        raise ChainTooShort(f"series of length {y.size} is shorter than R={R}")
    if np.isnan(y[R - structure.p:R]).any():
        raise ValueError("observations preceding the first clique must be filled in")
    initial_error_variance(initial_errors, params.gamma)
    return CliqueChain(structure, params, y, _as_cross(structure, cross_values, y.size), initial_errors)


def build_chain(structure, params, observations, cross_values=None, initial_errors="zero") -> CliqueChain:
    """Set up the clique chain for one series.

    Parameters
    ----------
    structure, params
        Model for the series.
    observations : array_like
        Values on the model scale, ``NaN`` where missing. Entries before
        the first clique must already be filled.
    cross_values : array_like, optional
        ``(T, k)`` array of cross-predictor values aligned with
        ``observations``; ``cross_values[i, k]`` is predictor ``k`` for
        time ``i + 1``.
    initial_errors : {"zero", "prior"}
        Treatment of the pre-sample errors, see :func:`initial_error_variance`.
    """
    y = np.asarray(observations, dtype=float).reshape(-1)
    if y.size <= structure.R:
        raise ChainTooShort(f"series of length {y.size} needs more than R={structure.R} values")
    return make_chain(structure, params, y, cross_values, initial_errors)


def x_indices(structure: ModelStructure):
    """Positions of ``X_t`` inside the augmented clique vector ``(w_t, C_t)``."""
    p, q = structure.p, structure.q
    n = p + q + 2
    e_part = list(range(0, q + 1)) if structure.free_beta0 else list(range(1, q + 1))
    y_part = list(range(q + 2, q + 2 + p))
    c_part = list(range(n, n + structure.n_cross))
    return e_part + y_part + c_part


def x_labels(structure: ModelStructure):
    es = [f"E[t-{j}]" if j else "E[t]" for j in range(0 if structure.free_beta0 else 1, structure.q + 1)]
    ys = [f"Y[t-{i}]" for i in range(1, structure.p + 1)]
    cs = [str(c) for c in structure.cross_predictors]
    return es + ys + cs


def posterior_moments(chain: CliqueChain) -> SuffStats:
    """Expected sufficient statistics under the posterior given all evidence."""
    st = chain.structure
    if chain.n_cliques < 1:
        raise ChainTooShort("no cliques to accumulate")
    cross = chain.cross[chain.R:]
    if np.isnan(cross).any():
        i, k = np.argwhere(np.isnan(cross))[0]
        xp = st.cross_predictors[k]
        raise MissingCrossValues(st.target, xp.source, xp.lag, chain.R + i + 1)
    ms, Ps = chain.smoothed()
    n = ms.shape[1]
    mean = np.concatenate([ms, cross], axis=1)
    second = np.einsum("ti,tj->tij", mean, mean)
    second[:, :n, :n] += Ps
    S1 = mean.sum(axis=0)
    S2 = second.sum(axis=0)
    S2 = 0.5 * (S2 + S2.T)
    X = x_indices(st)
    yi = st.q + 1
    if chain.initial_errors == "prior":
        init_ee = float(sum(second[0, j, j] for j in range(1, st.q + 1)))
        init_count = st.q
    else:
        init_ee, init_count = 0.0, 0
    return SuffStats(
        free_beta0=st.free_beta0,
        count=chain.n_cliques,
        sum_e=float(S1[0]),
        sum_ee=float(S2[0, 0]),
        sum_y=float(S1[yi]),
        sum_yy=float(S2[yi, yi]),
        sum_x=S1[X].copy(),
        sum_yx=S2[yi, X].copy(),
        sum_xx=S2[np.ix_(X, X)].copy(),
        sum_xe=S2[X, 0].copy(),
        init_ee=init_ee,
        init_count=init_count,
        x_labels=x_labels(st),
    )


def clique_marginals(chain: CliqueChain):
    """Posterior Gaussians over every clique's ``(E, Y)`` variables."""
    ms, Ps = chain.smoothed()
    st = chain.structure
    out = []
    for s in range(chain.n_cliques):
        labels = chain.clique_labels(chain.R + s + 1)[: st.p + st.q + 2]
        out.append(Gaussian(labels, ms[s], Ps[s]))
    return out


def last_clique_marginal(chain: CliqueChain) -> Gaussian:
    """Filtered joint over ``(E_{T-q+1..T}, Y_{T-p+1..T})`` given ``y_1..y_T``."""
    st = chain.structure
    T = chain.T
    labels = chain.separator_labels(T)
    if chain.n_cliques == 0:
        init = initial_error_variance(chain.initial_errors, chain.params.gamma)
        mean = np.concatenate([np.zeros(st.q), chain.y[T - st.p:][::-1] if st.p else []])
        cov = np.zeros((st.q + st.p, st.q + st.p))
        cov[: st.q, : st.q] = init * np.eye(st.q)
        return Gaussian(labels, mean, cov)
    mf, Pf = chain.filtered()[:2]
    _, cur = _kernels.separator_indices(st.p, st.q)
    return Gaussian(labels, mf[-1][cur], Pf[-1][np.ix_(cur, cur)])


def log_likelihood(chain: CliqueChain) -> float:
    """``log p(observed Y_{R+1..T} | Y_{1..R}, C)`` by prediction-error decomposition."""
    return float(chain.filtered()[4])


def predictive_moments(chain: CliqueChain):
    """One-step predictive mean and variance for every position ``t > R``."""
    pm, pv = chain.filtered()[2:4]
    return pm, pv
