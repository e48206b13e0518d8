"""EM estimation of sARMA-family parameters from incomplete data."""

from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import TimeSeries, fill_in, fill_initial
from .errors import CrossFillWarning, DegenerateStats, MissingCrossValues, NonMonotone, StocharmaError
from .inference import SuffStats, build_chain, log_likelihood, posterior_moments
from .model import MultiModel, ModelStructure, Parameters, SeriesModel, init_parameters

log = logging.getLogger(__name__)

NONMONOTONE_TOL = 1e-6
INIT_METHODS = ("zero", "css")


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 2000
    rel_tol: float = 1e-6
    pinv_cutoff: float = 1e-10
    min_gamma: float = 1e-10
    sigma: float = 0.01
    initial_errors: str = "zero"
    fill_cross: bool = True
    accelerate: bool = False
    init: str = "zero"

    def __post_init__(self):
        for name in ("max_iters", "rel_tol", "pinv_cutoff", "min_gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.init not in INIT_METHODS:
            raise ValueError(f"init must be one of {INIT_METHODS}")
        if not self.sigma > 0:
            raise ValueError(
                "sigma must be positive: with sigma = 0 EM cannot move the regression "
                "coefficients away from their starting values"
            )

    @classmethod
    def from_dict(cls, doc):
        return cls(**{k: v for k, v in doc.items() if k in cls.__dataclass_fields__})


@dataclass
class FitTrace:
    loglik: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    notes: list = field(default_factory=list)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "log_likelihood"])
            for i, ll in enumerate(self.loglik):
                w.writerow([i, repr(ll)])


def e_step(structure, params, data, cross_values=None, initial_errors="zero") -> SuffStats:
    return posterior_moments(build_chain(structure, params, data, cross_values, initial_errors))


def _solve(A, b, cutoff):
    return np.linalg.pinv(A, rcond=cutoff, hermitian=True) @ b


def _gamma_hat(stats: SuffStats, min_gamma):
    total = stats.sum_ee + stats.init_ee
    return max(total / (stats.count + stats.init_count), min_gamma)


def _normal_system(stats: SuffStats):
    """Joint symmetric system in ``(phi, zeta)``.

    With a fixed ``beta0`` the target is ``Y_t - E_t``; with a free one the
    ``E_t`` column sits inside ``X_t`` and the target is ``Y_t``.
    """
    k = stats.sum_x.size
    A = np.empty((k + 1, k + 1))
    A[:k, :k] = stats.sum_xx
    A[:k, k] = stats.sum_x
    A[k, :k] = stats.sum_x
    A[k, k] = stats.count
    if stats.free_beta0:
        b = np.append(stats.sum_yx, stats.sum_y)
    else:
        b = np.append(stats.sum_yx - stats.sum_xe, stats.sum_y - stats.sum_e)
    return A, b


def derivative_residuals(stats: SuffStats, zeta, phi):
    """The ``dQ/dphi`` and ``dQ/dzeta`` expressions (up to the 1/sigma factor)."""
    phi = np.asarray(phi, dtype=float)
    d_phi = stats.sum_yx - stats.sum_xx @ phi - stats.sum_x * zeta
    d_zeta = stats.sum_y - stats.sum_x @ phi - stats.count * zeta
    if not stats.free_beta0:
        d_phi = d_phi - stats.sum_xe
        d_zeta = d_zeta - stats.sum_e
    return d_phi, d_zeta


def _unpack(structure, sol, gamma, sigma, free):
    q, p = structure.q, structure.p
    phi, zeta = sol[:-1], sol[-1]
    i = 0
    beta0 = 1.0
    if free:
        beta0, i = phi[0], 1
    beta = phi[i:i + q]
    alpha = phi[i + q:i + q + p]
    eta = phi[i + q + p:]
    return Parameters(zeta=zeta, beta0=beta0, beta=beta, alpha=alpha, eta=eta, gamma=gamma, sigma=sigma)


def m_step_fixed(stats: SuffStats, sigma, structure: ModelStructure, config: EmConfig = EmConfig()) -> Parameters:
    if stats.free_beta0:
        raise ValueError("statistics were accumulated for a free beta0")
    return _m_step(stats, sigma, structure, config)


def m_step_free(stats: SuffStats, sigma, structure: ModelStructure, config: EmConfig = EmConfig()) -> Parameters:
    if not stats.free_beta0:
        raise ValueError("statistics were accumulated for a fixed beta0")
    return _m_step(stats, sigma, structure, config)


def _m_step(stats, sigma, structure, config):
    if stats.count <= 0:
        raise DegenerateStats("no cliques contributed to the statistics")
    A, b = _normal_system(stats)
    sol = _solve(A, b, config.pinv_cutoff)
    return _unpack(structure, sol, _gamma_hat(stats, config.min_gamma), sigma, stats.free_beta0)


def m_step(stats, sigma, structure, config=EmConfig()):
    return _m_step(stats, sigma, structure, config)


def _as_vector(params: Parameters, free):
    return np.concatenate([[params.zeta], params.phi(free), [np.log(params.gamma)]])


def _from_vector(v, structure, sigma, free):
    return _unpack(structure, v[:-1][np.r_[1:v.size - 1, 0]], float(np.exp(v[-1])), sigma, free)


def _squarem(p0, p1, p2, structure, sigma, free):
    """Extrapolated parameters from two successive EM updates, or ``None``."""
    t0, t1, t2 = (_as_vector(p, free) for p in (p0, p1, p2))
    r = t1 - t0
    v = t2 - t1 - r
    nv = np.linalg.norm(v)
    if not nv > 0:
        return None
    a = min(-np.linalg.norm(r) / nv, -1.0)
    t = t0 - 2.0 * a * r + a * a * v
    if not np.all(np.isfinite(t)) or t[-1] > 700:
        return None
    return _from_vector(t, structure, sigma, free)


def _settled(loglik, rel_tol):
    """Stop when both the last gain and its geometric projection are small.

    Small ``sigma`` makes EM converge linearly with a rate close to 1, so a
    tiny single-step gain can hide a large remaining one. With successive
    gains ``d1, d2`` and ratio ``r = d2 / d1 < 1`` the remaining gain is
    about ``d2 r / (1 - r)``.
    """
    tol = rel_tol * abs(loglik[-1])
    d2 = loglik[-1] - loglik[-2]
    if abs(d2) > tol:
        return False
    if len(loglik) < 3:
        return d2 <= 0
    d1 = loglik[-2] - loglik[-3]
    if d2 <= 0 or d1 <= 0:
        return True
    r = d2 / d1
    if r >= 1:
        return False
    return d2 * r / (1 - r) <= tol


def css_start(structure: ModelStructure, data, cross_values=None, sigma=0.01, min_gamma=1e-10) -> Parameters:
    """Starting point from a conditional least-squares ARMA fit.

    Gaps are filled by interpolation first. Falls back to
    :func:`init_parameters` when the least-squares fit fails.
    """
    from .evaluation import fit_classic_arma

    y = np.asarray(data, dtype=float)
    try:
        if np.isnan(y).any():
            y = fill_in(TimeSeries("_", y)).values
        cross = cross_values
        if cross is not None and np.isnan(cross).any():
            cross = np.column_stack([
                fill_in(TimeSeries("_", c)).values if np.isnan(c).any() else c for c in np.asarray(cross).T
            ]) if np.asarray(cross).size else cross
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            par = fit_classic_arma(y, structure.replace(beta0_mode="fixed_one"), cross)
    except (StocharmaError, ValueError, np.linalg.LinAlgError):
        return init_parameters(structure, data, sigma)
    if not (np.all(np.isfinite(par.phi())) and np.isfinite(par.zeta)):
        return init_parameters(structure, data, sigma)
    return par.replace(gamma=max(par.gamma - sigma, min_gamma, 0.1 * par.gamma), sigma=sigma)


def fit_em(structure: ModelStructure, data, cross_values=None, config: EmConfig = EmConfig(), init: Parameters | None = None):
    """Alternate E- and M-steps until the log-likelihood settles.

    ``data`` must already be on the model scale (standardized, differenced)
    with the first ``R`` values filled in.

    Small ``sigma`` makes plain EM converge linearly at a rate close to 1.
    With ``config.accelerate`` every iteration takes two EM steps and then
    tries the squared extrapolation of Varadhan and Roland (SQUAREM) along
    them; the extrapolated point is kept only if it beats the second EM
    step, so the trace stays monotone.

    Returns
    -------
    params : Parameters
    trace : FitTrace
        ``trace.loglik[i]`` is the log-likelihood of the parameters after
        ``i`` updates; the returned parameters are those of the last entry.
    """
    y = np.asarray(data, dtype=float)
    free = structure.free_beta0
    if init is not None:
        params = init
    elif config.init == "css":
        params = css_start(structure, y, cross_values, config.sigma, config.min_gamma)
    else:
        params = init_parameters(structure, y, config.sigma)
    if params.sigma != config.sigma:
        params = params.replace(sigma=config.sigma)

    def score(par):
        chain = build_chain(structure, par, y, cross_values, config.initial_errors)
        return chain, log_likelihood(chain)

    def em_step(chain_, ll_, it):
        par = m_step(posterior_moments(chain_), config.sigma, structure, config)
        chain_new, ll_new = score(par)
        if ll_new < ll_ - NONMONOTONE_TOL:
            raise NonMonotone(f"log-likelihood fell from {ll_} to {ll_new} at iteration {it}")
        return par, chain_new, ll_new

    chain, ll = score(params)
    trace = FitTrace(loglik=[ll])
    for it in range(1, config.max_iters + 1):
        cand, new_chain, new_ll = em_step(chain, ll, it)
        if config.accelerate:
            p1 = cand
            cand, new_chain, new_ll = em_step(new_chain, new_ll, it)
            ext = _squarem(params, p1, cand, structure, config.sigma, free)
            if ext is not None:
                try:
                    ext_chain, ext_ll = score(ext)
                except (StocharmaError, ValueError, FloatingPointError):
                    ext_ll = -np.inf
                if ext_ll > new_ll:
                    cand, new_chain, new_ll = ext, ext_chain, ext_ll
        trace.loglik.append(new_ll)
        trace.n_iter = it
        params, chain, ll = cand, new_chain, new_ll
        if _settled(trace.loglik, config.rel_tol):
            trace.converged = True
            break
    return params, trace


# -- multiple series -------------------------------------------------------

def cross_columns(structure: ModelStructure, sources, length, offset=0):
    """``(length, k)`` array of cross-predictor values.

    ``sources`` maps ids to arrays indexed like the target (position ``i`` is
    time ``i + 1 + offset``). Times before a source starts contribute 0;
    positions past its end or missing values are ``NaN``.
    """
    k = structure.n_cross
    out = np.zeros((length, k))
    for j, xp in enumerate(structure.cross_predictors):
        src = np.asarray(sources[xp.source], dtype=float)
        for i in range(length):
            s = i + offset - xp.lag
            if s < 0:
                out[i, j] = 0.0
            elif s >= src.size:
                out[i, j] = np.nan
            else:
                out[i, j] = src[s]
    return out


def filled_sources(collection, ids, length=None):
    out = {}
    for key in ids:
        v = collection[key].values if hasattr(collection, "series") else np.asarray(collection[key], dtype=float)
        if length is not None:
            v = v[:length]
        if np.isnan(v).any():
            v = fill_in(TimeSeries(key, v)).values
        out[key] = v
    return out


def fit_multi(structures, collection, config: EmConfig = EmConfig(), train_len=None, n_jobs=1) -> MultiModel:
    """Fit every series independently, cross columns taken as observed.

    Parameters
    ----------
    structures : dict
        Series id to :class:`ModelStructure`.
    collection : Collection
        Data already on the model scale.
    train_len : int, optional
        Use only the first ``train_len`` positions of every series.
    """
    def fit_one(key):
        st = structures[key]
        if st.target is None:
            st = st.replace(target=key)
        series = collection[key].values
        if train_len is not None:
            series = series[:train_len]
        y = fill_initial(series, st.R)
        cross = None
        if st.n_cross:
            srcs = {}
            for xp in st.cross_predictors:
                v = collection[xp.source].values[: y.size]
                if np.isnan(v).any():
                    if not config.fill_cross:
                        first = int(np.flatnonzero(np.isnan(v))[0])
                        raise MissingCrossValues(key, xp.source, xp.lag, first + 1)
                    warnings.warn(
                        f"{key}: missing values of cross source {xp.source!r} filled by interpolation",
                        CrossFillWarning, stacklevel=2,
                    )
                    v = fill_in(TimeSeries(xp.source, v)).values
                srcs[xp.source] = v
            cross = cross_columns(st, srcs, y.size)
        params, trace = fit_em(st, y, cross, config)
        log.debug("fitted %s: %d iterations, loglik %.6f", key, trace.n_iter, trace.loglik[-1])
        return key, SeriesModel(st, params)

    keys = list(structures)
    if n_jobs == 1:
        results = [fit_one(k) for k in keys]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(fit_one, keys))
    return MultiModel(dict(results))
