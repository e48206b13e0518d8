import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst
from numpy.testing import assert_allclose

from conftest import random_instance, random_params
from stocharma.baseline import arma_errors
from stocharma.errors import ChainTooShort, TooLarge
from stocharma.inference import (
    Gaussian,
    build_chain,
    clique_marginals,
    dense_oracle,
    last_clique_marginal,
    log_likelihood,
    posterior_moments,
)
from stocharma.model import FREE, ModelStructure, Parameters


def _close(a, b, rtol=1e-8):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(1.0, np.abs(b).max(initial=0.0))
    assert_allclose(a, b, rtol=rtol, atol=rtol * scale)


def compare_with_oracle(st, par, y, cross, initial_errors="zero", rtol=1e-8):
    chain = build_chain(st, par, y, cross, initial_errors)
    stats = posterior_moments(chain)
    marg = last_clique_marginal(chain)
    ll = log_likelihood(chain)
    o_stats, o_marg, o_ll = dense_oracle(st, par, y, cross, initial_errors)
    _close(stats.as_vector(), o_stats.as_vector(), rtol)
    assert marg.vars == o_marg.vars
    _close(marg.mean, o_marg.mean, rtol)
    _close(marg.cov, o_marg.cov, rtol)
    _close(ll, o_ll, rtol)


@pytest.mark.parametrize("seed", range(25))
def test_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    compare_with_oracle(*random_instance(rng))


@pytest.mark.parametrize("seed", range(10))
def test_matches_dense_oracle_prior_initial_errors(seed):
    rng = np.random.default_rng(1000 + seed)
    compare_with_oracle(*random_instance(rng), initial_errors="prior")


def test_figure_one_layout():
    st = ModelStructure(p=2, q=2)
    chain = build_chain(st, Parameters(beta=[0.1, 0.1], alpha=[0.2, 0.1]), np.arange(5.0))
    assert chain.n_cliques == 3
    assert [c[0] for c in chain.cliques] == ["E@3", "E@4", "E@5"]
    for t in (3, 4):
        shared = set(chain.clique_labels(t)) & set(chain.clique_labels(t + 1))
        assert shared == set(chain.separator_labels(t))


def test_degenerate_structure_has_no_separator():
    chain = build_chain(ModelStructure(), Parameters(), np.zeros(4))
    assert chain.separator_labels(3) == []
    assert all(set(c) == {f"E@{t}", f"Y@{t}"} for t, c in zip(range(1, 5), chain.cliques))


def test_white_noise_closed_form(rng):
    y = rng.normal(size=12)
    y[[2, 7]] = np.nan
    par = Parameters(gamma=0.7, sigma=0.2)
    ll = log_likelihood(build_chain(ModelStructure(), par, y))
    obs = y[~np.isnan(y)]
    expected = -0.5 * np.sum(np.log(2 * math.pi * 0.9) + obs**2 / 0.9)
    assert ll == pytest.approx(expected, rel=1e-12)


def test_all_missing_loglik_zero():
    y = np.array([0.3, np.nan, np.nan, np.nan])
    chain = build_chain(ModelStructure(p=1), Parameters(alpha=[0.5]), y)
    assert log_likelihood(chain) == 0.0


def test_prior_moments_without_evidence():
    y = np.full(6, np.nan)
    stats = posterior_moments(build_chain(ModelStructure(), Parameters(gamma=1.7), y))
    assert stats.sum_e == pytest.approx(0.0)
    assert stats.sum_ee == pytest.approx(6 * 1.7)


def test_one_dimensional_conditioning():
    # Y = E + V with gamma = sigma = 1: E | y ~ N(y/2, 1/2)
    stats = posterior_moments(build_chain(ModelStructure(), Parameters(gamma=1.0, sigma=1.0), [3.0]))
    assert stats.sum_e == pytest.approx(1.5)
    assert stats.sum_ee == pytest.approx(0.5 + 1.5**2)


def test_regression_residual_form(rng):
    # q = 0, fully observed: E_t | y ~ N(g/(g+s) r_t, g s/(g+s)) with r_t the AR residual
    st = ModelStructure(p=2)
    par = Parameters(zeta=0.2, alpha=[0.5, -0.2], gamma=0.8, sigma=0.3)
    y = rng.normal(size=15)
    ms = clique_marginals(build_chain(st, par, y))
    r = y[2:] - 0.2 - 0.5 * y[1:-1] + 0.2 * y[:-2]
    g, s = par.gamma, par.sigma
    assert_allclose([m.mean[0] for m in ms], g / (g + s) * r, atol=1e-12)
    assert_allclose([m.cov[0, 0] for m in ms], g * s / (g + s), atol=1e-12)


def test_posterior_errors_approach_recursive_residuals(rng):
    st = ModelStructure(p=1, q=1)
    par = Parameters(zeta=0.1, alpha=[0.4], beta=[0.5], gamma=1.0, sigma=1e-10)
    y = rng.normal(size=40)
    ms = clique_marginals(build_chain(st, par, y))
    e = arma_errors(par, y)
    assert_allclose([m.mean[0] for m in ms], e[1:], atol=1e-4)


def test_fully_observed_tail_is_point_mass(rng):
    st = ModelStructure(p=2, q=1)
    par = random_params(rng, st)
    y = rng.normal(size=10)
    marg = last_clique_marginal(build_chain(st, par, y))
    assert marg.vars == ["E@10", "Y@10", "Y@9"]
    assert_allclose(marg.mean[1:], [y[9], y[8]])
    assert np.abs(marg.cov[1:, :]).max() == 0.0


def test_q0_marginal_only_over_y(rng):
    marg = last_clique_marginal(build_chain(ModelStructure(p=2), Parameters(alpha=[0.1, 0.1]), rng.normal(size=6)))
    assert marg.vars == ["Y@6", "Y@5"]


def test_chain_too_short():
    with pytest.raises(ChainTooShort):
        build_chain(ModelStructure(p=2), Parameters(alpha=[0.1, 0.1]), [1.0, 2.0])


def test_oracle_size_cap():
    with pytest.raises(TooLarge):
        dense_oracle(ModelStructure(), Parameters(), np.zeros(5000))


@settings(max_examples=40, deadline=None)
@given(hst.integers(0, 2**32 - 1))
def test_covariances_psd(seed):
    rng = np.random.default_rng(seed)
    st, par, y, cross = random_instance(rng)
    chain = build_chain(st, par, y, cross)
    for g in clique_marginals(chain) + [last_clique_marginal(chain)]:
        assert g.is_psd()
    xx = posterior_moments(chain).sum_xx
    assert_allclose(xx, xx.T, atol=1e-10 * max(1.0, np.abs(xx).max(initial=0.0)))
    if xx.size:
        assert np.linalg.eigvalsh(xx).min() >= -1e-10 * max(1.0, np.abs(xx).max())


@settings(max_examples=40, deadline=None)
@given(hst.integers(0, 2**32 - 1))
def test_evidence_never_adds_variance(seed):
    rng = np.random.default_rng(seed)
    st, par, y, cross = random_instance(rng, missing=(0.3, 0.7))
    hidden = np.flatnonzero(np.isnan(y))
    if hidden.size == 0:
        return
    more = y.copy()
    more[hidden[0]] = rng.normal()
    before = clique_marginals(build_chain(st, par, y, cross))
    after = clique_marginals(build_chain(st, par, more, cross))
    for a, b in zip(before, after):
        assert np.all(np.diag(b.cov) <= np.diag(a.cov) + 1e-10)


def test_free_mode_stats_include_current_error(rng):
    st = ModelStructure(p=1, q=1, beta0_mode=FREE)
    par = random_params(rng, st)
    stats = posterior_moments(build_chain(st, par, rng.normal(size=8)))
    assert stats.x_labels == ["E[t]", "E[t-1]", "Y[t-1]"]
    assert stats.sum_xe[0] == pytest.approx(stats.sum_ee)


def test_gaussian_marginal_and_logpdf():
    g = Gaussian(["a", "b"], [1.0, 2.0], [[2.0, 0.5], [0.5, 1.0]])
    m = g.marginal(["b"])
    assert m.mu == 2.0 and m.var == 1.0
    assert m.logpdf(2.0) == pytest.approx(-0.5 * math.log(2 * math.pi))
