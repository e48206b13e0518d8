import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hst
from numpy.testing import assert_allclose

from stocharma import evaluation
from stocharma.baseline import arma_errors, next_mean
from stocharma.data import simulate
from stocharma.errors import AllTies, EmptyHoldout, MissingData
from stocharma.evaluation import (
    arma_holdout_moments,
    arma_predictive_score,
    fit_classic_arma,
    sequential_predictive_score,
    sign_test,
    smoothed_arma_predictive,
)
from stocharma.forecast import one_step, predictive_density
from stocharma.model import ModelStructure, MultiModel, Parameters, SeriesModel


def _binomial_tail(k, n):
    return sum(math.comb(n, j) for j in range(k, n + 1)) / 2**n


class TestScore:
    def test_standard_normal_at_mean(self):
        m = SeriesModel(ModelStructure(), Parameters(gamma=1.0, sigma=0.0))
        y = np.r_[np.ones(20), np.zeros(12)]
        score = sequential_predictive_score(m, y, 20)
        assert score == pytest.approx(-0.5 * math.log(2 * math.pi))
        assert score == pytest.approx(-0.9189, abs=1e-4)

    def test_single_point_equals_density(self, rng):
        m = SeriesModel(ModelStructure(p=1, q=1), Parameters(alpha=[0.5], beta=[0.2]))
        y = rng.normal(size=15)
        assert sequential_predictive_score(m, y, 14) == pytest.approx(predictive_density(m, y[:14], y[14]))

    def test_matches_rolling_loop(self, rng):
        m = SeriesModel(ModelStructure(p=2, q=1), Parameters(alpha=[0.3, 0.2], beta=[0.4], zeta=0.1))
        y = rng.normal(size=25)
        y[[4, 11]] = np.nan
        start = 20
        loop = [one_step(m, y[:t]).logpdf(y[t]) for t in range(start, 25)]
        assert sequential_predictive_score(m, y, start) == pytest.approx(np.mean(loop), abs=1e-12)

    def test_missing_holdout_values_skipped(self, rng):
        m = SeriesModel(ModelStructure(p=1), Parameters(alpha=[0.5]))
        y = rng.normal(size=20)
        y[17] = np.nan
        loop = [one_step(m, y[:t]).logpdf(y[t]) for t in (15, 16, 18, 19)]
        assert sequential_predictive_score(m, y, 15) == pytest.approx(np.mean(loop))

    def test_empty_holdout(self):
        m = SeriesModel(ModelStructure(), Parameters())
        with pytest.raises(EmptyHoldout):
            sequential_predictive_score(m, [1.0, 2.0, np.nan], 2)
        with pytest.raises(EmptyHoldout):
            sequential_predictive_score(m, [1.0, 2.0], 2)

    def test_true_model_near_entropy(self):
        st = ModelStructure(p=1)
        par = Parameters(alpha=[0.5], gamma=1.0, sigma=0.01)
        y = simulate(MultiModel({"a": SeriesModel(st, par)}), 20_000, 0)["a"].values
        score = sequential_predictive_score(SeriesModel(st, par), y, 100)
        entropy = -0.5 * (math.log(2 * math.pi * 1.01) + 1.0)
        assert score == pytest.approx(entropy, abs=0.03)


class TestSignTest:
    def test_nine_of_ten(self):
        res = sign_test(np.r_[np.ones(9), 0.0], np.r_[np.zeros(9), 1.0])
        assert (res.wins_a, res.wins_b, res.ties) == (9, 1, 0)
        assert res.p_value == pytest.approx(11 / 1024)
        assert res.significant

    def test_five_five(self):
        res = sign_test([1, 1, 1, 1, 1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 1, 1, 1, 1, 1])
        assert res.p_value == pytest.approx(0.623046875)
        assert not res.significant

    def test_ties_excluded(self):
        res = sign_test([1, 1, 2, 2], [0, 1, 2, 3])
        assert (res.wins_a, res.wins_b, res.ties) == (1, 1, 2)
        assert res.p_value == pytest.approx(0.75)

    def test_all_ties(self):
        res = sign_test([1.0, 2.0], [1.0, 2.0])
        assert res.all_ties and not res.significant and math.isnan(res.p_value)
        with pytest.raises(AllTies):
            sign_test([1.0], [1.0], strict=True)

    def test_nan_pairs_dropped(self):
        res = sign_test([1.0, np.nan, 3.0], [0.0, 5.0, 1.0])
        assert (res.wins_a, res.wins_b, res.ties) == (2, 0, 0)

    @given(hst.integers(1, 30), hst.data())
    def test_against_exact_tail(self, n, data):
        k = data.draw(hst.integers(0, n))
        res = sign_test(np.r_[np.ones(k), np.zeros(n - k)], np.r_[np.zeros(k), np.ones(n - k)])
        assert res.p_value == pytest.approx(_binomial_tail(k, n), rel=1e-12)


class TestClassicArma:
    def test_ar_equals_ols(self, rng):
        y = np.zeros(400)
        for t in range(2, 400):
            y[t] = 0.2 + 0.5 * y[t - 1] - 0.3 * y[t - 2] + rng.normal()
        par = fit_classic_arma(y, ModelStructure(p=2))
        Z = np.column_stack([np.ones(398), y[1:-1], y[:-2]])
        coef = np.linalg.lstsq(Z, y[2:], rcond=None)[0]
        assert_allclose([par.zeta, *par.alpha], coef, atol=1e-6)
        assert par.sigma == 0.0

    def test_white_noise(self, rng):
        y = rng.normal(1.0, 2.0, size=500)
        par = fit_classic_arma(y, ModelStructure())
        assert par.zeta == pytest.approx(y.mean())
        assert par.gamma == pytest.approx(y.var())

    def test_ma1_recovery(self):
        st = ModelStructure(q=1)
        truth = MultiModel({"a": SeriesModel(st, Parameters(beta=[0.5], sigma=0.0))})
        y = simulate(truth, 5000, 2)["a"].values
        par = fit_classic_arma(y, st)
        assert abs(par.beta[0] - 0.5) < 0.1

    def test_gamma_is_mean_squared_error(self, rng):
        y = rng.normal(size=200)
        par = fit_classic_arma(y, ModelStructure(p=1, q=1))
        e = arma_errors(par, y)[1:]
        assert par.gamma == pytest.approx(np.mean(e**2))

    def test_deterministic(self, rng):
        y = rng.normal(size=150)
        st = ModelStructure(p=1, q=2)
        assert fit_classic_arma(y, st, seed=4) == fit_classic_arma(y, st, seed=4)

    def test_needs_complete_data(self):
        with pytest.raises(MissingData):
            fit_classic_arma([1.0, np.nan, 2.0, 3.0], ModelStructure())

    def test_prefers_converged_start(self, rng, monkeypatch):
        # a start that exhausts its evaluations is ignored even with lower cost
        fake = iter([
            SimpleNamespace(x=np.array([0.0, 0.1]), cost=5.0, status=1),
            SimpleNamespace(x=np.array([0.0, 0.9]), cost=1.0, status=0),
            SimpleNamespace(x=np.array([0.0, 0.2]), cost=6.0, status=2),
        ])
        monkeypatch.setattr(evaluation.optimize, "least_squares", lambda *a, **k: next(fake))
        par = fit_classic_arma(rng.normal(size=50), ModelStructure(q=1))
        assert par.beta[0] == 0.1


class TestSmoothed:
    def test_sigma_zero_is_plain_arma(self, rng):
        par = Parameters(alpha=[0.4], beta=[0.2], gamma=0.7, sigma=0.0)
        y = rng.normal(size=10)
        g = smoothed_arma_predictive(par, y, 0.0)
        assert g.var == 0.7
        assert g.mu == pytest.approx(next_mean(par, y))

    def test_default_sigma_variance(self, rng):
        g = smoothed_arma_predictive(Parameters(gamma=0.7), rng.normal(size=3), 0.01)
        assert g.var == pytest.approx(0.71)

    def test_mean_is_small_sigma_limit(self, rng):
        par = Parameters(zeta=0.1, alpha=[0.4, 0.1], beta=[0.3], gamma=0.9, sigma=0.0)
        y = rng.normal(size=30)
        g = smoothed_arma_predictive(par, y, 0.01)
        m = SeriesModel(ModelStructure(p=2, q=1), par.replace(sigma=1e-10))
        assert g.mu == pytest.approx(one_step(m, y).mu, abs=1e-4)

    def test_pointwise_smoothing_gain(self, rng):
        # adding sigma to the variance raises the log density exactly when
        # the squared residual is beyond the crossing point of the two curves
        gamma, sigma = 0.8, 0.01
        par = Parameters(alpha=[0.5], gamma=gamma, sigma=0.0)
        y = rng.standard_t(3, size=200)
        yy, mean, _ = arma_holdout_moments(par, y, 1)
        resid2 = (yy - mean) ** 2
        crossing = gamma * (gamma + sigma) * math.log((gamma + sigma) / gamma) / sigma
        for t, r2 in enumerate(resid2, start=1):
            plain = arma_predictive_score(par, y[: t + 1], t)
            smooth = arma_predictive_score(par, y[: t + 1], t, sigma=sigma)
            assert (smooth > plain) == (r2 > crossing)
        assert (resid2 > crossing).any() and (resid2 < crossing).any()

    def test_arma_score_needs_complete_data(self):
        with pytest.raises(MissingData):
            arma_predictive_score(Parameters(), [1.0, np.nan, 2.0], 2)
