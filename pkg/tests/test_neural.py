import numpy as np
from scipy import stats

from survstack.learners.base import LearnerSpec, learner_from_json
from survstack.learners.cox import fit_cox
from survstack.learners.coxcore import nelson_aalen
from survstack.learners.neural import batch_objective, fit_survival_nn

from test_cox import linear_ph_cohort


def spec(**hp):
    return LearnerSpec(kind="survival_neural_network", hyperparameters=hp)


class TestSurvivalNet:
    def test_untrained_equals_breslow_baseline(self):
        # zero output weights at init and epochs=0: one shared curve equal to
        # the covariate-free Breslow baseline (= Nelson-Aalen)
        data = linear_ph_cohort(150, [0.8], seed=0)
        fit = fit_survival_nn(data, spec(epochs=0, seed=3))
        na = nelson_aalen(data.times, data.events)
        for t in (1.0, 3.0, 6.0):
            expected = np.exp(-na(t))
            surv = fit.predict_survival(data.covariates, t)
            np.testing.assert_allclose(surv, expected, atol=1e-12)
            assert np.ptp(surv) == 0.0

    def test_ranking_tracks_cox_on_linear_data(self):
        data = linear_ph_cohort(2000, [0.9, -0.6], seed=1, censor_rate=0.08)
        net = fit_survival_nn(
            data, spec(epochs=150, learning_rate=0.05, decay=0.001, seed=2)
        )
        cox = fit_cox(data)
        tau = float(np.quantile(data.times, 0.6))
        net_risk = net.predict_risk(data.covariates, tau)
        cox_risk = cox.predict_risk(data.covariates, tau)
        kendall = stats.kendalltau(net_risk, cox_risk).statistic
        assert kendall > 0.8

    def test_huge_decay_flattens_predictions(self):
        data = linear_ph_cohort(400, [1.0], seed=4)
        fit = fit_survival_nn(data, spec(epochs=5, decay=1e6, seed=5))
        risk = fit.predict_risk(data.covariates, 5.0)
        assert np.std(risk) < 0.01

    def test_gradient_matches_finite_differences(self):
        data = linear_ph_cohort(10, [0.5, -0.4], seed=6, censor_rate=0.02)
        Z = (data.covariates - data.covariates.mean(0)) / data.covariates.std(0)
        h = 4
        rng = np.random.default_rng(7)
        p = Z.shape[1]
        n_params = p * h + h + h + 1
        for _ in range(4):
            params = rng.normal(scale=0.5, size=n_params)
            loss, grad = batch_objective(params, Z, data.times, data.events,
                                         decay=0.1, h=h)
            fd = np.zeros(n_params)
            for j in range(n_params):
                up, dn = params.copy(), params.copy()
                up[j] += 1e-6
                dn[j] -= 1e-6
                fd[j] = (batch_objective(up, Z, data.times, data.events, 0.1, h)[0]
                         - batch_objective(dn, Z, data.times, data.events, 0.1, h)[0]
                         ) / 2e-6
            assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4

    def test_deterministic_given_seed(self):
        data = linear_ph_cohort(300, [0.5], seed=8)
        a = fit_survival_nn(data, spec(epochs=3, seed=9))
        b = fit_survival_nn(data, spec(epochs=3, seed=9))
        np.testing.assert_array_equal(a.params, b.params)

    def test_survival_contract(self):
        data = linear_ph_cohort(200, [0.5], seed=10)
        fit = fit_survival_nn(data, spec(epochs=2, seed=11))
        X = data.covariates[:20]
        np.testing.assert_array_equal(fit.predict_survival(X, 0.0), 1.0)
        grid = [0.5, 1.0, 2.0, 4.0]
        surv = np.column_stack([fit.predict_survival(X, t) for t in grid])
        assert (np.diff(surv, axis=1) <= 1e-12).all()

    def test_serialization_round_trip(self):
        data = linear_ph_cohort(200, [0.5], seed=12)
        fit = fit_survival_nn(data, spec(epochs=2, seed=13))
        restored = learner_from_json(fit.to_json())
        X = data.covariates[:10]
        np.testing.assert_array_equal(restored.predict_survival(X, 3.0),
                                      fit.predict_survival(X, 3.0))
