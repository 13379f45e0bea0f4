import numpy as np
import pytest
from scipy.special import expit, logit

from survstack.censoring import fit_censoring_km, ipcw_weights
from survstack.dataset import (
    DriftSpec,
    SurvivalDataset,
    default_cohort_model,
    default_drift_spec,
    generate_cohort,
)
from survstack.errors import (
    DegenerateDesignError,
    DimensionMismatchError,
    UndefinedMetricError,
)
from survstack.losses import ipcw_brier
from survstack.metrics import (
    BootstrapConfig,
    MetricReport,
    bootstrap_ci,
    brier_metric,
    calibration_curve,
    mean_calibration,
    tauroc,
    temporal_validate,
    weak_calibration,
)

from test_losses import brute_force_auc


def uncensored(times, tau=7.0):
    n = len(times)
    data = SurvivalDataset(times=times, events=np.ones(n),
                           covariates=np.zeros((n, 1)), covariate_names=("x",))
    return data, fit_censoring_km(data)


def censored_instance(rng, n):
    times = rng.exponential(5.0, n)
    events = (rng.random(n) < 0.7).astype(float)
    data = SurvivalDataset(times=times, events=events,
                           covariates=np.zeros((n, 1)), covariate_names=("x",))
    tau = float(np.quantile(times, 0.5))
    return data, fit_censoring_km(data), tau


class TestTauroc:
    def test_perfect_separation(self):
        rng = np.random.default_rng(0)
        times = np.concatenate([rng.uniform(0, 6, 30), rng.uniform(8, 20, 30)])
        data, cens = uncensored(times)
        risk = np.concatenate([np.full(30, 0.9), np.full(30, 0.1)])
        assert tauroc(risk, data, 7.0, cens) == 1.0

    def test_null_risks_near_half(self):
        rng = np.random.default_rng(1)
        data, cens, tau = censored_instance(rng, 5000)
        risk = rng.random(5000)
        assert abs(tauroc(risk, data, tau, cens) - 0.5) < 0.03

    def test_matches_brute_force_on_censored_data(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            data, cens, tau = censored_instance(rng, rng.integers(30, 200))
            risk = rng.random(data.n)
            w = ipcw_weights(cens, data, tau)
            y = ((data.events == 1) & (data.times <= tau)).astype(float)
            expected = brute_force_auc(risk, np.where(w.is_case, 1.0, y),
                                       np.where(w.eligible, w.weights, 0.0))
            assert tauroc(risk, data, tau, cens) == pytest.approx(
                expected, abs=1e-12
            )

    def test_rank_invariance(self):
        rng = np.random.default_rng(3)
        data, cens, tau = censored_instance(rng, 300)
        risk = rng.random(300)
        a = tauroc(risk, data, tau, cens)
        b = tauroc(expit(3 * logit(np.clip(risk, 1e-9, 1 - 1e-9)) + 1), data,
                   tau, cens)
        assert a == pytest.approx(b, abs=1e-12)

    def test_no_cases_raises(self):
        data, cens = uncensored(np.array([8.0, 9.0, 10.0]))
        with pytest.raises(UndefinedMetricError):
            tauroc(np.array([0.1, 0.2, 0.3]), data, 7.0, cens)


class TestMeanCalibration:
    def test_true_risks_near_one(self):
        data, true_risk = generate_cohort(10000, "development",
                                          default_drift_spec(seed=4))
        cens = fit_censoring_km(data)
        ratio = mean_calibration(true_risk, data, 7.0, cens)
        assert 0.95 <= ratio <= 1.05

    def test_doubling_risks_halves_ratio(self):
        rng = np.random.default_rng(5)
        data, cens, tau = censored_instance(rng, 400)
        risk = rng.uniform(0.05, 0.4, 400)
        a = mean_calibration(risk, data, tau, cens)
        b = mean_calibration(np.clip(2 * risk, 0, 1), data, tau, cens)
        assert b == pytest.approx(a / 2.0, rel=1e-12)

    def test_direct_ratio(self):
        # 10 subjects, one event by tau, no censoring: observed = 0.1
        times = np.array([1.0] + [10.0] * 9)
        data, cens = uncensored(times)
        risk = np.full(10, 0.2)
        assert mean_calibration(risk, data, 7.0, cens) == pytest.approx(0.5)

    def test_reciprocal_direction(self):
        times = np.array([1.0] + [10.0] * 9)
        data, cens = uncensored(times)
        risk = np.full(10, 0.2)
        assert mean_calibration(risk, data, 7.0, cens,
                                reciprocal=True) == pytest.approx(2.0)

    def test_km_undefined_beyond_follow_up(self):
        data, cens = uncensored(np.array([1.0, 2.0]), tau=1.5)
        with pytest.raises(UndefinedMetricError):
            mean_calibration(np.array([0.5, 0.5]), data, 3.0, cens)

    def test_km_implied_average_risk_gives_exactly_one(self):
        from survstack.censoring import kaplan_meier

        rng = np.random.default_rng(23)
        data, cens, tau = censored_instance(rng, 300)
        implied = 1.0 - float(kaplan_meier(data.times, data.events)(tau))
        risk = np.full(data.n, implied)
        assert mean_calibration(risk, data, tau, cens) == 1.0


class TestWeakCalibration:
    def test_true_risks_slope_near_one(self):
        data, true_risk = generate_cohort(10000, "development",
                                          default_drift_spec(seed=6))
        cens = fit_censoring_km(data)
        intercept, slope = weak_calibration(true_risk, data, 7.0, cens)
        assert 0.9 <= slope <= 1.1
        assert abs(intercept) < 0.15

    def test_logit_doubling_halves_slope(self):
        data, true_risk = generate_cohort(10000, "development",
                                          default_drift_spec(seed=7))
        cens = fit_censoring_km(data)
        extremized = expit(2.0 * logit(np.clip(true_risk, 1e-12, 1 - 1e-12)))
        _, slope = weak_calibration(extremized, data, 7.0, cens)
        assert slope == pytest.approx(0.5, abs=0.08)

    def test_logit_halving_doubles_slope(self):
        data, true_risk = generate_cohort(10000, "development",
                                          default_drift_spec(seed=8))
        cens = fit_censoring_km(data)
        shrunk = expit(0.5 * logit(np.clip(true_risk, 1e-12, 1 - 1e-12)))
        _, slope = weak_calibration(shrunk, data, 7.0, cens)
        assert slope == pytest.approx(2.0, abs=0.25)

    def test_constant_risks_rejected(self):
        rng = np.random.default_rng(9)
        data, cens, tau = censored_instance(rng, 200)
        with pytest.raises(DegenerateDesignError):
            weak_calibration(np.full(200, 0.3), data, tau, cens)

    def test_uncensored_matches_plain_logistic_oracle(self):
        rng = np.random.default_rng(10)
        n = 400
        q = rng.uniform(0.1, 0.8, n)
        y = (rng.random(n) < q).astype(float)
        times = np.where(y == 1, 3.0, 10.0)
        data, cens = uncensored(times)
        intercept, slope = weak_calibration(q, data, 7.0, cens)

        # independent oracle: textbook Newton iterations for plain logistic
        lp = logit(q)
        X = np.column_stack([np.ones(n), lp])
        beta = np.zeros(2)
        for _ in range(60):
            p = expit(X @ beta)
            g = X.T @ (y - p)
            H = X.T @ (X * (p * (1 - p))[:, None])
            beta = beta + np.linalg.solve(H, g)
            if np.linalg.norm(g) < 1e-13:
                break
        assert slope == pytest.approx(beta[1], abs=1e-12)


class TestCalibrationCurve:
    def test_true_risks_small_ici(self):
        data, true_risk = generate_cohort(10000, "development",
                                          default_drift_spec(seed=11))
        cens = fit_censoring_km(data)
        _, _, ici = calibration_curve(true_risk, data, 7.0, cens)
        assert ici < 0.02

    def test_constant_risk_rejected(self):
        rng = np.random.default_rng(12)
        data, cens, tau = censored_instance(rng, 300)
        with pytest.raises(DegenerateDesignError):
            calibration_curve(np.full(300, 0.25), data, tau, cens)

    def test_additive_bias_detected(self):
        data, true_risk = generate_cohort(10000, "development",
                                          default_drift_spec(seed=13))
        cens = fit_censoring_km(data)
        biased = np.clip(true_risk + 0.05, 0, 1)
        _, _, ici = calibration_curve(biased, data, 7.0, cens)
        assert ici == pytest.approx(0.05, abs=0.015)

    def test_grid_spans_central_mass(self):
        data, true_risk = generate_cohort(2000, "development",
                                          default_drift_spec(seed=14))
        cens = fit_censoring_km(data)
        grid, observed, _ = calibration_curve(true_risk, data, 7.0, cens)
        assert len(grid) == 100 and len(observed) == 100
        assert grid[0] == pytest.approx(np.quantile(true_risk, 0.01))
        assert grid[-1] == pytest.approx(np.quantile(true_risk, 0.99))


class TestPermutationInvariance:
    def test_metrics_ignore_subject_order(self):
        rng = np.random.default_rng(24)
        data, cens, tau = censored_instance(rng, 400)
        risk = rng.uniform(0.05, 0.9, 400)
        perm = rng.permutation(400)
        pdata = data.subset(perm)
        pcens = fit_censoring_km(pdata)
        assert tauroc(risk, data, tau, cens) == pytest.approx(
            tauroc(risk[perm], pdata, tau, pcens), abs=1e-12)
        assert mean_calibration(risk, data, tau, cens) == pytest.approx(
            mean_calibration(risk[perm], pdata, tau, pcens), abs=1e-12)
        assert brier_metric(risk, data, tau, cens) == pytest.approx(
            brier_metric(risk[perm], pdata, tau, pcens), abs=1e-12)
        a = weak_calibration(risk, data, tau, cens)
        b = weak_calibration(risk[perm], pdata, tau, pcens)
        assert a == pytest.approx(b, abs=1e-9)


class TestBrierMetric:
    def test_agrees_with_loss_exactly(self):
        rng = np.random.default_rng(15)
        data, cens, tau = censored_instance(rng, 250)
        risk = rng.random(250)
        w = ipcw_weights(cens, data, tau, floor=0.05)
        assert brier_metric(risk, data, tau, cens) == ipcw_brier(risk, data, w)

    def test_perfect_and_constant(self):
        times = np.array([1.0, 2.0, 9.0, 10.0])
        data, cens = uncensored(times)
        perfect = np.array([1.0, 1.0, 0.0, 0.0])
        assert brier_metric(perfect, data, 7.0, cens) == 0.0
        assert brier_metric(np.full(4, 0.5), data, 7.0, cens) == 0.25


class TestBootstrapCi:
    def test_single_iteration_collapses(self):
        rng = np.random.default_rng(16)
        data, cens, tau = censored_instance(rng, 100)

        def metric(risks, d):
            return brier_metric(risks, d, tau, fit_censoring_km(d))

        fixed = rng.random(100)

        def producer(d):
            return fixed[:d.n]

        point, lo, hi = bootstrap_ci(metric, data, producer,
                                     BootstrapConfig(iterations=1, seed=0))
        # both percentiles of a single resample equal its value
        assert lo == hi

    def test_degenerate_data_zero_width(self):
        data = SurvivalDataset(times=np.full(50, 2.0), events=np.ones(50),
                               covariates=np.zeros((50, 1)),
                               covariate_names=("x",))

        def metric(risks, d):
            return brier_metric(risks, d, 1.5, fit_censoring_km(d))

        def producer(d):
            return np.full(d.n, 0.4)

        point, lo, hi = bootstrap_ci(metric, data, producer,
                                     BootstrapConfig(iterations=25, seed=1))
        assert lo == point == hi

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(17)
        data, cens, tau = censored_instance(rng, 150)
        fixed = rng.random(150)

        def metric(risks, d):
            return brier_metric(risks, d, tau, fit_censoring_km(d))

        def producer(d):
            return fixed[:d.n]

        a = bootstrap_ci(metric, data, producer, BootstrapConfig(50, seed=9))
        b = bootstrap_ci(metric, data, producer, BootstrapConfig(50, seed=9))
        assert a == b


class FrozenTrueRiskModel:
    """Predicts the generator's closed-form risks; stands in for any model."""

    def __init__(self, model, tau):
        self.model = model
        self.horizon = tau
        self.covariate_names = model.covariate_names
        self.source = "true-risk"

    def predict_risk(self, X, t):
        return self.model.true_risk(np.asarray(X), t)


class TestTemporalValidate:
    def setup_method(self):
        self.cohort_model = default_cohort_model()
        self.frozen = FrozenTrueRiskModel(self.cohort_model, 7.0)
        self.config = BootstrapConfig(iterations=40, seed=3)

    def test_resubstitution_tauroc_matches_direct(self):
        data, _ = generate_cohort(1500, "development", default_drift_spec(seed=18))
        report = temporal_validate(self.frozen, data, config=self.config)
        direct = tauroc(self.frozen.predict_risk(data.covariates, 7.0), data,
                        7.0, fit_censoring_km(data))
        assert report.metrics["tauroc"]["point"] == pytest.approx(direct,
                                                                  abs=1e-15)

    def test_fresh_identical_cohort_calibrated(self):
        spec = DriftSpec(seed=19)
        fresh, _ = generate_cohort(5000, "shifted", spec)  # no shifts given
        report = temporal_validate(self.frozen, fresh, config=self.config)
        assert 0.9 <= report.metrics["mean_calibration"]["point"] <= 1.1

    def test_shifted_event_rate_breaks_calibration(self):
        spec = DriftSpec(event_rate_multiplier=1.5, seed=20)
        shifted, _ = generate_cohort(5000, "shifted", spec)
        report = temporal_validate(self.frozen, shifted, config=self.config)
        assert report.metrics["mean_calibration"]["point"] > 1.15

    def test_missing_covariate_listed(self):
        data, _ = generate_cohort(200, "development", default_drift_spec(seed=21))
        crippled = data.select_covariates([0, 1])
        with pytest.raises(DimensionMismatchError, match="cold_ischemia"):
            temporal_validate(self.frozen, crippled, config=self.config)

    def test_report_round_trip_and_invariants(self, tmp_path):
        data, _ = generate_cohort(1200, "development", default_drift_spec(seed=22))
        report = temporal_validate(self.frozen, data, config=self.config)
        for name, entry in report.metrics.items():
            assert entry["lower"] <= entry["point"] <= entry["upper"], name
        assert 0.0 <= report.metrics["tauroc"]["point"] <= 1.0
        assert report.metrics["brier"]["point"] >= 0.0
        restored = MetricReport.from_json(report.to_json())
        assert restored.metrics == report.metrics
        csv_path = tmp_path / "curve.csv"
        report.curve_to_csv(csv_path)
        header = csv_path.read_text().splitlines()[0]
        assert header == "predicted,observed,lower,upper"
