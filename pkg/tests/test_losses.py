import numpy as np
import pytest

from survstack.censoring import fit_censoring_km, ipcw_weights
from survstack.dataset import SurvivalDataset
from survstack.errors import DimensionMismatchError, UndefinedMetricError
from survstack.losses import (
    LossKind,
    auroc_t_loss,
    get_loss,
    ipcw_brier,
    negative_binomial_loglik,
)


def cohort(times, events):
    n = len(times)
    return SurvivalDataset(times=times, events=events,
                           covariates=np.zeros((n, 1)), covariate_names=("x",))


def uncensored_setup(times, tau=7.0):
    data = cohort(times, np.ones(len(times)))
    return data, ipcw_weights(fit_censoring_km(data), data, tau)


def brute_force_auc(risk, y, w):
    """Exhaustive weighted case-control pair enumeration, ties scoring 0.5."""
    cases = np.flatnonzero((y == 1) & (w > 0))
    controls = np.flatnonzero((y == 0) & (w > 0))
    num = 0.0
    for i in cases:
        for j in controls:
            if risk[i] > risk[j]:
                num += w[i] * w[j]
            elif risk[i] == risk[j]:
                num += 0.5 * w[i] * w[j]
    return num / (w[cases].sum() * w[controls].sum())


class TestIpcwBrier:
    def test_perfect_predictions(self):
        data, w = uncensored_setup([1.0, 2.0, 8.0, 9.0])
        risk = np.array([1.0, 1.0, 0.0, 0.0])
        assert ipcw_brier(risk, data, w) == 0.0

    def test_constant_half_is_quarter(self):
        data, w = uncensored_setup([1.0, 2.0, 8.0, 9.0])
        assert ipcw_brier(np.full(4, 0.5), data, w) == 0.25

    def test_hand_ipcw_computation(self):
        # weights [1, 0, 1.5, 1.5] at tau=2.5 per the censoring-module oracle
        data = cohort([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 1])
        w = ipcw_weights(fit_censoring_km(data), data, tau=2.5)
        risk = np.array([0.8, 0.3, 0.4, 0.1])
        expected = (1.0 * (1 - 0.8) ** 2 + 1.5 * 0.4**2 + 1.5 * 0.1**2) / 4
        assert ipcw_brier(risk, data, w) == pytest.approx(expected, abs=1e-15)

    def test_length_mismatch(self):
        data, w = uncensored_setup([1.0, 2.0], tau=1.5)
        with pytest.raises(DimensionMismatchError):
            ipcw_brier(np.array([0.5]), data, w)

    def test_convexity_in_risk(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = 30
            data = cohort(rng.exponential(5, n), (rng.random(n) < 0.7).astype(float))
            w = ipcw_weights(fit_censoring_km(data), data, tau=np.median(data.times))
            a, b = rng.random(n), rng.random(n)
            lam = rng.random()
            mixed = ipcw_brier(lam * a + (1 - lam) * b, data, w)
            assert mixed <= (lam * ipcw_brier(a, data, w)
                             + (1 - lam) * ipcw_brier(b, data, w) + 1e-12)


class TestNegativeBinomialLoglik:
    def test_perfect_confident(self):
        data, w = uncensored_setup([1.0, 8.0])
        risk = np.array([1.0, 0.0])
        assert negative_binomial_loglik(risk, data, w) <= 1e-10

    def test_constant_half_is_log_two(self):
        data, w = uncensored_setup([1.0, 2.0, 8.0, 9.0])
        assert negative_binomial_loglik(np.full(4, 0.5), data, w) == pytest.approx(
            np.log(2.0), abs=1e-12
        )

    def test_hand_ipcw_computation(self):
        data = cohort([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 1])
        w = ipcw_weights(fit_censoring_km(data), data, tau=2.5)
        risk = np.array([0.8, 0.3, 0.4, 0.1])
        expected = -(np.log(0.8) + 1.5 * np.log(0.6) + 1.5 * np.log(0.9)) / 4
        assert negative_binomial_loglik(risk, data, w) == pytest.approx(
            expected, abs=1e-14
        )


class TestAurocTLoss:
    def test_perfectly_ordered(self):
        data, w = uncensored_setup([1.0, 2.0, 8.0, 9.0])
        risk = np.array([0.9, 0.8, 0.2, 0.1])
        assert auroc_t_loss(risk, data, w) == 0.0

    def test_anti_ordered(self):
        data, w = uncensored_setup([1.0, 2.0, 8.0, 9.0])
        risk = np.array([0.1, 0.2, 0.8, 0.9])
        assert auroc_t_loss(risk, data, w) == 1.0

    def test_six_subject_tie_matches_brute_force(self):
        data = cohort([1.0, 2.0, 3.0, 8.0, 9.0, 10.0], [1, 0, 1, 1, 1, 1])
        w = ipcw_weights(fit_censoring_km(data), data, tau=7.0)
        risk = np.array([0.7, 0.5, 0.4, 0.4, 0.2, 0.1])
        y = ((data.events == 1) & (data.times <= 7.0)).astype(float)
        expected = 1.0 - brute_force_auc(risk, y, w.weights)
        assert auroc_t_loss(risk, data, w) == pytest.approx(expected, abs=1e-15)

    def test_no_cases_raises(self):
        data = cohort([8.0, 9.0], [1, 1])
        w = ipcw_weights(fit_censoring_km(data), data, tau=7.0)
        with pytest.raises(UndefinedMetricError):
            auroc_t_loss(np.array([0.5, 0.6]), data, w)


class TestSharedProperties:
    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        n = 40
        data = cohort(rng.exponential(5, n), (rng.random(n) < 0.6).astype(float))
        tau = float(np.median(data.times))
        w = ipcw_weights(fit_censoring_km(data), data, tau)
        risk = rng.random(n)
        perm = rng.permutation(n)
        pdata = data.subset(perm)
        pw = ipcw_weights(fit_censoring_km(pdata), pdata, tau)
        for fn in (ipcw_brier, negative_binomial_loglik, auroc_t_loss):
            assert fn(risk, data, w) == pytest.approx(fn(risk[perm], pdata, pw),
                                                      abs=1e-12)

    def test_zero_censoring_reduces_to_plain(self):
        rng = np.random.default_rng(4)
        n = 50
        tau = 5.0
        times = rng.exponential(6, n)
        data, w = uncensored_setup(times, tau)
        risk = rng.random(n)
        y = (times <= tau).astype(float)
        assert ipcw_brier(risk, data, w) == pytest.approx(
            np.mean((y - risk) ** 2), abs=1e-15
        )
        clipped = np.clip(risk, 1e-12, 1 - 1e-12)
        plain_ll = -np.mean(y * np.log(clipped) + (1 - y) * np.log(1 - clipped))
        assert negative_binomial_loglik(risk, data, w) == pytest.approx(
            plain_ll, abs=1e-15
        )
        assert auroc_t_loss(risk, data, w) == pytest.approx(
            1.0 - brute_force_auc(risk, y, np.ones(n)), abs=1e-12
        )

    def test_get_loss_roundtrip(self):
        assert get_loss("brier") is ipcw_brier
        assert get_loss(LossKind.AUROC_T) is auroc_t_loss
