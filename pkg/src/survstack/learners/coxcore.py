"""Breslow-tie Cox partial likelihood machinery.

Shared by the plain Cox fitter, the elasticnet coordinate descent (which
needs per-subject gradients and curvature of the linear predictor), and the
survival network (whose loss is the batch partial likelihood).

All exponentials are computed on a max-shifted linear predictor; the shift
cancels in every ratio and is re-added to the log terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError


@dataclass(frozen=True)
class StepCumHaz:
    """Nondecreasing step function with H(t) = 0 before the first jump."""

    jump_times: np.ndarray
    values: np.ndarray

    def __call__(self, t) -> np.ndarray:
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right")
        return np.where(idx > 0, np.concatenate(([0.0], self.values))[idx], 0.0)


def _reverse_cumsum(a: np.ndarray) -> np.ndarray:
    return np.cumsum(a[::-1], axis=0)[::-1]


class CoxPartialLikelihood:
    """Sorted-time sufficient structure for one cohort."""

    def __init__(self, times: np.ndarray, events: np.ndarray):
        times = np.asarray(times, dtype=float)
        events = np.asarray(events, dtype=float)
        if events.sum() < 1:
            raise ValidationError("partial likelihood needs at least one event")
        self.n = len(times)
        self.order = np.argsort(times, kind="stable")
        self.ts = times[self.order]
        self.es = events[self.order]
        uniq, first = np.unique(self.ts, return_index=True)
        self.unique_times = uniq
        self.group_first = first
        # group id per sorted position
        self.pos_group = np.searchsorted(uniq, self.ts)
        self.d = np.add.reduceat(self.es, first)
        self.n_events = float(events.sum())

    def _risk_sums(self, eta_sorted: np.ndarray):
        shift = eta_sorted.max()
        e = np.exp(eta_sorted - shift)
        s0 = _reverse_cumsum(e)[self.group_first]
        return e, s0, shift

    def loglik(self, eta: np.ndarray) -> float:
        eta_s = eta[self.order]
        _, s0, shift = self._risk_sums(eta_s)
        return float(np.sum(self.es * eta_s) - np.sum(self.d * (np.log(s0) + shift)))

    def eta_quantities(self, eta: np.ndarray):
        """Log-likelihood, gradient, and negated diagonal curvature with
        respect to the linear predictor, in original subject order."""
        eta_s = eta[self.order]
        e, s0, shift = self._risk_sums(eta_s)
        dh = self.d / s0
        dh2 = self.d / s0**2
        cum_dh = np.cumsum(dh)[self.pos_group]
        cum_dh2 = np.cumsum(dh2)[self.pos_group]
        grad_s = self.es - e * cum_dh
        curv_s = e * cum_dh - e**2 * cum_dh2  # = -d2 loglik / d eta_i^2
        loglik = float(np.sum(self.es * eta_s) - np.sum(self.d * (np.log(s0) + shift)))
        grad = np.empty(self.n)
        curv = np.empty(self.n)
        grad[self.order] = grad_s
        curv[self.order] = curv_s
        return loglik, grad, curv

    def loglik_grad_hess(self, X: np.ndarray, beta: np.ndarray):
        """Exact log-likelihood, gradient, and Hessian with respect to beta."""
        Xs = X[self.order]
        eta_s = Xs @ beta
        e, s0, shift = self._risk_sums(eta_s)
        s1 = _reverse_cumsum(e[:, None] * Xs)[self.group_first]
        s2 = _reverse_cumsum(
            e[:, None, None] * (Xs[:, :, None] * Xs[:, None, :])
        )[self.group_first]
        mean = s1 / s0[:, None]
        loglik = float(np.sum(self.es * eta_s) - np.sum(self.d * (np.log(s0) + shift)))
        grad = Xs.T @ self.es - (self.d[:, None] * mean).sum(axis=0)
        hess = -(
            np.einsum("g,gab->ab", self.d, s2 / s0[:, None, None])
            - np.einsum("g,ga,gb->ab", self.d, mean, mean)
        )
        return loglik, grad, hess

    def breslow_baseline(self, eta: np.ndarray) -> StepCumHaz:
        """Breslow estimator of the baseline cumulative hazard for the given
        linear predictors (baseline corresponds to eta = 0)."""
        eta_s = eta[self.order]
        e, s0, shift = self._risk_sums(eta_s)
        increments = self.d / s0 * np.exp(-shift)
        keep = self.d > 0
        return StepCumHaz(
            jump_times=self.unique_times[keep],
            values=np.cumsum(increments[keep]),
        )


def nelson_aalen(times: np.ndarray, events: np.ndarray) -> StepCumHaz:
    """Covariate-free Nelson-Aalen cumulative hazard."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=float)
    order = np.argsort(times, kind="stable")
    ts, es = times[order], events[order]
    uniq, first = np.unique(ts, return_index=True)
    d = np.add.reduceat(es, first)
    counts = np.add.reduceat(np.ones_like(es), first)
    at_risk = len(ts) - np.concatenate(([0], np.cumsum(counts)[:-1]))
    keep = d > 0
    return StepCumHaz(jump_times=uniq[keep], values=np.cumsum(d[keep] / at_risk[keep]))
