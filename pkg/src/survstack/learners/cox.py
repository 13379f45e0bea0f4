"""Cox proportional hazards with main terms, Breslow ties, Newton-Raphson."""

from __future__ import annotations

import numpy as np

from ..dataset import SurvivalDataset
from ..errors import (
    ConvergenceError,
    DegenerateDesignError,
    MonotoneLikelihoodError,
    ValidationError,
)
from .base import FittedLearner, LearnerSpec, TrainingMeta, make_meta, register_learner
from .coxcore import CoxPartialLikelihood, StepCumHaz

GRAD_TOL = 1e-8
MAX_ITER = 100
# A standardized coefficient above 10 means a hazard ratio over e^10 per SD:
# the likelihood is monotone (perfect separation), not informative.
SEPARATION_NORM = 10.0


@register_learner
class FittedCox(FittedLearner):
    kind = "cox_main_terms"

    def __init__(self, meta: TrainingMeta, hyperparameters: dict,
                 coef: np.ndarray, center: np.ndarray, baseline: StepCumHaz,
                 coef_se: np.ndarray, loglik: float, n_iter: int):
        super().__init__(meta, hyperparameters)
        self.coef = np.asarray(coef, dtype=float)
        self.center = np.asarray(center, dtype=float)
        self.baseline = baseline
        self.coef_se = np.asarray(coef_se, dtype=float)
        self.loglik = loglik
        self.n_iter = n_iter

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        return (X - self.center) @ self.coef

    def _survival(self, X: np.ndarray, t: float) -> np.ndarray:
        return np.exp(-self.baseline(t) * np.exp(self.linear_predictor(X)))

    def _params_dict(self) -> dict:
        return {
            "coef": self.coef.tolist(),
            "center": self.center.tolist(),
            "coef_se": self.coef_se.tolist(),
            "baseline_times": self.baseline.jump_times.tolist(),
            "baseline_cumhaz": self.baseline.values.tolist(),
            "loglik": self.loglik,
            "n_iter": self.n_iter,
        }

    @classmethod
    def _from_params(cls, params, meta, hyperparameters):
        return cls(
            meta, hyperparameters,
            coef=np.array(params["coef"]),
            center=np.array(params["center"]),
            baseline=StepCumHaz(np.array(params["baseline_times"]),
                                np.array(params["baseline_cumhaz"])),
            coef_se=np.array(params["coef_se"]),
            loglik=params["loglik"],
            n_iter=params["n_iter"],
        )


def _check_design(data: SurvivalDataset):
    if data.p == 0:
        raise ValidationError("Cox model needs at least one main-terms covariate")
    if data.n <= data.p:
        raise ValidationError(f"need n > p, got n={data.n}, p={data.p}")
    if data.events.sum() < 1:
        raise ValidationError("Cox model needs at least one observed event")
    sds = data.covariates.std(axis=0)
    flat = np.flatnonzero(sds == 0)
    if len(flat):
        names = ", ".join(data.covariate_names[j] for j in flat)
        raise DegenerateDesignError(f"constant covariates carry no information: {names}")


def newton_cox(pl: CoxPartialLikelihood, X: np.ndarray,
               grad_tol: float = GRAD_TOL, max_iter: int = MAX_ITER):
    """Newton-Raphson on the Breslow partial likelihood with step halving.

    Returns (beta, hessian, loglik, trace); the trace records
    (iteration, loglik, gradient norm) per step for error reports.
    """
    p = X.shape[1]
    beta = np.zeros(p)
    trace = []
    loglik, grad, hess = pl.loglik_grad_hess(X, beta)
    for it in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(grad))
        trace.append((it, loglik, gnorm))
        if gnorm < grad_tol:
            return beta, hess, loglik, trace
        try:
            direction = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            direction = np.linalg.solve(-hess + 1e-10 * np.eye(p), grad)
        step = 1.0
        slack = 1e-10 * (1.0 + abs(loglik))  # float resolution of the loglik
        for _ in range(40):
            candidate = beta + step * direction
            cand_ll, cand_grad, cand_hess = pl.loglik_grad_hess(X, candidate)
            if np.isfinite(cand_ll) and cand_ll >= loglik - slack:
                break
            step *= 0.5
        beta, loglik, grad, hess = candidate, cand_ll, cand_grad, cand_hess
        if np.abs(beta).max() > SEPARATION_NORM:
            raise MonotoneLikelihoodError(
                "coefficients diverging; the partial likelihood appears monotone "
                "(perfect separation of event risk)"
            )
    gnorm = float(np.linalg.norm(grad))
    if gnorm < grad_tol:
        trace.append((max_iter + 1, loglik, gnorm))
        return beta, hess, loglik, trace
    raise ConvergenceError(
        f"Newton-Raphson did not reach gradient norm {grad_tol} in {max_iter} "
        f"iterations (last norm {gnorm:.3e})",
        trace=trace,
    )


def fit_cox(data: SurvivalDataset, spec: LearnerSpec | None = None) -> FittedCox:
    """Fit the main-terms Cox model and its Breslow baseline hazard."""
    _check_design(data)
    hp = dict(spec.hyperparameters) if spec else {}
    means = data.covariates.mean(axis=0)
    sds = data.covariates.std(axis=0)
    Z = (data.covariates - means) / sds

    pl = CoxPartialLikelihood(data.times, data.events)
    beta_std, hess, loglik, trace = newton_cox(pl, Z)

    coef = beta_std / sds
    cov = np.linalg.inv(-hess)
    se = np.sqrt(np.diag(cov)) / sds
    baseline = pl.breslow_baseline((data.covariates - means) @ coef)
    return FittedCox(
        meta=make_meta(data),
        hyperparameters=hp,
        coef=coef,
        center=means,
        baseline=baseline,
        coef_se=se,
        loglik=loglik,
        n_iter=len(trace),
    )
