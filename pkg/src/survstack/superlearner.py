"""Cross-validated stacking of survival learners.

Out-of-fold horizon risks from every candidate are combined on the logit
scale: risk(x) = inverse_logit(sum_k w_k logit(risk_k(x))) with simplex
weights chosen to minimize an IPCW loss. The optimum can never do worse than
the best single candidate because every vertex of the simplex is checked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import expit, logit

from .censoring import IpcwWeights, fit_censoring_km, ipcw_weights
from .dataset import SurvivalDataset, split_folds
from .errors import NumericalError, ValidationError
from .learners import (
    FittedLearner,
    LearnerSpec,
    fit_learner,
    learner_from_dict,
    tune_hyperparameters,
)
from .losses import LossKind, get_loss
from .risk import RiskPrediction

RISK_CLIP = 1e-12
VERTEX_TIE_TOL = 1e-12
SL_FORMAT_TAG = "survstack-superlearner"
SL_FORMAT_VERSION = 1


@dataclass
class CvResult:
    """Out-of-fold predictions for the learners that survived every fold."""

    matrix: np.ndarray
    specs: list[LearnerSpec]
    kept_indices: list[int]
    warnings: list[dict] = field(default_factory=list)


def cv_predictions(specs: list[LearnerSpec], data: SurvivalDataset,
                   folds: np.ndarray, tau: float,
                   loss: LossKind | str = LossKind.IPCW_BRIER,
                   k_inner: int = 10, seed: int = 0) -> CvResult:
    """Entry (i, k): learner k's predicted event risk at tau for subject i
    from the fold fit that excluded i. Learners with a tuning grid are
    re-tuned inside each fold's training data. A learner that fails on any
    fold is dropped from the pool with a machine-readable warning."""
    if not specs:
        raise ValidationError("need at least one learner spec")
    n_folds = int(folds.max()) + 1
    matrix = np.full((data.n, len(specs)), np.nan)
    warnings: list[dict] = []
    alive = list(range(len(specs)))

    for f in range(n_folds):
        train = data.subset(folds != f)
        held = folds == f
        X_held = data.covariates[held]
        for k in list(alive):
            spec = specs[k]
            try:
                if spec.tuning_grid:
                    spec = tune_hyperparameters(spec, train, loss,
                                                k_inner=k_inner, tau=tau,
                                                seed=seed)
                model = fit_learner(spec, train)
                matrix[held, k] = model.predict_risk(X_held, tau)
            except Exception as exc:  # noqa: BLE001 - any fit failure drops it
                alive.remove(k)
                warnings.append({
                    "kind": spec.kind,
                    "learner_index": k,
                    "fold": f,
                    "error": f"{type(exc).__name__}: {exc}",
                })
    if not alive:
        raise NumericalError("every candidate learner failed cross-validation")
    return CvResult(matrix=matrix[:, alive],
                    specs=[specs[k] for k in alive],
                    kept_indices=alive, warnings=warnings)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.flatnonzero(u - css / np.arange(1, len(v) + 1) > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _combined_risk(logits: np.ndarray, w: np.ndarray) -> np.ndarray:
    return expit(logits @ w)


def _loss_gradient_wrt_weights(kind: LossKind, logits: np.ndarray,
                               w: np.ndarray, y: np.ndarray,
                               sample_w: np.ndarray, n: int) -> np.ndarray:
    r = _combined_risk(logits, w)
    if kind == LossKind.IPCW_BRIER:
        dr = -2.0 * sample_w * (y - r) / n
    else:  # negative binomial log-likelihood
        rc = np.clip(r, RISK_CLIP, 1.0 - RISK_CLIP)
        dr = sample_w * (-y / rc + (1.0 - y) / (1.0 - rc)) / n
    return logits.T @ (dr * r * (1.0 - r))


def _projected_gradient(objective, gradient, w0: np.ndarray,
                        max_iter: int = 500, tol: float = 1e-12):
    w = w0.copy()
    f = objective(w)
    step = 1.0
    for _ in range(max_iter):
        g = gradient(w)
        moved = False
        while step > 1e-16:
            cand = _project_simplex(w - step * g)
            f_cand = objective(cand)
            if f_cand <= f - 1e-15:
                moved = True
                break
            step *= 0.5
        if not moved:
            break
        if np.abs(cand - w).max() < tol:
            w, f = cand, f_cand
            break
        w, f = cand, f_cand
        step = min(step * 2.0, 1.0)
    return w, f


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def optimize_weights(oof: np.ndarray, data: SurvivalDataset,
                     loss: LossKind | str, weights: IpcwWeights,
                     seed: int = 0) -> np.ndarray:
    """Simplex weights minimizing the stacked loss of the out-of-fold matrix.

    Smooth losses use multi-start projected gradient descent; the rank-based
    AUC loss uses Nelder-Mead on a softmax reparameterization with 20 starts.
    The returned weights never lose to a simplex vertex, and an exact tie goes
    to the first-listed vertex.
    """
    kind = LossKind(loss) if isinstance(loss, str) else loss
    loss_fn = get_loss(kind)
    n, K = oof.shape
    if K == 1:
        return np.array([1.0])
    if np.isnan(oof).any():
        raise ValidationError("out-of-fold matrix contains missing predictions")
    logits = logit(np.clip(oof, RISK_CLIP, 1.0 - RISK_CLIP))

    def objective(w: np.ndarray) -> float:
        value = loss_fn(_combined_risk(logits, w), data, weights)
        if not np.isfinite(value):
            raise NumericalError("non-finite stacking loss during optimization")
        return value

    vertex_losses = np.array([objective(np.eye(K)[k]) for k in range(K)])
    rng = np.random.default_rng(seed)

    best_w, best_f = None, np.inf
    if kind == LossKind.AUROC_T:
        starts = [np.zeros(K)]
        starts += [np.log(np.full(K, 1.0 / K)) + rng.normal(scale=1.5, size=K)
                   for _ in range(19)]
        for z0 in starts:
            res = optimize.minimize(lambda z: objective(_softmax(z)), z0,
                                    method="Nelder-Mead",
                                    options={"xatol": 1e-8, "fatol": 1e-12,
                                             "maxiter": 2000})
            w = _softmax(res.x)
            f = objective(w)
            if f < best_f:
                best_w, best_f = w, f
    else:
        from .censoring import horizon_labels

        y = horizon_labels(data, weights.tau)
        grad = lambda w: _loss_gradient_wrt_weights(  # noqa: E731
            kind, logits, w, y, weights.weights, data.n
        )
        starts = [np.full(K, 1.0 / K)]
        starts += [np.eye(K)[k] for k in range(K)]
        starts += [rng.dirichlet(np.ones(K)) for _ in range(5)]
        for w0 in starts:
            w, f = _projected_gradient(objective, grad, w0)
            if f < best_f:
                best_w, best_f = w, f

    # vertex dominance and first-listed tie-break
    best_vertex = int(np.argmin(vertex_losses))
    if vertex_losses[best_vertex] <= best_f + VERTEX_TIE_TOL:
        return np.eye(K)[best_vertex]
    return best_w


def combine(candidates: list[FittedLearner], weights: np.ndarray, covariates,
            t: float) -> RiskPrediction:
    """Weighted logit-scale combination of the candidates' risks at time t."""
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(candidates):
        raise ValidationError("one weight per candidate required")
    if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-10:
        raise ValidationError("weights must be a point on the probability simplex")
    stacked = np.column_stack([
        np.clip(model.predict_risk(covariates, t), RISK_CLIP, 1.0 - RISK_CLIP)
        for model in candidates
    ])
    values = expit(logit(stacked) @ weights)
    return RiskPrediction(values=values, horizon=t, source="super_learner")


def screen_elasticnet(data: SurvivalDataset, alpha: float,
                      lam: float) -> list[int]:
    """Predictor screening: indices with nonzero coefficients in an
    elasticnet Cox fit at (alpha, lambda)."""
    from .learners import fit_elasticnet_cox

    spec = LearnerSpec(kind="elasticnet_cox",
                       hyperparameters={"alpha": alpha, "lambda": lam})
    fitted = fit_elasticnet_cox(data, spec)
    retained = np.flatnonzero(fitted.coef != 0.0).tolist()
    if not retained:
        raise ValidationError(
            f"elasticnet screening at lambda={lam} retained no predictors; "
            f"use a smaller lambda"
        )
    return retained


@dataclass
class SuperLearnerModel:
    """Fitted stack: refit candidates, simplex weights, CV loss report."""

    candidates: list[FittedLearner]
    weights: np.ndarray
    loss_kind: LossKind
    horizon: float
    cv_report: dict
    screening_info: dict | None = None
    seed: int = 0

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return self.candidates[0].covariate_names

    def predict_risk(self, covariates, t: float | None = None) -> np.ndarray:
        t = self.horizon if t is None else t
        return combine(self.candidates, self.weights, covariates, t).values

    def to_dict(self) -> dict:
        return {
            "format": SL_FORMAT_TAG,
            "version": SL_FORMAT_VERSION,
            "weights": self.weights.tolist(),
            "loss": self.loss_kind.value,
            "horizon": self.horizon,
            "seed": self.seed,
            "cv_report": self.cv_report,
            "screening": self.screening_info,
            "candidates": [model.to_dict() for model in self.candidates],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "SuperLearnerModel":
        if doc.get("format") != SL_FORMAT_TAG:
            raise ValidationError("not a serialized super learner document")
        if doc.get("version") != SL_FORMAT_VERSION:
            raise ValidationError(
                f"unsupported super learner document version {doc.get('version')}"
            )
        return cls(
            candidates=[learner_from_dict(d) for d in doc["candidates"]],
            weights=np.array(doc["weights"], dtype=float),
            loss_kind=LossKind(doc["loss"]),
            horizon=doc["horizon"],
            cv_report=doc["cv_report"],
            screening_info=doc.get("screening"),
            seed=doc.get("seed", 0),
        )

    @classmethod
    def from_json(cls, text: str) -> "SuperLearnerModel":
        return cls.from_dict(json.loads(text))


def fit_super_learner(specs: list[LearnerSpec], data: SurvivalDataset,
                      loss: LossKind | str = LossKind.IPCW_BRIER,
                      tau: float = 7.0, k_folds: int = 10, seed: int = 0,
                      screening: dict | None = None,
                      censoring_floor: float = 0.05,
                      k_inner: int = 10) -> SuperLearnerModel:
    """The full stacking pipeline: optional elasticnet screening, k-fold
    out-of-fold predictions, simplex weight optimization at the horizon, and
    a full-data refit of every surviving candidate.

    ``screening`` is a dict with keys ``alpha`` and ``lambda``; when active,
    the elasticnet learner leaves the candidate pool and every learner sees
    only the retained predictors.
    """
    if not specs:
        raise ValidationError("need at least one learner spec")
    kind = LossKind(loss) if isinstance(loss, str) else loss

    screening_info = None
    if screening is not None:
        retained = screen_elasticnet(data, alpha=screening.get("alpha", 0.2),
                                     lam=screening.get("lambda", 0.028))
        screening_info = {
            "alpha": screening.get("alpha", 0.2),
            "lambda": screening.get("lambda", 0.028),
            "retained_indices": retained,
            "retained_names": [data.covariate_names[j] for j in retained],
        }
        data = data.select_covariates(retained)
        specs = [s for s in specs if s.kind != "elasticnet_cox"]
        if not specs:
            raise ValidationError(
                "screening removed the elasticnet learner and no other "
                "candidates remain"
            )

    folds = split_folds(data, k_folds, seed=seed)
    cv = cv_predictions(specs, data, folds, tau, loss=kind, k_inner=k_inner,
                        seed=seed)
    cens = fit_censoring_km(data)
    w = ipcw_weights(cens, data, tau, floor=censoring_floor)
    weights = optimize_weights(cv.matrix, data, kind, w, seed=seed)

    loss_fn = get_loss(kind)
    per_learner = [
        {"kind": spec.kind, "cv_loss": loss_fn(cv.matrix[:, k], data, w)}
        for k, spec in enumerate(cv.specs)
    ]
    logits = logit(np.clip(cv.matrix, RISK_CLIP, 1.0 - RISK_CLIP))
    ensemble_loss = loss_fn(expit(logits @ weights), data, w)

    candidates = []
    for spec in cv.specs:
        if spec.tuning_grid:
            spec = tune_hyperparameters(spec, data, kind, k_inner=k_inner,
                                        tau=tau, seed=seed)
        candidates.append(fit_learner(spec, data))

    cv_report = {
        "folds": k_folds,
        "loss": kind.value,
        "per_learner": per_learner,
        "ensemble_cv_loss": ensemble_loss,
        "dropped": cv.warnings,
    }
    return SuperLearnerModel(candidates=candidates, weights=weights,
                             loss_kind=kind, horizon=tau, cv_report=cv_report,
                             screening_info=screening_info, seed=seed)
