"""One-hidden-layer survival network trained on the Cox partial likelihood.

The network maps standardized covariates through a tanh hidden layer to a
scalar log-risk. Mini-batch gradient descent minimizes the batch negative
partial likelihood (normalized by the batch event count) plus L2 weight
decay; the decay is applied as an exact proximal shrinkage step, which stays
stable even for extreme decay values. Output-layer weights start at zero, so
an untrained network predicts the covariate-free Breslow baseline.
"""

from __future__ import annotations

import numpy as np

from ..dataset import SurvivalDataset
from ..errors import DivergenceError, ValidationError
from .base import FittedLearner, LearnerSpec, TrainingMeta, make_meta, register_learner
from .coxcore import CoxPartialLikelihood, StepCumHaz

DEFAULT_N_NODES = 20
DEFAULT_DECAY = 0.1
DEFAULT_BATCH_SIZE = 256
DEFAULT_EPOCHS = 1
DEFAULT_LEARNING_RATE = 0.01


def _unpack(params: np.ndarray, p: int, h: int):
    i = 0
    w1 = params[i:i + p * h].reshape(p, h)
    i += p * h
    b1 = params[i:i + h]
    i += h
    w2 = params[i:i + h]
    i += h
    b2 = params[i]
    return w1, b1, w2, b2


def _pack(w1, b1, w2, b2) -> np.ndarray:
    return np.concatenate([w1.ravel(), b1, w2, [b2]])


def _forward(params: np.ndarray, X: np.ndarray, h: int):
    w1, b1, w2, b2 = _unpack(params, X.shape[1], h)
    hidden = np.tanh(X @ w1 + b1)
    return hidden @ w2 + b2, hidden


def batch_objective(params: np.ndarray, X: np.ndarray, times: np.ndarray,
                    events: np.ndarray, decay: float, h: int):
    """Loss and analytic gradient on one mini-batch: negative partial
    likelihood over batch events plus (decay/2) * ||weights||^2 (biases
    excluded)."""
    w1, b1, w2, b2 = _unpack(params, X.shape[1], h)
    g, hidden = _forward(params, X, h)
    pl = CoxPartialLikelihood(times, events)
    d = pl.n_events
    loglik, grad_eta, _ = pl.eta_quantities(g)
    loss = -loglik / d + 0.5 * decay * (np.sum(w1**2) + np.sum(w2**2))

    dg = -grad_eta / d
    dw2 = hidden.T @ dg + decay * w2
    db2 = dg.sum()
    dhidden = np.outer(dg, w2) * (1.0 - hidden**2)
    dw1 = X.T @ dhidden + decay * w1
    db1 = dhidden.sum(axis=0)
    return loss, _pack(dw1, db1, dw2, db2)


@register_learner
class FittedSurvivalNet(FittedLearner):
    kind = "survival_neural_network"

    def __init__(self, meta: TrainingMeta, hyperparameters: dict,
                 params: np.ndarray, center: np.ndarray, scale: np.ndarray,
                 risk_center: float, baseline: StepCumHaz):
        super().__init__(meta, hyperparameters)
        self.params = np.asarray(params, dtype=float)
        self.center = np.asarray(center, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.risk_center = float(risk_center)
        self.baseline = baseline

    def log_risk(self, X: np.ndarray) -> np.ndarray:
        Z = (X - self.center) / self.scale
        g, _ = _forward(self.params, Z, int(self.hyperparameters["n_nodes"]))
        return g - self.risk_center

    def _survival(self, X: np.ndarray, t: float) -> np.ndarray:
        return np.exp(-self.baseline(t) * np.exp(self.log_risk(X)))

    def _params_dict(self) -> dict:
        return {
            "params": self.params.tolist(),
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
            "risk_center": self.risk_center,
            "baseline_times": self.baseline.jump_times.tolist(),
            "baseline_cumhaz": self.baseline.values.tolist(),
        }

    @classmethod
    def _from_params(cls, params, meta, hyperparameters):
        return cls(meta, hyperparameters, params=np.array(params["params"]),
                   center=np.array(params["center"]),
                   scale=np.array(params["scale"]),
                   risk_center=params["risk_center"],
                   baseline=StepCumHaz(np.array(params["baseline_times"]),
                                       np.array(params["baseline_cumhaz"])))


def fit_survival_nn(data: SurvivalDataset,
                    spec: LearnerSpec | None = None) -> FittedSurvivalNet:
    hp = dict(spec.hyperparameters) if spec else {}
    n_nodes = int(hp.get("n_nodes", DEFAULT_N_NODES))
    decay = float(hp.get("decay", DEFAULT_DECAY))
    batch_size = int(hp.get("batch_size", DEFAULT_BATCH_SIZE))
    epochs = int(hp.get("epochs", DEFAULT_EPOCHS))
    lr = float(hp.get("learning_rate", DEFAULT_LEARNING_RATE))
    seed = int(hp.get("seed", 0))
    if n_nodes < 1:
        raise ValidationError("need at least one hidden node")
    if data.p == 0:
        raise ValidationError("survival network needs at least one covariate")
    if data.events.sum() < 1:
        raise ValidationError("survival network needs at least one event")
    hp = {"n_nodes": n_nodes, "decay": decay, "batch_size": batch_size,
          "epochs": epochs, "learning_rate": lr, "seed": seed}

    center = data.covariates.mean(axis=0)
    scale = data.covariates.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (data.covariates - center) / scale
    n, p = Z.shape

    rng = np.random.default_rng(seed)
    w1 = rng.normal(scale=1.0 / np.sqrt(p), size=(p, n_nodes))
    params = _pack(w1, np.zeros(n_nodes), np.zeros(n_nodes), 0.0)

    shrink = 1.0 / (1.0 + lr * decay)
    decay_mask = np.ones_like(params)
    decay_mask[p * n_nodes:p * n_nodes + n_nodes] = 0.0  # b1
    decay_mask[-1] = 0.0  # b2

    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            if len(idx) < 2 or data.events[idx].sum() < 1:
                continue
            loss, grad_full = batch_objective(params, Z[idx], data.times[idx],
                                              data.events[idx], 0.0, n_nodes)
            if not np.isfinite(loss):
                raise DivergenceError(
                    "non-finite training loss; lower the learning rate"
                )
            stepped = params - lr * grad_full
            params = np.where(decay_mask == 1.0, stepped * shrink, stepped)

    g, _ = _forward(params, Z, n_nodes)
    risk_center = float(g.mean())
    pl = CoxPartialLikelihood(data.times, data.events)
    baseline = pl.breslow_baseline(g - risk_center)
    return FittedSurvivalNet(meta=make_meta(data, seed=seed),
                             hyperparameters=hp, params=params, center=center,
                             scale=scale, risk_center=risk_center,
                             baseline=baseline)
