"""Grid-search hyperparameter tuning by inner cross-validated IPCW loss."""

from __future__ import annotations

import itertools

import numpy as np

from ..censoring import fit_censoring_km, ipcw_weights
from ..dataset import SurvivalDataset, split_folds
from ..errors import ConvergenceError, ValidationError
from ..losses import LossKind, get_loss
from .base import LearnerSpec

# Larger tuple = more regularized; used to break exact loss ties.
_REGULARIZATION_KEYS = {
    "elasticnet_cox": lambda hp: (hp.get("lambda", 0.0), hp.get("alpha", 0.0)),
    "random_survival_forest": lambda hp: (hp.get("nodesize", 0), -hp.get("mtry", 0)),
    "survival_neural_network": lambda hp: (hp.get("decay", 0.0),
                                           -hp.get("n_nodes", 0)),
    "royston_parmar": lambda hp: (-hp.get("k", 0),),
}


def _regularization_rank(kind: str, hp: dict):
    key = _REGULARIZATION_KEYS.get(kind)
    return key(hp) if key else ()


def expand_grid(tuning_grid: dict) -> list[dict]:
    names = sorted(tuning_grid)
    combos = itertools.product(*(tuning_grid[name] for name in names))
    return [dict(zip(names, values)) for values in combos]


def tune_hyperparameters(spec: LearnerSpec, data: SurvivalDataset,
                         loss: LossKind | str, k_inner: int = 10,
                         tau: float | None = None, seed: int = 0) -> LearnerSpec:
    """Inner k-fold grid search; returns the spec pinned at the loss-minimizing
    grid point, exact ties going to the more regularized setting.

    A grid point that fails to fit on more than half of the inner folds is
    disqualified; pooled out-of-fold predictions from the surviving folds feed
    the loss, with IPCW weights from a censoring model fit on all of ``data``.
    """
    from . import fit_learner  # deferred: avoid import cycle

    if not spec.tuning_grid:
        raise ValidationError("tune_hyperparameters needs a nonempty tuning grid")
    loss_fn = get_loss(loss)
    tau = tau if tau is not None else (data.horizon_hint or 7.0)
    folds = split_folds(data, k_inner, seed=seed)
    cens = fit_censoring_km(data)

    candidates = expand_grid(spec.tuning_grid)
    results = []
    for hp_update in candidates:
        candidate = LearnerSpec(kind=spec.kind,
                                hyperparameters={**spec.hyperparameters,
                                                 **hp_update})
        risk = np.full(data.n, np.nan)
        failures = 0
        for f in range(k_inner):
            train = data.subset(folds != f)
            held = folds == f
            try:
                model = fit_learner(candidate, train)
                risk[held] = model.predict_risk(data.covariates[held], tau)
            except Exception:
                failures += 1
        if failures * 2 > k_inner:
            continue
        mask = ~np.isnan(risk)
        if not mask.any():
            continue
        sub = data.subset(mask)
        w = ipcw_weights(cens, sub, tau)
        value = loss_fn(risk[mask], sub, w)
        results.append((value, _regularization_rank(spec.kind,
                                                    candidate.hyperparameters),
                        candidate))
    if not results:
        raise ConvergenceError(
            f"every grid point for {spec.kind} was disqualified during tuning"
        )
    best_value = min(value for value, _, _ in results)
    tied = [(rank, cand) for value, rank, cand in results if value == best_value]
    tied.sort(key=lambda item: item[0])
    chosen = tied[-1][1]
    return LearnerSpec(kind=spec.kind, hyperparameters=chosen.hyperparameters,
                       tuning_grid=None)
