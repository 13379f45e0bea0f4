"""The candidate learner pool behind one fit-and-predict contract."""

from __future__ import annotations

from ..dataset import SurvivalDataset
from .base import (
    LEARNER_KINDS,
    FittedLearner,
    LearnerSpec,
    TrainingMeta,
    learner_from_dict,
    learner_from_json,
    predict_survival,
)
from .cox import FittedCox, fit_cox
from .elasticnet import FittedElasticnetCox, fit_elasticnet_cox
from .forest import FittedForest, fit_random_survival_forest
from .neural import FittedSurvivalNet, fit_survival_nn
from .parametric import FittedGammaAft, FittedWeibullAft, fit_gamma_aft, fit_weibull_aft
from .splines import FittedRoystonParmar, fit_royston_parmar
from .tuning import tune_hyperparameters

_FITTERS = {
    "cox_main_terms": fit_cox,
    "weibull_aft": fit_weibull_aft,
    "gamma_aft": fit_gamma_aft,
    "elasticnet_cox": fit_elasticnet_cox,
    "royston_parmar": fit_royston_parmar,
    "random_survival_forest": fit_random_survival_forest,
    "survival_neural_network": fit_survival_nn,
}


def fit_learner(spec: LearnerSpec, data: SurvivalDataset) -> FittedLearner:
    """Dispatch a spec to its fitter."""
    return _FITTERS[spec.kind](data, spec)


__all__ = [
    "LEARNER_KINDS",
    "FittedLearner",
    "LearnerSpec",
    "TrainingMeta",
    "FittedCox",
    "FittedElasticnetCox",
    "FittedForest",
    "FittedGammaAft",
    "FittedRoystonParmar",
    "FittedSurvivalNet",
    "FittedWeibullAft",
    "fit_cox",
    "fit_elasticnet_cox",
    "fit_gamma_aft",
    "fit_learner",
    "fit_random_survival_forest",
    "fit_royston_parmar",
    "fit_survival_nn",
    "fit_weibull_aft",
    "learner_from_dict",
    "learner_from_json",
    "predict_survival",
    "tune_hyperparameters",
]
