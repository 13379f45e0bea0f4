"""survstack: survival super learning with censoring-aware temporal validation.

A stacking toolkit for right-censored time-to-event prediction: seven
candidate learners behind one contract, IPCW losses at a fixed horizon,
simplex-weighted combination on the logit scale, a discrimination and
calibration metric suite with bootstrap CIs, and a drift-aware validation
workflow for temporally shifted cohorts.

All randomness uses numpy's PCG64 generator (`numpy.random.default_rng`), so
seeded results reproduce bit-for-bit across platforms.
"""

__version__ = "0.1.0"

from .censoring import (
    CensoringModel,
    IpcwWeights,
    fit_censoring_km,
    ipcw_weights,
    kaplan_meier,
)
from .dataset import (
    CohortModel,
    DriftSpec,
    SurvivalDataset,
    administrative_censor,
    default_cohort_model,
    default_drift_spec,
    generate_cohort,
    load_csv,
    split_folds,
    to_csv,
)
from .learners import (
    LEARNER_KINDS,
    FittedLearner,
    LearnerSpec,
    fit_cox,
    fit_elasticnet_cox,
    fit_gamma_aft,
    fit_learner,
    fit_random_survival_forest,
    fit_royston_parmar,
    fit_survival_nn,
    fit_weibull_aft,
    predict_survival,
    tune_hyperparameters,
)
from .losses import LossKind, auroc_t_loss, get_loss, ipcw_brier, negative_binomial_loglik
from .metrics import (
    BootstrapConfig,
    MetricReport,
    bootstrap_ci,
    brier_metric,
    calibration_curve,
    internal_validate,
    mean_calibration,
    tauroc,
    temporal_validate,
    weak_calibration,
)
from .risk import RiskPrediction
from .superlearner import (
    SuperLearnerModel,
    combine,
    cv_predictions,
    fit_super_learner,
    optimize_weights,
    screen_elasticnet,
)

__all__ = [
    "__version__",
    "BootstrapConfig",
    "CensoringModel",
    "CohortModel",
    "DriftSpec",
    "FittedLearner",
    "IpcwWeights",
    "LEARNER_KINDS",
    "LearnerSpec",
    "LossKind",
    "MetricReport",
    "RiskPrediction",
    "SuperLearnerModel",
    "SurvivalDataset",
    "administrative_censor",
    "auroc_t_loss",
    "bootstrap_ci",
    "brier_metric",
    "calibration_curve",
    "combine",
    "cv_predictions",
    "default_cohort_model",
    "default_drift_spec",
    "fit_censoring_km",
    "fit_cox",
    "fit_elasticnet_cox",
    "fit_gamma_aft",
    "fit_learner",
    "fit_random_survival_forest",
    "fit_royston_parmar",
    "fit_super_learner",
    "fit_survival_nn",
    "fit_weibull_aft",
    "generate_cohort",
    "get_loss",
    "internal_validate",
    "ipcw_brier",
    "ipcw_weights",
    "kaplan_meier",
    "load_csv",
    "mean_calibration",
    "negative_binomial_loglik",
    "optimize_weights",
    "predict_survival",
    "screen_elasticnet",
    "split_folds",
    "tauroc",
    "temporal_validate",
    "to_csv",
    "tune_hyperparameters",
    "weak_calibration",
]
