"""Uniform candidate-learner contract: fit on a cohort, predict S(t|x).

Every fitted learner serializes to a versioned JSON document and restores to
an object whose predictions match the original to full precision.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from ..dataset import SurvivalDataset
from ..errors import DimensionMismatchError, ValidationError

LEARNER_KINDS = (
    "cox_main_terms",
    "weibull_aft",
    "gamma_aft",
    "elasticnet_cox",
    "royston_parmar",
    "random_survival_forest",
    "survival_neural_network",
)

FORMAT_TAG = "survstack-learner"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class LearnerSpec:
    """A candidate learner: kind, hyperparameters, optional tuning grid."""

    kind: str
    hyperparameters: dict = field(default_factory=dict)
    tuning_grid: dict | None = None

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValidationError(
                f"unknown learner kind {self.kind!r}; expected one of {LEARNER_KINDS}"
            )

    def with_hyperparameters(self, **updates) -> "LearnerSpec":
        merged = dict(self.hyperparameters)
        merged.update(updates)
        return LearnerSpec(kind=self.kind, hyperparameters=merged,
                           tuning_grid=self.tuning_grid)


@dataclass(frozen=True)
class TrainingMeta:
    n: int
    p: int
    seed: int | None
    covariate_names: tuple[str, ...]


class FittedLearner(ABC):
    """A trained learner able to predict survival probability at any time."""

    kind: str = ""

    def __init__(self, meta: TrainingMeta, hyperparameters: dict):
        self.meta = meta
        self.hyperparameters = dict(hyperparameters)

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return self.meta.covariate_names

    def _check_covariates(self, covariates) -> np.ndarray:
        X = np.asarray(covariates, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.meta.p:
            raise DimensionMismatchError(
                f"{self.kind} was trained on {self.meta.p} covariates, got {X.shape[1]}"
            )
        return X

    def predict_survival(self, covariates, t: float) -> np.ndarray:
        """S(t|x) for each row of ``covariates``; values in [0, 1], S(0|x) = 1."""
        if t < 0:
            raise ValidationError("prediction time must be nonnegative")
        X = self._check_covariates(covariates)
        s = self._survival(X, float(t))
        return np.clip(s, 0.0, 1.0)

    def predict_risk(self, covariates, t: float) -> np.ndarray:
        return 1.0 - self.predict_survival(covariates, t)

    @abstractmethod
    def _survival(self, X: np.ndarray, t: float) -> np.ndarray:
        ...

    @abstractmethod
    def _params_dict(self) -> dict:
        ...

    @classmethod
    @abstractmethod
    def _from_params(cls, params: dict, meta: TrainingMeta,
                     hyperparameters: dict) -> "FittedLearner":
        ...

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "hyperparameters": self.hyperparameters,
            "meta": {
                "n": self.meta.n,
                "p": self.meta.p,
                "seed": self.meta.seed,
                "covariate_names": list(self.meta.covariate_names),
            },
            "parameters": self._params_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


_REGISTRY: dict[str, type] = {}


def register_learner(cls):
    """Class decorator wiring a FittedLearner subclass into deserialization."""
    _REGISTRY[cls.kind] = cls
    return cls


def learner_from_dict(doc: dict) -> FittedLearner:
    if doc.get("format") != FORMAT_TAG:
        raise ValidationError("not a serialized learner document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported learner document version {doc.get('version')}")
    kind = doc["kind"]
    if kind not in _REGISTRY:
        raise ValidationError(f"unknown learner kind {kind!r} in document")
    meta = TrainingMeta(
        n=doc["meta"]["n"],
        p=doc["meta"]["p"],
        seed=doc["meta"]["seed"],
        covariate_names=tuple(doc["meta"]["covariate_names"]),
    )
    return _REGISTRY[kind]._from_params(doc["parameters"], meta,
                                        doc["hyperparameters"])


def learner_from_json(text: str) -> FittedLearner:
    return learner_from_dict(json.loads(text))


def predict_survival(model: FittedLearner, covariates, t: float) -> np.ndarray:
    """Module-level form of the uniform prediction contract."""
    return model.predict_survival(covariates, t)


def make_meta(data: SurvivalDataset, seed: int | None = None) -> TrainingMeta:
    return TrainingMeta(n=data.n, p=data.p, seed=seed,
                        covariate_names=data.covariate_names)
