"""Censoring-aware loss functions evaluated at a fixed horizon.

All three losses consume the same IPCW weights, so with zero censoring each
reduces exactly to its plain uncensored counterpart. Every loss is oriented
for minimization (the time-dependent AUC enters as 1 - AUC).
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .censoring import IpcwWeights, horizon_labels
from .dataset import SurvivalDataset
from .errors import DimensionMismatchError, UndefinedMetricError, ValidationError

LOGLIK_CLIP = 1e-12


class LossKind(Enum):
    IPCW_BRIER = "brier"
    NEGATIVE_BINOMIAL_LOGLIK = "nbll"
    AUROC_T = "auroct"

    @property
    def orientation(self) -> str:
        """All losses minimize; the time-dependent AUC enters negated."""
        return "minimize"


def _risk_values(risk) -> np.ndarray:
    values = np.asarray(getattr(risk, "values", risk), dtype=float)
    if values.min() < 0 or values.max() > 1:
        raise ValidationError("risks must lie in [0, 1]")
    return values


def _check_aligned(values: np.ndarray, data: SurvivalDataset, weights: IpcwWeights):
    if len(values) != data.n or len(weights.weights) != data.n:
        raise DimensionMismatchError(
            f"risk ({len(values)}), data ({data.n}) and weights "
            f"({len(weights.weights)}) must align"
        )


def ipcw_brier(risk, data: SurvivalDataset, weights: IpcwWeights) -> float:
    """Weighted squared error against the binary horizon outcome:
    (1/n) * sum w_i (Y_i(tau) - risk_i)^2."""
    values = _risk_values(risk)
    _check_aligned(values, data, weights)
    y = horizon_labels(data, weights.tau)
    return float(np.sum(weights.weights * (y - values) ** 2) / data.n)


def negative_binomial_loglik(risk, data: SurvivalDataset, weights: IpcwWeights) -> float:
    """Weighted negative binomial log-likelihood, risks clipped to
    [1e-12, 1 - 1e-12] to keep the logs finite."""
    values = _risk_values(risk)
    _check_aligned(values, data, weights)
    y = horizon_labels(data, weights.tau)
    r = np.clip(values, LOGLIK_CLIP, 1.0 - LOGLIK_CLIP)
    terms = y * np.log(r) + (1.0 - y) * np.log(1.0 - r)
    return float(-np.sum(weights.weights * terms) / data.n)


def weighted_auc(values: np.ndarray, case: np.ndarray, control: np.ndarray,
                 case_w: np.ndarray, control_w: np.ndarray) -> float:
    """Weighted probability that a random case outranks a random control,
    ties scoring half. Sorting-based, O(n log n)."""
    total_case = case_w[case].sum()
    total_control = control_w[control].sum()
    if total_case <= 0 or total_control <= 0:
        raise UndefinedMetricError(
            "AUC needs at least one weighted case and one weighted control"
        )
    uniq = np.unique(values[case | control])
    case_at = np.zeros(len(uniq))
    ctrl_at = np.zeros(len(uniq))
    np.add.at(case_at, np.searchsorted(uniq, values[case]), case_w[case])
    np.add.at(ctrl_at, np.searchsorted(uniq, values[control]), control_w[control])
    ctrl_below = np.concatenate(([0.0], np.cumsum(ctrl_at)[:-1]))
    concordant = np.sum(case_at * (ctrl_below + 0.5 * ctrl_at))
    return float(concordant / (total_case * total_control))


def auroc_t_loss(risk, data: SurvivalDataset, weights: IpcwWeights) -> float:
    """1 - IPCW time-dependent AUC at the horizon. Cases are subjects with an
    event by tau, controls those followed past it, both IPCW-weighted."""
    values = _risk_values(risk)
    _check_aligned(values, data, weights)
    case = weights.is_case & (weights.weights > 0)
    control = weights.eligible & ~weights.is_case & (weights.weights > 0)
    auc = weighted_auc(values, case, control, weights.weights, weights.weights)
    return 1.0 - auc


_LOSS_FUNCTIONS = {
    LossKind.IPCW_BRIER: ipcw_brier,
    LossKind.NEGATIVE_BINOMIAL_LOGLIK: negative_binomial_loglik,
    LossKind.AUROC_T: auroc_t_loss,
}


def get_loss(kind: LossKind | str):
    if isinstance(kind, str):
        kind = LossKind(kind)
    return _LOSS_FUNCTIONS[kind]
