"""Censoring distribution estimation and inverse-probability-of-censoring weights.

The censoring survival function G(t) = P(C > t) is estimated by the
product-limit method applied to the censoring process (censorings play the
role of events). Ties between an event and a censoring at the same instant
are resolved event-first: the event happens just before, so subjects with an
event at t leave the risk set before the censorings at t are counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SurvivalDataset
from .errors import DegenerateWeightError, ValidationError


@dataclass(frozen=True)
class StepSurvival:
    """Right-continuous nonincreasing step function with S(t) = 1 before the
    first jump."""

    jump_times: np.ndarray
    values: np.ndarray

    def __call__(self, t) -> np.ndarray:
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right")
        return np.where(idx > 0, np.concatenate(([1.0], self.values))[idx], 1.0)

    def left(self, t) -> np.ndarray:
        """Left limit S(t-): jumps strictly below t."""
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="left")
        return np.where(idx > 0, np.concatenate(([1.0], self.values))[idx], 1.0)


def _tally(times: np.ndarray, events: np.ndarray):
    """Unique observed times with event counts, censoring counts, and at-risk
    counts."""
    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    e_sorted = events[order]
    uniq, start = np.unique(t_sorted, return_index=True)
    d = np.add.reduceat(e_sorted, start)
    total = np.add.reduceat(np.ones_like(e_sorted), start)
    c = total - d
    n_at_risk = len(times) - np.concatenate(([0], np.cumsum(total)[:-1]))
    return uniq, d, c, n_at_risk


def kaplan_meier(times, events) -> StepSurvival:
    """Standard product-limit estimator of the event survival function.

    At tied times events precede censorings, so censored subjects at t remain
    in the risk set for events at t.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=float)
    if len(times) == 0:
        raise ValidationError("cannot fit a survival curve on an empty dataset")
    uniq, d, _, n = _tally(times, events)
    mask = d > 0
    factors = 1.0 - d[mask] / n[mask]
    return StepSurvival(jump_times=uniq[mask], values=np.cumprod(factors))


@dataclass(frozen=True)
class CensoringModel:
    """Step-function estimate of G(t) = P(censoring time > t)."""

    curve: StepSurvival
    max_time: float

    def survival(self, t) -> np.ndarray:
        return self.curve(t)

    def survival_left(self, t) -> np.ndarray:
        return self.curve.left(t)


def fit_censoring_km(data: SurvivalDataset) -> CensoringModel:
    """Product-limit estimator treating censorings as the events of interest.

    Event-first tie handling: the at-risk count for censorings at t excludes
    subjects whose event occurred at t.
    """
    if data.n == 0:
        raise ValidationError("cannot fit a censoring model on an empty dataset")
    uniq, d, c, n = _tally(data.times, data.events)
    mask = c > 0
    denom = n[mask] - d[mask]
    factors = np.where(denom > 0, 1.0 - c[mask] / np.maximum(denom, 1.0), 0.0)
    curve = StepSurvival(jump_times=uniq[mask], values=np.cumprod(factors))
    return CensoringModel(curve=curve, max_time=float(data.times.max()))


@dataclass(frozen=True)
class IpcwWeights:
    """Per-subject weights at a fixed horizon.

    ``eligible`` marks subjects whose horizon status is known: event by tau
    (``is_case``), or followed to tau. Everyone else (censored early) carries
    weight 0. ``floor`` is the lower truncation applied to G before inversion.
    """

    weights: np.ndarray
    eligible: np.ndarray
    is_case: np.ndarray
    tau: float
    floor: float
    n_floored: int


def ipcw_weights(
    model: CensoringModel,
    data: SurvivalDataset,
    tau: float,
    floor: float = 0.05,
) -> IpcwWeights:
    """Weights recreating the population that would have been seen without
    censoring: 1/G(T-) for events by tau, 1/G(tau) for subjects followed to
    tau, 0 for early censorings.

    G is truncated below at ``floor`` before inversion; pass ``floor=0`` to
    disable truncation, in which case a zero G at a needed point raises.
    """
    if tau <= 0:
        raise ValidationError("tau must be positive")
    if tau > model.max_time:
        raise ValidationError(
            f"tau={tau} exceeds the censoring model domain [0, {model.max_time}]"
        )
    times = data.times
    events = data.events
    is_case = (events == 1.0) & (times <= tau)
    is_control = times >= tau
    eligible = is_case | is_control

    g = np.where(is_case, model.survival_left(times), model.survival(tau))
    needed = eligible & (g <= 0)
    if floor <= 0 and needed.any():
        raise DegenerateWeightError(
            "censoring survival is zero where weights are needed",
            subjects=np.flatnonzero(needed).tolist(),
        )
    g_floored = np.maximum(g, floor) if floor > 0 else g
    n_floored = int((eligible & (g < floor)).sum()) if floor > 0 else 0

    weights = np.zeros(data.n)
    weights[eligible] = 1.0 / g_floored[eligible]
    return IpcwWeights(
        weights=weights,
        eligible=eligible,
        is_case=is_case,
        tau=tau,
        floor=floor,
        n_floored=n_floored,
    )


def horizon_labels(data: SurvivalDataset, tau: float) -> np.ndarray:
    """Binary horizon outcome Y(tau): 1 if the event occurred by tau.

    Only meaningful where the corresponding IPCW weight is positive.
    """
    return ((data.events == 1.0) & (data.times <= tau)).astype(float)
