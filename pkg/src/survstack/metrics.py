"""Censoring-aware validation suite: time-dependent AUC, the three-level
calibration hierarchy with flexible spline curves, the Brier score, and
nonparametric bootstrap confidence intervals.

Two bootstrap schemes share one machinery. Internal validation refits the
model-building procedure on every resample and evaluates on the original
cohort; temporal (external) validation freezes the model and resamples only
the evaluation cohort. Scalar CIs and the calibration-curve band come from
the same resamples.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .censoring import (
    CensoringModel,
    fit_censoring_km,
    horizon_labels,
    ipcw_weights,
    kaplan_meier,
)
from .dataset import SurvivalDataset
from .errors import (
    BootstrapFailureError,
    DegenerateDesignError,
    DimensionMismatchError,
    UndefinedMetricError,
    ValidationError,
)
from .learners.splines import natural_cubic_basis
from .losses import ipcw_brier, weighted_auc
from .risk import RiskPrediction

CURVE_GRID_SIZE = 100
DEFAULT_KNOTS = 5
LOGIT_CLIP = 1e-12


def _values(risk) -> np.ndarray:
    return np.asarray(getattr(risk, "values", risk), dtype=float)


@dataclass(frozen=True)
class BootstrapConfig:
    iterations: int = 2000
    seed: int = 0
    percentile: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError("bootstrap needs at least one iteration")


@dataclass
class MetricReport:
    """Point estimates with 95% CIs plus the flexible calibration curve.

    Percentile intervals are expanded, when needed, to contain the point
    estimate so that lower <= point <= upper always holds.
    """

    horizon: float
    bootstrap_iterations: int
    validation_scheme: str
    metrics: dict = field(default_factory=dict)
    calibration_curve: dict = field(default_factory=dict)
    source: str = ""

    def to_dict(self) -> dict:
        return {
            "format": "survstack-report",
            "version": 1,
            "horizon": self.horizon,
            "bootstrap_iterations": self.bootstrap_iterations,
            "validation_scheme": self.validation_scheme,
            "source": self.source,
            "metrics": self.metrics,
            "calibration_curve": self.calibration_curve,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricReport":
        if doc.get("format") != "survstack-report":
            raise ValidationError("not a serialized metric report")
        return cls(
            horizon=doc["horizon"],
            bootstrap_iterations=doc["bootstrap_iterations"],
            validation_scheme=doc["validation_scheme"],
            metrics=doc["metrics"],
            calibration_curve=doc["calibration_curve"],
            source=doc.get("source", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls.from_dict(json.loads(text))

    def curve_to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["predicted", "observed", "lower", "upper"])
            curve = self.calibration_curve
            for row in zip(curve["predicted"], curve["observed"],
                           curve["lower"], curve["upper"]):
                writer.writerow([repr(float(v)) for v in row])


def tauroc(risk, data: SurvivalDataset, tau: float,
           censoring: CensoringModel, floor: float = 0.05) -> float:
    """IPCW cumulative/dynamic time-dependent AUC at tau; ties score half."""
    values = _values(risk)
    w = ipcw_weights(censoring, data, tau, floor=floor)
    case = w.is_case & (w.weights > 0)
    control = w.eligible & ~w.is_case & (w.weights > 0)
    return weighted_auc(values, case, control, w.weights, w.weights)


def mean_calibration(risk, data: SurvivalDataset, tau: float,
                     censoring: CensoringModel,
                     reciprocal: bool = False) -> float:
    """Observed event probability at tau (one minus Kaplan-Meier survival on
    the evaluation cohort) over the mean predicted risk. Pass
    ``reciprocal=True`` for the expected/observed direction."""
    values = _values(risk)
    if tau > data.times.max():
        raise UndefinedMetricError(
            f"Kaplan-Meier is undefined at tau={tau}: all follow-up ends earlier"
        )
    mean_risk = values.mean()
    if mean_risk <= 0:
        raise ValidationError("mean predicted risk must be positive")
    observed = 1.0 - float(kaplan_meier(data.times, data.events)(tau))
    ratio = observed / mean_risk
    return 1.0 / ratio if reciprocal else ratio


def _weighted_logistic(y: np.ndarray, X: np.ndarray, w: np.ndarray,
                       offset: np.ndarray | None = None,
                       tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Weighted logistic regression by Newton-Raphson (X includes whatever
    columns the caller wants; an intercept column is prepended here)."""
    design = np.column_stack([np.ones(len(y)), X])
    offset = np.zeros(len(y)) if offset is None else offset
    beta = np.zeros(design.shape[1])
    for _ in range(max_iter):
        m = design @ beta + offset
        p = expit(m)
        grad = design.T @ (w * (y - p))
        if np.linalg.norm(grad) < tol:
            return beta
        curv = w * p * (1.0 - p)
        hess = design.T @ (design * curv[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise DegenerateDesignError(
                f"singular design in weighted logistic fit: {exc}"
            ) from exc
        beta = beta + step
        if np.abs(beta).max() > 1e4:
            raise DegenerateDesignError(
                "weighted logistic fit diverged (separated design)"
            )
    return beta


def weak_calibration(risk, data: SurvivalDataset, tau: float,
                     censoring: CensoringModel,
                     floor: float = 0.05) -> tuple[float, float]:
    """(intercept, slope) of the IPCW-weighted logistic regression of the
    horizon outcome on logit(risk). The slope comes from the free fit; the
    intercept is calibration-in-the-large with the slope pinned at one."""
    values = _values(risk)
    w = ipcw_weights(censoring, data, tau, floor=floor)
    keep = w.weights > 0
    lp = logit(np.clip(values[keep], LOGIT_CLIP, 1.0 - LOGIT_CLIP))
    if np.ptp(lp) < 1e-12:
        raise DegenerateDesignError(
            "weak calibration needs non-constant predicted risks"
        )
    y = horizon_labels(data, tau)[keep]
    ww = w.weights[keep]
    slope = _weighted_logistic(y, lp[:, None], ww)[1]
    intercept = _weighted_logistic(y, np.empty((keep.sum(), 0)), ww, offset=lp)[0]
    return float(intercept), float(slope)


def _curve_knots(lp: np.ndarray, knots: int) -> np.ndarray:
    probs = np.linspace(0.05, 0.95, knots)
    placed = np.quantile(lp, probs)
    if len(np.unique(placed)) != knots:
        raise DegenerateDesignError(
            f"{knots} spline knots need {knots} distinct risk quantiles"
        )
    return placed


def calibration_curve(risk, data: SurvivalDataset, tau: float,
                      censoring: CensoringModel, knots: int = DEFAULT_KNOTS,
                      grid: np.ndarray | None = None, floor: float = 0.05):
    """Flexible calibration curve: IPCW-weighted logistic regression of the
    horizon outcome on a restricted cubic spline basis of logit(risk), knots
    at quantiles spanning [0.05, 0.95].

    Returns (grid, observed_on_grid, ici). The default grid spans the central
    98% of predicted risks with 100 points.
    """
    values = _values(risk)
    if len(np.unique(values)) < knots:
        raise DegenerateDesignError(
            f"calibration curve needs at least {knots} distinct risks"
        )
    w = ipcw_weights(censoring, data, tau, floor=floor)
    keep = w.weights > 0
    lp_all = logit(np.clip(values, LOGIT_CLIP, 1.0 - LOGIT_CLIP))
    knot_values = _curve_knots(lp_all, knots)
    basis = natural_cubic_basis(lp_all[keep], knot_values)
    beta = _weighted_logistic(horizon_labels(data, tau)[keep], basis,
                              w.weights[keep])

    if grid is None:
        grid = np.linspace(np.quantile(values, 0.01),
                           np.quantile(values, 0.99), CURVE_GRID_SIZE)
    grid_lp = logit(np.clip(grid, LOGIT_CLIP, 1.0 - LOGIT_CLIP))
    grid_basis = np.column_stack([np.ones(len(grid)),
                                  natural_cubic_basis(grid_lp, knot_values)])
    observed = expit(grid_basis @ beta)

    subject_basis = np.column_stack([np.ones(keep.sum()),
                                     natural_cubic_basis(lp_all[keep],
                                                         knot_values)])
    fitted = expit(subject_basis @ beta)
    ww = w.weights[keep]
    ici = float(np.sum(ww * np.abs(fitted - values[keep])) / np.sum(ww))
    return grid, observed, ici


def brier_metric(risk, data: SurvivalDataset, tau: float,
                 censoring: CensoringModel, floor: float = 0.05) -> float:
    """Delegates to the IPCW Brier loss; the two agree exactly by design."""
    w = ipcw_weights(censoring, data, tau, floor=floor)
    return ipcw_brier(_values(risk), data, w)


def bootstrap_ci(metric, data: SurvivalDataset, risk_producer,
                 config: BootstrapConfig,
                 mode: str = "external") -> tuple[float, float, float]:
    """Percentile bootstrap for one metric.

    ``risk_producer(dataset)`` maps a (re)sampled cohort to a risk vector:
    for external validation it returns frozen-model predictions for that
    resample, which the metric sees alongside the resample; for internal
    validation it refits on the resample and returns predictions for the
    original cohort, which the metric sees alongside the original data.
    ``metric(risks, dataset)`` returns a scalar.
    """
    if mode not in ("external", "internal"):
        raise ValidationError(f"unknown bootstrap mode {mode!r}")
    point = float(metric(risk_producer(data), data))
    values, failures = [], 0
    for seq in np.random.SeedSequence(config.seed).spawn(config.iterations):
        rng = np.random.default_rng(seq)
        idx = rng.integers(0, data.n, size=data.n)
        resample = data.subset(idx)
        try:
            risks = risk_producer(resample)
            eval_data = data if mode == "internal" else resample
            value = float(metric(risks, eval_data))
            if not np.isfinite(value):
                raise UndefinedMetricError("non-finite metric value")
            values.append(value)
        except Exception:  # noqa: BLE001 - failures are counted, then judged
            failures += 1
    if failures > 0.1 * config.iterations:
        raise BootstrapFailureError(
            f"metric undefined on {failures} of {config.iterations} resamples",
            n_failed=failures, n_total=config.iterations,
        )
    lower, upper = np.percentile(values, [2.5, 97.5])
    return point, float(lower), float(upper)


_SCALAR_METRICS = ("tauroc", "mean_calibration", "weak_calibration_slope",
                   "weak_calibration_intercept", "ici", "brier")


def _all_metrics(values: np.ndarray, data: SurvivalDataset, tau: float,
                 censoring: CensoringModel, knots: int, grid: np.ndarray,
                 floor: float) -> dict:
    out = {}
    out["tauroc"] = tauroc(values, data, tau, censoring, floor=floor)
    out["mean_calibration"] = mean_calibration(values, data, tau, censoring)
    intercept, slope = weak_calibration(values, data, tau, censoring,
                                        floor=floor)
    out["weak_calibration_intercept"] = intercept
    out["weak_calibration_slope"] = slope
    _, observed, ici = calibration_curve(values, data, tau, censoring,
                                         knots=knots, grid=grid, floor=floor)
    out["ici"] = ici
    out["brier"] = brier_metric(values, data, tau, censoring, floor=floor)
    out["curve"] = observed
    return out


def _assemble_report(point: dict, resamples: list[dict], failures: int,
                     iterations: int, grid: np.ndarray, tau: float,
                     scheme: str, source: str) -> MetricReport:
    if failures > 0.1 * iterations:
        raise BootstrapFailureError(
            f"metrics undefined on {failures} of {iterations} resamples",
            n_failed=failures, n_total=iterations,
        )
    metrics = {}
    for name in _SCALAR_METRICS:
        draws = [r[name] for r in resamples]
        lower, upper = np.percentile(draws, [2.5, 97.5])
        metrics[name] = {
            "point": point[name],
            "lower": float(min(lower, point[name])),
            "upper": float(max(upper, point[name])),
        }
    curves = np.vstack([r["curve"] for r in resamples])
    lo, hi = np.percentile(curves, [2.5, 97.5], axis=0)
    curve = {
        "predicted": grid.tolist(),
        "observed": point["curve"].tolist(),
        "lower": np.minimum(lo, point["curve"]).tolist(),
        "upper": np.maximum(hi, point["curve"]).tolist(),
    }
    return MetricReport(horizon=tau, bootstrap_iterations=iterations,
                        validation_scheme=scheme, metrics=metrics,
                        calibration_curve=curve, source=source)


def _curve_grid(values: np.ndarray) -> np.ndarray:
    return np.linspace(np.quantile(values, 0.01), np.quantile(values, 0.99),
                       CURVE_GRID_SIZE)


def align_covariates(names: tuple[str, ...], cohort: SurvivalDataset) -> np.ndarray:
    """Reorder cohort columns to the model's training names; extra cohort
    columns are ignored, absent ones are an error."""
    missing = [n for n in names if n not in cohort.covariate_names]
    if missing:
        raise DimensionMismatchError(
            f"validation cohort is missing covariates: {', '.join(missing)}"
        )
    cols = [cohort.covariate_names.index(n) for n in names]
    return cohort.covariates[:, cols]


def temporal_validate(model, cohort: SurvivalDataset, tau: float | None = None,
                      config: BootstrapConfig | None = None,
                      censoring: CensoringModel | None = None,
                      knots: int = DEFAULT_KNOTS,
                      floor: float = 0.05) -> MetricReport:
    """Frozen-model evaluation on a later cohort: no refitting; the censoring
    model is refit on the evaluation cohort unless one is supplied. Only the
    evaluation cohort is resampled for CIs."""
    config = config or BootstrapConfig()
    tau = tau if tau is not None else getattr(model, "horizon", None)
    if tau is None:
        raise ValidationError("no horizon given and the model carries none")
    X = align_covariates(model.covariate_names, cohort)
    risks = np.asarray(model.predict_risk(X, tau), dtype=float)
    cens_point = censoring or fit_censoring_km(cohort)
    grid = _curve_grid(risks)
    point = _all_metrics(risks, cohort, tau, cens_point, knots, grid, floor)

    resamples, failures = [], 0
    for seq in np.random.SeedSequence(config.seed).spawn(config.iterations):
        rng = np.random.default_rng(seq)
        idx = rng.integers(0, cohort.n, size=cohort.n)
        boot = cohort.subset(idx)
        try:
            cens_b = censoring or fit_censoring_km(boot)
            resamples.append(_all_metrics(risks[idx], boot, tau, cens_b,
                                          knots, grid, floor))
        except Exception:  # noqa: BLE001
            failures += 1
    return _assemble_report(point, resamples, failures, config.iterations,
                            grid, tau, scheme="bootstrap_resample_external",
                            source=getattr(model, "source", "") or "model")


def internal_validate(fit_fn, data: SurvivalDataset, tau: float,
                      config: BootstrapConfig | None = None,
                      knots: int = DEFAULT_KNOTS,
                      floor: float = 0.05) -> MetricReport:
    """Optimism-aware internal validation: refit the whole model-building
    procedure (``fit_fn(dataset)`` -> fitted model) on every resample and
    evaluate its predictions on the original cohort."""
    config = config or BootstrapConfig()
    cens = fit_censoring_km(data)
    point_model = fit_fn(data)
    risks = np.asarray(point_model.predict_risk(data.covariates, tau),
                       dtype=float)
    grid = _curve_grid(risks)
    point = _all_metrics(risks, data, tau, cens, knots, grid, floor)

    def one(seq):
        rng = np.random.default_rng(seq)
        idx = rng.integers(0, data.n, size=data.n)
        model_b = fit_fn(data.subset(idx))
        risks_b = np.asarray(model_b.predict_risk(data.covariates, tau),
                             dtype=float)
        return _all_metrics(risks_b, data, tau, cens, knots, grid, floor)

    seqs = np.random.SeedSequence(config.seed).spawn(config.iterations)
    resamples, failures = [], 0
    if config.workers > 1:
        from joblib import Parallel, delayed

        outcomes = Parallel(n_jobs=config.workers)(
            delayed(_try_one)(one, seq) for seq in seqs
        )
        for outcome in outcomes:
            if outcome is None:
                failures += 1
            else:
                resamples.append(outcome)
    else:
        for seq in seqs:
            outcome = _try_one(one, seq)
            if outcome is None:
                failures += 1
            else:
                resamples.append(outcome)
    return _assemble_report(point, resamples, failures, config.iterations,
                            grid, tau, scheme="bootstrap_refit_internal",
                            source="model")


def _try_one(fn, seq):
    try:
        return fn(seq)
    except Exception:  # noqa: BLE001 - failures are counted by the caller
        return None


def risk_prediction(model, covariates, tau: float, source: str = "") -> RiskPrediction:
    """Convenience wrapper producing the typed risk container."""
    return RiskPrediction(values=np.asarray(model.predict_risk(covariates, tau)),
                          horizon=tau, source=source or type(model).__name__)
