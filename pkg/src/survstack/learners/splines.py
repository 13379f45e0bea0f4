"""Flexible parametric proportional-hazards model: the log cumulative hazard
is a restricted cubic spline in log time plus a linear predictor.

The natural cubic spline basis here is shared with the calibration-curve
module: beyond the boundary knots every basis function is linear, so the
fitted curve extrapolates linearly.
"""

from __future__ import annotations

import numpy as np
from scipy import optimize

from ..dataset import SurvivalDataset
from ..errors import MonotoneHazardError, ValidationError
from .base import FittedLearner, LearnerSpec, TrainingMeta, make_meta, register_learner

DEFAULT_INTERIOR_KNOTS = 3
MAX_RESTARTS = 5


def natural_cubic_basis(u: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Restricted cubic spline design: [u, v_1(u), ..., v_{K-2}(u)] for knot
    vector ``knots`` (sorted, first and last are the boundary knots)."""
    u = np.asarray(u, dtype=float)
    kmin, kmax = knots[0], knots[-1]
    span = kmax - kmin
    cols = [u]
    for kj in knots[1:-1]:
        lam = (kmax - kj) / span
        vj = (
            np.maximum(u - kj, 0.0) ** 3
            - lam * np.maximum(u - kmin, 0.0) ** 3
            - (1.0 - lam) * np.maximum(u - kmax, 0.0) ** 3
        ) / span**2
        cols.append(vj)
    return np.column_stack(cols)


def natural_cubic_basis_deriv(u: np.ndarray, knots: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    kmin, kmax = knots[0], knots[-1]
    span = kmax - kmin
    cols = [np.ones_like(u)]
    for kj in knots[1:-1]:
        lam = (kmax - kj) / span
        dvj = 3.0 * (
            np.maximum(u - kj, 0.0) ** 2
            - lam * np.maximum(u - kmin, 0.0) ** 2
            - (1.0 - lam) * np.maximum(u - kmax, 0.0) ** 2
        ) / span**2
        cols.append(dvj)
    return np.column_stack(cols)


def spline_knots(log_event_times: np.ndarray, k: int) -> np.ndarray:
    """Boundary knots at the extreme log event times, interior knots at the
    quantiles i/(k+1)."""
    if len(np.unique(log_event_times)) < k + 2:
        raise ValidationError(
            f"{k} interior knots need at least {k + 2} distinct event times"
        )
    probs = np.arange(1, k + 1) / (k + 1)
    interior = np.quantile(log_event_times, probs)
    knots = np.concatenate(
        ([log_event_times.min()], interior, [log_event_times.max()])
    )
    if len(np.unique(knots)) != len(knots):
        raise ValidationError(
            f"quantile knots collide; too few distinct event times for k={k}"
        )
    return knots


@register_learner
class FittedRoystonParmar(FittedLearner):
    kind = "royston_parmar"

    def __init__(self, meta: TrainingMeta, hyperparameters: dict,
                 knots: np.ndarray, gamma: np.ndarray, coef: np.ndarray,
                 center: np.ndarray, loglik: float):
        super().__init__(meta, hyperparameters)
        self.knots = np.asarray(knots, dtype=float)
        self.gamma = np.asarray(gamma, dtype=float)
        self.coef = np.asarray(coef, dtype=float)
        self.center = np.asarray(center, dtype=float)
        self.loglik = loglik

    def log_cumhaz_baseline(self, u: np.ndarray) -> np.ndarray:
        basis = natural_cubic_basis(u, self.knots)
        return self.gamma[0] + basis @ self.gamma[1:]

    def _survival(self, X: np.ndarray, t: float) -> np.ndarray:
        if t == 0.0:
            return np.ones(X.shape[0])
        eta = (X - self.center) @ self.coef if self.meta.p else np.zeros(X.shape[0])
        s_u = self.log_cumhaz_baseline(np.array([np.log(t)]))[0]
        return np.exp(-np.exp(s_u + eta))

    def _params_dict(self) -> dict:
        return {
            "knots": self.knots.tolist(),
            "gamma": self.gamma.tolist(),
            "coef": self.coef.tolist(),
            "center": self.center.tolist(),
            "loglik": self.loglik,
        }

    @classmethod
    def _from_params(cls, params, meta, hyperparameters):
        return cls(meta, hyperparameters, knots=np.array(params["knots"]),
                   gamma=np.array(params["gamma"]),
                   coef=np.array(params["coef"]),
                   center=np.array(params["center"]), loglik=params["loglik"])


def _rp_negloglik_grad(params, basis, dbasis, u, events, Xc):
    """Censored log-likelihood of the spline hazard model; a quadratic
    penalty takes over where the spline slope turns nonpositive at event
    times, steering the optimizer back to a valid hazard."""
    n, p = Xc.shape
    q = basis.shape[1] + 1
    gamma, beta = params[:q], params[q:]
    s = gamma[0] + basis @ gamma[1:]
    ds = dbasis @ gamma[1:]
    eta = Xc @ beta if p else np.zeros(n)
    log_h_arg = s + eta
    H = np.exp(np.minimum(log_h_arg, 500.0))

    ds_events = ds[events == 1.0]
    ds_safe = np.maximum(ds, 1e-12)
    ll = np.sum(events * (s + eta + np.log(ds_safe) - u)) - np.sum(H)
    penalty_viol = np.minimum(ds_events - 1e-8, 0.0)
    penalty = 1e8 * np.sum(penalty_viol**2)

    d_common = events - H
    grad = np.empty_like(params)
    grad[0] = -np.sum(d_common)
    grad[1:q] = -(basis.T @ d_common
                  + dbasis.T @ (events * (ds > 1e-12) / ds_safe))
    # penalty gradient only acts through the slope at event times
    viol_full = np.zeros(n)
    viol_full[events == 1.0] = penalty_viol
    grad[1:q] += 2e8 * (dbasis.T @ viol_full)
    if p:
        grad[q:] = -(Xc.T @ d_common)
    return -ll + penalty, grad


def fit_royston_parmar(data: SurvivalDataset,
                       spec: LearnerSpec | None = None) -> FittedRoystonParmar:
    """Fit with k interior knots at log-event-time quantiles; fits whose
    cumulative hazard is not monotone on a dense grid are rejected and
    restarted from perturbed initial values, up to 5 times."""
    hp = dict(spec.hyperparameters) if spec else {}
    k = int(hp.get("k", DEFAULT_INTERIOR_KNOTS))
    if k < 1:
        raise ValidationError("need at least one interior knot")
    hp = {"k": k}
    if data.events.sum() < 1:
        raise ValidationError("spline hazard model needs at least one event")
    if (data.times <= 0).any():
        raise ValidationError("spline hazard model requires positive times")

    u = np.log(data.times)
    log_event_times = u[data.events == 1.0]
    knots = spline_knots(log_event_times, k)
    basis = natural_cubic_basis(u, knots)
    dbasis = natural_cubic_basis_deriv(u, knots)
    center = data.covariates.mean(axis=0) if data.p else np.zeros(0)
    Xc = data.covariates - center

    # Weibull-equivalent start: log H = gamma0 + gamma1 * u
    q = basis.shape[1] + 1
    sigma0 = max(log_event_times.std(), 0.1)
    x0 = np.zeros(q + data.p)
    x0[0] = -log_event_times.mean() / sigma0
    x0[1] = 1.0 / sigma0

    rng = np.random.default_rng(hp.get("seed", 0) or 0)
    last_error = None
    for attempt in range(MAX_RESTARTS):
        start = x0 if attempt == 0 else x0 + rng.normal(scale=0.1 * (attempt + 1),
                                                        size=len(x0))
        result = optimize.minimize(
            _rp_negloglik_grad, start, args=(basis, dbasis, u, data.events, Xc),
            jac=True, method="L-BFGS-B",
            options={"maxiter": 2000, "ftol": 1e-13, "gtol": 1e-9},
        )
        gamma, beta = result.x[:q], result.x[q:]
        if not np.isfinite(result.fun):
            last_error = "non-finite likelihood"
            continue
        if _slope_is_positive(gamma, knots):
            loglik = -_rp_negloglik_grad(result.x, basis, dbasis, u,
                                         data.events, Xc)[0]
            return FittedRoystonParmar(meta=make_meta(data), hyperparameters=hp,
                                       knots=knots, gamma=gamma, coef=beta,
                                       center=center, loglik=loglik)
        last_error = "non-monotone cumulative hazard"
    raise MonotoneHazardError(
        f"spline hazard fit failed after {MAX_RESTARTS} restarts: {last_error}"
    )


def _slope_is_positive(gamma: np.ndarray, knots: np.ndarray) -> bool:
    """Survival is nonincreasing iff the fitted log cumulative hazard is
    nondecreasing; the spline is linear outside the boundary knots, so a
    dense interior grid plus both tails covers everything."""
    pad = knots[-1] - knots[0]
    grid = np.linspace(knots[0] - pad, knots[-1] + pad, 400)
    slope = natural_cubic_basis_deriv(grid, knots) @ gamma[1:]
    return bool((slope > 0).all())
