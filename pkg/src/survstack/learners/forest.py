"""Random survival forest: bootstrap trees, log-rank splitting, Nelson-Aalen
terminal nodes, ensemble survival exp(-mean cumulative hazard).

The split search is vectorized over candidate thresholds. For a left group L
the log-rank numerator decomposes into per-sample scores
a_i = delta_i - N(T_i) (N the node's Nelson-Aalen cumulative hazard), so a
cumulative sum along the feature ordering scores every threshold at once; the
hypergeometric variance follows from cumulative at-risk counts per event time.
"""

from __future__ import annotations

import numpy as np

from ..dataset import SurvivalDataset
from ..errors import ValidationError
from .base import FittedLearner, LearnerSpec, TrainingMeta, make_meta, register_learner
from .coxcore import nelson_aalen

DEFAULT_NTREE = 500
DEFAULT_MTRY = 3
DEFAULT_NODESIZE = 20


def _node_tallies(times: np.ndarray, events: np.ndarray):
    """Event times, event counts, at-risk counts, and the variance prefix
    coefficients for log-rank splitting within one node."""
    order = np.argsort(times, kind="stable")
    ts, es = times[order], events[order]
    uniq, first = np.unique(ts, return_index=True)
    d_all = np.add.reduceat(es, first)
    counts = np.add.reduceat(np.ones_like(es), first)
    at_risk = len(ts) - np.concatenate(([0], np.cumsum(counts)[:-1]))
    keep = d_all > 0
    return uniq[keep], d_all[keep], at_risk[keep]


def _logrank_best_split(feature: np.ndarray, times: np.ndarray,
                        events: np.ndarray, scores: np.ndarray,
                        tau: np.ndarray, c1: np.ndarray, c2: np.ndarray,
                        min_leaf: int):
    """Best (statistic, threshold) over every distinct cut of one feature, or
    None when no admissible cut improves on zero."""
    m = len(feature)
    order = np.argsort(feature, kind="stable")
    f_sorted = feature[order]
    num = np.cumsum(scores[order])[:-1]  # left group = first c samples

    at_risk_left = np.cumsum(times[order][None, :] >= tau[:, None], axis=1)
    n_l = at_risk_left[:, :-1]
    var = c1 @ n_l - c2 @ (n_l * n_l)

    cut = np.arange(1, m)
    valid = (f_sorted[1:] != f_sorted[:-1]) & (cut >= min_leaf) & (m - cut >= min_leaf)
    valid &= var > 1e-12
    if not valid.any():
        return None
    stat = np.where(valid, num**2 / np.where(var > 0, var, 1.0), -np.inf)
    best = int(np.argmax(stat))
    if stat[best] <= 0.0:
        return None
    threshold = 0.5 * (f_sorted[best] + f_sorted[best + 1])
    return float(stat[best]), threshold


def _build_tree(X: np.ndarray, times: np.ndarray, events: np.ndarray,
                mtry: int, nodesize: int, rng: np.random.Generator) -> dict:
    m = len(times)
    if m >= 2 * nodesize and events.sum() > 0:
        tau, d, n_risk = _node_tallies(times, events)
        dh = d / n_risk
        na_at_own = np.cumsum(dh)[
            np.searchsorted(tau, times, side="right") - 1
        ] * (times >= tau[0])
        scores = events - na_at_own
        with np.errstate(invalid="ignore"):
            c1 = np.where(n_risk > 1, d * (n_risk - d) / (n_risk * (n_risk - 1)), 0.0)
        c2 = c1 / n_risk

        p = X.shape[1]
        candidates = rng.choice(p, size=min(mtry, p), replace=False)
        best = None
        for j in candidates:
            found = _logrank_best_split(X[:, j], times, events, scores,
                                        tau, c1, c2, nodesize)
            if found is not None and (best is None or found[0] > best[0]):
                best = (found[0], int(j), found[1])
        if best is not None:
            _, j, threshold = best
            left = X[:, j] <= threshold
            return {
                "feature": j,
                "threshold": threshold,
                "left": _build_tree(X[left], times[left], events[left],
                                    mtry, nodesize, rng),
                "right": _build_tree(X[~left], times[~left], events[~left],
                                     mtry, nodesize, rng),
            }
    leaf = nelson_aalen(times, events)
    return {"times": leaf.jump_times, "cumhaz": leaf.values}


def _tree_cumhaz(tree: dict, X: np.ndarray, t: float, out: np.ndarray,
                 idx: np.ndarray) -> None:
    if "feature" in tree:
        mask = X[idx, tree["feature"]] <= tree["threshold"]
        if mask.any():
            _tree_cumhaz(tree["left"], X, t, out, idx[mask])
        if (~mask).any():
            _tree_cumhaz(tree["right"], X, t, out, idx[~mask])
    else:
        pos = np.searchsorted(tree["times"], t, side="right")
        out[idx] = tree["cumhaz"][pos - 1] if pos > 0 else 0.0


def _tree_to_jsonable(tree: dict) -> dict:
    if "feature" in tree:
        return {
            "feature": int(tree["feature"]),
            "threshold": float(tree["threshold"]),
            "left": _tree_to_jsonable(tree["left"]),
            "right": _tree_to_jsonable(tree["right"]),
        }
    return {"times": np.asarray(tree["times"]).tolist(),
            "cumhaz": np.asarray(tree["cumhaz"]).tolist()}


def _tree_from_jsonable(tree: dict) -> dict:
    if "feature" in tree:
        return {
            "feature": tree["feature"],
            "threshold": tree["threshold"],
            "left": _tree_from_jsonable(tree["left"]),
            "right": _tree_from_jsonable(tree["right"]),
        }
    return {"times": np.array(tree["times"], dtype=float),
            "cumhaz": np.array(tree["cumhaz"], dtype=float)}


@register_learner
class FittedForest(FittedLearner):
    kind = "random_survival_forest"

    def __init__(self, meta: TrainingMeta, hyperparameters: dict,
                 trees: list[dict]):
        super().__init__(meta, hyperparameters)
        self.trees = trees

    def _survival(self, X: np.ndarray, t: float) -> np.ndarray:
        total = np.zeros(X.shape[0])
        scratch = np.zeros(X.shape[0])
        for tree in self.trees:
            _tree_cumhaz(tree, X, t, scratch, np.arange(X.shape[0]))
            total += scratch
        return np.exp(-total / len(self.trees))

    def _params_dict(self) -> dict:
        return {"trees": [_tree_to_jsonable(tree) for tree in self.trees]}

    @classmethod
    def _from_params(cls, params, meta, hyperparameters):
        return cls(meta, hyperparameters,
                   trees=[_tree_from_jsonable(t) for t in params["trees"]])


def fit_random_survival_forest(data: SurvivalDataset,
                               spec: LearnerSpec | None = None) -> FittedForest:
    """Grow ``ntree`` bootstrap trees; deterministic for a fixed seed."""
    hp = dict(spec.hyperparameters) if spec else {}
    ntree = int(hp.get("ntree", DEFAULT_NTREE))
    mtry = int(hp.get("mtry", min(DEFAULT_MTRY, data.p)))
    nodesize = int(hp.get("nodesize", DEFAULT_NODESIZE))
    seed = int(hp.get("seed", 0))
    if ntree < 1:
        raise ValidationError("ntree must be positive")
    if data.p == 0:
        raise ValidationError("forest needs at least one covariate")
    if mtry < 1 or mtry > data.p:
        raise ValidationError(f"mtry must lie in [1, {data.p}], got {mtry}")
    if nodesize < 1:
        raise ValidationError("nodesize must be positive")
    hp = {"ntree": ntree, "mtry": mtry, "nodesize": nodesize, "seed": seed}

    trees = []
    for seq in np.random.SeedSequence(seed).spawn(ntree):
        rng = np.random.default_rng(seq)
        boot = rng.integers(0, data.n, size=data.n)
        trees.append(
            _build_tree(data.covariates[boot], data.times[boot],
                        data.events[boot], mtry, nodesize, rng)
        )
    return FittedForest(meta=make_meta(data, seed=seed), hyperparameters=hp,
                        trees=trees)
