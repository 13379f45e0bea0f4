"""Batch command-line front end.

Commands: simulate | fit | validate | report. Every run is a pure function
of (config, seed): outputs are byte-identical across reruns. Option
precedence is command line > config file > built-in defaults. Exit codes:
0 success, 1 validation or user error, 2 internal numerical failure; errors
are emitted as a JSON payload on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from scipy import stats

from . import __version__
from .dataset import (
    DriftSpec,
    administrative_censor,
    default_cohort_model,
    default_drift_spec,
    generate_cohort,
    load_csv,
    to_csv,
)
from .errors import NumericalError, ValidationError
from .learners import LearnerSpec
from .metrics import BootstrapConfig, MetricReport, internal_validate, temporal_validate
from .superlearner import SuperLearnerModel, fit_super_learner

DESK_POOL = [
    {"kind": "cox_main_terms"},
    {"kind": "weibull_aft"},
]

PAPER_POOL = [
    {"kind": "gamma_aft"},
    {"kind": "weibull_aft"},
    {"kind": "cox_main_terms"},
    {"kind": "elasticnet_cox", "hyperparameters": {"alpha": 0.9, "lambda": 0.003}},
    {"kind": "royston_parmar", "hyperparameters": {"k": 3}},
    {"kind": "random_survival_forest",
     "hyperparameters": {"ntree": 500, "mtry": 3, "nodesize": 20}},
    {"kind": "survival_neural_network",
     "hyperparameters": {"n_nodes": 20, "decay": 0.1, "batch_size": 256,
                         "epochs": 1}},
]

DEFAULTS = {
    "seed": 9511,
    "horizon": 7.0,
    "loss": "brier",
    "folds": 10,
    "boot": 200,
    "n": 2000,
    "workers": 1,
    "screen": False,
    "screen_alpha": 0.2,
    "screen_lambda": 0.028,
    "censoring_floor": 0.05,
    "drift_threshold": 0.15,
    "admin_censor": False,
    "paper_scale": False,
    "event_rate_multiplier": 1.5,
    "no_drift": False,
    "learners": None,
}


def _merge_config(args: argparse.Namespace) -> dict:
    config = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            config.update(json.load(fh))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            config[key] = value
    if config["paper_scale"]:
        config["boot"] = 2000 if getattr(args, "boot", None) is None else config["boot"]
        if config["learners"] is None:
            config["learners"] = PAPER_POOL
    if config["learners"] is None:
        config["learners"] = DESK_POOL
    if config["horizon"] <= 0:
        raise ValidationError("horizon must be positive")
    return config


def _specs_from_config(config: dict) -> list[LearnerSpec]:
    return [
        LearnerSpec(kind=entry["kind"],
                    hyperparameters=entry.get("hyperparameters", {}),
                    tuning_grid=entry.get("tuning_grid"))
        for entry in config["learners"]
    ]


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _load_cohort(config: dict, csv_path, schema_path):
    if schema_path is None:
        raise ValidationError("a schema file is required (--schema)")
    data, dropped = load_csv(csv_path, schema_path)
    if config["admin_censor"]:
        data = administrative_censor(data, config["horizon"])
    return data, dropped


def cmd_simulate(args) -> int:
    config = _merge_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = config["seed"]
    spec = DriftSpec(
        covariate_mean_shifts=default_drift_spec().covariate_mean_shifts,
        event_rate_multiplier=config["event_rate_multiplier"],
        seed=seed,
    )
    if config.get("no_drift"):
        spec = DriftSpec(seed=seed)
    model = default_cohort_model()

    dev, dev_risk = generate_cohort(config["n"], "development", spec, model)
    shf, shf_risk = generate_cohort(config["n"], "shifted", spec, model)
    to_csv(dev, out / "development.csv")
    to_csv(shf, out / "shifted.csv")
    for name, risks in (("development", dev_risk), ("shifted", shf_risk)):
        with open(out / f"true_risks_{name}.csv", "w", encoding="utf-8") as fh:
            fh.write("true_risk\n")
            fh.writelines(repr(float(r)) + "\n" for r in risks)
    _write_json(out / "schema.json", {
        "time": "time", "event": "event",
        "covariates": list(model.covariate_names),
        "horizon": model.horizon,
    })

    checks = {}
    drifted = False
    for j, name in enumerate(model.covariate_names):
        ks = stats.ks_2samp(dev.covariates[:, j], shf.covariates[:, j])
        checks[name] = {
            "development_mean": float(dev.covariates[:, j].mean()),
            "shifted_mean": float(shf.covariates[:, j].mean()),
            "ks_pvalue": float(ks.pvalue),
        }
        drifted = drifted or ks.pvalue <= 0.01
    _write_json(out / "drift_check.json", {
        "per_covariate": checks,
        "event_rate_multiplier": spec.event_rate_multiplier,
        "flag": "drift" if drifted or spec.event_rate_multiplier != 1.0
                else "no-drift",
    })
    print(f"wrote 2 cohorts of n={config['n']} to {out}")
    return 0


def cmd_fit(args) -> int:
    config = _merge_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data, dropped = _load_cohort(config, args.train, args.schema)
    specs = _specs_from_config(config)
    screening = ({"alpha": config["screen_alpha"],
                  "lambda": config["screen_lambda"]}
                 if config["screen"] else None)

    def build(dataset):
        return fit_super_learner(
            specs, dataset, loss=config["loss"], tau=config["horizon"],
            k_folds=config["folds"], seed=config["seed"], screening=screening,
            censoring_floor=config["censoring_floor"],
        )

    model = build(data)
    (out / "model.json").write_text(model.to_json() + "\n", encoding="utf-8")

    report = internal_validate(
        build, data, tau=config["horizon"],
        config=BootstrapConfig(iterations=config["boot"], seed=config["seed"],
                               workers=config["workers"]),
        floor=config["censoring_floor"],
    )
    report.source = "super_learner"
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    report.curve_to_csv(out / "calibration_curve.csv")
    weights = ", ".join(
        f"{m.kind}={w:.3f}" for m, w in zip(model.candidates, model.weights)
    )
    print(f"fit on n={data.n} (dropped {dropped}); weights: {weights}")
    return 0


def cmd_validate(args) -> int:
    config = _merge_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = SuperLearnerModel.from_json(
        Path(args.model).read_text(encoding="utf-8")
    )
    cohort, dropped = _load_cohort(config, args.data, args.schema)
    report = temporal_validate(
        model, cohort, tau=config["horizon"],
        config=BootstrapConfig(iterations=config["boot"], seed=config["seed"],
                               workers=config["workers"]),
        floor=config["censoring_floor"],
    )
    report.source = "super_learner"
    (out / "validation_report.json").write_text(report.to_json() + "\n",
                                                encoding="utf-8")
    report.curve_to_csv(out / "validation_curve.csv")

    if args.dev_report:
        dev = MetricReport.from_json(Path(args.dev_report).read_text(
            encoding="utf-8"))
        summary = render_drift_summary(dev, report, config["drift_threshold"])
        (out / "drift_summary.md").write_text(summary, encoding="utf-8")
    print(f"validated on n={cohort.n} (dropped {dropped})")
    return 0


def _fmt(entry: dict) -> str:
    return f"{entry['point']:.3f} ({entry['lower']:.3f}-{entry['upper']:.3f})"


METRIC_LABELS = [
    ("tauroc", "tAUROC"),
    ("mean_calibration", "Mean calibration"),
    ("weak_calibration_slope", "Weak calibration (slope)"),
    ("weak_calibration_intercept", "Weak calibration (intercept)"),
    ("ici", "ICI"),
    ("brier", "Brier score"),
]


def render_drift_summary(dev: MetricReport, val: MetricReport,
                         threshold: float) -> str:
    lines = ["# Temporal drift summary", ""]
    if dev.horizon != val.horizon:
        lines += [f"**Warning: horizons differ "
                  f"({dev.horizon} vs {val.horizon})**", ""]
    lines += ["| Metric | Development | Validation |",
              "| --- | --- | --- |"]
    for key, label in METRIC_LABELS:
        lines.append(f"| {label} | {_fmt(dev.metrics[key])} "
                     f"| {_fmt(val.metrics[key])} |")
    departure = abs(val.metrics["mean_calibration"]["point"] - 1.0)
    brier_change = abs(val.metrics["brier"]["point"]
                       - dev.metrics["brier"]["point"])
    lines += [
        "",
        f"- Mean-calibration departure from 1: {departure:.3f}"
        + (f" (exceeds threshold {threshold})" if departure > threshold
           else f" (within threshold {threshold})"),
        f"- Brier score change: {brier_change:.3f}",
        "",
    ]
    return "\n".join(lines)


def render_report_table(reports: list[MetricReport],
                        names: list[str]) -> str:
    lines = []
    horizons = {r.horizon for r in reports}
    if len(horizons) > 1:
        lines += ["**Warning: reports use different horizons**", ""]
        header_names = [f"{n} (tau={r.horizon})" for n, r in zip(names, reports)]
    else:
        header_names = names
    lines += ["| Metric | " + " | ".join(header_names) + " |",
              "| --- |" + " --- |" * len(reports)]
    for key, label in METRIC_LABELS:
        cells = [_fmt(r.metrics[key]) for r in reports]
        lines.append(f"| {label} | " + " | ".join(cells) + " |")
    lines.append("")
    return "\n".join(lines)


def cmd_report(args) -> int:
    reports, names = [], []
    for path in args.reports:
        reports.append(MetricReport.from_json(Path(path).read_text(
            encoding="utf-8")))
        names.append(Path(path).stem)
    table = render_report_table(reports, names)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    else:
        print(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="survstack",
        description="Survival super learner: fit, temporally validate, report.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--horizon", type=float)
        p.add_argument("--loss", choices=["brier", "nbll", "auroct"])
        p.add_argument("--folds", type=int)
        p.add_argument("--boot", type=int, help="bootstrap iterations")
        p.add_argument("--workers", type=int)
        p.add_argument("--paper-scale", dest="paper_scale", action="store_true",
                       default=None,
                       help="full learner pool and 2000 bootstrap iterations")
        p.add_argument("--admin-censor", dest="admin_censor",
                       action="store_true", default=None,
                       help="administratively censor follow-up at the horizon")

    sim = sub.add_parser("simulate", help="write two synthetic era cohorts")
    common(sim)
    sim.add_argument("--out", required=True)
    sim.add_argument("--n", type=int)
    sim.add_argument("--no-drift", dest="no_drift", action="store_true",
                     default=None)
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit the super learner with internal validation")
    common(fit)
    fit.add_argument("--train", required=True, help="training cohort CSV")
    fit.add_argument("--schema", required=True, help="column-role JSON")
    fit.add_argument("--out", required=True)
    fit.add_argument("--screen", action="store_true", default=None,
                     help="elasticnet predictor screening before fitting")
    fit.set_defaults(func=cmd_fit)

    val = sub.add_parser("validate", help="frozen-model temporal validation")
    common(val)
    val.add_argument("--model", required=True, help="model.json from fit")
    val.add_argument("--data", required=True, help="validation cohort CSV")
    val.add_argument("--schema", required=True)
    val.add_argument("--out", required=True)
    val.add_argument("--dev-report", dest="dev_report",
                     help="development report.json for the drift summary")
    val.set_defaults(func=cmd_validate)

    rep = sub.add_parser("report", help="side-by-side metric table")
    rep.add_argument("reports", nargs="+", help="one or more report JSONs")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        _emit_error(exc, 1)
        return 1
    except NumericalError as exc:
        _emit_error(exc, 2)
        return 2


def _emit_error(exc: Exception, code: int) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc),
               "exit_code": code}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
