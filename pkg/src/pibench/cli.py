"""Command-line entry points.

Subcommands cover each stage (generate, ingest-check, extract, train,
evaluate, baseline-braden, report) plus `run-all`, which chains generation,
extraction and the full experiment into one output directory.

On failure the process exits nonzero and writes a single JSON object to
stderr with a stable error category, so callers can branch on the kind of
failure without parsing prose.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from . import cohort, featurelab, harness, staymetrics, synthgen
from .pipeline import ArtifactError, FittedPipeline, fit_pipeline
from .staymetrics import MetricError

DEFAULT_HP = {
    "logistic": {"lam": 0.01},
    "forest": {"n_trees": 200, "max_depth": None, "min_leaf": 5,
               "feature_fraction": "sqrt"},
    "gbdt": {"n_rounds": 200, "max_depth": 3, "learning_rate": 0.1,
             "subsample": 0.8},
}

# checked in order: subclasses before their bases
_ERROR_CATEGORIES = (
    (cohort.FormatError, "format"),
    (cohort.IntegrityError, "integrity"),
    (cohort.CohortError, "cohort"),
    (featurelab.SchemaError, "schema"),
    (ArtifactError, "artifact"),
    (MetricError, "metric"),
    (synthgen.ConfigError, "config"),
    (harness.ConfigError, "config"),
    (FileNotFoundError, "io"),
    (OSError, "io"),
    (json.JSONDecodeError, "format"),
    (ValueError, "value"),
)


def error_category(exc) -> str:
    for etype, category in _ERROR_CATEGORIES:
        if isinstance(exc, etype):
            return category
    return "internal"


def _emit(payload: dict):
    print(json.dumps(payload, sort_keys=True, indent=1))


def _parse_models(text):
    if text is None:
        return None
    return [m.strip() for m in text.split(",") if m.strip()]


# ---------------------------------------------------------------------------
# subcommand bodies

def cmd_generate(args) -> int:
    cfg = synthgen.GeneratorConfig.from_file(args.config) if args.config \
        else synthgen.GeneratorConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    summary = synthgen.generate(cfg, args.out)
    _emit(summary)
    return 0


def cmd_ingest_check(args) -> int:
    store = cohort.ingest(args.data)
    filtered = cohort.apply_filters(store)
    _emit({
        "counts": store.counts(),
        "filtered_counts": filtered.counts(),
        "removal_report": filtered.removal_report,
        "dropped_out_of_window_events": store.dropped_events,
        "stay_days": len(cohort.enumerate_stay_days(filtered)),
    })
    return 0


def cmd_extract(args) -> int:
    store = cohort.apply_filters(cohort.ingest(args.data))
    specs = featurelab.load_specs(args.specs) if args.specs else None
    ds = featurelab.build_dataset(store, specs)
    featurelab.write_dataset(ds, args.out)
    _emit(ds.summary())
    return 0


def cmd_train(args) -> int:
    ds = featurelab.read_dataset(args.dataset)
    hp = dict(DEFAULT_HP[args.model])
    if args.hp:
        hp.update(json.loads(args.hp))
    pipe = fit_pipeline(ds.specs, ds.columns(), ds.labels().astype(float),
                        args.model, hp, args.seed)
    pipe.save(args.out)
    _emit({"model": args.model, "hyperparameters": hp,
           "rows": len(ds.examples), "artifact": str(args.out)})
    return 0


def _evaluate_scores(ds, day_scores, target):
    scores = staymetrics.group_scores(ds.stay_ids(), day_scores,
                                      ds.day_indices(), ds.stay_labels)
    curve = staymetrics.pr_curve(scores)
    point = staymetrics.precision_at_sensitivity(curve, target)
    conf = staymetrics.confusion(scores, point.threshold)
    payload = {
        "stays": len(scores),
        "positive_stays": sum(s.stay_label for s in scores),
        "target_sensitivity": target,
        "threshold": point.threshold,
        "sensitivity": conf.sensitivity,
        "precision": conf.precision,
    }
    return payload, curve


def cmd_evaluate(args) -> int:
    pipe = FittedPipeline.load(args.artifact)
    ds = featurelab.read_dataset(args.dataset)
    payload, curve = _evaluate_scores(ds, pipe.predict_proba(ds.columns()),
                                      args.target)
    payload["model"] = pipe.metadata.get("model_kind")
    if args.out:
        staymetrics.write_curve(args.out, curve)
        payload["curve"] = str(args.out)
    _emit(payload)
    return 0


def cmd_baseline_braden(args) -> int:
    ds = featurelab.read_dataset(args.dataset)
    scores = staymetrics.braden_scores_from_rows(
        ds.stay_ids(), ds.day_indices(), ds.latest_braden_column(),
        ds.stay_labels)
    curve = staymetrics.pr_curve(scores)
    point = staymetrics.precision_at_sensitivity(curve, args.target)
    conf = staymetrics.confusion(scores, point.threshold)
    payload = {
        "model": "braden",
        "stays": len(scores),
        "positive_stays": sum(s.stay_label for s in scores),
        "target_sensitivity": args.target,
        "threshold": point.threshold,
        "sensitivity": conf.sensitivity,
        "precision": conf.precision,
    }
    if args.out:
        staymetrics.write_curve(args.out, curve)
        payload["curve"] = str(args.out)
    _emit(payload)
    return 0


def _experiment_config(args, dataset=None):
    cfg = harness.ExperimentConfig.from_file(args.config) if args.config \
        else harness.ExperimentConfig()
    if dataset is not None:
        cfg.dataset = str(dataset)
    elif getattr(args, "dataset", None):
        cfg.dataset = args.dataset
    if args.seed is not None:
        cfg.seed = args.seed
    models = _parse_models(args.models)
    if models is not None:
        cfg.models = models
    cfg.validate()
    return cfg


def _report_summary(report) -> dict:
    from .report import report_payload
    payload = report_payload(report)
    return {
        "baseline_precision": payload["baseline"]["test_precision_at_target"],
        "best_kind": payload["best_kind"],
        "best_precision": max(
            (m["test_precision_at_target"] for m in payload["models"]
             if m["test_precision_at_target"] is not None), default=None),
        "cost_reduction": payload["cost_reduction"],
        "care_improvement": payload["care_improvement"],
    }


def cmd_report(args) -> int:
    cfg = _experiment_config(args)
    report = harness.run_experiment(cfg, out_dir=args.out, jobs=args.jobs)
    _emit(_report_summary(report))
    return 0


def cmd_run_all(args) -> int:
    gen_payload, exp_payload = {}, {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            payload = yaml.safe_load(fh) or {}
        if not isinstance(payload, dict):
            raise harness.ConfigError(f"{args.config}: expected a mapping")
        gen_payload = payload.get("generator", {}) or {}
        exp_payload = payload.get("experiment", {}) or {}

    gen_cfg = synthgen.GeneratorConfig.from_dict(gen_payload)
    try:
        exp_cfg = harness.ExperimentConfig(**exp_payload)
    except TypeError as exc:
        raise harness.ConfigError(str(exc)) from None
    if args.seed is not None:
        gen_cfg.seed = args.seed
        exp_cfg.seed = args.seed
    models = _parse_models(args.models)
    if models is not None:
        exp_cfg.models = models

    out = Path(args.out)
    data_dir = out / "data"
    gen_summary = synthgen.generate(gen_cfg, data_dir)

    store = cohort.apply_filters(cohort.ingest(data_dir))
    ds = featurelab.build_dataset(store)
    dataset_path = out / "dataset.csv"
    featurelab.write_dataset(ds, dataset_path)

    exp_cfg.dataset = str(dataset_path)
    exp_cfg.validate()
    report = harness.run_experiment(exp_cfg, out_dir=out, jobs=args.jobs)
    summary = {"generated": gen_summary, "dataset": ds.summary(),
               "out": str(out)}
    summary.update(_report_summary(report))
    _emit(summary)
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pibench",
        description="pressure-injury risk prediction bench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic cohort")
    p.add_argument("--config", help="generator config (YAML)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest-check",
                       help="parse and filter a cohort, print counts")
    p.add_argument("data", help="cohort directory")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("extract", help="build the day-example dataset")
    p.add_argument("data", help="cohort directory")
    p.add_argument("--specs", help="feature spec file (YAML); default roster "
                                   "when omitted")
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="fit one model on a full dataset")
    p.add_argument("dataset")
    p.add_argument("--model", required=True, choices=sorted(DEFAULT_HP))
    p.add_argument("--hp", help="hyperparameter overrides as JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="artifact path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate",
                       help="stay-level metrics for a saved artifact")
    p.add_argument("artifact")
    p.add_argument("dataset")
    p.add_argument("--target", type=float, default=0.5,
                   help="target sensitivity (default 0.5)")
    p.add_argument("--out", help="write the PR curve here (CSV)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline-braden",
                       help="stay-level metrics for the Braden baseline")
    p.add_argument("dataset")
    p.add_argument("--target", type=float, default=0.5)
    p.add_argument("--out", help="write the PR curve here (CSV)")
    p.set_defaults(func=cmd_baseline_braden)

    p = sub.add_parser("report", help="run the experiment on a dataset")
    p.add_argument("--config", help="experiment config (YAML)")
    p.add_argument("--dataset", help="dataset path (overrides config)")
    p.add_argument("--models", help="comma-separated model kinds")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run-all",
                       help="generate, extract and report in one pass")
    p.add_argument("--config", help="YAML with optional 'generator' and "
                                    "'experiment' sections")
    p.add_argument("--models", help="comma-separated model kinds")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run_all)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        message = json.dumps(
            {"category": error_category(exc), "error": str(exc)},
            sort_keys=True)
        print(message, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
