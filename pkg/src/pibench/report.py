"""Report rendering: metric table in aligned-text, CSV and JSON forms,
per-model PR-curve files, and one self-contained SVG of all curves.

All outputs are byte-deterministic for a fixed (dataset, config): floats are
written with repr, JSON keys are sorted, and the SVG is generated with a
fixed hash salt and no timestamp.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict
from pathlib import Path

from . import staymetrics

SVG_HASHSALT = "pibench"


def _pct(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    return f"{100.0 * x:.2f}%"


def _num(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return None
    return float(x)


def report_payload(report) -> dict:
    def row_payload(row):
        return {
            "kind": row.kind,
            "hyperparameters": row.hyperparameters,
            "threshold": _num(row.threshold),
            "cv_mean_precision": _num(row.cv_mean),
            "test_precision_at_target": _num(row.test_precision),
            "test_sensitivity_at_threshold": _num(row.test_sensitivity),
            "sensitivity_at_reference": _num(row.sensitivity_at_reference),
        }

    return {
        "config": asdict(report.config),
        "dataset_summary": report.dataset_summary,
        "n_train_stays": report.n_train_stays,
        "n_test_stays": report.n_test_stays,
        "target_sensitivity": _num(report.config.target_sensitivity),
        "reference_precision": _num(report.reference_precision),
        "baseline": row_payload(report.baseline),
        "models": [row_payload(r) for r in report.rows],
        "best_kind": report.best_kind,
        "cost_reduction": _num(report.cost_reduction),
        "care_improvement": _num(report.care_improvement),
    }


def render_text(report) -> str:
    target = report.config.target_sensitivity
    ref = report.reference_precision
    header = ["model", f"precision @ {target:.0%} sens",
              f"sensitivity @ {ref:.2%} prec"]
    table = [header]
    for row in [report.baseline] + list(report.rows):
        table.append([row.kind, _pct(row.test_precision),
                      _pct(row.sensitivity_at_reference)])
    widths = [max(len(r[c]) for r in table) for c in range(3)]
    lines = []
    for i, r in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    lines.append("")
    lines.append(f"stays: {report.n_train_stays} train / "
                 f"{report.n_test_stays} test; dataset rows: "
                 f"{report.dataset_summary['rows']} "
                 f"({report.dataset_summary['positives']} positive days)")
    if report.rows:
        lines.append(f"best model: {report.best_kind}")
        lines.append(f"intervention cost reduction vs baseline: "
                     f"{_pct(report.cost_reduction)}")
        lines.append(f"care improvement at baseline precision: "
                     f"{_pct(report.care_improvement)}")
    return "\n".join(lines) + "\n"


def write_csv_table(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "threshold", "cv_mean_precision",
                    "test_precision_at_target",
                    "test_sensitivity_at_threshold",
                    "sensitivity_at_reference"])
        for row in [report.baseline] + list(report.rows):
            w.writerow([
                row.kind,
                repr(float(row.threshold)),
                "" if math.isnan(row.cv_mean) else repr(float(row.cv_mean)),
                repr(float(row.test_precision)),
                repr(float(row.test_sensitivity)),
                "" if math.isnan(row.sensitivity_at_reference)
                else repr(float(row.sensitivity_at_reference)),
            ])


def plot_curves(report, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": SVG_HASHSALT}):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        for row in [report.baseline] + list(report.rows):
            pts = row.curve.points
            sens = [p.sensitivity for p in pts]
            prec = [p.precision for p in pts]
            style = {"linestyle": "--", "color": "black"} \
                if row.kind == "braden" else {}
            ax.plot(sens, prec, label=row.kind, **style)
        ax.set_xlabel("sensitivity (stay level)")
        ax.set_ylabel("precision (stay level)")
        ax.set_xlim(0.0, 1.0)
        ax.set_ylim(0.0, 1.0)
        ax.legend(loc="upper right")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def emit_report(report, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(render_text(report), encoding="utf-8")
    write_csv_table(report, out_dir / "report.csv")
    payload = json.dumps(report_payload(report), sort_keys=True, indent=1)
    (out_dir / "report.json").write_text(payload + "\n", encoding="utf-8")
    curve_dir = out_dir / "curves"
    curve_dir.mkdir(exist_ok=True)
    for row in [report.baseline] + list(report.rows):
        staymetrics.write_curve(curve_dir / f"{row.kind}.csv", row.curve)
    plot_curves(report, out_dir / "pr_curves.svg")
