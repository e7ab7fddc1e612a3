"""Report rendering: text table, CSV, JSON payload, SVG determinism."""
import csv
import json
import math

from pibench.harness import EvaluationRow, ExperimentConfig, Report
from pibench.report import (emit_report, plot_curves, render_text,
                            report_payload, write_csv_table)
from pibench.staymetrics import StayScore, pr_curve


def tiny_report():
    base_curve = pr_curve([
        StayScore("a", (9.0,), True), StayScore("b", (4.0,), False),
        StayScore("c", (2.0,), True), StayScore("d", (1.0,), False)])
    model_curve = pr_curve([
        StayScore("a", (0.9,), True), StayScore("b", (0.6,), False),
        StayScore("c", (0.7,), True), StayScore("d", (0.1,), False)])
    baseline = EvaluationRow("braden", {}, 2.0, float("nan"), 0.5, 1.0, 1.0,
                             base_curve)
    row = EvaluationRow("gbdt", {"n_rounds": 5, "max_depth": 2,
                                 "learning_rate": 0.1, "subsample": 1.0},
                        0.7, 0.625, 1.0, 1.0, 1.0, model_curve)
    return Report(
        config=ExperimentConfig(models=["gbdt"]),
        dataset_summary={"rows": 8, "positives": 2, "stays": 4},
        n_train_stays=2, n_test_stays=2, reference_precision=0.5,
        baseline=baseline, rows=[row], cost_reduction=0.5,
        care_improvement=0.0, best_kind="gbdt")


def test_render_text_table():
    text = render_text(tiny_report())
    lines = text.splitlines()
    assert lines[0].split() == ["model", "precision", "@", "50%", "sens",
                                "sensitivity", "@", "50.00%", "prec"]
    assert lines[2].split() == ["braden", "50.00%", "100.00%"]
    assert lines[3].split() == ["gbdt", "100.00%", "100.00%"]
    assert "stays: 2 train / 2 test" in text
    assert "best model: gbdt" in text
    assert "cost reduction vs baseline: 50.00%" in text


def test_render_text_skips_model_lines_without_models():
    rep = tiny_report()
    rep.rows = []
    text = render_text(rep)
    assert "best model" not in text
    assert "cost reduction" not in text


def test_csv_table_fields(tmp_path):
    path = tmp_path / "report.csv"
    write_csv_table(tiny_report(), path)
    rows = list(csv.DictReader(path.open()))
    assert [r["model"] for r in rows] == ["braden", "gbdt"]
    assert rows[0]["cv_mean_precision"] == ""  # nan renders empty
    assert rows[1]["cv_mean_precision"] == "0.625"
    assert rows[1]["threshold"] == "0.7"
    assert rows[1]["test_precision_at_target"] == "1.0"


def test_json_payload_keys_and_nan_handling():
    payload = report_payload(tiny_report())
    assert set(payload) == {
        "config", "dataset_summary", "n_train_stays", "n_test_stays",
        "target_sensitivity", "reference_precision", "baseline", "models",
        "best_kind", "cost_reduction", "care_improvement"}
    assert payload["baseline"]["cv_mean_precision"] is None
    assert payload["models"][0]["kind"] == "gbdt"
    assert payload["models"][0]["hyperparameters"]["n_rounds"] == 5
    # nan never leaks into the JSON text
    text = json.dumps(payload, sort_keys=True)
    assert "NaN" not in text


def test_emit_report_file_set(tmp_path):
    emit_report(tiny_report(), tmp_path)
    names = sorted(p.relative_to(tmp_path).as_posix()
                   for p in tmp_path.rglob("*") if p.is_file())
    assert names == ["curves/braden.csv", "curves/gbdt.csv", "pr_curves.svg",
                     "report.csv", "report.json", "report.txt"]
    parsed = json.loads((tmp_path / "report.json").read_text())
    assert parsed["best_kind"] == "gbdt"


def test_svg_bytes_stable(tmp_path):
    rep = tiny_report()
    plot_curves(rep, tmp_path / "a.svg")
    plot_curves(rep, tmp_path / "b.svg")
    a = (tmp_path / "a.svg").read_bytes()
    assert a == (tmp_path / "b.svg").read_bytes()
    assert b"<svg" in a
    assert b"dc:date" not in a  # no embedded timestamp
