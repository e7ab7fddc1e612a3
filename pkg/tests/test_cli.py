"""Command-line interface: full command chain, JSON contract, exit codes."""
import json

import pytest
import yaml

from pibench.cli import error_category, main
from pibench.cohort import FormatError, IntegrityError
from pibench.featurelab import sidecar_path
from pibench.pipeline import ArtifactError
from pibench.staymetrics import MetricError
from pibench.synthgen import ConfigError


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def last_json(text):
    return json.loads(text)


@pytest.fixture(scope="module")
def chain_dir(tmp_path_factory):
    """generate -> extract once; later tests reuse the artifacts."""
    root = tmp_path_factory.mktemp("chain")
    assert main(["generate", "--seed", "7", "--out", str(root / "data")]) == 0
    return root


def write_small_gen_config(path, n_patients, seed):
    path.write_text(yaml.safe_dump({"n_patients": n_patients, "seed": seed}))
    return path


def test_generate_emits_summary(tmp_path, capsys):
    cfg = write_small_gen_config(tmp_path / "gen.yaml", 60, 5)
    code, out, err = run_cli(capsys, "generate", "--config", str(cfg),
                             "--out", str(tmp_path / "data"))
    assert code == 0 and err == ""
    summary = last_json(out)
    assert summary["patients"] == 60
    assert (tmp_path / "data" / "events.csv").exists()
    assert (tmp_path / "data" / "oracle.csv").exists()


def test_generate_seed_flag_overrides_config(tmp_path, capsys):
    cfg = write_small_gen_config(tmp_path / "gen.yaml", 40, 1)
    code1, out1, _ = run_cli(capsys, "generate", "--config", str(cfg),
                             "--seed", "2", "--out", str(tmp_path / "a"))
    code2, out2, _ = run_cli(capsys, "generate", "--config", str(cfg),
                             "--seed", "2", "--out", str(tmp_path / "b"))
    assert code1 == code2 == 0
    assert out1 == out2
    assert (tmp_path / "a" / "events.csv").read_bytes() == \
        (tmp_path / "b" / "events.csv").read_bytes()


def test_ingest_check_counts(chain_dir, capsys):
    code, out, err = run_cli(capsys, "ingest-check", str(chain_dir / "data"))
    assert code == 0, err
    payload = last_json(out)
    assert payload["dropped_out_of_window_events"] == 0
    assert payload["removal_report"] == {"underage_stays": 0,
                                         "no_braden_stays": 0}
    assert payload["stay_days"] > 0
    assert payload["counts"]["events"] >= payload["filtered_counts"]["events"]


def test_extract_then_train_then_evaluate(chain_dir, capsys):
    dataset = chain_dir / "dataset.csv"
    code, out, err = run_cli(capsys, "extract", str(chain_dir / "data"),
                             "--out", str(dataset))
    assert code == 0, err
    summary = last_json(out)
    assert summary["rows"] > 0 and summary["positives"] > 0
    assert dataset.exists()
    assert sidecar_path(dataset).exists()

    artifact = chain_dir / "model.json"
    code, out, err = run_cli(
        capsys, "train", str(dataset), "--model", "logistic",
        "--hp", json.dumps({"lam": 0.05}), "--seed", "3",
        "--out", str(artifact))
    assert code == 0, err
    payload = last_json(out)
    assert payload["hyperparameters"] == {"lam": 0.05}
    assert artifact.exists()

    curve_path = chain_dir / "model_curve.csv"
    code, out, err = run_cli(capsys, "evaluate", str(artifact), str(dataset),
                             "--out", str(curve_path))
    assert code == 0, err
    payload = last_json(out)
    assert payload["model"] == "logistic"
    assert payload["target_sensitivity"] == 0.5
    assert payload["sensitivity"] >= 0.5
    assert 0.0 <= payload["precision"] <= 1.0
    assert curve_path.exists()


def test_baseline_braden_command(chain_dir, capsys):
    dataset = chain_dir / "dataset.csv"
    if not dataset.exists():
        assert main(["extract", str(chain_dir / "data"),
                     "--out", str(dataset)]) == 0
        capsys.readouterr()
    code, out, err = run_cli(capsys, "baseline-braden", str(dataset))
    assert code == 0, err
    payload = last_json(out)
    assert payload["model"] == "braden"
    assert payload["sensitivity"] >= 0.5


def test_run_all_bundle(tmp_path, capsys):
    cfg = tmp_path / "all.yaml"
    cfg.write_text(yaml.safe_dump({
        "generator": {"n_patients": 150, "seed": 3},
        "experiment": {"models": ["logistic"], "cv_folds": 2,
                       "search_samples": 2, "seed": 3},
    }))
    out_dir = tmp_path / "out"
    code, out, err = run_cli(capsys, "run-all", "--config", str(cfg),
                             "--out", str(out_dir))
    assert code == 0, err
    payload = last_json(out)
    assert payload["generated"]["patients"] == 150
    assert payload["best_kind"] == "logistic"
    assert payload["baseline_precision"] is not None
    for rel in ("data/events.csv", "dataset.csv", "report.json",
                "report.txt", "report.csv", "pr_curves.svg",
                "curves/braden.csv", "curves/logistic.csv",
                "models/logistic.json"):
        assert (out_dir / rel).exists(), rel


def test_report_errors_as_json_on_stderr(tmp_path, capsys):
    code, out, err = run_cli(capsys, "ingest-check", str(tmp_path / "nope"))
    assert code == 1 and out == ""
    payload = json.loads(err)
    assert payload["category"] == "cohort"
    assert "patients.csv" in payload["error"]


def test_config_errors_categorized(tmp_path, capsys):
    bad = tmp_path / "gen.yaml"
    bad.write_text("n_patients: 0\n")
    code, _, err = run_cli(capsys, "generate", "--config", str(bad),
                           "--out", str(tmp_path / "d"))
    assert code == 1
    assert json.loads(err)["category"] == "config"


def test_argparse_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert "invalid choice" in capsys.readouterr().err


def test_error_category_mapping():
    assert error_category(FormatError("f", 1, "c", "x")) == "format"
    assert error_category(IntegrityError("x")) == "integrity"
    assert error_category(MetricError("x")) == "metric"
    assert error_category(ArtifactError("x")) == "artifact"
    assert error_category(ConfigError("x")) == "config"
    assert error_category(FileNotFoundError("x")) == "io"
    assert error_category(RuntimeError("x")) == "internal"
