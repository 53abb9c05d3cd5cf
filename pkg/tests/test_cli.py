"""End-to-end command-line pipeline on a tiny synthetic corpus."""

import json
import subprocess
import sys

import numpy as np
import pytest

from mammossl import load_manifest, read_image
from mammossl.cli import main


def run_cli(capsys, *argv):
    rc = main([str(a) for a in argv])
    captured = capsys.readouterr()
    assert rc == 0, captured.err
    return json.loads(captured.out)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic target/source corpora plus two trained run results."""
    root = tmp_path_factory.mktemp("cli")
    target = root / "target"
    source = root / "source"
    for out, seed, shift in ((target, 21, 0.0), (source, 22, 0.4)):
        rc = main(
            [
                "synth", "--out", str(out), "--patients", "14",
                "--images-per-patient", "3", "--positive-rate", "0.3",
                "--size", "16", "--seed", str(seed), "--domain-shift", str(shift),
            ]
        )
        assert rc == 0

    base = dict(
        n_labeled=8,
        negative_fraction=0.75,
        n_subsets=2,
        epochs=2,
        pretrain_epochs=2,
        input_height=16,
        input_width=16,
        hidden_sizes=[8],
        learning_rate=0.01,
        weight_decay=0.0,
        master_seed=3,
        target_manifest=str(target / "manifest.csv"),
        source_manifest=str(source / "manifest.csv"),
    )
    results = {}
    for name in ("SSDL", "S+FT"):
        cfg_path = root / f"{name.lower().replace('+', '_')}.json"
        cfg_path.write_text(json.dumps({**base, "configuration": name}))
        out = root / f"result_{name.lower().replace('+', '_')}.json"
        rc = main(
            [
                "train", "--config", str(cfg_path), "--out", str(out),
                "--save-params", str(root / f"params_{name.lower().replace('+', '_')}"),
            ]
        )
        assert rc == 0
        results[name] = out
    return {"root": root, "target": target, "source": source, "results": results}


def test_synth_writes_loadable_corpus(workspace, capsys):
    manifest = workspace["target"] / "manifest.csv"
    records = load_manifest(manifest)
    assert len(records) == 42
    img = read_image(workspace["target"] / records[0].image_path)
    assert img.shape == (16, 16)
    doc = run_cli(
        capsys, "synth", "--out", workspace["root"] / "again",
        "--patients", 3, "--size", 16, "--positive-rate", 0.34, "--seed", 9,
    )
    assert doc["images"] == 9
    assert doc["positiveImages"] > 0


def test_preprocess_writes_provenance(workspace, capsys):
    out = workspace["root"] / "processed"
    doc = run_cli(
        capsys, "preprocess", "--manifest", workspace["target"] / "manifest.csv",
        "--out", out, "--rolling-ball-radius", 3, "--resize", 12,
    )
    assert doc["images"] == 42
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["rollingBallRadius"] == 3
    assert prov["resize"] == 12
    assert prov["skipBackgroundRemoval"] is False
    assert len(prov["images"]) == 42
    sample = next(iter(prov["images"].values()))
    assert 0.0 <= sample["threshold"] <= 1.0
    assert 0.0 < sample["foregroundFraction"] <= 1.0
    records = load_manifest(out / "manifest.csv")
    resized = read_image(out / records[0].image_path)
    assert resized.shape == (12, 12)


def test_preprocess_skip_background(workspace, capsys):
    out = workspace["root"] / "processed_skip"
    run_cli(
        capsys, "preprocess", "--manifest", workspace["target"] / "manifest.csv",
        "--out", out, "--skip-background-removal",
    )
    records = load_manifest(out / "manifest.csv")
    original = read_image(workspace["target"] / records[0].image_path)
    copied = read_image(out / records[0].image_path)
    np.testing.assert_array_equal(copied, original)
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["images"][records[0].image_path]["threshold"] is None


def test_split_is_patient_disjoint(workspace, capsys):
    out = workspace["root"] / "split.json"
    doc = run_cli(
        capsys, "split", "--manifest", workspace["target"] / "manifest.csv",
        "--seed", 4, "--out", out,
    )
    assert json.loads(out.read_text()) == doc
    records = load_manifest(workspace["target"] / "manifest.csv")
    owner = {r.image_path: r.patient_id for r in records}
    train_patients = {owner[p] for p in doc["train"]}
    test_patients = {owner[p] for p in doc["test"]}
    assert not train_patients & test_patients
    assert len(doc["train"]) + len(doc["test"]) == 42


def test_train_result_and_params(workspace):
    doc = json.loads(workspace["results"]["SSDL"].read_text())
    assert doc["configuration"] == "SSDL"
    assert doc["source"] == "none"
    assert len(doc["reports"]) == 2
    assert set(doc["reports"][0]) >= {"g_mean", "accuracy", "degenerate"}
    params_dir = workspace["root"] / "params_ssdl"
    assert (params_dir / "subset0.json").is_file()
    assert (params_dir / "subset1.json").is_file()


def test_train_stdout_summary(workspace, capsys):
    cfg = workspace["root"] / "ssdl.json"
    doc = run_cli(capsys, "train", "--config", cfg, "--subsets", 1, "--seed", 8)
    assert doc["result"]["master_seed"] == 8
    assert len(doc["result"]["reports"]) == 1
    assert 0.0 <= doc["gMeanMean"] <= 1.0
    assert doc["gMeanStd"] == 0.0


def test_eval_reports_metrics(workspace, capsys):
    doc = run_cli(
        capsys, "eval", "--params", workspace["root"] / "params_ssdl" / "subset0.json",
        "--manifest", workspace["target"] / "manifest.csv",
    )
    assert doc["nImages"] == 42
    assert set(doc["metrics"]) == {
        "accuracy", "recall", "specificity", "precision", "f2",
        "balanced_accuracy", "g_mean",
    }
    assert isinstance(doc["degenerate"], list)


def test_dedims_separates_shifted_corpus(workspace, capsys):
    same = run_cli(
        capsys, "dedims", "--a", workspace["target"] / "manifest.csv",
        "--b", workspace["target"] / "manifest.csv",
        "--batches", 3, "--batch-size", 10, "--seed", 1,
    )
    cross = run_cli(
        capsys, "dedims", "--a", workspace["target"] / "manifest.csv",
        "--b", workspace["source"] / "manifest.csv",
        "--batches", 3, "--batch-size", 10, "--seed", 1,
    )
    assert same["encoding"] == "sorted-quantile"
    assert len(same["perBatch"]) == 3
    assert same["batches"] == 3 and same["batchSize"] == 10
    assert cross["mean"] >= 0.0 and same["mean"] >= 0.0


def test_compare_two_runs(workspace, capsys):
    doc = run_cli(
        capsys, "compare", "--a", workspace["results"]["SSDL"],
        "--b", workspace["results"]["S+FT"], "--alternative", "two-sided",
    )
    assert doc["config_a"] == "SSDL"
    assert doc["config_b"] == "S+FT"
    assert doc["metric"] == "g_mean"
    assert 0.0 < doc["p_value"] <= 1.0
    assert doc["n_effective"] <= 2
    assert doc["significant"] == (doc["p_value"] < 0.1)


def test_report_is_byte_deterministic(workspace, capsys):
    args = [
        "report", "--results", workspace["results"]["SSDL"],
        workspace["results"]["S+FT"], "--metric", "g_mean",
        "--alternative", "two-sided",
    ]
    doc1 = run_cli(capsys, *args, "--out", workspace["root"] / "rep1")
    doc2 = run_cli(capsys, *args, "--out", workspace["root"] / "rep2")
    assert doc1["comparisons"] == doc2["comparisons"] == 1
    csv1 = (workspace["root"] / "rep1.csv").read_bytes()
    csv2 = (workspace["root"] / "rep2.csv").read_bytes()
    assert csv1 == csv2
    header = csv1.decode().splitlines()[0]
    assert header.startswith("n_labels,metric,")
    json1 = json.loads((workspace["root"] / "rep1.json").read_text())
    assert json1["format"] == "mammossl-report"
    assert len(json1["runs"]) == 2


def test_error_paths_return_two(workspace, capsys):
    assert main(["train", "--config", str(workspace["root"] / "missing.json")]) == 2
    assert "error:" in capsys.readouterr().err

    bad = workspace["root"] / "bad.json"
    bad.write_text('{"configuration": "SSDL", "nope": 1}')
    assert main(["train", "--config", str(bad)]) == 2
    assert "nope" in capsys.readouterr().err

    no_target = workspace["root"] / "no_target.json"
    no_target.write_text('{"configuration": "SSDL"}')
    assert main(["train", "--config", str(no_target)]) == 2
    assert "target_manifest" in capsys.readouterr().err

    assert main(
        ["eval", "--params", str(workspace["root"] / "nothing.json"),
         "--manifest", str(workspace["target"] / "manifest.csv")]
    ) == 2
    capsys.readouterr()


def test_no_subcommand_exits_with_usage():
    with pytest.raises(SystemExit):
        main([])


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "mammossl", "--version"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "mammossl" in proc.stdout
