"""End-to-end CLI tests: artifacts, determinism, exit codes, config files."""

import json
import shutil
import subprocess

import numpy as np
import pytest

from cniprobe.cli import main
from cniprobe.tensorio import read_tensor, write_json

SMALL_SYNTH = [
    "--classes", "3", "--dim", "8", "--tokens", "2",
    "--train-per-class", "6", "--test-per-class", "6",
    "--prompts", "2", "--seed", "11",
]

FAST_TRAIN = ["--epochs", "6", "--batch-size", "4", "--eval-every", "3"]


@pytest.fixture()
def data_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--out", str(out)] + SMALL_SYNTH) == 0
    return out


def _tree_bytes(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def test_synth_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--out", str(a)] + SMALL_SYNTH) == 0
    assert main(["synth", "--out", str(b)] + SMALL_SYNTH) == 0
    assert _tree_bytes(a) == _tree_bytes(b)


def test_synth_writes_complete_experiment(data_dir):
    names = {p.name for p in data_dir.iterdir()}
    assert {"train_tokens.cnit", "train_labels.cnit", "test_tokens.cnit",
            "test_labels.cnit", "bank.cnit", "manifest.json",
            "config.json"} <= names
    doc = json.loads((data_dir / "manifest.json").read_text())
    assert doc["train"]["num_classes"] == 3
    assert doc["bank"]["embeddings"] == "bank.cnit"
    assert read_tensor(data_dir / "bank.cnit").shape == (2, 3, 8)
    assert "generated_at" not in doc  # reruns must stay byte-identical


def test_synth_rejects_single_class(tmp_path):
    code = main(["synth", "--out", str(tmp_path / "x"), "--classes", "1"])
    assert code == 2


def test_init_head_artifacts(data_dir, tmp_path):
    out = tmp_path / "head"
    args = ["init-head", "--manifest", str(data_dir / "manifest.json"),
            "--init", "partial", "--fraction", "0.5", "--init-seed", "3",
            "--out", str(out)]
    assert main(args) == 0
    W = read_tensor(out / "head_W.cnit")
    assert W.shape == (3, 8)
    doc = json.loads((out / "head.json").read_text())
    assert doc["mode"] == "partial"
    assert doc["num_text_rows"] == 1  # floor(0.5 * 3)
    assert len(doc["provenance"]) == 3


def test_eval_zero_shot_matches_cni_head_modulo_timestamp(data_dir, tmp_path):
    manifest = str(data_dir / "manifest.json")
    head = tmp_path / "head"
    assert main(["init-head", "--manifest", manifest, "--init", "cni",
                 "--out", str(head)]) == 0
    zs, cni = tmp_path / "zs", tmp_path / "cni"
    assert main(["eval", "--manifest", manifest, "--zero-shot",
                 "--out", str(zs)]) == 0
    assert main(["eval", "--manifest", manifest, "--params", str(head),
                 "--out", str(cni)]) == 0
    a = json.loads((zs / "eval.json").read_text())
    b = json.loads((cni / "eval.json").read_text())
    assert a["report"] == b["report"]
    assert set(a) == {"generated_at", "report"}


def test_eval_requires_exactly_one_mode(data_dir, tmp_path):
    manifest = str(data_dir / "manifest.json")
    assert main(["eval", "--manifest", manifest,
                 "--out", str(tmp_path / "e1")]) == 2
    assert main(["eval", "--manifest", manifest, "--zero-shot",
                 "--params", "somewhere",
                 "--out", str(tmp_path / "e2")]) == 2


def test_sample_shots_deterministic(data_dir, tmp_path):
    manifest = str(data_dir / "manifest.json")
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["sample-shots", "--manifest", manifest, "--k", "2",
                     "--seed", "3", "--out", str(out)]) == 0
    assert (a / "shots.json").read_bytes() == (b / "shots.json").read_bytes()
    doc = json.loads((a / "shots.json").read_text())
    assert len(doc["indices"]) == 6


def test_sample_shots_rejects_conflicting_flags(data_dir, tmp_path):
    code = main(["sample-shots", "--manifest", str(data_dir / "manifest.json"),
                 "--k", "2", "--fraction", "0.5",
                 "--out", str(tmp_path / "s")])
    assert code == 2


def test_train_outputs_and_metric_determinism(data_dir, tmp_path, capsys):
    manifest = str(data_dir / "manifest.json")
    outs = [tmp_path / "r1", tmp_path / "r2"]
    for out in outs:
        code = main(["train", "--manifest", manifest, "--init", "cni",
                     "--shots", "1", "--seed", "1", "--out", str(out)]
                    + FAST_TRAIN)
        assert code == 0
    printed = capsys.readouterr().out
    lines = [l for l in printed.splitlines() if l.startswith("final_top1=")]
    assert len(lines) == 2
    acc = float(lines[0].split("=", 1)[1])
    assert 0.0 <= acc <= 1.0
    assert (outs[0] / "metrics.csv").read_bytes() == \
        (outs[1] / "metrics.csv").read_bytes()
    for name in ("metrics.json", "summary.json", "config.json", "model.json",
                 "head.json"):
        assert (outs[0] / name).exists()
    for g in ("A", "a", "q", "W", "b"):
        assert (outs[0] / f"params_{g}.cnit").exists()
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert summary["final_top1"] == acc


def test_metrics_csv_has_pinned_columns(data_dir, tmp_path):
    manifest = str(data_dir / "manifest.json")
    out = tmp_path / "run"
    assert main(["train", "--manifest", manifest, "--out", str(out)]
                + FAST_TRAIN) == 0
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == "epoch,step,lr,loss_ce,loss_anchor,loss_distill,test_top1"


def test_train_config_echo_resolves_defaults(data_dir, tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--manifest", str(data_dir / "manifest.json"),
                 "--init", "random", "--out", str(out)] + FAST_TRAIN) == 0
    doc = json.loads((out / "config.json").read_text())
    assert doc["command"] == "train"
    assert doc["lr"] == 5e-3  # random-init default, resolved
    assert doc["policy"] == "PL"
    assert doc["epochs"] == 6


def test_config_file_and_flag_precedence(data_dir, tmp_path):
    manifest = str(data_dir / "manifest.json")
    cfg_path = tmp_path / "cfg.json"
    write_json(cfg_path, {"epochs": 4, "lr": 0.002, "batch-size": 4})
    out1 = tmp_path / "from_config"
    assert main(["train", "--manifest", manifest, "--config", str(cfg_path),
                 "--out", str(out1)]) == 0
    doc1 = json.loads((out1 / "config.json").read_text())
    assert doc1["epochs"] == 4 and doc1["lr"] == 0.002

    out2 = tmp_path / "flag_wins"
    assert main(["train", "--manifest", manifest, "--config", str(cfg_path),
                 "--epochs", "2", "--out", str(out2)]) == 0
    doc2 = json.loads((out2 / "config.json").read_text())
    assert doc2["epochs"] == 2 and doc2["lr"] == 0.002


def test_unknown_config_key_rejected(data_dir, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    write_json(cfg_path, {"learning_rate": 1.0})
    code = main(["train", "--manifest", str(data_dir / "manifest.json"),
                 "--config", str(cfg_path), "--out", str(tmp_path / "x")])
    assert code == 2


def test_distill_end_to_end(data_dir, tmp_path):
    manifest = str(data_dir / "manifest.json")
    teacher = tmp_path / "teacher"
    assert main(["train", "--manifest", manifest, "--policy", "ALL",
                 "--out", str(teacher)] + FAST_TRAIN) == 0
    student = tmp_path / "student"
    assert main(["distill", "--manifest", manifest, "--teacher", str(teacher),
                 "--shots", "1", "--out", str(student)] + FAST_TRAIN) == 0
    doc = json.loads((student / "config.json").read_text())
    assert doc["command"] == "distill"
    assert doc["distill_weight"] == 1.0
    csv = (student / "metrics.csv").read_text().splitlines()
    distill_col = csv[0].split(",").index("loss_distill")
    assert any(float(line.split(",")[distill_col]) > 0 for line in csv[1:])


def test_distill_missing_teacher_dir(data_dir, tmp_path):
    code = main(["distill", "--manifest", str(data_dir / "manifest.json"),
                 "--teacher", str(tmp_path / "nothing"),
                 "--out", str(tmp_path / "s")] + FAST_TRAIN)
    assert code == 3


def test_eval_accepts_trained_params(data_dir, tmp_path):
    manifest = str(data_dir / "manifest.json")
    run = tmp_path / "run"
    assert main(["train", "--manifest", manifest, "--out", str(run)]
                + FAST_TRAIN) == 0
    out = tmp_path / "ev"
    assert main(["eval", "--manifest", manifest, "--params", str(run),
                 "--out", str(out)]) == 0
    doc = json.loads((out / "eval.json").read_text())
    assert 0.0 <= doc["report"]["top1"] <= 1.0


def test_missing_manifest_is_data_error(tmp_path):
    code = main(["eval", "--manifest", str(tmp_path / "no.json"),
                 "--zero-shot", "--out", str(tmp_path / "e")])
    assert code == 3


def test_oversized_shot_request_is_data_error(data_dir, tmp_path):
    code = main(["train", "--manifest", str(data_dir / "manifest.json"),
                 "--shots", "100", "--out", str(tmp_path / "r")] + FAST_TRAIN)
    assert code == 3


def test_sweep_default_grid(data_dir, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CNI_PROBE_THREADS", "2")
    out = tmp_path / "sweep"
    cfg = tmp_path / "sweep.json"
    write_json(cfg, {"entries": [
        {"label": f"{mode}_{k}shot", "init": {"mode": mode},
         "train": {"shots": k, "epochs": 4, "batch_size": 4,
                   "eval_every": 2}}
        for k in (1, 2) for mode in ("cni", "random")
    ]})
    assert main(["sweep", "--manifest", str(data_dir / "manifest.json"),
                 "--seed", "1", "--config", str(cfg),
                 "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().strip().splitlines()
    assert lines[0] == "label,final_top1,error"
    assert len(lines) == 5
    assert [l.split(",")[0] for l in lines[1:]] == [
        "cni_1shot", "random_1shot", "cni_2shot", "random_2shot"]
    for line in lines[1:]:
        assert line.split(",")[2] == ""  # no errors
    assert "cni_1shot" in capsys.readouterr().out


@pytest.mark.parametrize("entry", [
    {"label": "x", "train": {"lr": 0.005}},          # should be base_lr
    {"label": "x", "train": {"loss": {"lam": 1.0}}},  # should be anchor_lambda
    {"label": "x", "init": {"kind": "cni"}},          # should be mode
])
def test_sweep_unknown_entry_key_is_config_error(data_dir, tmp_path, capsys, entry):
    cfg = tmp_path / "sweep.json"
    write_json(cfg, {"entries": [entry]})
    code = main(["sweep", "--manifest", str(data_dir / "manifest.json"),
                 "--config", str(cfg), "--out", str(tmp_path / "s")])
    assert code == 2
    assert "unknown key" in capsys.readouterr().err


def test_sweep_bad_thread_env(data_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("CNI_PROBE_THREADS", "lots")
    code = main(["sweep", "--manifest", str(data_dir / "manifest.json"),
                 "--out", str(tmp_path / "s")])
    assert code == 2


def test_console_script_installed():
    exe = shutil.which("cniprobe")
    if exe is None:
        pytest.skip("console script not on PATH")
    proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "synth" in proc.stdout
