"""End-to-end command-line runs: artifacts, manifests, exit codes."""

import hashlib
import json
import subprocess
import sys

import pytest

from avassign.cli import main

SMALL_SYNTH = [
    "--set", "synth.num_scenes=6",
    "--set", "synth.frames_per_scene=4",
    "--set", "synth.speakers_range=[2,2]",
    "--set", "synth.feature_dim=16",
    "--set", "synth.latent_dim=4",
]
SMALL_MODEL = [
    "--set", "model.input_dim=16",
    "--set", "model.hidden=8",
    "--set", "model.num_layers=2",
    "--set", "model.k_dynamic=2",
]
SMALL_TRAIN = ["--set", "train.epochs=1"]


def run_gen(out, extra=()):
    return main(["gen", "--out", str(out), *SMALL_SYNTH, *extra])


def run_train(out, extra=()):
    return main(["train", "--out", str(out), *SMALL_MODEL, *SMALL_TRAIN, *extra])


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_gen_writes_dataset_and_manifest(tmp_path):
    out = tmp_path / "gen"
    assert run_gen(out) == 0
    data = manifest(out)
    assert data["command"] == "gen"
    assert data["config"]["synth"]["num_scenes"] == 6
    digest = hashlib.sha256((out / "dataset.jsonl").read_bytes()).hexdigest()
    assert data["artifacts"]["dataset.jsonl"] == "sha256:" + digest


def test_full_pipeline(tmp_path):
    out = tmp_path / "run"
    assert run_gen(out) == 0
    assert run_train(out) == 0
    assert (out / "checkpoint.avgc").exists()
    losses = json.loads((out / "loss_log.json").read_text())
    assert losses["step_losses"]
    assert main(["eval", "--out", str(out)]) == 0
    report = json.loads((out / "metrics.json").read_text())
    assert "overall_ap" in report
    assert (out / "metrics.txt").read_text().startswith("slice")
    lines = (out / "predictions.csv").read_text().strip().split("\n")
    assert lines[0] == "scene_id,t,speaker_id,score,label"
    assert len(lines) == 1 + report["records"]


def test_pipeline_is_deterministic(tmp_path):
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run_gen(out, ["--seed", "3"]) == 0
        assert run_train(out, ["--seed", "3"]) == 0
        assert main(["eval", "--out", str(out)]) == 0
        outputs.append((out / "metrics.json").read_bytes())
    assert outputs[0] == outputs[1]


def test_seed_flag_pins_generator_and_training(tmp_path):
    out = tmp_path / "seeded"
    assert run_gen(out, ["--seed", "11"]) == 0
    assert manifest(out)["config"]["synth"]["seed"] == 11
    assert run_train(out, ["--seed", "11"]) == 0
    assert manifest(out)["config"]["train"]["seed"] == 11


def test_config_file_sections(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"synth": {"num_scenes": 3, "feature_dim": 8, "latent_dim": 2}}))
    out = tmp_path / "fromfile"
    assert main(["gen", "--config", str(cfg), "--out", str(out)]) == 0
    assert manifest(out)["config"]["synth"]["num_scenes"] == 3


def test_override_beats_config_file(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"synth": {"num_scenes": 3, "feature_dim": 8, "latent_dim": 2}}))
    out = tmp_path / "override"
    assert main(["gen", "--config", str(cfg), "--out", str(out),
                 "--set", "synth.num_scenes=2"]) == 0
    assert manifest(out)["config"]["synth"]["num_scenes"] == 2


def test_unknown_config_key_fails_without_artifacts(tmp_path, capsys):
    out = tmp_path / "bad"
    assert run_gen(out, ["--set", "synth.bogus=1"]) == 1
    error = json.loads(capsys.readouterr().err)
    assert error["error"] == "config"
    assert "bogus" in error["message"]
    assert not out.exists()


def test_override_requires_known_section(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path / "x"), "--set", "nope.key=1"]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "config"


def test_override_requires_equals_sign(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path / "x"), "--set", "synth.seed"]) == 1
    capsys.readouterr()


def test_malformed_config_file(tmp_path, capsys):
    cfg = tmp_path / "broken.json"
    cfg.write_text("{not json")
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1
    capsys.readouterr()


def test_unknown_config_section(tmp_path, capsys):
    cfg = tmp_path / "sections.json"
    cfg.write_text(json.dumps({"synthh": {}}))
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1
    capsys.readouterr()


def test_eval_without_checkpoint(tmp_path, capsys):
    out = tmp_path / "empty"
    out.mkdir()
    assert main(["eval", "--out", str(out)]) == 1
    capsys.readouterr()


def test_train_without_dataset(tmp_path, capsys):
    assert run_train(tmp_path / "nodata") == 1
    capsys.readouterr()


def test_ablate_grid(tmp_path):
    out = tmp_path / "ablate"
    assert run_gen(out) == 0
    code = main([
        "ablate", "--out", str(out), *SMALL_MODEL, *SMALL_TRAIN,
        "--set", 'ablate.streams=["static_only","both"]',
    ])
    assert code == 0
    rows = json.loads((out / "ablation.json").read_text())
    assert [row["streams"] for row in rows] == ["static_only", "both"]
    table = (out / "ablation.txt").read_text()
    assert table.splitlines()[0].split() == ["streams", "ap"]


def test_ablate_needs_dimensions(tmp_path, capsys):
    out = tmp_path / "ablate"
    assert run_gen(out) == 0
    assert main(["ablate", "--out", str(out)]) == 1
    capsys.readouterr()


def test_inspect_graph_static_edges(tmp_path):
    out = tmp_path / "dot"
    assert run_gen(out, ["--set", "synth.frames_per_scene=2"]) == 0
    assert main(["inspect-graph", "--out", str(out), "--scene", "1"]) == 0
    text = (out / "graph.dot").read_text()
    assert text.startswith("digraph")
    # T=2, N=2: 14 cross edges plus 6 self-loops, no dynamic overlay.
    assert text.count("kind=static") == 20
    assert "kind=dynamic" not in text


def test_inspect_graph_traced_layer(tmp_path):
    out = tmp_path / "traced"
    assert run_gen(out) == 0
    assert run_train(out) == 0
    code = main([
        "inspect-graph", "--out", str(out), "--layer", "0",
        "--checkpoint", str(out / "checkpoint.avgc"),
    ])
    assert code == 0
    assert "kind=dynamic" in (out / "graph.dot").read_text()


def test_inspect_layer_needs_checkpoint(tmp_path, capsys):
    out = tmp_path / "traced"
    assert run_gen(out) == 0
    assert main(["inspect-graph", "--out", str(out), "--layer", "0"]) == 1
    capsys.readouterr()


def test_inspect_missing_scene(tmp_path, capsys):
    out = tmp_path / "dot"
    assert run_gen(out) == 0
    assert main(["inspect-graph", "--out", str(out), "--scene", "99"]) == 1
    capsys.readouterr()


def test_module_help_lists_subcommands():
    proc = subprocess.run(
        [sys.executable, "-m", "avassign.cli", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    for name in ("gen", "train", "eval", "ablate", "inspect-graph"):
        assert name in proc.stdout
