"""Command-line entry point: gen, train, eval, ablate, inspect-graph.

Configuration is a JSON file with optional sections ``synth``, ``model``,
``train``, ``ablate`` and ``paths``; ``--set section.key=value`` overrides
individual entries and ``--seed`` pins both the generator and training
seeds.  Every run writes a ``manifest.json`` with the fully resolved config
and SHA-256 hashes of the artifacts it produced.

Exit codes: 1 for configuration problems (reported as one JSON line on
stderr), 2 for numeric failures during training.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, NumericsError, ParseError
from .evaluation import evaluate, render_metrics_table, scene_graphs, write_predictions_csv
from .graphs import GroupingMode, graph_to_dot
from .model import ForwardTrace, ModelConfig, ModelState, Streams, forward
from .synth import SynthConfig, generate, read_dataset, write_dataset
from .training import TrainConfig, ablation_grid, train

SECTIONS = ("synth", "model", "train", "ablate", "paths")
PATH_KEYS = ("dataset", "checkpoint", "train_dataset", "eval_dataset")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="avassign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("gen", "generate a synthetic scene dataset"),
        ("train", "train a model on a dataset"),
        ("eval", "evaluate a checkpoint on a dataset"),
        ("ablate", "train and evaluate a grid of settings"),
        ("inspect-graph", "write one scene's graph as DOT"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", default=None, help="JSON config file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="generator and training seed")
        sp.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config entry, e.g. synth.noise_sigma=0.1",
        )
        if name == "inspect-graph":
            sp.add_argument("--scene", type=int, default=0, help="scene id to render")
            sp.add_argument(
                "--layer", type=int, default=None, help="include this layer's dynamic edges"
            )
            sp.add_argument("--checkpoint", default=None, help="checkpoint for dynamic edges")
    return parser


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"config file is not valid JSON: {exc.msg}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(config) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return config


def _apply_overrides(config: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        if parts[0] not in SECTIONS:
            raise ConfigError(f"override key {key!r} does not start with a config section")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override key {key!r} descends into a non-object")
        node[parts[-1]] = value
    return config


def _resolve(args) -> dict:
    config = _load_config_file(args.config)
    config = _apply_overrides(config, args.overrides)
    if args.seed is not None:
        config.setdefault("synth", {})["seed"] = args.seed
        config.setdefault("train", {})["seed"] = args.seed
    paths = config.get("paths", {})
    if not isinstance(paths, dict):
        raise ConfigError("paths section must be an object")
    unknown = set(paths) - set(PATH_KEYS)
    if unknown:
        raise ConfigError(f"unknown path keys: {sorted(unknown)}")
    return config


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return "sha256:" + digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, resolved: dict, artifacts: list[Path]) -> None:
    manifest = {
        "command": command,
        "config": resolved,
        "artifacts": {p.name: _sha256(p) for p in artifacts},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _resolved_sections(config, synth=None, model=None, train_cfg=None, paths=None) -> dict:
    resolved = {}
    if synth is not None:
        resolved["synth"] = synth.to_dict()
    if model is not None:
        resolved["model"] = model.to_dict()
    if train_cfg is not None:
        resolved["train"] = train_cfg.to_dict()
    if "ablate" in config:
        resolved["ablate"] = config["ablate"]
    if paths:
        resolved["paths"] = {k: str(v) for k, v in paths.items()}
    return resolved


def _dataset_path(config: dict, out_dir: Path, key: str = "dataset") -> Path:
    paths = config.get("paths", {})
    if key in paths:
        return Path(paths[key])
    if key in ("train_dataset", "eval_dataset") and "dataset" in paths:
        return Path(paths["dataset"])
    return out_dir / "dataset.jsonl"


def _checkpoint_path(config: dict, out_dir: Path) -> Path:
    paths = config.get("paths", {})
    if "checkpoint" in paths:
        return Path(paths["checkpoint"])
    return out_dir / "checkpoint.avgc"


def _check_feature_dim(scenes, model_config: ModelConfig) -> None:
    for scene in scenes:
        for frame in scene.frames:
            dim = frame.audio.feature.shape[0]
            if dim != model_config.input_dim:
                raise ConfigError(
                    f"dataset feature dim {dim} does not match model input_dim "
                    f"{model_config.input_dim}"
                )
            return


def _cmd_gen(args, config: dict) -> int:
    synth = SynthConfig.from_dict(config.get("synth", {}))
    scenes = generate(synth)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = out_dir / "dataset.jsonl"
    write_dataset(scenes, dataset, config=synth)
    _write_manifest(
        out_dir,
        "gen",
        _resolved_sections(config, synth=synth, paths={"dataset": dataset}),
        [dataset],
    )
    return 0


def _cmd_train(args, config: dict) -> int:
    model_config = ModelConfig.from_dict(config.get("model", {}))
    train_config = TrainConfig.from_dict(config.get("train", {}))
    out_dir = Path(args.out)
    dataset = _dataset_path(config, out_dir)
    scenes = read_dataset(dataset)
    if not scenes:
        raise ConfigError(f"dataset {dataset} holds no scenes")
    _check_feature_dim(scenes, model_config)
    state, log = train(model_config, train_config, scenes)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / "checkpoint.avgc"
    state.save(checkpoint)
    loss_log = out_dir / "loss_log.json"
    loss_log.write_text(json.dumps(log, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _write_manifest(
        out_dir,
        "train",
        _resolved_sections(
            config,
            model=model_config,
            train_cfg=train_config,
            paths={"dataset": dataset, "checkpoint": checkpoint},
        ),
        [checkpoint, loss_log],
    )
    return 0


def _cmd_eval(args, config: dict) -> int:
    train_config = TrainConfig.from_dict(config.get("train", {}))
    out_dir = Path(args.out)
    checkpoint = _checkpoint_path(config, out_dir)
    state = ModelState.load(checkpoint)
    dataset = _dataset_path(config, out_dir, key="eval_dataset")
    scenes = read_dataset(dataset)
    if not scenes:
        raise ConfigError(f"dataset {dataset} holds no scenes")
    records, report = evaluate(
        state,
        scenes,
        policy=replace(train_config.grouping, mode=GroupingMode.INFER_SPLIT),
        window=train_config.window,
        self_loops_only=train_config.self_loops_only,
        seed=train_config.seed,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = out_dir / "metrics.json"
    metrics.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    table = out_dir / "metrics.txt"
    table.write_text(render_metrics_table(report), encoding="utf-8")
    predictions = out_dir / "predictions.csv"
    write_predictions_csv(records, predictions)
    _write_manifest(
        out_dir,
        "eval",
        _resolved_sections(
            config,
            model=state.config,
            train_cfg=train_config,
            paths={"dataset": dataset, "checkpoint": checkpoint},
        ),
        [metrics, table, predictions],
    )
    return 0


def _cmd_ablate(args, config: dict) -> int:
    if "ablate" not in config or not config["ablate"]:
        raise ConfigError("ablate needs an 'ablate' config section with grid dimensions")
    model_config = ModelConfig.from_dict(config.get("model", {}))
    train_config = TrainConfig.from_dict(config.get("train", {}))
    out_dir = Path(args.out)
    train_path = _dataset_path(config, out_dir, key="train_dataset")
    eval_path = _dataset_path(config, out_dir, key="eval_dataset")
    train_scenes = read_dataset(train_path)
    if not train_scenes:
        raise ConfigError(f"dataset {train_path} holds no scenes")
    eval_scenes = train_scenes if eval_path == train_path else read_dataset(eval_path)
    _check_feature_dim(train_scenes, model_config)
    rows, table_text = ablation_grid(
        config["ablate"], model_config, train_config, train_scenes, eval_scenes
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    rows_path = out_dir / "ablation.json"
    rows_path.write_text(json.dumps(rows, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    table_path = out_dir / "ablation.txt"
    table_path.write_text(table_text, encoding="utf-8")
    _write_manifest(
        out_dir,
        "ablate",
        _resolved_sections(
            config,
            model=model_config,
            train_cfg=train_config,
            paths={"train_dataset": train_path, "eval_dataset": eval_path},
        ),
        [rows_path, table_path],
    )
    return 0


def _cmd_inspect(args, config: dict) -> int:
    train_config = TrainConfig.from_dict(config.get("train", {}))
    out_dir = Path(args.out)
    dataset = _dataset_path(config, out_dir)
    scenes = read_dataset(dataset)
    matches = [s for s in scenes if s.scene_id == args.scene]
    if not matches:
        raise ConfigError(f"scene {args.scene} not found in {dataset}")
    policy = replace(train_config.grouping, mode=GroupingMode.INFER_SPLIT)
    graphs = scene_graphs(
        matches[0], policy, train_config.window, train_config.self_loops_only
    )
    if not graphs:
        raise ConfigError(f"scene {args.scene} yields no graphs")
    graph = graphs[0]

    dynamic_edges = None
    if args.layer is not None:
        if args.checkpoint is None:
            raise ConfigError("--layer needs --checkpoint to run a traced forward pass")
        state = ModelState.load(args.checkpoint)
        if state.config.streams is Streams.STATIC_ONLY:
            raise ConfigError("checkpointed model has no dynamic stream to trace")
        trace = ForwardTrace()
        forward(graph, state, training=False, trace=trace)
        if not (0 <= args.layer < len(trace.dynamic_edges)):
            raise ConfigError(
                f"--layer must lie in [0, {len(trace.dynamic_edges) - 1}]"
            )
        dynamic_edges = trace.dynamic_edges[args.layer]

    out_dir.mkdir(parents=True, exist_ok=True)
    dot_path = out_dir / "graph.dot"
    dot_path.write_text(graph_to_dot(graph, dynamic_edges=dynamic_edges), encoding="utf-8")
    _write_manifest(
        out_dir,
        "inspect-graph",
        _resolved_sections(config, train_cfg=train_config, paths={"dataset": dataset}),
        [dot_path],
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _resolve(args)
        handler = {
            "gen": _cmd_gen,
            "train": _cmd_train,
            "eval": _cmd_eval,
            "ablate": _cmd_ablate,
            "inspect-graph": _cmd_inspect,
        }[args.command]
        return handler(args, config)
    except (ConfigError, ParseError, OSError) as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(json.dumps({"error": "numerics", "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
