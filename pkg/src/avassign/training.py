"""Training loop and ablation grid runner.

One optimizer step covers a batch of scenes: optional off-screen speech
augmentation, speaker-group sampling, graph construction, one forward over
the disjoint union of all graphs, masked cross-entropy against the node
supervision targets, and an ADAM update.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, EmptyBatch, NumericsError
from .evaluation import evaluate, scene_graphs
from .graphs import GroupingMode, GroupingPolicy
from .model import (
    GraphBatch,
    ModelConfig,
    ModelState,
    Streams,
    batch_node_labels,
    forward_batch,
    init_model,
)
from .nn import adam_step, softmax_xent
from .synth import offscreen_augment


@dataclass
class TrainConfig:
    """Optimization, batching and augmentation settings."""

    lr: float = 3e-4
    epochs: int = 4
    batch_scenes: int = 8
    offscreen_p: float = 0.0
    grouping: GroupingPolicy = field(
        default_factory=lambda: GroupingPolicy(mode=GroupingMode.TRAIN_SAMPLE)
    )
    seed: int = 0
    window: int | None = None
    self_loops_only: bool = False
    offscreen_label_mode: str = "max_video"

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.batch_scenes < 1:
            raise ConfigError("batch_scenes must be at least 1")
        if not (0.0 <= self.offscreen_p <= 1.0):
            raise ConfigError("offscreen_p must lie in [0, 1]")
        if self.window is not None and self.window < 1:
            raise ConfigError("window must be at least 1")
        if self.offscreen_label_mode not in ("max_video", "speech"):
            raise ConfigError("offscreen_label_mode must be 'max_video' or 'speech'")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "epochs": self.epochs,
            "batch_scenes": self.batch_scenes,
            "offscreen_p": self.offscreen_p,
            "grouping": {
                "max_video_nodes": self.grouping.max_video_nodes,
                "mode": self.grouping.mode.value,
                "rng_seed": self.grouping.rng_seed,
            },
            "seed": self.seed,
            "window": self.window,
            "self_loops_only": self.self_loops_only,
            "offscreen_label_mode": self.offscreen_label_mode,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        data = dict(data)
        grouping = data.pop("grouping", None)
        if grouping is not None:
            unknown = set(grouping) - {"max_video_nodes", "mode", "rng_seed"}
            if unknown:
                raise ConfigError(f"unknown grouping keys: {sorted(unknown)}")
            grouping = GroupingPolicy(
                max_video_nodes=grouping.get("max_video_nodes", 4),
                mode=GroupingMode(grouping.get("mode", "train_sample")),
                rng_seed=grouping.get("rng_seed", 0),
            )
            data["grouping"] = grouping
        return cls(**data)


def train(
    model_config: ModelConfig, train_config: TrainConfig, scenes
) -> tuple[ModelState, dict]:
    """Train from random weights; returns the final state and the loss log.

    The log maps ``step_losses`` to one value per optimizer step and
    ``epoch_losses`` to per-epoch means.  A non-finite loss aborts with the
    offending epoch and batch in the error message.
    """
    if not scenes:
        raise EmptyBatch("training needs at least one scene")
    state = init_model(model_config, np.random.default_rng([train_config.seed, 0]))
    loop_rng = np.random.default_rng([train_config.seed, 1])
    policy = replace(train_config.grouping, mode=GroupingMode.TRAIN_SAMPLE)

    step_losses: list[float] = []
    epoch_losses: list[float] = []
    for epoch in range(train_config.epochs):
        order = loop_rng.permutation(len(scenes))
        epoch_values = []
        for batch_index, start in enumerate(range(0, len(scenes), train_config.batch_scenes)):
            picked = [scenes[i] for i in order[start : start + train_config.batch_scenes]]
            picked = offscreen_augment(
                picked,
                train_config.offscreen_p,
                loop_rng,
                audio_label_mode=train_config.offscreen_label_mode,
            )
            graphs = []
            for scene in picked:
                graphs.extend(
                    scene_graphs(
                        scene,
                        policy,
                        train_config.window,
                        train_config.self_loops_only,
                        rng=loop_rng,
                    )
                )
            batch = GraphBatch.from_graphs(graphs)
            logits = forward_batch(batch, state, training=True)
            targets, mask = batch_node_labels(
                batch, supervise_audio=model_config.supervise_audio
            )
            loss = softmax_xent(logits, targets, mask)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericsError(
                    f"non-finite loss in epoch {epoch}, batch {batch_index}"
                )
            state.store.zero_grads()
            loss.backward()
            adam_step(state.store, state.store.grads(), train_config.lr)
            step_losses.append(value)
            epoch_values.append(value)
        epoch_losses.append(float(np.mean(epoch_values)))
    return state, {"step_losses": step_losses, "epoch_losses": epoch_losses}


ABLATION_DIMS = ("num_lans", "video_nodes", "depth", "width", "k", "streams")


def ablation_grid(
    dims: dict,
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_scenes,
    eval_scenes,
) -> tuple[list[dict], str]:
    """Train and evaluate the cross product of the given dimension values.

    Recognized dimensions: ``num_lans`` (frames per window), ``video_nodes``
    (speakers per group), ``depth``, ``width``, ``k`` and ``streams``.  Each
    row records the setting plus the overall AP.
    """
    if not dims:
        raise ConfigError("ablation grid needs at least one dimension")
    unknown = set(dims) - set(ABLATION_DIMS)
    if unknown:
        raise ConfigError(f"unknown ablation dimensions: {sorted(unknown)}")
    for name, values in dims.items():
        if not isinstance(values, (list, tuple)) or not values:
            raise ConfigError(f"ablation dimension {name!r} must be a non-empty list")

    names = [d for d in ABLATION_DIMS if d in dims]
    rows = []
    for combo in itertools.product(*(dims[n] for n in names)):
        setting = dict(zip(names, combo))
        mc_kwargs = {}
        if "depth" in setting:
            mc_kwargs["num_layers"] = setting["depth"]
        if "width" in setting:
            mc_kwargs["hidden"] = setting["width"]
        if "k" in setting:
            mc_kwargs["k_dynamic"] = setting["k"]
        if "streams" in setting:
            mc_kwargs["streams"] = Streams(setting["streams"])
        mc = replace(model_config, **mc_kwargs) if mc_kwargs else model_config

        tc = train_config
        if "num_lans" in setting:
            tc = replace(tc, window=setting["num_lans"])
        if "video_nodes" in setting:
            tc = replace(
                tc, grouping=replace(tc.grouping, max_video_nodes=setting["video_nodes"])
            )

        state, _ = train(mc, tc, train_scenes)
        _, report = evaluate(
            state,
            eval_scenes,
            policy=replace(tc.grouping, mode=GroupingMode.INFER_SPLIT),
            window=tc.window,
            self_loops_only=tc.self_loops_only,
            seed=tc.seed,
        )
        row = {
            name: (value.value if isinstance(value, Streams) else value)
            for name, value in setting.items()
        }
        row["ap"] = report["overall_ap"]
        rows.append(row)
    return rows, render_ablation_table(rows, names)


def render_ablation_table(rows: list[dict], names: list[str]) -> str:
    """Fixed-width text table: one row per setting, AP in the last column."""
    header = [*names, "ap"]
    body = []
    for row in rows:
        cells = [str(row[n]) for n in names]
        ap = row["ap"]
        cells.append("undefined" if ap is None else f"{ap:.4f}")
        body.append(cells)
    widths = [
        max(len(header[c]), *(len(r[c]) for r in body)) if body else len(header[c])
        for c in range(len(header))
    ]
    lines = ["  ".join(h.ljust(widths[c]) for c, h in enumerate(header)).rstrip()]
    lines.append("  ".join("-" * widths[c] for c in range(len(header))))
    for cells in body:
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(cells)).rstrip())
    return "\n".join(lines) + "\n"
