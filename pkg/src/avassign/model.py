"""Two-stream edge-convolution network over assignation graphs.

Node features are first reduced by per-modality linear maps (one for audio,
one for video).  Each subsequent layer runs edge convolution twice: once on
the static graph edges and once on a dynamic edge set recomputed from the
current features as k nearest neighbors.  The two streams are fused after
every layer, and a single shared linear head scores every node with two
logits (not speaking / speaking).

An edge message for edge ``(j, i)`` is ``Linear(ReLU(BN([x_i, x_j - x_i])))``
with a pre-activation block, and a node's output is the channel-wise max over
its incoming messages.  Self-loops contribute the message ``[x_i, 0]``, so a
node without neighbors degenerates to a per-node transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import checkpoint as ckpt
from .autodiff import Tensor, add, concat, gather_rows, mul, relu, segment_max, sub
from .errors import ConfigError, GraphError, ShapeError
from .graphs import AssignationGraph, Modality, knn_edges
from .nn import ParamStore, batchnorm, linear


class Streams(Enum):
    STATIC_ONLY = "static_only"
    DYNAMIC_ONLY = "dynamic_only"
    BOTH = "both"


FUSIONS = ("sum", "mean", "max")


@dataclass
class ModelConfig:
    """Architecture hyperparameters of the two-stream network."""

    num_layers: int = 4
    hidden: int = 64
    k_dynamic: int = 3
    input_dim: int = 512
    supervise_audio: bool = True
    streams: Streams = Streams.BOTH
    fusion: str = "sum"

    def __post_init__(self):
        if isinstance(self.streams, str):
            self.streams = Streams(self.streams)
        if self.num_layers < 1:
            raise ConfigError("num_layers must be at least 1")
        if self.hidden < 1:
            raise ConfigError("hidden must be at least 1")
        if self.k_dynamic < 1:
            raise ConfigError("k_dynamic must be at least 1")
        if self.fusion not in FUSIONS:
            raise ConfigError(f"fusion must be one of {FUSIONS}")

    def to_dict(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "hidden": self.hidden,
            "k_dynamic": self.k_dynamic,
            "input_dim": self.input_dim,
            "supervise_audio": self.supervise_audio,
            "streams": self.streams.value,
            "fusion": self.fusion,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class ForwardTrace:
    """Per-layer record of the dynamic edge sets chosen during a forward pass."""

    dynamic_edges: list[list[tuple[int, int]]] = field(default_factory=list)


def _stream_names(config: ModelConfig) -> list[str]:
    if config.streams is Streams.STATIC_ONLY:
        return ["static"]
    if config.streams is Streams.DYNAMIC_ONLY:
        return ["dynamic"]
    return ["static", "dynamic"]


def init_model(config: ModelConfig, rng, dtype=np.float32) -> "ModelState":
    """Randomly initialize all parameters and buffers of the network."""
    store = ParamStore()
    buffers: dict[str, np.ndarray] = {}

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)

    for name in ("audio", "video"):
        store.add(f"reduce.{name}.W", glorot(config.input_dim, config.hidden))
        store.add(f"reduce.{name}.b", np.zeros(config.hidden, dtype=dtype))

    for stream in ("static", "dynamic"):
        for layer in range(config.num_layers):
            prefix = f"{stream}.layer{layer}"
            width = 2 * config.hidden
            store.add(f"{prefix}.bn.gamma", np.ones(width, dtype=dtype))
            store.add(f"{prefix}.bn.beta", np.zeros(width, dtype=dtype))
            buffers[f"{prefix}.bn.running_mean"] = np.zeros(width, dtype=dtype)
            buffers[f"{prefix}.bn.running_var"] = np.ones(width, dtype=dtype)
            store.add(f"{prefix}.lin.W", glorot(width, config.hidden))
            store.add(f"{prefix}.lin.b", np.zeros(config.hidden, dtype=dtype))

    # Small head keeps the initial logits near zero, i.e. near-uniform softmax.
    store.add("head.W", (0.01 * rng.standard_normal((config.hidden, 2))).astype(dtype))
    store.add("head.b", np.zeros(2, dtype=dtype))
    return ModelState(store=store, buffers=buffers, config=config)


@dataclass
class ModelState:
    """All learnable tensors, batch-norm buffers and the architecture config."""

    store: ParamStore
    buffers: dict[str, np.ndarray]
    config: ModelConfig

    def save(self, path) -> None:
        ckpt.save_state(path, self.store, self.buffers, {"model": self.config.to_dict()})

    @classmethod
    def load(cls, path, dtype=np.float32) -> "ModelState":
        store, buffers, config = ckpt.load_state(path, dtype=dtype)
        if "model" not in config:
            raise ConfigError("checkpoint lacks a model config")
        return cls(store=store, buffers=buffers, config=ModelConfig.from_dict(config["model"]))


@dataclass
class GraphBatch:
    """Disjoint union of assignation graphs in flat array form."""

    features: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    audio_mask: np.ndarray
    labels: np.ndarray
    speaker_ids: np.ndarray
    timestamps: np.ndarray
    component: np.ndarray
    ranges: list[tuple[int, int]]

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @classmethod
    def from_graphs(cls, graphs: list[AssignationGraph]) -> "GraphBatch":
        if not graphs:
            raise GraphError("cannot batch zero graphs")
        features, src, dst = [], [], []
        audio_mask, labels, speakers, times, comp = [], [], [], [], []
        ranges = []
        offset = 0
        for g_index, graph in enumerate(graphs):
            for pos, node in enumerate(graph.nodes):
                if node.node_id != pos:
                    raise GraphError("graph node ids must equal node positions")
            dims = {n.feature.shape[0] for n in graph.nodes}
            if len(dims) > 1:
                raise ShapeError("node feature dimensions differ within a graph")
            for u, v in graph.edges:
                if not (0 <= u < graph.num_nodes and 0 <= v < graph.num_nodes):
                    raise GraphError(f"edge ({u}, {v}) references a missing node")
                src.append(u + offset)
                dst.append(v + offset)
            for node in graph.nodes:
                features.append(node.feature)
                audio_mask.append(node.modality is Modality.AUDIO)
                labels.append(node.label)
                speakers.append(-1 if node.speaker_id is None else node.speaker_id)
                times.append(node.timestamp)
                comp.append(g_index)
            ranges.append((offset, offset + graph.num_nodes))
            offset += graph.num_nodes
        return cls(
            features=np.stack(features),
            src=np.asarray(src, dtype=np.int64),
            dst=np.asarray(dst, dtype=np.int64),
            audio_mask=np.asarray(audio_mask, dtype=bool),
            labels=np.asarray(labels, dtype=np.int64),
            speaker_ids=np.asarray(speakers, dtype=np.int64),
            timestamps=np.asarray(times, dtype=np.int64),
            component=np.asarray(comp, dtype=np.int64),
            ranges=ranges,
        )


def edge_conv(x: Tensor, src, dst, params, training: bool) -> Tensor:
    """One edge-convolution: pre-activation MLP per edge, max per node."""
    gamma, beta, rmean, rvar, weight, bias = params
    xi = gather_rows(x, dst)
    xj = gather_rows(x, src)
    messages = concat([xi, sub(xj, xi)], axis=1)
    messages = batchnorm(messages, gamma, beta, rmean, rvar, training)
    messages = linear(relu(messages), weight, bias)
    return segment_max(messages, dst, x.data.shape[0])


def _conv_params(state: ModelState, stream: str, layer: int):
    prefix = f"{stream}.layer{layer}"
    return (
        state.store[f"{prefix}.bn.gamma"],
        state.store[f"{prefix}.bn.beta"],
        state.buffers[f"{prefix}.bn.running_mean"],
        state.buffers[f"{prefix}.bn.running_var"],
        state.store[f"{prefix}.lin.W"],
        state.store[f"{prefix}.lin.b"],
    )


def dynamic_pairs(features: np.ndarray, ranges, k: int) -> list[tuple[int, int]]:
    """Nearest-neighbor edges computed independently inside each component."""
    pairs: list[tuple[int, int]] = []
    for start, end in ranges:
        if end - start < 2:
            continue
        for j, i in knn_edges(features[start:end], k):
            pairs.append((j + start, i + start))
    return pairs


def _fuse(a: Tensor, b: Tensor, how: str) -> Tensor:
    if how == "sum":
        return add(a, b)
    if how == "mean":
        return mul(add(a, b), np.asarray(0.5, dtype=a.data.dtype))
    # Elementwise max via a + relu(b - a).
    return add(a, relu(sub(b, a)))


def forward_batch(
    batch: GraphBatch, state: ModelState, training: bool = False, trace: ForwardTrace | None = None
) -> Tensor:
    """Logits for every node of a batched disjoint union of graphs."""
    config = state.config
    if batch.features.shape[1] != config.input_dim:
        raise ShapeError(
            f"node features have dim {batch.features.shape[1]}, expected {config.input_dim}"
        )
    dtype = state.store["head.W"].data.dtype
    x = Tensor(batch.features.astype(dtype, copy=False))

    amask = Tensor(batch.audio_mask.astype(dtype)[:, None])
    vmask = Tensor((~batch.audio_mask).astype(dtype)[:, None])
    ha = linear(x, state.store["reduce.audio.W"], state.store["reduce.audio.b"])
    hv = linear(x, state.store["reduce.video.W"], state.store["reduce.video.b"])
    h = add(mul(amask, ha), mul(vmask, hv))

    n = batch.num_nodes
    loops = np.arange(n, dtype=np.int64)
    for layer in range(config.num_layers):
        static_out = dynamic_out = None
        if config.streams is not Streams.DYNAMIC_ONLY:
            static_out = edge_conv(
                h, batch.src, batch.dst, _conv_params(state, "static", layer), training
            )
        if config.streams is not Streams.STATIC_ONLY:
            pairs = dynamic_pairs(h.data, batch.ranges, config.k_dynamic)
            if trace is not None:
                trace.dynamic_edges.append(pairs)
            dsrc = np.concatenate([np.asarray([p[0] for p in pairs], dtype=np.int64), loops])
            ddst = np.concatenate([np.asarray([p[1] for p in pairs], dtype=np.int64), loops])
            dynamic_out = edge_conv(
                h, dsrc, ddst, _conv_params(state, "dynamic", layer), training
            )
        if static_out is not None and dynamic_out is not None:
            h = _fuse(static_out, dynamic_out, config.fusion)
        else:
            h = static_out if static_out is not None else dynamic_out

    return linear(h, state.store["head.W"], state.store["head.b"])


def forward(
    graph: AssignationGraph,
    state: ModelState,
    training: bool = False,
    trace: ForwardTrace | None = None,
) -> np.ndarray:
    """Logits aligned with the graph's node ids, as a plain array."""
    batch = GraphBatch.from_graphs([graph])
    return forward_batch(batch, state, training=training, trace=trace).data


def batch_node_labels(
    batch: GraphBatch, supervise_audio: bool = True, use_stored_audio: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Supervision targets and loss mask for every node of a batch.

    A video node is supervised with its own label.  An audio node's target is
    the max over the video labels sharing its component and timestamp (zero
    when the frame has no video nodes), unless ``use_stored_audio`` asks for
    the label carried by the node itself.  With ``supervise_audio=False``
    audio nodes are masked out of the loss.
    """
    targets = batch.labels.copy()
    mask = np.ones(batch.num_nodes, dtype=bool)
    if not use_stored_audio:
        frame_max: dict[tuple[int, int], int] = {}
        for idx in np.flatnonzero(~batch.audio_mask):
            key = (int(batch.component[idx]), int(batch.timestamps[idx]))
            frame_max[key] = max(frame_max.get(key, 0), int(batch.labels[idx]))
        for idx in np.flatnonzero(batch.audio_mask):
            key = (int(batch.component[idx]), int(batch.timestamps[idx]))
            targets[idx] = frame_max.get(key, 0)
    if not supervise_audio:
        mask[batch.audio_mask] = False
    return targets, mask


def node_labels(
    graph: AssignationGraph, supervise_audio: bool = True, use_stored_audio: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Targets and mask for a single graph (see :func:`batch_node_labels`)."""
    return batch_node_labels(
        GraphBatch.from_graphs([graph]),
        supervise_audio=supervise_audio,
        use_stored_audio=use_stored_audio,
    )
