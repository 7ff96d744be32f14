"""Assignation graphs over per-frame audio and video feature nodes.

A local graph ties the single audio node of one frame to every candidate
speaker's video node with bidirectional edges.  A temporal graph stacks the
local graphs of a window and adds temporal edges under two rules: adjacent
audio nodes are linked in both directions, and adjacent video nodes are
linked in both directions only when they carry the same speaker identity.
No cross-modal edge ever spans timestamps.  Every node also carries a
self-loop so isolated nodes still aggregate their own message.

The dynamic counterpart of the static topology is :func:`knn_edges`, which
connects each node to its nearest neighbors in feature space and is meant to
be recomputed from the current features at every network layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import InvalidFrame, InvalidWindow


class Modality(Enum):
    AUDIO = "audio"
    VIDEO = "video"


class GraphKind(Enum):
    LAN = "lan"
    TAN = "tan"


class GroupingMode(Enum):
    TRAIN_SAMPLE = "train_sample"
    INFER_SPLIT = "infer_split"


@dataclass(eq=False)
class FeatureNode:
    """One audio or video feature vector with identity, timestamp and label."""

    node_id: int
    modality: Modality
    timestamp: int
    speaker_id: int | None
    feature: np.ndarray
    label: int

    def __post_init__(self):
        self.feature = np.asarray(self.feature)
        if self.feature.ndim != 1:
            raise InvalidFrame("node feature must be a 1-D vector")
        if self.modality is Modality.AUDIO and self.speaker_id is not None:
            raise InvalidFrame("audio nodes carry no speaker id")
        if self.modality is Modality.VIDEO and self.speaker_id is None:
            raise InvalidFrame("video nodes require a speaker id")
        if self.label not in (0, 1):
            raise InvalidFrame(f"label must be 0 or 1, got {self.label!r}")

    def __eq__(self, other):
        if not isinstance(other, FeatureNode):
            return NotImplemented
        return (
            self.node_id == other.node_id
            and self.modality is other.modality
            and self.timestamp == other.timestamp
            and self.speaker_id == other.speaker_id
            and self.label == other.label
            and np.array_equal(self.feature, other.feature)
        )


@dataclass
class AssignationGraph:
    """Node list plus directed static edges for a local or temporal graph."""

    nodes: list[FeatureNode]
    edges: list[tuple[int, int]]
    kind: GraphKind

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def feature_matrix(self) -> np.ndarray:
        return np.stack([n.feature for n in self.nodes]) if self.nodes else np.zeros((0, 0))

    def video_nodes(self) -> list[FeatureNode]:
        return [n for n in self.nodes if n.modality is Modality.VIDEO]


@dataclass
class GroupingPolicy:
    """How candidate speakers are packed into graphs of bounded width."""

    max_video_nodes: int = 4
    mode: GroupingMode = GroupingMode.INFER_SPLIT
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_video_nodes < 1:
            raise InvalidFrame("max_video_nodes must be at least 1")


def _check_frame(audio: FeatureNode, videos) -> None:
    if audio.modality is not Modality.AUDIO:
        raise InvalidFrame("first node of a frame must be the audio node")
    for v in videos:
        if v.modality is not Modality.VIDEO:
            raise InvalidFrame("a frame admits exactly one audio node")
        if v.timestamp != audio.timestamp:
            raise InvalidFrame(
                f"mixed timestamps in frame: {v.timestamp} vs {audio.timestamp}"
            )


def build_lan(audio: FeatureNode, videos) -> AssignationGraph:
    """Local graph: one audio node linked both ways to each video node."""
    _check_frame(audio, videos)
    nodes = [replace(audio, node_id=0)]
    nodes += [replace(v, node_id=i + 1) for i, v in enumerate(videos)]
    edges = [(i, i) for i in range(len(nodes))]
    for i in range(1, len(nodes)):
        edges.append((0, i))
        edges.append((i, 0))
    return AssignationGraph(nodes=nodes, edges=edges, kind=GraphKind.LAN)


def build_tan(frames) -> AssignationGraph:
    """Temporal graph over a window of frames ``[(audio, videos), ...]``.

    The edge set is the union of every frame's local edges, audio-audio links
    between timestamp-adjacent frames, and video-video links between
    timestamp-adjacent nodes of the same speaker.  Frames whose timestamps
    differ by more than one simply get no temporal link.
    """
    if len(frames) < 1:
        raise InvalidWindow("a window needs at least one frame")
    nodes: list[FeatureNode] = []
    edges: list[tuple[int, int]] = []
    frame_index: list[tuple[int, int, dict[int, int]]] = []  # (t, audio_id, speaker->id)
    prev_t = None
    for audio, videos in frames:
        _check_frame(audio, videos)
        if prev_t is not None and audio.timestamp <= prev_t:
            raise InvalidWindow(
                f"frame timestamps must strictly increase ({audio.timestamp} after {prev_t})"
            )
        prev_t = audio.timestamp
        audio_id = len(nodes)
        nodes.append(replace(audio, node_id=audio_id))
        speaker_ids: dict[int, int] = {}
        edges.append((audio_id, audio_id))
        for v in videos:
            vid = len(nodes)
            nodes.append(replace(v, node_id=vid))
            speaker_ids[v.speaker_id] = vid
            edges.append((vid, vid))
            edges.append((audio_id, vid))
            edges.append((vid, audio_id))
        frame_index.append((audio.timestamp, audio_id, speaker_ids))

    for (t0, a0, sp0), (t1, a1, sp1) in zip(frame_index, frame_index[1:]):
        if t1 - t0 != 1:
            continue
        edges.append((a0, a1))
        edges.append((a1, a0))
        for speaker, v0 in sp0.items():
            if speaker in sp1:
                v1 = sp1[speaker]
                edges.append((v0, v1))
                edges.append((v1, v0))
    return AssignationGraph(nodes=nodes, edges=edges, kind=GraphKind.TAN)


def knn_edges(features, k: int) -> list[tuple[int, int]]:
    """Directed edges from each node's k nearest neighbors to the node.

    Distances are Euclidean; ties are broken toward the smaller node index.
    With fewer than ``k`` other nodes, a node connects to all of them, so the
    in-degree of node ``i`` is always ``min(k, num_nodes - 1)``.  Self-loops
    are never part of the returned set.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    x = np.asarray(features)
    if x.ndim != 2:
        raise ValueError("features must be a [num_nodes, dim] matrix")
    n = x.shape[0]
    if n < 1:
        raise ValueError("at least one node required")
    if n == 1:
        return []

    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    k_eff = min(k, n - 1)
    edges = []
    for i in range(n):
        for j in order[i, :k_eff]:
            edges.append((int(j), i))
    return edges


def group_speakers(videos, policy: GroupingPolicy, rng=None) -> list[list[FeatureNode]]:
    """Partition or sample video nodes into groups of bounded speaker count.

    Grouping is decided over speaker identities, using the identities present
    at the center timestamp when ``videos`` spans a window; the chosen groups
    are then applied to every frame, so a group holds all nodes of its
    identities.  ``InferSplit`` chunks the ascending identity list into
    disjoint groups covering every speaker.  ``TrainSample`` returns a single
    group: everyone when they fit, otherwise every active speaker that fits
    plus uniformly sampled silent ones, or a uniform sample when nobody is
    active.
    """
    if not videos:
        return [[]]
    if rng is None:
        rng = np.random.default_rng(policy.rng_seed)

    timestamps = sorted({v.timestamp for v in videos})
    center_t = timestamps[len(timestamps) // 2]
    ids = sorted({v.speaker_id for v in videos if v.timestamp == center_t})

    if policy.mode is GroupingMode.INFER_SPLIT:
        id_groups = [
            ids[i : i + policy.max_video_nodes]
            for i in range(0, len(ids), policy.max_video_nodes)
        ]
    else:
        active = sorted(
            {v.speaker_id for v in videos if v.label == 1 and v.speaker_id in set(ids)}
        )
        if len(ids) <= policy.max_video_nodes:
            chosen = ids
        elif len(active) >= policy.max_video_nodes:
            chosen = active[: policy.max_video_nodes]
        elif active:
            silent = [s for s in ids if s not in set(active)]
            extra = rng.choice(
                np.asarray(silent), size=policy.max_video_nodes - len(active), replace=False
            )
            chosen = sorted(active + [int(s) for s in extra])
        else:
            chosen = sorted(
                int(s)
                for s in rng.choice(
                    np.asarray(ids), size=policy.max_video_nodes, replace=False
                )
            )
        id_groups = [list(chosen)]

    out = []
    for group in id_groups:
        members = set(group)
        out.append([v for v in videos if v.speaker_id in members])
    return out


def graph_to_dot(graph: AssignationGraph, dynamic_edges=None) -> str:
    """Render a graph in DOT form for visual debugging.

    Node labels read ``modality:speaker:timestamp:label`` and every edge
    carries a ``kind`` attribute, ``static`` for the construction edges and
    ``dynamic`` for edges passed in from a nearest-neighbor stream.
    """
    lines = ["digraph assignation {"]
    for node in graph.nodes:
        speaker = "-" if node.speaker_id is None else str(node.speaker_id)
        label = f"{node.modality.value}:{speaker}:{node.timestamp}:{node.label}"
        lines.append(f'  n{node.node_id} [label="{label}"];')
    for src, dst in graph.edges:
        lines.append(f"  n{src} -> n{dst} [kind=static];")
    for src, dst in dynamic_edges or []:
        lines.append(f"  n{src} -> n{dst} [kind=dynamic, color=red];")
    lines.append("}")
    return "\n".join(lines) + "\n"
