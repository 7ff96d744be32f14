"""Average precision and checkpoint evaluation over scene datasets.

Evaluation runs the network in eval mode (batch-norm running statistics),
splits each window's speakers into disjoint groups, and scores every video
node exactly once.  The shared audio node is forwarded once per group; its
per-pass scores are averaged for the report but never enter the video
ranking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, UndefinedMetric
from .graphs import (
    AssignationGraph,
    GroupingMode,
    GroupingPolicy,
    build_lan,
    build_tan,
    group_speakers,
)
from .model import GraphBatch, ModelState, forward_batch
from .nn import softmax_probs

EVAL_CHUNK_GRAPHS = 64


@dataclass
class PredictionRecord:
    """Score of one video node: softmax probability of "speaking"."""

    scene_id: int
    timestamp: int
    speaker_id: int
    score: float
    label: int


def average_precision(records) -> float:
    """Non-interpolated AP over records, ties broken by stable input order."""
    labels = np.asarray([r.label for r in records], dtype=np.int64)
    scores = np.asarray([r.score for r in records], dtype=np.float64)
    positives = int(labels.sum())
    if positives == 0:
        raise UndefinedMetric("average precision is undefined without positives")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    hits = np.cumsum(ranked)
    precision = hits / np.arange(1, len(ranked) + 1)
    return float((precision * ranked).sum() / positives)


def _ap_or_none(records) -> float | None:
    try:
        return average_precision(records)
    except UndefinedMetric:
        return None


def window_partition(frames: list, window: int | None) -> list[list]:
    """Split a scene's frames into consecutive chunks of at most ``window``."""
    if not frames:
        return []
    if window is None:
        return [frames]
    if window < 1:
        raise ConfigError("window must be at least 1")
    return [frames[i : i + window] for i in range(0, len(frames), window)]


def strip_to_self_loops(graph: AssignationGraph) -> AssignationGraph:
    """Drop every edge except the self-loops; isolates nodes for baselines."""
    return replace(graph, edges=[(i, i) for i in range(graph.num_nodes)])


def scene_graphs(
    scene, policy: GroupingPolicy, window: int | None, self_loops_only: bool = False, rng=None
) -> list[AssignationGraph]:
    """Graphs for one scene: one per (window, speaker group)."""
    graphs = []
    for frames in window_partition(scene.frames, window):
        videos = [v for frame in frames for v in frame.videos]
        for group in group_speakers(videos, policy, rng=rng):
            if not group:
                continue
            ids = {node.speaker_id for node in group}
            pairs = [
                (frame.audio, [v for v in frame.videos if v.speaker_id in ids])
                for frame in frames
            ]
            if len(pairs) == 1:
                graph = build_lan(pairs[0][0], pairs[0][1])
            else:
                graph = build_tan(pairs)
            if self_loops_only:
                graph = strip_to_self_loops(graph)
            graphs.append(graph)
    return graphs


def _bucket(num_faces: int) -> str:
    if num_faces <= 1:
        return "1"
    if num_faces == 2:
        return "2"
    return "3+"


def evaluate(
    state: ModelState,
    scenes,
    *,
    policy: GroupingPolicy | None = None,
    window: int | None = None,
    self_loops_only: bool = False,
    seed: int | None = None,
) -> tuple[list[PredictionRecord], dict]:
    """Score a dataset and build the metrics report.

    Returns the per-video-node records and a JSON-ready report with the
    overall AP, a breakdown by number of visible faces, and the averaged
    audio-node AP.  Zero-positive slices report ``null`` rather than 0.
    """
    if policy is None:
        policy = GroupingPolicy()
    policy = replace(policy, mode=GroupingMode.INFER_SPLIT)

    faces_at: dict[tuple[int, int], int] = {}
    audio_label: dict[tuple[int, int], int] = {}
    for scene in scenes:
        for frame in scene.frames:
            faces_at[(scene.scene_id, frame.t)] = len(frame.videos)
            labels = [v.label for v in frame.videos]
            audio_label[(scene.scene_id, frame.t)] = max(labels) if labels else 0
        for frame in scene.frames:
            if frame.videos and frame.videos[0].feature.shape[0] != state.config.input_dim:
                raise ConfigError(
                    f"dataset feature dim {frame.videos[0].feature.shape[0]} does not "
                    f"match model input_dim {state.config.input_dim}"
                )

    graphs: list[AssignationGraph] = []
    owners: list[int] = []
    for scene in scenes:
        for graph in scene_graphs(scene, policy, window, self_loops_only):
            graphs.append(graph)
            owners.append(scene.scene_id)

    records: list[PredictionRecord] = []
    audio_scores: dict[tuple[int, int], list[float]] = {}
    for start in range(0, len(graphs), EVAL_CHUNK_GRAPHS):
        chunk = graphs[start : start + EVAL_CHUNK_GRAPHS]
        batch = GraphBatch.from_graphs(chunk)
        probs = softmax_probs(forward_batch(batch, state, training=False).data)[:, 1]
        for idx in range(batch.num_nodes):
            scene_id = owners[start + int(batch.component[idx])]
            t = int(batch.timestamps[idx])
            if batch.audio_mask[idx]:
                audio_scores.setdefault((scene_id, t), []).append(float(probs[idx]))
            else:
                records.append(
                    PredictionRecord(
                        scene_id=scene_id,
                        timestamp=t,
                        speaker_id=int(batch.speaker_ids[idx]),
                        score=float(probs[idx]),
                        label=int(batch.labels[idx]),
                    )
                )

    overall = _ap_or_none(records)
    by_faces = {}
    for bucket in ("1", "2", "3+"):
        subset = [r for r in records if _bucket(faces_at[(r.scene_id, r.timestamp)]) == bucket]
        by_faces[bucket] = {
            "ap": _ap_or_none(subset),
            "records": len(subset),
            "positives": sum(r.label for r in subset),
        }
    audio_records = [
        PredictionRecord(sid, t, -1, float(np.mean(s)), audio_label[(sid, t)])
        for (sid, t), s in sorted(audio_scores.items())
    ]
    report = {
        "overall_ap": overall,
        "ap_undefined": overall is None,
        "by_num_speakers": by_faces,
        "audio_ap": _ap_or_none(audio_records),
        "records": len(records),
        "positives": sum(r.label for r in records),
        "config": {
            "model": state.config.to_dict(),
            "grouping": {"max_video_nodes": policy.max_video_nodes, "mode": policy.mode.value},
            "window": window,
            "self_loops_only": self_loops_only,
        },
        "seed": seed,
    }
    return records, report


def render_metrics_table(report: dict) -> str:
    """Plain-text view of a metrics report."""

    def fmt(ap):
        return "undefined" if ap is None else f"{ap:.4f}"

    rows = [("slice", "AP", "records", "positives")]
    rows.append(("overall", fmt(report["overall_ap"]), str(report["records"]), str(report["positives"])))
    for bucket in ("1", "2", "3+"):
        cell = report["by_num_speakers"][bucket]
        rows.append(
            (f"faces={bucket}", fmt(cell["ap"]), str(cell["records"]), str(cell["positives"]))
        )
    rows.append(("audio", fmt(report["audio_ap"]), "", ""))
    widths = [max(len(row[col]) for row in rows) for col in range(4)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[c] for c in range(4)))
    return "\n".join(lines) + "\n"


def write_predictions_csv(records: list[PredictionRecord], path) -> None:
    """Dump records as CSV with a fixed header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene_id", "t", "speaker_id", "score", "label"])
        for r in records:
            writer.writerow([r.scene_id, r.timestamp, r.speaker_id, repr(r.score), r.label])
