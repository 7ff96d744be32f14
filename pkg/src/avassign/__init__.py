"""Audio-visual speaker assignation: graphs, two-stream GCN, synthetic benchmark."""

from .errors import (
    ConfigError,
    EmptyBatch,
    GraphError,
    InvalidFrame,
    InvalidWindow,
    LabelError,
    NumericsError,
    ParseError,
    ShapeError,
    UndefinedMetric,
)
from .graphs import (
    AssignationGraph,
    FeatureNode,
    GraphKind,
    GroupingMode,
    GroupingPolicy,
    Modality,
    build_lan,
    build_tan,
    graph_to_dot,
    group_speakers,
    knn_edges,
)
from .model import (
    ForwardTrace,
    GraphBatch,
    ModelConfig,
    ModelState,
    Streams,
    batch_node_labels,
    forward,
    forward_batch,
    init_model,
    node_labels,
)
from .synth import (
    Frame,
    SceneSample,
    SynthConfig,
    generate,
    offscreen_augment,
    oracle_scores,
    projection_matrices,
    read_dataset,
    read_dataset_header,
    write_dataset,
)
from .evaluation import (
    PredictionRecord,
    average_precision,
    evaluate,
    render_metrics_table,
    window_partition,
    write_predictions_csv,
)
from .training import TrainConfig, ablation_grid, train

__version__ = "0.1.0"

__all__ = [
    "AssignationGraph",
    "ConfigError",
    "EmptyBatch",
    "FeatureNode",
    "ForwardTrace",
    "Frame",
    "GraphBatch",
    "GraphError",
    "GraphKind",
    "GroupingMode",
    "GroupingPolicy",
    "InvalidFrame",
    "InvalidWindow",
    "LabelError",
    "Modality",
    "ModelConfig",
    "ModelState",
    "NumericsError",
    "ParseError",
    "PredictionRecord",
    "SceneSample",
    "ShapeError",
    "Streams",
    "SynthConfig",
    "TrainConfig",
    "UndefinedMetric",
    "ablation_grid",
    "average_precision",
    "batch_node_labels",
    "build_lan",
    "build_tan",
    "evaluate",
    "forward",
    "forward_batch",
    "generate",
    "graph_to_dot",
    "group_speakers",
    "init_model",
    "knn_edges",
    "node_labels",
    "offscreen_augment",
    "oracle_scores",
    "projection_matrices",
    "read_dataset",
    "read_dataset_header",
    "render_metrics_table",
    "train",
    "window_partition",
    "write_dataset",
    "write_predictions_csv",
]
