"""rinktrack: multi-player tracking for broadcast sports sequences.

Associates detections across frames with a message passing graph network
whose features combine appearance embeddings and homography-projected
footpoint positions, trained and evaluated end to end on a built-in
synthetic broadcast simulator.
"""

from .geometry import (BoundingBox, HomographyMatrix, ImagePoint, RinkPoint,
                       RinkTemplate, footpoint, invert, normalize_rink, project)
from .graph import AssociationGraph, GraphNode, ModelParameters, build_bipartite, propagate
from .metrics import MetricsReport, evaluate_sequence, idf1, iou, mota
from .simulator import SimConfig, emit_dataset, generate_dataset
from .tracker import Tracker, run_sequence
from .training import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "AssociationGraph", "BoundingBox", "Checkpoint", "GraphNode",
    "HomographyMatrix", "ImagePoint", "MetricsReport", "ModelParameters",
    "RinkPoint", "RinkTemplate", "SimConfig", "Tracker", "TrainConfig",
    "build_bipartite", "emit_dataset", "evaluate_sequence", "footpoint",
    "generate_dataset", "idf1", "invert", "iou", "load_checkpoint", "mota",
    "normalize_rink", "project", "propagate", "run_sequence",
    "save_checkpoint", "train",
]
