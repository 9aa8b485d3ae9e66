"""Distance-preserving graph networks.

A graph-network block whose updates consume coordinates only through squared
distances between connected nodes is invariant under rotations, reflections
and translations of those coordinates; prepending a scale-normalising input
layer extends this to dilations. This package implements that block, the
standard graph-network baseline, a tiny float64 reverse-mode engine to train
them with full-batch Adam, an sklearn-style classifier wrapper, and a
reproducible polytope-classification benchmark with equivariance audits.
"""

from .autodiff import Tape, Tensor, backward
from .blocks import ClassifierModel, load_checkpoint, save_checkpoint, squared_distance
from .estimator import DGNClassifier
from .experiments import (
    audit_equivariance,
    build_test_set,
    build_train_set,
    run_efficiency_sweep,
    run_table1,
)
from .geometry import (
    AffineTransform,
    Polytope,
    TransformClass,
    apply_transform,
    calibrate_epsilon,
    make_polytope,
    random_orthogonal,
    sample_transform,
)
from .graphs import GraphBatch, GraphEmbedding, LabeledGraph, batch, load_dataset, save_dataset
from .training import TrainingDiverged, cross_entropy, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AffineTransform",
    "ClassifierModel",
    "DGNClassifier",
    "GraphBatch",
    "GraphEmbedding",
    "LabeledGraph",
    "Polytope",
    "Tape",
    "Tensor",
    "TrainingDiverged",
    "TransformClass",
    "apply_transform",
    "audit_equivariance",
    "backward",
    "batch",
    "build_test_set",
    "build_train_set",
    "calibrate_epsilon",
    "cross_entropy",
    "evaluate",
    "load_checkpoint",
    "load_dataset",
    "make_polytope",
    "random_orthogonal",
    "run_efficiency_sweep",
    "run_table1",
    "sample_transform",
    "save_checkpoint",
    "save_dataset",
    "squared_distance",
    "train",
]
