"""Causal DAG structure learning with masked autoregressive flows.

Learns a directed acyclic graph from observational tabular data by training
a stack of masked autoregressive blocks under a smooth acyclicity constraint;
edge strengths are read off the Jacobian of the flow's noise output with
respect to its data input.
"""

from .made_flow import FlowModel, MadeBlock, build_masks, flow_log_likelihood
from .metrics import classify_edges, metrics_report, shd, tpr
from .sachs import load_sachs_ground_truth
from .synth import ground_truth_for, sample_er_dag, simulate_sem
from .trainer import TrainConfig, TrainResult, outer_loop

__version__ = "0.1.0"

__all__ = [
    "FlowModel",
    "MadeBlock",
    "TrainConfig",
    "TrainResult",
    "build_masks",
    "classify_edges",
    "flow_log_likelihood",
    "ground_truth_for",
    "load_sachs_ground_truth",
    "metrics_report",
    "outer_loop",
    "sample_er_dag",
    "shd",
    "simulate_sem",
    "tpr",
    "__version__",
]
