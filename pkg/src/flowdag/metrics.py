"""Directed-graph recovery metrics: edge classification, SHD, TPR.

A truth edge lands in exactly one of three buckets: true positive (predicted
with the right direction), reversed (predicted the other way only), or
missing. Predicted edges with no truth counterpart in either direction are
extra. SHD counts missing + extra + reversal_cost * reversed; the default
reversal_cost of 2 treats a reversal as one deletion plus one insertion,
cost 1 is the single-edit convention.

Inputs are directed graphs without 2-cycles (DAGs in practice); with a
2-cycle the reversal bucket would double-count its witness edge.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["EdgeReport", "classify_edges", "shd", "tpr", "metrics_report"]


@dataclass
class EdgeReport:
    true_positives: list
    reversed: list
    missing: list
    extra: list


def _check_pair(predicted, truth):
    p = np.asarray(predicted, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"predicted adjacency must be square, got {p.shape}")
    if p.shape != t.shape:
        raise ValueError(f"node sets differ: predicted {p.shape} vs truth {t.shape}")
    return p, t


def classify_edges(predicted, truth) -> EdgeReport:
    p, t = _check_pair(predicted, truth)
    tp, rev, missing, extra = [], [], [], []
    for i, j in zip(*np.nonzero(t)):
        edge = (int(i), int(j))
        if p[i, j]:
            tp.append(edge)
        elif p[j, i]:
            rev.append(edge)
        else:
            missing.append(edge)
    for i, j in zip(*np.nonzero(p)):
        if not t[i, j] and not t[j, i]:
            extra.append((int(i), int(j)))
    return EdgeReport(true_positives=tp, reversed=rev, missing=missing, extra=extra)


def shd(predicted, truth, reversal_cost: int = 2) -> int:
    if reversal_cost not in (1, 2):
        raise ValueError(f"reversal_cost must be 1 or 2, got {reversal_cost}")
    report = classify_edges(predicted, truth)
    return len(report.missing) + len(report.extra) + reversal_cost * len(report.reversed)


def tpr(predicted, truth) -> float:
    _, t = _check_pair(predicted, truth)
    total = int(t.sum())
    if total == 0:
        raise ValueError("truth graph has no edges; TPR is undefined")
    return len(classify_edges(predicted, truth).true_positives) / total


def metrics_report(predicted, truth) -> dict:
    """JSON-ready summary with both SHD conventions and the edge buckets."""
    p, t = _check_pair(predicted, truth)
    report = classify_edges(p, t)
    return {
        "shd": shd(p, t, reversal_cost=2),
        "shd_cost1": shd(p, t, reversal_cost=1),
        "tpr": tpr(p, t),
        "counts": {
            "tp": len(report.true_positives),
            "reversed": len(report.reversed),
            "missing": len(report.missing),
            "extra": len(report.extra),
        },
        "num_predicted": int(p.sum()),
        "num_truth": int(t.sum()),
    }
