"""Bundled consensus ground truth for the 11-protein signaling benchmark.

Only the consensus graph ships with the package; the measurement CSV is
supplied by the user.
"""
from __future__ import annotations

import numpy as np

__all__ = ["SACHS_NAMES", "SACHS_EDGES", "load_sachs_ground_truth"]

SACHS_NAMES = [
    "Raf", "Mek", "Plcg", "PIP2", "PIP3", "Erk", "Akt", "PKA", "PKC", "P38", "Jnk",
]

# 17-edge consensus network over the 11 measured proteins
SACHS_EDGES = [
    ("Raf", "Mek"),
    ("Mek", "Erk"),
    ("Plcg", "PIP2"),
    ("Plcg", "PIP3"),
    ("PIP3", "PIP2"),
    ("Erk", "Akt"),
    ("PKA", "Raf"),
    ("PKA", "Erk"),
    ("PKA", "Akt"),
    ("PKA", "Mek"),
    ("PKA", "P38"),
    ("PKA", "Jnk"),
    ("PKC", "Mek"),
    ("PKC", "P38"),
    ("PKC", "Raf"),
    ("PKC", "PKA"),
    ("PKC", "Jnk"),
]


def load_sachs_ground_truth():
    """Consensus graph as (boolean adjacency, node names)."""
    index = {n: i for i, n in enumerate(SACHS_NAMES)}
    graph = np.zeros((11, 11), dtype=bool)
    for src, dst in SACHS_EDGES:
        graph[index[src], index[dst]] = True
    return graph, list(SACHS_NAMES)
