"""Synthetic benchmarks: Erdos-Renyi DAGs and nonlinear SEM simulation.

Graphs are sampled acyclic by construction: a random permutation fixes a
topological order and each order-respecting pair becomes an edge with the
probability that yields the requested expected edge count. Data follows
X_j = f_j(parents) + noise_j in topological order, with f_j drawn from a
Gaussian process (RBF kernel, unit bandwidth and variance, exact joint
sampling via Cholesky), a random tanh MLP, or a sum of per-parent 1-D GP
draws. Every node consumes its own seed stream, so resampling one node's
stream only perturbs that node's descendants.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg

__all__ = [
    "MECHANISMS",
    "GroundTruth",
    "sample_er_dag",
    "ground_truth_for",
    "simulate_sem",
    "rbf_kernel",
]

MECHANISMS = ("gp", "mlp", "additive_gp")

MLP_HIDDEN = 100
BASE_JITTER = 1e-6
MAX_JITTER = 1e-2


@dataclass
class GroundTruth:
    graph: np.ndarray
    topo_order: tuple
    mechanism: str
    noise_scale: np.ndarray

    @property
    def d(self) -> int:
        return self.graph.shape[0]


def sample_er_dag(d: int, edges_per_node: float, seed=None) -> np.ndarray:
    """Random DAG with expected ``edges_per_node * d`` edges over d nodes."""
    if d < 2:
        raise ValueError(f"need d >= 2, got {d}")
    max_edges = d * (d - 1) / 2
    expected = edges_per_node * d
    if expected > max_edges:
        raise ValueError(
            f"infeasible edge budget: ER{edges_per_node} wants {expected:g} edges "
            f"but d={d} admits at most {max_edges:g}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(d)
    p = expected / max_edges
    graph = np.zeros((d, d), dtype=bool)
    for i in range(d):
        for j in range(i + 1, d):
            if rng.random() < p:
                graph[order[i], order[j]] = True
    return graph


def ground_truth_for(graph, mechanism: str = "gp", noise_scale=None,
                     noise_scale_range=None, seed=None) -> GroundTruth:
    """Attach a mechanism and per-node noise scales to a DAG.

    ``noise_scale_range=(low, high)`` samples per-node sigmas uniformly
    instead of the default unit noise.
    """
    graph = np.asarray(graph, dtype=bool)
    if mechanism not in MECHANISMS:
        raise ValueError(f"mechanism must be one of {MECHANISMS}, got {mechanism!r}")
    order = linalg.topological_order(graph)
    if order is None:
        raise ValueError("ground-truth graph must be acyclic")
    d = graph.shape[0]
    if noise_scale is None:
        if noise_scale_range is not None:
            low, high = noise_scale_range
            noise_scale = np.random.default_rng(seed).uniform(low, high, size=d)
        else:
            noise_scale = np.ones(d)
    return GroundTruth(graph=graph, topo_order=tuple(order), mechanism=mechanism,
                       noise_scale=np.asarray(noise_scale, dtype=np.float64))


def rbf_kernel(a, b) -> np.ndarray:
    """exp(-||a - b||^2 / 2): unit bandwidth, unit variance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-0.5 * np.maximum(sq, 0.0))


def _gp_draw(points, rng) -> np.ndarray:
    """One exact GP function draw evaluated at the given points."""
    k = rbf_kernel(points, points)
    jitter = BASE_JITTER
    while True:
        try:
            chol = np.linalg.cholesky(k + jitter * np.eye(len(k)))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > MAX_JITTER:
                raise RuntimeError(
                    f"GP kernel not positive definite even with jitter {jitter:g}"
                ) from None
    return chol @ rng.standard_normal(len(k))


def _mechanism_values(mechanism, parents_data, rng) -> np.ndarray:
    if mechanism == "gp":
        return _gp_draw(parents_data, rng)
    if mechanism == "mlp":
        p = parents_data.shape[1]
        w1 = rng.standard_normal((p, MLP_HIDDEN))
        w2 = rng.standard_normal(MLP_HIDDEN)
        return np.tanh(parents_data @ w1) @ w2 / np.sqrt(MLP_HIDDEN)
    if mechanism == "additive_gp":
        total = np.zeros(len(parents_data))
        for k in range(parents_data.shape[1]):
            total += _gp_draw(parents_data[:, k:k + 1], rng)
        return total
    raise ValueError(f"unknown mechanism {mechanism!r}")


def simulate_sem(gt: GroundTruth, n: int, seed=None, node_seeds=None) -> np.ndarray:
    """Simulate n samples from the SEM, filling columns in topological order."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    d = gt.d
    if node_seeds is None:
        streams = np.random.SeedSequence(seed).spawn(d)
    else:
        if len(node_seeds) != d:
            raise ValueError(f"need {d} node seeds, got {len(node_seeds)}")
        streams = [np.random.SeedSequence(s) for s in node_seeds]
    rngs = [np.random.default_rng(s) for s in streams]

    data = np.zeros((n, d))
    for j in gt.topo_order:
        rng = rngs[j]
        parents = np.flatnonzero(gt.graph[:, j])
        value = np.zeros(n)
        if len(parents):
            value = _mechanism_values(gt.mechanism, data[:, parents], rng)
        data[:, j] = value + gt.noise_scale[j] * rng.standard_normal(n)
    return data
