"""Dense matrix kernels shared by every other module.

Matrices are plain 2-D float64 numpy arrays in row-major (C) order. Binary
graphs are 2-D boolean arrays where entry [i, j] means an edge i -> j. All
public operations validate shapes and reject non-finite values.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "as_matrix",
    "matmul",
    "hadamard",
    "trace",
    "matrix_exp",
    "matrix_power_trace",
    "is_acyclic",
    "topological_order",
    "read_matrix_text",
    "write_matrix_text",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array and check finiteness."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError(f"{name} contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions do not match: {a.shape} @ {b.shape}")
    return a @ b


def hadamard(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def trace(a) -> float:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"trace needs a square matrix, got {a.shape}")
    return float(np.trace(a))


def matrix_exp(a) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring over a truncated Taylor series.

    The input is scaled by 2**-s until its 1-norm is below 0.5, the series is
    summed until the term's max-norm falls under 1e-16 relative tolerance, and
    the result is squared s times. Accurate to ~1e-12 relative for the
    moderate spectral radii (<= ~10) this package produces.
    """
    a = as_matrix(a)
    d = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix_exp needs a square matrix, got {a.shape}")
    norm = np.abs(a).sum(axis=1).max() if d else 0.0
    s = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0)
    x = a / (2.0**s)

    result = np.eye(d)
    term = np.eye(d)
    scale = max(norm / 2.0**s, 1.0)
    for k in range(1, 64):
        term = term @ x / k
        result = result + term
        if np.abs(term).max() <= 1e-16 * scale:
            break
    for _ in range(s):
        result = result @ result
    return result


def matrix_power_trace(a, alpha: float, d: int) -> float:
    """tr[(I + alpha*a)^d] by repeated multiplication; exponent = matrix size."""
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix_power_trace needs a square matrix, got {a.shape}")
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    m = np.eye(a.shape[0]) + alpha * a
    p = np.eye(a.shape[0])
    for _ in range(d):
        p = p @ m
    return float(np.trace(p))


def is_acyclic(g) -> bool:
    """True iff the boolean adjacency admits a topological order (Kahn)."""
    return topological_order(g) is not None


def topological_order(g):
    """Topological order of a boolean adjacency, or None if the graph has a cycle."""
    adj = np.asarray(g)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {adj.shape}")
    adj = adj.astype(bool)
    d = adj.shape[0]
    indeg = adj.sum(axis=0).astype(int)
    ready = [i for i in range(d) if indeg[i] == 0]
    order = []
    while ready:
        u = ready.pop()
        order.append(u)
        for v in np.flatnonzero(adj[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(int(v))
    return order if len(order) == d else None


def write_matrix_text(path, a) -> None:
    """Test-fixture format: first line "rows cols", then one line per row."""
    a = as_matrix(a)
    with open(path, "w") as fh:
        fh.write(f"{a.shape[0]} {a.shape[1]}\n")
        for row in a:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_matrix_text(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: expected 'rows cols' header")
        rows, cols = int(header[0]), int(header[1])
        data = [[float(tok) for tok in fh.readline().split()] for _ in range(rows)]
    m = np.array(data, dtype=np.float64)
    if m.shape != (rows, cols):
        raise ValueError(f"{path}: expected {rows}x{cols}, got {m.shape}")
    return m
