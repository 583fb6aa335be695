"""File formats: DOT graphs, adjacency CSV, edge lists, dataset CSV."""
from __future__ import annotations

import numpy as np

__all__ = [
    "emit_dot",
    "write_adjacency_csv",
    "read_adjacency_csv",
    "write_edge_list",
    "read_edge_list",
    "edges_to_graph",
    "graph_to_edges",
    "write_dataset_csv",
    "read_dataset_csv",
    "default_names",
]


def default_names(d: int) -> list:
    return [f"X{i + 1}" for i in range(d)]


def graph_to_edges(graph, names=None) -> list:
    g = np.asarray(graph, dtype=bool)
    names = names or default_names(g.shape[0])
    return [(names[i], names[j]) for i, j in zip(*np.nonzero(g))]


def edges_to_graph(edges, names) -> np.ndarray:
    index = {n: i for i, n in enumerate(names)}
    g = np.zeros((len(names), len(names)), dtype=bool)
    for src, dst in edges:
        if src not in index or dst not in index:
            raise ValueError(f"edge ({src}, {dst}) references an unknown node")
        g[index[src], index[dst]] = True
    return g


def emit_dot(graph, names, diff_vs_previous=None, include_removed: bool = True) -> str:
    """Render a digraph in DOT; optionally color a diff against a previous graph.

    Edges present in both graphs are plain, edges new since ``diff_vs_previous``
    are blue, and edges that disappeared are red and dashed (kept in the output
    as a visual diff unless ``include_removed`` is false).
    """
    g = np.asarray(graph, dtype=bool)
    d = g.shape[0]
    if len(names) != d:
        raise ValueError(f"got {len(names)} names for {d} nodes")
    prev = None if diff_vs_previous is None else np.asarray(diff_vs_previous, dtype=bool)
    lines = ["digraph learned {"]
    for n in names:
        lines.append(f'  "{n}";')
    for i in range(d):
        for j in range(d):
            if g[i, j]:
                if prev is not None and not prev[i, j]:
                    lines.append(f'  "{names[i]}" -> "{names[j]}" [color=blue];')
                else:
                    lines.append(f'  "{names[i]}" -> "{names[j]}";')
            elif include_removed and prev is not None and prev[i, j]:
                lines.append(f'  "{names[i]}" -> "{names[j]}" [color=red, style=dashed];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_adjacency_csv(path, w, names=None) -> None:
    w = np.asarray(w, dtype=np.float64)
    names = names or default_names(w.shape[0])
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in w:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def read_adjacency_csv(path):
    with open(path) as fh:
        names = fh.readline().strip().split(",")
        rows = [[float(tok) for tok in line.strip().split(",")] for line in fh if line.strip()]
    w = np.array(rows, dtype=np.float64)
    if w.shape != (len(names), len(names)):
        raise ValueError(f"{path}: adjacency is {w.shape}, expected square over {len(names)} names")
    return w, names


def write_edge_list(path, graph, names=None) -> None:
    with open(path, "w") as fh:
        for src, dst in graph_to_edges(graph, names):
            fh.write(f"{src} {dst}\n")


def read_edge_list(path) -> list:
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'src dst', got {line!r}")
            edges.append((parts[0], parts[1]))
    return edges


def write_dataset_csv(path, data, names=None) -> None:
    data = np.asarray(data, dtype=np.float64)
    names = names or default_names(data.shape[1])
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_dataset_csv(path):
    """Load a headered numeric CSV; malformed cells report their row number."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header:
            raise ValueError(f"{path}: empty file, expected a header row")
        names = [h.strip() for h in header.split(",")]
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(names):
                raise ValueError(
                    f"{path}: row {lineno} has {len(cells)} cells, expected {len(names)}"
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError as err:
                raise ValueError(f"{path}: row {lineno}: {err}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64), names
