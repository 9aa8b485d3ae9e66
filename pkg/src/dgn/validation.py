"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

__all__ = ["check_graph", "check_graph_list", "check_labels"]


def check_graph(obj, index=None):
    """Normalise one graph-like input to a (coords, edges) pair.

    Accepts anything with ``coords``/``edges`` attributes (LabeledGraph,
    Polytope via ``vertices``...) or a (coords, edges) pair. Coordinates must
    be a finite (n, d) float array; edges an (m, 2) integer array of valid
    vertex indices.
    """
    where = "graph" if index is None else f"graph {index}"
    if hasattr(obj, "coords") and hasattr(obj, "edges"):
        coords, edges = obj.coords, obj.edges
    elif hasattr(obj, "vertices") and hasattr(obj, "edges"):
        coords, edges = obj.vertices, obj.edges
    else:
        try:
            coords, edges = obj
        except (TypeError, ValueError):
            raise ValueError(
                f"{where}: expected an object with coords/edges or a (coords, edges) pair"
            ) from None
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[0] == 0:
        raise ValueError(f"{where}: coords must be a non-empty (n, d) array, got {coords.shape}")
    if not np.isfinite(coords).all():
        raise ValueError(f"{where}: coords contain NaN/Inf")
    edges = np.asarray(edges, dtype=np.int64)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise ValueError(f"{where}: edges must be an (m, 2) array, got {edges.shape}")
    if len(edges) == 0:
        raise ValueError(f"{where}: needs at least one edge")
    if edges.min() < 0 or edges.max() >= coords.shape[0]:
        raise ValueError(f"{where}: edge endpoint out of range [0, {coords.shape[0]})")
    return coords, edges


def check_graph_list(X):
    """Validate a sequence of graphs with matching coordinate dimension."""
    graphs = [check_graph(g, i) for i, g in enumerate(X)]
    if not graphs:
        raise ValueError("X contains no graphs")
    dims = {coords.shape[1] for coords, _ in graphs}
    if len(dims) > 1:
        raise ValueError(f"graphs mix coordinate dimensions: {sorted(dims)}")
    return graphs


def check_labels(y, n_samples):
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ValueError(f"y must be 1-d with {n_samples} entries, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        rounded = np.round(y)
        if not np.allclose(y, rounded):
            raise ValueError("labels must be integers")
        y = rounded
    return y.astype(np.int64)
