"""Attributed graphs, batching as disjoint unions, and dataset (de)serialisation.

A dataset item is a labelled coordinate graph (polytope topology + vertex
coordinates). Before entering a network it is embedded: undirected edges are
materialised in both directions, node features are attached (a constant 1 for
distance-based blocks, the raw coordinates for the standard block), and edge
and global features start empty. Batching concatenates graphs into one
disjoint union with node/edge-to-graph id maps so per-graph reductions are
segment sums.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import POLYTOPE_KINDS

__all__ = [
    "GraphBatch",
    "GraphEmbedding",
    "LabeledGraph",
    "batch",
    "embed_graph",
    "load_dataset",
    "neighbors",
    "save_dataset",
    "unbatch",
]

DATASET_SCHEMA = "dgn.dataset/1"


@dataclass(frozen=True)
class LabeledGraph:
    """Coordinate graph with a class label (undirected topology)."""

    kind: str
    label: int
    coords: np.ndarray  # (n, 3)
    edges: np.ndarray  # (m, 2) undirected


@dataclass(frozen=True)
class GraphEmbedding:
    """One attributed graph ready for a network block.

    ``edges`` are directed (source, target) pairs; every undirected input
    edge appears in both directions so aggregations see symmetric
    neighbourhoods.
    """

    num_nodes: int
    edges: np.ndarray  # (m, 2) directed
    node_features: np.ndarray  # (n, n_v)
    edge_features: np.ndarray  # (m, n_e)
    coords: np.ndarray  # (n, n_x)
    globals: np.ndarray  # (n_u,)


@dataclass(frozen=True)
class GraphBatch:
    """Disjoint union of embedded graphs with segment-id bookkeeping."""

    num_graphs: int
    num_nodes: int
    edges: np.ndarray  # (m, 2) directed, node ids offset per graph
    node_features: np.ndarray
    edge_features: np.ndarray
    coords: np.ndarray
    globals: np.ndarray  # (num_graphs, n_u)
    node_graph_ids: np.ndarray  # (n,)
    edge_graph_ids: np.ndarray  # (m,)
    nodes_per_graph: np.ndarray
    edges_per_graph: np.ndarray


def neighbors(g, i):
    """Sources of the directed edges targeting node i (its in-neighbours)."""
    if not 0 <= i < g.num_nodes:
        raise ValueError(f"node {i} out of range [0, {g.num_nodes})")
    return np.sort(g.edges[g.edges[:, 1] == i, 0])


def _directed(edges_undirected):
    edges = np.asarray(edges_undirected, dtype=np.int64).reshape(-1, 2)
    both = np.empty((2 * len(edges), 2), dtype=np.int64)
    both[0::2] = edges
    both[1::2] = edges[:, ::-1]
    return both


def embed_graph(coords, edges_undirected, node_feature_mode):
    """Embed a coordinate graph for a network.

    ``node_feature_mode`` is ``"ones"`` (a single constant feature carrying
    no positional information) or ``"coords"`` (the raw coordinates, used by
    the standard block). Edge and global features start with width zero.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2:
        raise ValueError(f"coords must be (n, d), got shape {coords.shape}")
    n = coords.shape[0]
    edges = _directed(edges_undirected)
    if len(edges) and (edges.min() < 0 or edges.max() >= n):
        raise ValueError(f"edge endpoint out of range [0, {n})")
    if node_feature_mode == "ones":
        v = np.ones((n, 1))
    elif node_feature_mode == "coords":
        v = coords.copy()
    else:
        raise ValueError(f"unknown node_feature_mode {node_feature_mode!r}")
    return GraphEmbedding(
        num_nodes=n,
        edges=edges,
        node_features=v,
        edge_features=np.zeros((len(edges), 0)),
        coords=coords,
        globals=np.zeros((0,)),
    )


def batch(graphs):
    """Index-shifted disjoint union; ``unbatch`` recovers the originals."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("cannot batch zero graphs")
    first = graphs[0]
    for g in graphs:
        dims = (
            g.node_features.shape[1],
            g.edge_features.shape[1],
            g.coords.shape[1],
            g.globals.shape[0],
        )
        ref = (
            first.node_features.shape[1],
            first.edge_features.shape[1],
            first.coords.shape[1],
            first.globals.shape[0],
        )
        if dims != ref:
            raise ValueError(f"feature dims disagree across graphs: {dims} vs {ref}")
    nodes_per_graph = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    edges_per_graph = np.array([len(g.edges) for g in graphs], dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(nodes_per_graph)))
    edges = np.concatenate([g.edges + offsets[i] for i, g in enumerate(graphs)], axis=0)
    return GraphBatch(
        num_graphs=len(graphs),
        num_nodes=int(offsets[-1]),
        edges=edges,
        node_features=np.concatenate([g.node_features for g in graphs], axis=0),
        edge_features=np.concatenate([g.edge_features for g in graphs], axis=0),
        coords=np.concatenate([g.coords for g in graphs], axis=0),
        globals=np.stack([g.globals for g in graphs], axis=0),
        node_graph_ids=np.repeat(np.arange(len(graphs), dtype=np.int64), nodes_per_graph),
        edge_graph_ids=np.repeat(np.arange(len(graphs), dtype=np.int64), edges_per_graph),
        nodes_per_graph=nodes_per_graph,
        edges_per_graph=edges_per_graph,
    )


def unbatch(b):
    """Split a batch back into its member graphs."""
    node_offsets = np.concatenate(([0], np.cumsum(b.nodes_per_graph)))
    edge_offsets = np.concatenate(([0], np.cumsum(b.edges_per_graph)))
    out = []
    for i in range(b.num_graphs):
        ns, ne = node_offsets[i], node_offsets[i + 1]
        es, ee = edge_offsets[i], edge_offsets[i + 1]
        out.append(
            GraphEmbedding(
                num_nodes=int(b.nodes_per_graph[i]),
                edges=b.edges[es:ee] - node_offsets[i],
                node_features=b.node_features[ns:ne],
                edge_features=b.edge_features[es:ee],
                coords=b.coords[ns:ne],
                globals=b.globals[i],
            )
        )
    return out


def save_dataset(path, graphs, meta):
    """Write labelled graphs as a single JSON document.

    Floats are serialised with python's shortest round-trip repr, so reading
    the file back reproduces every float64 bit-exactly.
    """
    doc = {
        "schema": DATASET_SCHEMA,
        "meta": dict(meta, count=len(graphs)),
        "graphs": [
            {
                "kind": g.kind,
                "label": int(g.label),
                "coords": [[float(x) for x in row] for row in g.coords],
                "edges": [[int(a), int(b)] for a, b in g.edges],
            }
            for g in graphs
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_dataset(path):
    """Read a dataset written by ``save_dataset``; returns (graphs, meta)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != DATASET_SCHEMA:
        raise ValueError(f"unrecognised dataset schema {doc.get('schema')!r}")
    graphs = []
    for entry in doc["graphs"]:
        kind = entry["kind"]
        if kind not in POLYTOPE_KINDS:
            raise ValueError(f"unknown polytope kind {kind!r} in dataset")
        graphs.append(
            LabeledGraph(
                kind=kind,
                label=int(entry["label"]),
                coords=np.asarray(entry["coords"], dtype=np.float64).reshape(-1, 3),
                edges=np.asarray(entry["edges"], dtype=np.int64).reshape(-1, 2),
            )
        )
    return graphs, doc["meta"]
