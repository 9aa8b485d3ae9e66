"""Graph-network layers and the polytope classifier built from them.

Two block types share one implementation skeleton:

* standard block: edge update phi_e(v_src, v_tgt, e, u), node update
  phi_v(v, sum of incoming updated edges, u), global update
  phi_u(sum v+, sum e+, u). Coordinates are neither read nor written.
* distance block: the edge update reads the squared distance between the
  edge's endpoints instead of any absolute position,
  e+ = phi_e(e, v_tgt, v_src, ||x_tgt - x_src||^2, u), the node update is
  phi_v(sum e+, v, u), coordinates move through a relative-distance
  preserving map (identity, or x_i + mean_j a_ji (x_j - x_i) with a_ji a
  learned scalar per edge), and the global update additionally sums the
  post-update squared edge distances. Because only relative distances enter,
  the block is invariant under rotations, reflections and translations of
  the coordinates.

Prepending the scale-normalising input layer (per graph, coordinates are
multiplied by alpha / max edge length) extends the invariance to dilations.

The classifier is three blocks, a node MLP, per-graph sum pooling and a
head MLP producing one logit per class. All update functions are MLPs with
a single 64-unit swish hidden layer.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    affine,
    concat,
    constant,
    make_segment_plan,
    matmul,
    mul,
    parameter,
    row_sum,
    segment_sum,
    sub,
    sum_all,
    swish,
    take_rows,
)
from .graphs import batch as make_batch
from .graphs import embed_graph
from .seeding import INIT_STREAM, substream_rng

__all__ = [
    "MODEL_KINDS",
    "COORDINATE_MAPS",
    "BlockConfig",
    "ClassifierModel",
    "GraphBlock",
    "MLP",
    "Prepared",
    "load_checkpoint",
    "save_checkpoint",
    "scale_factors",
    "squared_distance",
]

MODEL_KINDS = ("gn", "dgn", "sdgn")
COORDINATE_MAPS = ("identity", "weighted_displacement")

CHECKPOINT_SCHEMA = "dgn.checkpoint/1"


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class MLP:
    """Single hidden layer (64 swish units by default), linear output.

    Output layers start below the Glorot bound: the sum aggregations between
    layers have fan-ins (degrees, edge counts) the per-layer fan bounds know
    nothing about, and undamped the compounded activations reach 1e3-1e4 at
    init, which wastes early training and amplifies float noise.
    """

    OUT_GAIN = 0.4

    def __init__(self, in_dim, out_dim, rng, hidden=64):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.hidden = hidden
        self.w1 = parameter(_glorot(rng, in_dim, hidden))
        self.b1 = parameter(np.zeros(hidden))
        self.w2 = parameter(self.OUT_GAIN * _glorot(rng, hidden, out_dim))
        self.b2 = parameter(np.zeros(out_dim))

    def __call__(self, x):
        h = swish(affine(x, self.w1, self.b1))
        return affine(h, self.w2, self.b2)

    def parameters(self, prefix):
        return [
            (f"{prefix}.w1", self.w1),
            (f"{prefix}.b1", self.b1),
            (f"{prefix}.w2", self.w2),
            (f"{prefix}.b2", self.b2),
        ]


class Linear:
    """Plain affine map (used for the per-edge displacement coefficients)."""

    def __init__(self, in_dim, out_dim, rng, gain=1.0):
        self.w = parameter(gain * _glorot(rng, in_dim, out_dim))
        self.b = parameter(np.zeros(out_dim))

    def __call__(self, x):
        return affine(x, self.w, self.b)

    def parameters(self, prefix):
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)]


def squared_distance(x_i, x_j):
    """Squared euclidean distance between two equal-length vectors.

    Accepts Tensors or arrays; the gradient flows to both endpoints when
    they are tape-tracked.
    """
    a = x_i if isinstance(x_i, Tensor) else constant(np.asarray(x_i, dtype=np.float64))
    b = x_j if isinstance(x_j, Tensor) else constant(np.asarray(x_j, dtype=np.float64))
    if a.data.shape != b.data.shape:
        raise ValueError(f"squared_distance: shapes differ, {a.data.shape} vs {b.data.shape}")
    diff = sub(a, b)
    return sum_all(mul(diff, diff))


def _edge_sq_distances(x, src, tgt, plan_src=None, plan_tgt=None):
    diff = sub(take_rows(x, tgt, plan=plan_tgt), take_rows(x, src, plan=plan_src))
    return row_sum(mul(diff, diff))


@dataclass(frozen=True)
class BlockConfig:
    block_kind: str  # "gn" | "dgn"
    in_v: int
    in_e: int
    in_u: int
    out_v: int
    out_e: int
    out_u: int
    coordinate_map: str | None  # None for gn blocks

    def __post_init__(self):
        if self.block_kind not in ("gn", "dgn"):
            raise ValueError(f"block_kind must be 'gn' or 'dgn', got {self.block_kind!r}")
        if self.block_kind == "gn" and self.coordinate_map is not None:
            raise ValueError("gn blocks take no coordinate map")
        if self.block_kind == "dgn" and self.coordinate_map not in COORDINATE_MAPS:
            raise ValueError(
                f"dgn blocks need a coordinate map from {COORDINATE_MAPS}, got {self.coordinate_map!r}"
            )


class GraphBlock:
    """One message-passing layer (standard or distance-based), with its MLPs."""

    def __init__(self, cfg, rng, mlp_hidden=64):
        self.cfg = cfg
        dist = 1 if cfg.block_kind == "dgn" else 0
        self.edge_mlp = MLP(cfg.in_e + 2 * cfg.in_v + dist + cfg.in_u, cfg.out_e, rng, mlp_hidden)
        self.node_mlp = MLP(cfg.out_e + cfg.in_v + cfg.in_u, cfg.out_v, rng, mlp_hidden)
        self.global_mlp = MLP(cfg.out_e + cfg.out_v + dist + cfg.in_u, cfg.out_u, rng, mlp_hidden)
        self.coord_linear = None
        if cfg.coordinate_map == "weighted_displacement":
            # small-gain init keeps the coordinate step near zero at the start,
            # which both stabilises training and keeps float noise in the
            # relative-distance invariants far below tolerance
            self.coord_linear = Linear(cfg.out_e, 1, rng, gain=1e-3)

    def parameters(self, prefix):
        params = (
            self.edge_mlp.parameters(f"{prefix}.edge")
            + self.node_mlp.parameters(f"{prefix}.node")
            + self.global_mlp.parameters(f"{prefix}.global")
        )
        if self.coord_linear is not None:
            params += self.coord_linear.parameters(f"{prefix}.coord")
        return params

    def forward(self, state):
        cfg = self.cfg
        v, e, x, u = state["v"], state["e"], state["x"], state["u"]
        src, tgt = state["src"], state["tgt"]
        node_gids, edge_gids = state["node_gids"], state["edge_gids"]
        num_nodes, num_graphs = state["num_nodes"], state["num_graphs"]
        by_src, by_tgt = state["plan_by_src"], state["plan_by_tgt"]
        node_graph, edge_graph = state["plan_node_graph"], state["plan_edge_graph"]

        v_src = take_rows(v, src, plan=by_src)
        v_tgt = take_rows(v, tgt, plan=by_tgt)
        u_edge = take_rows(u, edge_gids, plan=edge_graph) if cfg.in_u else None
        u_node = take_rows(u, node_gids, plan=node_graph) if cfg.in_u else None

        if cfg.block_kind == "dgn":
            d = _edge_sq_distances(x, src, tgt, by_src, by_tgt)
            parts = []
            if cfg.in_e:
                parts.append(e)
            parts += [v_tgt, v_src, d]
            if cfg.in_u:
                parts.append(u_edge)
            e_new = self.edge_mlp(concat(parts))

            agg = segment_sum(e_new, tgt, num_nodes, plan=by_tgt)
            parts = [agg, v]
            if cfg.in_u:
                parts.append(u_node)
            v_new = self.node_mlp(concat(parts))

            if cfg.coordinate_map == "identity":
                x_new, d_new = x, d
            else:
                a = self.coord_linear(e_new)
                a = mul(a, state["inv_degree_edge"])
                a_cols = matmul(a, state["ones_row"])
                disp = sub(take_rows(x, src, plan=by_src), take_rows(x, tgt, plan=by_tgt))
                x_new = add(x, segment_sum(mul(a_cols, disp), tgt, num_nodes, plan=by_tgt))
                d_new = _edge_sq_distances(x_new, src, tgt, by_src, by_tgt)

            parts = [
                segment_sum(e_new, edge_gids, num_graphs, plan=edge_graph),
                segment_sum(v_new, node_gids, num_graphs, plan=node_graph),
                segment_sum(d_new, edge_gids, num_graphs, plan=edge_graph),
            ]
            if cfg.in_u:
                parts.append(u)
            u_new = self.global_mlp(concat(parts))
        else:
            parts = [v_src, v_tgt]
            if cfg.in_e:
                parts.append(e)
            if cfg.in_u:
                parts.append(u_edge)
            e_new = self.edge_mlp(concat(parts))

            agg = segment_sum(e_new, tgt, num_nodes, plan=by_tgt)
            parts = [v, agg]
            if cfg.in_u:
                parts.append(u_node)
            v_new = self.node_mlp(concat(parts))

            parts = [
                segment_sum(v_new, node_gids, num_graphs, plan=node_graph),
                segment_sum(e_new, edge_gids, num_graphs, plan=edge_graph),
            ]
            if cfg.in_u:
                parts.append(u)
            u_new = self.global_mlp(concat(parts))
            x_new = x

        out = dict(state)
        out.update(v=v_new, e=e_new, x=x_new, u=u_new)
        return out


def scale_factors(coords, edges, edge_graph_ids, num_graphs, alpha):
    """Per-graph gamma = alpha / max edge length, from raw coordinates."""
    vec = coords[edges[:, 1]] - coords[edges[:, 0]]
    lengths = np.sqrt((vec**2).sum(axis=1))
    longest = np.zeros(num_graphs)
    np.maximum.at(longest, edge_graph_ids, lengths)
    degenerate = np.nonzero(longest <= 0.0)[0]
    if degenerate.size:
        raise ValueError(
            f"cannot scale-normalise graphs {degenerate.tolist()}: every edge has length 0"
        )
    return alpha / longest


@dataclass
class Prepared:
    """A batch pre-converted to constant tensors, index arrays and scatter plans."""

    num_graphs: int
    num_nodes: int
    v0: Tensor
    e0: Tensor
    x0: Tensor
    u0: Tensor
    src: np.ndarray
    tgt: np.ndarray
    node_gids: np.ndarray
    edge_gids: np.ndarray
    inv_degree_edge: Tensor
    ones_row: Tensor
    scale: np.ndarray  # per-graph input scaling actually applied
    labels: np.ndarray | None
    plan_by_src: object = None
    plan_by_tgt: object = None
    plan_node_graph: object = None
    plan_edge_graph: object = None


class ClassifierModel:
    """Three graph layers, node MLP, per-graph sum pooling, head MLP.

    ``kind`` is "gn" (standard block, raw coordinates as node features),
    "dgn" (distance block, constant node features) or "sdgn" (dgn plus the
    scale-normalising input layer).
    """

    def __init__(
        self,
        kind="sdgn",
        coordinate_map="identity",
        alpha=1.0,
        hidden_dim=32,
        mlp_hidden=64,
        n_classes=5,
        n_x=3,
        num_blocks=3,
        seed=0,
    ):
        if kind not in MODEL_KINDS:
            raise ValueError(f"kind must be one of {MODEL_KINDS}, got {kind!r}")
        if kind == "gn":
            if coordinate_map not in (None, "none"):
                raise ValueError("gn models take no coordinate map")
            coordinate_map = None
        elif coordinate_map not in COORDINATE_MAPS:
            raise ValueError(f"coordinate_map must be one of {COORDINATE_MAPS}")
        if kind == "sdgn" and not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        self.kind = kind
        self.coordinate_map = coordinate_map
        self.alpha = float(alpha)
        self.hidden_dim = int(hidden_dim)
        self.mlp_hidden = int(mlp_hidden)
        self.n_classes = int(n_classes)
        self.n_x = int(n_x)
        self.num_blocks = int(num_blocks)
        self.seed = int(seed)
        self.feature_mode = "coords" if kind == "gn" else "ones"

        rng = substream_rng(seed, INIT_STREAM)
        block_kind = "gn" if kind == "gn" else "dgn"
        in_v = n_x if kind == "gn" else 1
        in_e = in_u = 0
        self.blocks = []
        for _ in range(self.num_blocks):
            cfg = BlockConfig(
                block_kind=block_kind,
                in_v=in_v,
                in_e=in_e,
                in_u=in_u,
                out_v=self.hidden_dim,
                out_e=self.hidden_dim,
                out_u=self.hidden_dim,
                coordinate_map=coordinate_map if block_kind == "dgn" else None,
            )
            self.blocks.append(GraphBlock(cfg, rng, mlp_hidden=self.mlp_hidden))
            in_v = in_e = in_u = self.hidden_dim
        self.node_mlp = MLP(self.hidden_dim, self.hidden_dim, rng, self.mlp_hidden)
        self.head_mlp = MLP(self.hidden_dim, self.n_classes, rng, self.mlp_hidden)

    def parameters(self):
        params = []
        for i, block in enumerate(self.blocks):
            params += block.parameters(f"block{i + 1}")
        params += self.node_mlp.parameters("node_mlp")
        params += self.head_mlp.parameters("head")
        return params

    def config(self):
        return {
            "kind": self.kind,
            "coordinate_map": self.coordinate_map,
            "alpha": self.alpha,
            "hidden_dim": self.hidden_dim,
            "mlp_hidden": self.mlp_hidden,
            "n_classes": self.n_classes,
            "n_x": self.n_x,
            "num_blocks": self.num_blocks,
            "seed": self.seed,
        }

    def config_id(self):
        blob = json.dumps(self.config(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def prepare(self, graphs):
        """Embed, batch and (for sdgn) scale-normalise a list of graphs.

        ``graphs`` may be LabeledGraph instances or (coords, edges) pairs.
        Returns a Prepared batch reusable across many forward passes.
        """
        labels = None
        if graphs and hasattr(graphs[0], "label"):
            labels = np.array([g.label for g in graphs], dtype=np.int64)
        embedded = []
        for g in graphs:
            coords, edges = (g.coords, g.edges) if hasattr(g, "coords") else g
            embedded.append(embed_graph(coords, edges, self.feature_mode))
        b = make_batch(embedded)

        scale = np.ones(b.num_graphs)
        coords = b.coords
        if self.kind == "sdgn":
            scale = scale_factors(b.coords, b.edges, b.edge_graph_ids, b.num_graphs, self.alpha)
            coords = b.coords * scale[b.node_graph_ids][:, None]

        degree = np.zeros(b.num_nodes)
        np.add.at(degree, b.edges[:, 1], 1.0)
        in_degree_edge = degree[b.edges[:, 1]][:, None]

        return Prepared(
            num_graphs=b.num_graphs,
            num_nodes=b.num_nodes,
            v0=constant(b.node_features),
            e0=constant(b.edge_features),
            x0=constant(coords),
            u0=constant(b.globals),
            src=b.edges[:, 0],
            tgt=b.edges[:, 1],
            node_gids=b.node_graph_ids,
            edge_gids=b.edge_graph_ids,
            inv_degree_edge=constant(1.0 / in_degree_edge),
            ones_row=constant(np.ones((1, self.n_x))),
            scale=scale,
            labels=labels,
            plan_by_src=make_segment_plan(b.edges[:, 0], b.num_nodes),
            plan_by_tgt=make_segment_plan(b.edges[:, 1], b.num_nodes),
            plan_node_graph=make_segment_plan(b.node_graph_ids, b.num_graphs),
            plan_edge_graph=make_segment_plan(b.edge_graph_ids, b.num_graphs),
        )

    def forward(self, prepared, collect=None):
        """Logits (num_graphs, n_classes) for a prepared batch.

        ``collect``, if given, receives numpy snapshots of the scaled input
        coordinates, the per-layer coordinates and the per-layer post-update
        squared edge distances (for equivariance audits).
        """
        state = {
            "v": prepared.v0,
            "e": prepared.e0,
            "x": prepared.x0,
            "u": prepared.u0,
            "src": prepared.src,
            "tgt": prepared.tgt,
            "node_gids": prepared.node_gids,
            "edge_gids": prepared.edge_gids,
            "num_nodes": prepared.num_nodes,
            "num_graphs": prepared.num_graphs,
            "inv_degree_edge": prepared.inv_degree_edge,
            "ones_row": prepared.ones_row,
            "plan_by_src": prepared.plan_by_src,
            "plan_by_tgt": prepared.plan_by_tgt,
            "plan_node_graph": prepared.plan_node_graph,
            "plan_edge_graph": prepared.plan_edge_graph,
        }
        if collect is not None:
            collect["scaled_coords"] = prepared.x0.data.copy()
            collect["coords"] = []
            collect["post_distances"] = []
        for block in self.blocks:
            state = block.forward(state)
            if collect is not None:
                collect["coords"].append(state["x"].data.copy())
                if self.kind != "gn":
                    vec = state["x"].data[prepared.tgt] - state["x"].data[prepared.src]
                    collect["post_distances"].append((vec**2).sum(axis=1))
        node_out = self.node_mlp(state["v"])
        pooled = segment_sum(
            node_out, prepared.node_gids, prepared.num_graphs, plan=prepared.plan_node_graph
        )
        logits = self.head_mlp(pooled)
        if collect is not None:
            collect["logits"] = logits.data.copy()
        return logits

    def logits(self, graphs):
        """Inference-only logits for a list of graphs (no tape recording)."""
        return self.forward(self.prepare(graphs)).data

    def predict(self, graphs):
        """Class labels via argmax (ties resolve to the lowest class index)."""
        return np.argmax(self.logits(graphs), axis=1)


def save_checkpoint(model, path):
    """Write config + parameters as schema-tagged JSON (round-trip floats)."""
    doc = {
        "schema": CHECKPOINT_SCHEMA,
        "config": model.config(),
        "params": {
            name: {"shape": list(t.data.shape), "data": [float(x) for x in t.data.ravel()]}
            for name, t in model.parameters()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unrecognised checkpoint schema {doc.get('schema')!r}")
    model = ClassifierModel(**doc["config"])
    stored = doc["params"]
    for name, tensor in model.parameters():
        if name not in stored:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        entry = stored[name]
        data = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if data.shape != tensor.data.shape:
            raise ValueError(
                f"checkpoint parameter {name!r} has shape {data.shape}, expected {tensor.data.shape}"
            )
        tensor.data = data
    return model
