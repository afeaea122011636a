"""Bipartite frame-pair association graph and its message passing network.

A graph connects every previous-frame node to every current-frame node.
Nodes carry a 32-d latent state, edges a 6-d state.  ``propagate`` runs L
rounds of edge update then node update, scoring every edge after each round
with the binary classifier (deep supervision); the final association score
is the last round's output.

The module also implements the exact reverse-mode pass through the unrolled
message passing so training can compute parameter gradients.  Graphs are
stored as flat arrays; several frame pairs can be merged into one disjoint
union (see :func:`merge`) so a whole training batch runs through single
BLAS calls.

A graph instance is single-writer while propagating; distinct graphs with
shared read-only parameters may run fully in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import features
from .errors import DimensionMismatch
from .nn import GELU, SIGMOID, DenseLayer, Mlp, xavier_mlp

NODE_STATE_DIM = 32
EDGE_STATE_DIM = 6
MSG_IN_DIM = NODE_STATE_DIM + EDGE_STATE_DIM            # 38
EDGE_IN_DIM = 2 * NODE_STATE_DIM + EDGE_STATE_DIM       # 70

# (dims, activations) per network; every hidden and output layer is FC+GELU
# except the classifier head which ends in a sigmoid.
NETWORK_SHAPES = {
    "f_v_fe": ([features.NODE_FEATURE_DIM, 128, NODE_STATE_DIM], [GELU, GELU]),
    "f_e_fe": ([features.EDGE_FEATURE_DIM, 8, EDGE_STATE_DIM], [GELU, GELU]),
    "f_v_me": ([MSG_IN_DIM, 64, NODE_STATE_DIM], [GELU, GELU]),
    "f_e_me": ([EDGE_IN_DIM, 32, EDGE_STATE_DIM], [GELU, GELU]),
    "f_cls": ([EDGE_STATE_DIM, 4, 1], [GELU, SIGMOID]),
}


class ModelParameters:
    """The five dense networks of the association model.

    Construction asserts every layer dimension, so any deviation from the
    contract (515/128/32, 4/8/6, 38/64/32, 70/32/6, 6/4/1) fails immediately.
    """

    def __init__(self, f_v_fe: Mlp, f_e_fe: Mlp, f_v_me: Mlp, f_e_me: Mlp, f_cls: Mlp):
        nets = {"f_v_fe": f_v_fe, "f_e_fe": f_e_fe, "f_v_me": f_v_me,
                "f_e_me": f_e_me, "f_cls": f_cls}
        for name, net in nets.items():
            dims, acts = NETWORK_SHAPES[name]
            got = [net.layers[0].in_dim] + [layer.out_dim for layer in net.layers]
            if got != dims:
                raise DimensionMismatch(f"{name} dims {got} != required {dims}")
            for layer, act in zip(net.layers, acts):
                if layer.activation != act:
                    raise DimensionMismatch(
                        f"{name} activation {layer.activation} != required {act}")
        self.f_v_fe = f_v_fe
        self.f_e_fe = f_e_fe
        self.f_v_me = f_v_me
        self.f_e_me = f_e_me
        self.f_cls = f_cls

    @classmethod
    def initialize(cls, seed: int | np.random.Generator = 0) -> "ModelParameters":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        nets = {name: xavier_mlp(dims, acts, rng)
                for name, (dims, acts) in NETWORK_SHAPES.items()}
        return cls(**nets)

    def networks(self) -> dict[str, Mlp]:
        return {"f_v_fe": self.f_v_fe, "f_e_fe": self.f_e_fe, "f_v_me": self.f_v_me,
                "f_e_me": self.f_e_me, "f_cls": self.f_cls}

    def to_dict(self) -> dict[str, np.ndarray]:
        """Flat view name -> array; arrays are the live parameters, not copies."""
        out = {}
        for name, net in self.networks().items():
            for i, layer in enumerate(net.layers):
                out[f"{name}.{i}.W"] = layer.weight
                out[f"{name}.{i}.b"] = layer.bias
        return out

    @classmethod
    def from_dict(cls, tensors: dict[str, np.ndarray]) -> "ModelParameters":
        nets = {}
        for name, (dims, acts) in NETWORK_SHAPES.items():
            layers = []
            for i, act in enumerate(acts):
                try:
                    w = tensors[f"{name}.{i}.W"]
                    b = tensors[f"{name}.{i}.b"]
                except KeyError as exc:
                    raise DimensionMismatch(f"missing tensor {exc}") from exc
                layers.append(DenseLayer(w, b, act))
            nets[name] = Mlp(layers)
        return cls(**nets)

    def copy(self) -> "ModelParameters":
        return ModelParameters.from_dict(
            {k: v.copy() for k, v in self.to_dict().items()})

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.to_dict().items()}


@dataclass
class GraphNode:
    """One detection's feature bundle and its evolving latent state."""

    frame_id: int
    local_index: int
    raw: np.ndarray                       # (515,) appearance + homogeneous projection
    state: np.ndarray | None = None       # (32,) latent, set after propagation
    carried: bool = False                 # True if this node kept a learned state

    def __post_init__(self):
        if self.raw.shape != (features.NODE_FEATURE_DIM,):
            raise DimensionMismatch(f"node raw shape {self.raw.shape}")
        if self.carried and (self.state is None or self.state.shape != (NODE_STATE_DIM,)):
            raise DimensionMismatch("carried node must hold a (32,) state")


def _segment_sum(values: np.ndarray, counts: np.ndarray, width: int) -> np.ndarray:
    """Sum consecutive runs of rows; zero rows for empty segments.

    ``values`` rows are grouped by segment in order and each run is summed
    left to right, which fixes the floating-point reduction order.
    """
    out = np.zeros((len(counts), width))
    nz = counts > 0
    if values.shape[0]:
        starts = np.concatenate(([0], np.cumsum(counts)))[:-1]
        out[nz] = np.add.reduceat(values, starts[nz], axis=0)
    return out


class AssociationGraph:
    """Complete bipartite graph between two frames, stored as flat arrays.

    ``edge_src``/``edge_dst`` index into the previous/current node sets; the
    construction order is previous-index major, current-index minor.  A graph
    may also be the disjoint union of several frame pairs (``merge``), in
    which case ``edge_weight`` holds the per-component loss weight 1/|E_k|.
    """

    def __init__(self, prev_raw: np.ndarray, curr_raw: np.ndarray,
                 edge_src: np.ndarray, edge_dst: np.ndarray, edge_raw: np.ndarray,
                 prev_carried: np.ndarray, prev_stored: np.ndarray | None,
                 edge_weight: np.ndarray | None = None):
        self.prev_raw = prev_raw
        self.curr_raw = curr_raw
        self.n_prev = prev_raw.shape[0]
        self.n_curr = curr_raw.shape[0]
        self.edge_src = edge_src
        self.edge_dst = edge_dst
        self.edge_raw = edge_raw
        self.n_edges = edge_raw.shape[0]
        self.prev_carried = prev_carried
        self.prev_stored = prev_stored
        if edge_weight is None:
            edge_weight = (np.full(self.n_edges, 1.0 / self.n_edges)
                           if self.n_edges else np.zeros(0))
        self.edge_weight = edge_weight

        if edge_raw.shape != (self.n_edges, features.EDGE_FEATURE_DIM):
            raise DimensionMismatch(f"edge raw shape {edge_raw.shape}")

        # Index machinery for deterministic message aggregation: edges are
        # already src-sorted; dst_order re-sorts them by (dst, src).
        self._prev_counts = np.bincount(edge_src, minlength=self.n_prev)
        self._dst_order = np.lexsort((edge_src, edge_dst))
        self._inv_dst_order = np.empty_like(self._dst_order)
        self._inv_dst_order[self._dst_order] = np.arange(self.n_edges)
        self._curr_counts = np.bincount(edge_dst, minlength=self.n_curr)

        # Mutable propagation state.
        self.h_prev = np.zeros((self.n_prev, NODE_STATE_DIM))
        self.h_curr = np.zeros((self.n_curr, NODE_STATE_DIM))
        self.h_edge = np.zeros((self.n_edges, EDGE_STATE_DIM))
        self.score_per_step: list[np.ndarray] = []
        self._encoded = False

    @classmethod
    def from_feature_arrays(cls, prev_raw: np.ndarray, curr_raw: np.ndarray,
                            prev_carried: np.ndarray | None = None,
                            prev_stored: np.ndarray | None = None) -> "AssociationGraph":
        """Build the complete bipartite product of two (n, 515) feature sets."""
        n_prev, n_curr = prev_raw.shape[0], curr_raw.shape[0]
        edge_src = np.repeat(np.arange(n_prev, dtype=np.int64), n_curr)
        edge_dst = np.tile(np.arange(n_curr, dtype=np.int64), n_prev)
        edge_raw = features.edge_feature_matrix(prev_raw, curr_raw)
        assert edge_raw.shape[0] == n_prev * n_curr
        if prev_carried is None:
            prev_carried = np.zeros(n_prev, dtype=bool)
        return cls(prev_raw, curr_raw, edge_src, edge_dst, edge_raw,
                   prev_carried, prev_stored)

    def adjacency(self) -> tuple[list[list[int]], list[list[int]]]:
        """Incident edge indices per previous node and per current node."""
        prev_adj: list[list[int]] = [[] for _ in range(self.n_prev)]
        curr_adj: list[list[int]] = [[] for _ in range(self.n_curr)]
        for e in range(self.n_edges):
            prev_adj[self.edge_src[e]].append(e)
            curr_adj[self.edge_dst[e]].append(e)
        return prev_adj, curr_adj

    def final_scores(self) -> np.ndarray:
        if not self.score_per_step:
            raise DimensionMismatch("graph has not been propagated")
        return self.score_per_step[-1]


def build_bipartite(prev: list[GraphNode], curr: list[GraphNode]) -> AssociationGraph:
    """Connect every previous node with every current node.

    Either side may be empty, yielding a graph with zero edges.  Current
    nodes must be fresh; previous nodes may carry learned states.
    """
    if any(n.carried for n in curr):
        raise DimensionMismatch("current-frame nodes cannot carry states")
    prev_raw = (np.stack([n.raw for n in prev])
                if prev else np.zeros((0, features.NODE_FEATURE_DIM)))
    curr_raw = (np.stack([n.raw for n in curr])
                if curr else np.zeros((0, features.NODE_FEATURE_DIM)))
    carried = np.array([n.carried for n in prev], dtype=bool)
    stored = None
    if carried.any():
        stored = np.stack([n.state if n.carried else np.zeros(NODE_STATE_DIM)
                           for n in prev])
    return AssociationGraph.from_feature_arrays(prev_raw, curr_raw, carried, stored)


def merge(graphs: list[AssociationGraph]) -> AssociationGraph:
    """Disjoint union of several frame-pair graphs for batched training.

    Edge weights become 1/|E_k| per component so the loss is mean-reduced
    within each pair and summed across pairs.
    """
    prev_raw = np.vstack([g.prev_raw for g in graphs])
    curr_raw = np.vstack([g.curr_raw for g in graphs])
    prev_off = np.cumsum([0] + [g.n_prev for g in graphs])
    curr_off = np.cumsum([0] + [g.n_curr for g in graphs])
    edge_src = np.concatenate([g.edge_src + prev_off[i] for i, g in enumerate(graphs)])
    edge_dst = np.concatenate([g.edge_dst + curr_off[i] for i, g in enumerate(graphs)])
    edge_raw = np.vstack([g.edge_raw for g in graphs])
    weight = np.concatenate([g.edge_weight for g in graphs])
    carried = np.concatenate([g.prev_carried for g in graphs])
    stored = None
    if carried.any():
        stored = np.vstack([g.prev_stored if g.prev_stored is not None
                            else np.zeros((g.n_prev, NODE_STATE_DIM)) for g in graphs])
    return AssociationGraph(prev_raw, curr_raw, edge_src.astype(np.int64),
                            edge_dst.astype(np.int64), edge_raw, carried, stored, weight)


def encode_initial(g: AssociationGraph, m: ModelParameters, want_cache: bool = False):
    """Initial states: fresh nodes through f_v_fe, carried nodes keep their
    stored state, every edge through f_e_fe."""
    fresh_prev = ~g.prev_carried
    fresh_rows = np.vstack([g.prev_raw[fresh_prev], g.curr_raw])
    encoded, v_cache = m.f_v_fe.forward(fresh_rows) if fresh_rows.shape[0] else (
        np.zeros((0, NODE_STATE_DIM)), None)
    n_fresh_prev = int(fresh_prev.sum())
    g.h_prev = np.zeros((g.n_prev, NODE_STATE_DIM))
    if n_fresh_prev:
        g.h_prev[fresh_prev] = encoded[:n_fresh_prev]
    if g.prev_carried.any():
        g.h_prev[g.prev_carried] = g.prev_stored[g.prev_carried]
    g.h_curr = encoded[n_fresh_prev:]
    if g.n_edges:
        g.h_edge, e_cache = m.f_e_fe.forward(g.edge_raw)
    else:
        g.h_edge, e_cache = np.zeros((0, EDGE_STATE_DIM)), None
    g.score_per_step = []
    g._encoded = True
    if want_cache:
        return {"v_cache": v_cache, "e_cache": e_cache,
                "fresh_prev": fresh_prev, "n_fresh_prev": n_fresh_prev}
    return None


def edge_update(g: AssociationGraph, m: ModelParameters, want_cache: bool = False):
    """One round of Eq-style edge encoding from [h_src, h_dst, h_edge]."""
    e_in = np.concatenate(
        [g.h_prev[g.edge_src], g.h_curr[g.edge_dst], g.h_edge], axis=1)
    g.h_edge, cache = m.f_e_me.forward(e_in) if g.n_edges else (
        np.zeros((0, EDGE_STATE_DIM)), None)
    return cache if want_cache else None


def node_update(g: AssociationGraph, m: ModelParameters, want_cache: bool = False):
    """One round of message aggregation into every node.

    Each edge sends one message to each endpoint, built from the *other*
    endpoint's previous state and the edge's current state.  Messages are
    summed per node in deterministic adjacency order; isolated nodes get the
    empty-sum zero vector.
    """
    E = g.n_edges
    if E:
        sigma = g._dst_order
        msg_in = np.empty((2 * E, MSG_IN_DIM))
        msg_in[:E, :NODE_STATE_DIM] = g.h_curr[g.edge_dst]
        msg_in[:E, NODE_STATE_DIM:] = g.h_edge
        msg_in[E:, :NODE_STATE_DIM] = g.h_prev[g.edge_src[sigma]]
        msg_in[E:, NODE_STATE_DIM:] = g.h_edge[sigma]
        msgs, cache = m.f_v_me.forward(msg_in)
        g.h_prev = _segment_sum(msgs[:E], g._prev_counts, NODE_STATE_DIM)
        g.h_curr = _segment_sum(msgs[E:], g._curr_counts, NODE_STATE_DIM)
    else:
        cache = None
        g.h_prev = np.zeros((g.n_prev, NODE_STATE_DIM))
        g.h_curr = np.zeros((g.n_curr, NODE_STATE_DIM))
    return cache if want_cache else None


def classify(h_e: np.ndarray, m: ModelParameters) -> np.ndarray:
    """Association probability for one edge state or a batch of them."""
    single = h_e.ndim == 1
    p, _ = m.f_cls.forward(np.atleast_2d(h_e))
    return float(p[0, 0]) if single else p[:, 0]


def propagate(g: AssociationGraph, m: ModelParameters, steps: int = 6,
              want_cache: bool = False):
    """Run ``steps`` rounds of edge update then node update, classifying every
    edge after each round (deep supervision).  The final association score is
    the last round's output.

    Returns the (steps, n_edges) score array; with ``want_cache`` also returns
    the forward cache consumed by :func:`backward`.
    """
    if steps < 1:
        raise ValueError(f"need at least one message passing step, got {steps}")
    enc_cache = encode_initial(g, m, want_cache=want_cache)
    step_caches = []
    for _ in range(steps):
        ec = edge_update(g, m, want_cache=want_cache)
        nc = node_update(g, m, want_cache=want_cache)
        if g.n_edges:
            probs, cc = m.f_cls.forward(g.h_edge)
            g.score_per_step.append(probs[:, 0].copy())
        else:
            cc = None
            g.score_per_step.append(np.zeros(0))
        step_caches.append((ec, nc, cc))
    scores = np.stack(g.score_per_step) if g.n_edges else np.zeros((steps, 0))
    if want_cache:
        return scores, {"encode": enc_cache, "steps": step_caches}
    return scores


def _accumulate(grads: dict, name: str, layer_grads: list) -> None:
    for i, (dw, db) in enumerate(layer_grads):
        grads[f"{name}.{i}.W"] += dw
        grads[f"{name}.{i}.b"] += db


def backward(g: AssociationGraph, m: ModelParameters, cache: dict,
             score_grads: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode pass through the unrolled message passing.

    ``score_grads`` is the (steps, n_edges) array of loss gradients with
    respect to each round's classifier output.  Returns gradients for every
    parameter tensor, keyed like ``ModelParameters.to_dict``.
    """
    grads = m.zero_grads()
    E = g.n_edges
    if E == 0:
        return grads
    steps = len(cache["steps"])
    sigma = g._dst_order
    inv_sigma = g._inv_dst_order
    ns = NODE_STATE_DIM

    G_prev = np.zeros((g.n_prev, ns))
    G_curr = np.zeros((g.n_curr, ns))
    G_edge = np.zeros((E, EDGE_STATE_DIM))

    for l in range(steps - 1, -1, -1):
        ec, nc, cc = cache["steps"][l]
        # Classifier at this round contributes to the edge-state gradient.
        g_he, cls_grads = m.f_cls.backward(cc, score_grads[l][:, None])
        _accumulate(grads, "f_cls", cls_grads)
        G_edge += g_he

        # Node update backward: messages inherit their destination's gradient.
        gm = np.empty((2 * E, ns))
        gm[:E] = G_prev[g.edge_src]
        gm[E:] = G_curr[g.edge_dst[sigma]]
        g_msg_in, v_grads = m.f_v_me.backward(nc, gm)
        _accumulate(grads, "f_v_me", v_grads)
        # Split message-input gradients: neighbor state at l-1, edge state at l.
        G_curr_next = _segment_sum(g_msg_in[:E, :ns][sigma], g._curr_counts, ns)
        G_prev_next = _segment_sum(g_msg_in[E:, :ns][inv_sigma], g._prev_counts, ns)
        G_edge += g_msg_in[:E, ns:]
        G_edge += g_msg_in[E:, ns:][inv_sigma]

        # Edge update backward: split into [h_src, h_dst, h_edge] at l-1.
        g_e_in, e_grads = m.f_e_me.backward(ec, G_edge)
        _accumulate(grads, "f_e_me", e_grads)
        G_prev_next += _segment_sum(g_e_in[:, :ns], g._prev_counts, ns)
        G_curr_next += _segment_sum(g_e_in[:, ns:2 * ns][sigma], g._curr_counts, ns)
        G_edge = g_e_in[:, 2 * ns:]
        G_prev, G_curr = G_prev_next, G_curr_next

    # Initial encoders.
    enc = cache["encode"]
    if enc["e_cache"] is not None:
        _, fe_grads = m.f_e_fe.backward(enc["e_cache"], G_edge)
        _accumulate(grads, "f_e_fe", fe_grads)
    if enc["v_cache"] is not None:
        g_fresh = np.vstack([G_prev[enc["fresh_prev"]], G_curr])
        _, v_fe_grads = m.f_v_fe.backward(enc["v_cache"], g_fresh)
        _accumulate(grads, "f_v_fe", v_fe_grads)
    return grads
