"""Online inference: per frame pair, run the message passing network, prune
weak edges, resolve many-to-one violations, assign identities, and carry the
learned graph into the next pair.

A run is sequential by construction (temporal dependency); multiple
sequences may be tracked in parallel with shared read-only parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import features, geometry
from .errors import MissingHomography
from .graph import AssociationGraph, GraphNode, ModelParameters, build_bipartite, propagate

PRUNE_THRESHOLD = 0.9   # xi: retain only edges scoring strictly above this
DEFAULT_STEPS = 6


@dataclass(frozen=True)
class Matching:
    """Accepted (previous node, current node, score) triples; each node
    appears at most once."""

    pairs: list[tuple[int, int, float]]

    def prev_of(self, curr_index: int) -> int | None:
        for p, c, _ in self.pairs:
            if c == curr_index:
                return p
        return None


@dataclass
class TrackletStore:
    """Monotone id counter plus the previous frame's node -> id map."""

    next_id: int = 0
    active: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class TrackRow:
    frame_id: int
    track_id: int
    box: geometry.BoundingBox
    conf: float


def prune(scores: np.ndarray, xi: float = PRUNE_THRESHOLD) -> np.ndarray:
    """Indices of edges scoring strictly above the confidence threshold."""
    return np.flatnonzero(np.asarray(scores) > xi)


def resolve_violations(edges: list[tuple[int, int, float]],
                       optimal: bool = False) -> Matching:
    """Reduce a pruned edge set to a one-to-one matching.

    Greedy by default: sort by score descending (ties broken by ascending
    (prev, curr) index) and accept an edge iff both endpoints are unmatched.
    ``optimal`` switches to maximum-weight assignment for experimentation.
    """
    if not edges:
        return Matching([])
    if optimal:
        return _optimal_matching(edges)
    order = sorted(edges, key=lambda e: (-e[2], e[0], e[1]))
    used_prev: set[int] = set()
    used_curr: set[int] = set()
    pairs = []
    for p, c, s in order:
        if p in used_prev or c in used_curr:
            continue
        used_prev.add(p)
        used_curr.add(c)
        pairs.append((p, c, s))
    pairs.sort(key=lambda e: (e[0], e[1]))
    return Matching(pairs)


def _optimal_matching(edges: list[tuple[int, int, float]]) -> Matching:
    prev_ids = sorted({p for p, _, _ in edges})
    curr_ids = sorted({c for _, c, _ in edges})
    pi = {p: i for i, p in enumerate(prev_ids)}
    ci = {c: i for i, c in enumerate(curr_ids)}
    weight = np.zeros((len(prev_ids), len(curr_ids)))
    for p, c, s in edges:
        weight[pi[p], ci[c]] = s
    rows, cols = linear_sum_assignment(weight, maximize=True)
    pairs = [(prev_ids[r], curr_ids[c], weight[r, c])
             for r, c in zip(rows, cols) if weight[r, c] > 0]
    pairs.sort(key=lambda e: (e[0], e[1]))
    return Matching(pairs)


def assign_ids(matching: Matching, store: TrackletStore, n_curr: int) -> list[int]:
    """Matched nodes inherit their partner's id; the rest get fresh ids in
    detection order.  The store's active map is rebuilt for the new frame."""
    inherit = {c: store.active[p] for p, c, _ in matching.pairs}
    ids = []
    for c in range(n_curr):
        if c in inherit:
            ids.append(inherit[c])
        else:
            ids.append(store.next_id)
            store.next_id += 1
    store.active = {c: ids[c] for c in range(n_curr)}
    return ids


class Tracker:
    """Stateful online tracker over one sequence."""

    def __init__(self, params: ModelParameters, template: geometry.RinkTemplate,
                 xi: float = PRUNE_THRESHOLD, steps: int = DEFAULT_STEPS,
                 optimal_matching: bool = False, zero_projection: bool = False):
        self.params = params
        self.template = template
        self.xi = xi
        self.steps = steps
        self.optimal_matching = optimal_matching
        self.zero_projection = zero_projection
        self.store = TrackletStore()
        self.prev_nodes: list[GraphNode] = []

    def _make_nodes(self, frame_id: int, detections: list,
                    H: geometry.HomographyMatrix) -> list[GraphNode]:
        emb = np.stack([d.embedding for d in detections])
        fps = np.array([[d.box.x + d.box.wd / 2.0, d.box.y + d.box.ht]
                        for d in detections])
        raw = features.node_feature_matrix(emb, fps, H, self.template,
                                           self.zero_projection)
        return [GraphNode(frame_id, i, raw[i]) for i in range(len(detections))]

    def step(self, frame_id: int, detections: list,
             H: geometry.HomographyMatrix | None) -> list[int]:
        """Process one frame; returns the track id per detection.

        The current nodes, carrying their post-propagation states, become the
        learned graph for the next call.
        """
        if detections and H is None:
            raise MissingHomography(f"no homography for frame {frame_id}")
        curr = self._make_nodes(frame_id, detections, H) if detections else []

        if not self.prev_nodes or not curr:
            # No association possible; every current player starts a track.
            ids = assign_ids(Matching([]), self.store, len(curr))
            self.prev_nodes = curr
            return ids

        g = build_bipartite(self.prev_nodes, curr)
        propagate(g, self.params, self.steps)
        scores = g.final_scores()
        kept = prune(scores, self.xi)
        edges = [(int(g.edge_src[e]), int(g.edge_dst[e]), float(scores[e]))
                 for e in kept]
        matching = resolve_violations(edges, optimal=self.optimal_matching)
        ids = assign_ids(matching, self.store, len(curr))

        for i, node in enumerate(curr):
            node.state = g.h_curr[i].copy()
            node.carried = True
        self.prev_nodes = curr
        return ids


def run_sequence(seq, params: ModelParameters, xi: float = PRUNE_THRESHOLD,
                 steps: int = DEFAULT_STEPS, optimal_matching: bool = False,
                 zero_projection: bool = False) -> list[TrackRow]:
    """Track every frame of a parsed sequence in order; fully deterministic."""
    tracker = Tracker(params, seq.template, xi, steps, optimal_matching,
                      zero_projection)
    rows: list[TrackRow] = []
    for frame_id in seq.frames:
        dets = seq.detections.get(frame_id, [])
        H = seq.homographies.get(frame_id)
        ids = tracker.step(frame_id, dets, H)
        for det, tid in zip(dets, ids):
            rows.append(TrackRow(frame_id, tid, det.box, det.conf))
    return rows
