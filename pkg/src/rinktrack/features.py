"""Raw node and edge feature construction.

A node feature is the 512-d appearance embedding concatenated with the
3-d homogeneous rink projection (x, y, 1).  An edge feature is the 4-d
relative vector [L1 appearance distance, cosine similarity, L2 position
distance, L1 position distance] between its two endpoints.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, ZeroEmbedding
from .geometry import HomographyMatrix, RinkPoint, RinkTemplate, project_points

EMBED_DIM = 512
NODE_FEATURE_DIM = EMBED_DIM + 3   # appearance + homogeneous projection
EDGE_FEATURE_DIM = 4


def l2_normalize(e: np.ndarray) -> np.ndarray:
    """Scale a raw appearance vector to unit L2 norm."""
    e = np.asarray(e, dtype=np.float64)
    if e.shape != (EMBED_DIM,):
        raise DimensionMismatch(f"expected ({EMBED_DIM},) embedding, got {e.shape}")
    norm = float(np.linalg.norm(e))
    if norm <= 1e-12:
        raise ZeroEmbedding("cannot normalize a (near) zero appearance vector")
    return e / norm


def _check_unit(e: np.ndarray) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    if e.shape != (EMBED_DIM,):
        raise DimensionMismatch(f"expected ({EMBED_DIM},) embedding, got {e.shape}")
    if abs(np.linalg.norm(e) - 1.0) > 1e-6:
        raise ZeroEmbedding("embedding is not unit-norm; call l2_normalize first")
    return e


def node_raw(r: np.ndarray, p: RinkPoint) -> np.ndarray:
    """Concatenate [appearance(512), px, py, 1] for a normalized rink point."""
    r = _check_unit(r)
    out = np.empty(NODE_FEATURE_DIM)
    out[:EMBED_DIM] = r
    out[EMBED_DIM] = p.rx
    out[EMBED_DIM + 1] = p.ry
    out[EMBED_DIM + 2] = 1.0
    return out


def edge_appearance(r_i: np.ndarray, r_j: np.ndarray) -> tuple[float, float]:
    """(L1 distance, cosine similarity) between two unit-norm embeddings."""
    r_i = _check_unit(r_i)
    r_j = _check_unit(r_j)
    return float(np.abs(r_i - r_j).sum()), float(r_i @ r_j)


def edge_position(p_i: RinkPoint, p_j: RinkPoint) -> tuple[float, float]:
    """(L2 distance, L1 distance) between two normalized rink points."""
    dx = p_i.rx - p_j.rx
    dy = p_i.ry - p_j.ry
    return float(np.hypot(dx, dy)), float(abs(dx) + abs(dy))


def edge_raw(r_i, r_j, p_i: RinkPoint, p_j: RinkPoint) -> np.ndarray:
    """4-d edge feature [L1 appearance, cosine, L2 position, L1 position]."""
    a_l1, a_cos = edge_appearance(r_i, r_j)
    p_l2, p_l1 = edge_position(p_i, p_j)
    return np.array([a_l1, a_cos, p_l2, p_l1])


def node_feature_matrix(embeddings: np.ndarray, footpoints: np.ndarray,
                        H: HomographyMatrix, template: RinkTemplate,
                        zero_projection: bool = False) -> np.ndarray:
    """Node features for a whole frame: project footpoints onto the rink,
    normalize by the template, and concatenate with the embeddings.

    ``zero_projection`` blanks the three projection components, leaving an
    appearance-only feature of the same shape (used by the ablation).
    """
    n = embeddings.shape[0]
    if embeddings.shape != (n, EMBED_DIM):
        raise DimensionMismatch(f"embeddings shape {embeddings.shape}")
    out = np.empty((n, NODE_FEATURE_DIM))
    out[:, :EMBED_DIM] = embeddings
    if zero_projection or n == 0:
        out[:, EMBED_DIM:] = 0.0
        return out
    rink = project_points(H, footpoints)
    scale = np.array([template.length, template.width])
    out[:, EMBED_DIM:EMBED_DIM + 2] = np.clip(rink / scale, -0.25, 1.25)
    out[:, EMBED_DIM + 2] = 1.0
    return out


def edge_feature_matrix(node_raw_prev: np.ndarray, node_raw_curr: np.ndarray) -> np.ndarray:
    """Edge features for the complete bipartite product of two node sets.

    Rows are ordered previous-index major, current-index minor, matching the
    association graph's deterministic edge ordering.  Inputs are (n, 515)
    node feature matrices: columns 0..511 hold the embedding and columns
    512..513 the normalized projection.
    """
    ep = node_raw_prev[:, :EMBED_DIM]
    ec = node_raw_curr[:, :EMBED_DIM]
    pp = node_raw_prev[:, EMBED_DIM:EMBED_DIM + 2]
    pc = node_raw_curr[:, EMBED_DIM:EMBED_DIM + 2]
    n_prev, n_curr = ep.shape[0], ec.shape[0]

    a_l1 = np.abs(ep[:, None, :] - ec[None, :, :]).sum(axis=2)
    a_cos = ep @ ec.T
    dpos = pp[:, None, :] - pc[None, :, :]
    p_l2 = np.sqrt((dpos ** 2).sum(axis=2))
    p_l1 = np.abs(dpos).sum(axis=2)

    out = np.empty((n_prev * n_curr, EDGE_FEATURE_DIM))
    out[:, 0] = a_l1.ravel()
    out[:, 1] = a_cos.ravel()
    out[:, 2] = p_l2.ravel()
    out[:, 3] = p_l1.ravel()
    return out
