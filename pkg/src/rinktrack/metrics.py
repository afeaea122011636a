"""CLEAR-MOT accumulation (FP/FN/IDsw, MOTA) and global identity metrics
(IDF1/IDP/IDR).

Per-frame correspondence follows the CLEAR convention: matches from the
previous frame persist while their boxes still overlap, the remainder is
matched by maximum-IoU optimal assignment, and an identity change on a
ground-truth target that had a known predicted id counts one switch.
IDF1 solves a global min-cost matching between ground-truth and predicted
identities over whole-sequence overlap counts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import UndefinedMetric
from .geometry import BoundingBox

IOU_MIN = 0.5


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 when the union has zero area."""
    ix = max(0.0, min(a.x + a.wd, b.x + b.wd) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.ht, b.y + b.ht) - max(a.y, b.y))
    inter = ix * iy
    union = a.wd * a.ht + b.wd * b.ht - inter
    return inter / union if union > 0 else 0.0


@dataclass
class FrameCorrespondence:
    """Matching outcome for one frame plus the running gt -> pred id memory."""

    matches: dict[int, int] = field(default_factory=dict)     # gt id -> pred id
    missed: list[int] = field(default_factory=list)           # FN gt ids
    false_positives: list[int] = field(default_factory=list)  # FP pred ids
    switches: int = 0                                         # IDsw this frame
    last_known: dict[int, int] = field(default_factory=dict)  # persists across gaps


def match_frame(gt: list[tuple[int, BoundingBox]], pred: list[tuple[int, BoundingBox]],
                prev: FrameCorrespondence | None = None,
                iou_min: float = IOU_MIN) -> FrameCorrespondence:
    """One CLEAR-MOT matching round.

    ``gt`` and ``pred`` are (id, box) lists for a single frame; ``prev`` is
    the previous frame's correspondence (or None at the first frame).
    """
    gt_map = dict(gt)
    pred_map = dict(pred)
    out = FrameCorrespondence(last_known=dict(prev.last_known) if prev else {})

    # 1. Persist still-valid matches from the previous frame.
    if prev is not None:
        for g, p in prev.matches.items():
            if g in gt_map and p in pred_map and iou(gt_map[g], pred_map[p]) >= iou_min:
                out.matches[g] = p

    # 2. Optimal assignment on the remainder, maximizing IoU above threshold.
    free_gt = [g for g in gt_map if g not in out.matches]
    used_pred = set(out.matches.values())
    free_pred = [p for p in pred_map if p not in used_pred]
    if free_gt and free_pred:
        score = np.zeros((len(free_gt), len(free_pred)))
        for i, g in enumerate(free_gt):
            for j, p in enumerate(free_pred):
                v = iou(gt_map[g], pred_map[p])
                score[i, j] = v if v >= iou_min else 0.0
        rows, cols = linear_sum_assignment(score, maximize=True)
        for r, c in zip(rows, cols):
            if score[r, c] > 0:
                out.matches[free_gt[r]] = free_pred[c]

    # 3. Leftovers and identity switches.
    out.missed = [g for g in gt_map if g not in out.matches]
    matched_pred = set(out.matches.values())
    out.false_positives = [p for p in pred_map if p not in matched_pred]
    for g, p in out.matches.items():
        if g in out.last_known and out.last_known[g] != p:
            out.switches += 1
        out.last_known[g] = p
    return out


@dataclass
class MetricsReport:
    mota: float
    fp: int
    fn: int
    idsw: int
    idf1: float
    idp: float
    idr: float
    gt_count: int
    id_tp: int = 0
    id_fp: int = 0
    id_fn: int = 0
    per_sequence: dict[str, "MetricsReport"] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {"mota": self.mota, "fp": self.fp, "fn": self.fn, "idsw": self.idsw,
               "idf1": self.idf1, "idp": self.idp, "idr": self.idr}
        out["per_sequence"] = {
            name: {k: v for k, v in rep.to_json_dict().items() if k != "per_sequence"}
            for name, rep in self.per_sequence.items()}
        return out


def mota(gt_total: int, fn: int, fp: int, idsw: int) -> float:
    """1 - (FN + FP + IDsw) / GT; may be negative."""
    if gt_total <= 0:
        raise UndefinedMetric("MOTA requires a positive ground-truth count")
    return 1.0 - (fn + fp + idsw) / gt_total


def _tracks_by_id(rows: list[tuple[int, int, BoundingBox]]) -> dict[int, dict[int, BoundingBox]]:
    tracks: dict[int, dict[int, BoundingBox]] = {}
    for frame, tid, box in rows:
        tracks.setdefault(tid, {})[frame] = box
    return tracks


def idf1(gt_rows: list[tuple[int, int, BoundingBox]],
         pred_rows: list[tuple[int, int, BoundingBox]],
         iou_min: float = IOU_MIN) -> tuple[float, float, float]:
    """(IDF1, IDP, IDR) under the optimal global id mapping.

    Rows are (frame, id, box).  Counts come from :func:`id_counts`.
    """
    tp, fp_id, fn_id = id_counts(gt_rows, pred_rows, iou_min)
    return _identity_ratios(tp, fp_id, fn_id)


def id_counts(gt_rows, pred_rows, iou_min: float = IOU_MIN) -> tuple[int, int, int]:
    """(TP_id, FP_id, FN_id) from min-cost bipartite matching of identities.

    The cost of pairing a ground-truth id with a predicted id is the number
    of frames where they do not overlap (missing or IoU below threshold);
    unmatched rows cost their full length.  Solved on a padded square matrix.
    """
    gt_tracks = _tracks_by_id(gt_rows)
    pred_tracks = _tracks_by_id(pred_rows)
    if not gt_tracks or not pred_tracks:
        if gt_tracks or pred_tracks:
            warnings.warn("idf1: one track set is empty; returning 0 by convention")
        return 0, sum(len(t) for t in pred_tracks.values()), \
            sum(len(t) for t in gt_tracks.values())

    gids = sorted(gt_tracks)
    pids = sorted(pred_tracks)
    overlap = np.zeros((len(gids), len(pids)), dtype=np.int64)
    for i, g in enumerate(gids):
        gtrack = gt_tracks[g]
        for j, p in enumerate(pids):
            ptrack = pred_tracks[p]
            common = gtrack.keys() & ptrack.keys()
            overlap[i, j] = sum(1 for f in common if iou(gtrack[f], ptrack[f]) >= iou_min)

    glen = np.array([len(gt_tracks[g]) for g in gids])
    plen = np.array([len(pred_tracks[p]) for p in pids])
    n = len(gids) + len(pids)
    big = float(glen.sum() + plen.sum() + 1)
    cost = np.full((n, n), 0.0)
    # real gt x real pred: frames of disagreement
    cost[:len(gids), :len(pids)] = (glen[:, None] - overlap) + (plen[None, :] - overlap)
    # gt left unmatched (paired with its dummy column)
    cost[:len(gids), len(pids):] = big
    cost[np.arange(len(gids)), len(pids) + np.arange(len(gids))] = glen
    # pred left unmatched
    cost[len(gids):, :len(pids)] = big
    cost[len(gids) + np.arange(len(pids)), np.arange(len(pids))] = plen
    cost[len(gids):, len(pids):] = 0.0

    rows, cols = linear_sum_assignment(cost)
    tp = 0
    for r, c in zip(rows, cols):
        if r < len(gids) and c < len(pids):
            tp += int(overlap[r, c])
    fn_id = int(glen.sum()) - tp
    fp_id = int(plen.sum()) - tp
    return tp, fp_id, fn_id


def evaluate_sequence(gt_rows, pred_rows, iou_min: float = IOU_MIN) -> MetricsReport:
    """Full CLEAR-MOT + identity evaluation of one sequence.

    Rows are (frame, id, box) tuples; frames are processed in ascending order.
    """
    frames = sorted({f for f, _, _ in gt_rows} | {f for f, _, _ in pred_rows})
    by_frame_gt: dict[int, list] = {}
    for f, i, b in gt_rows:
        by_frame_gt.setdefault(f, []).append((i, b))
    by_frame_pred: dict[int, list] = {}
    for f, i, b in pred_rows:
        by_frame_pred.setdefault(f, []).append((i, b))

    corr: FrameCorrespondence | None = None
    fp = fn = idsw = gt_total = 0
    for f in frames:
        gt_f = by_frame_gt.get(f, [])
        pred_f = by_frame_pred.get(f, [])
        corr = match_frame(gt_f, pred_f, corr, iou_min)
        fp += len(corr.false_positives)
        fn += len(corr.missed)
        idsw += corr.switches
        gt_total += len(gt_f)

    tp, fp_id, fn_id = id_counts(gt_rows, pred_rows, iou_min)
    f1, idp, idr = _identity_ratios(tp, fp_id, fn_id)
    return MetricsReport(mota=mota(gt_total, fn, fp, idsw), fp=fp, fn=fn,
                         idsw=idsw, idf1=f1, idp=idp, idr=idr, gt_count=gt_total,
                         id_tp=tp, id_fp=fp_id, id_fn=fn_id)


def _identity_ratios(tp: int, fp_id: int, fn_id: int) -> tuple[float, float, float]:
    if tp + fp_id + fn_id == 0:
        return 0.0, 0.0, 0.0
    f1 = 2.0 * tp / (2.0 * tp + fp_id + fn_id)
    idp = tp / (tp + fp_id) if tp + fp_id else 0.0
    idr = tp / (tp + fn_id) if tp + fn_id else 0.0
    return f1, idp, idr


def combine_reports(reports: dict[str, MetricsReport]) -> MetricsReport:
    """Merge per-sequence reports by summing their counts."""
    fp = sum(r.fp for r in reports.values())
    fn = sum(r.fn for r in reports.values())
    idsw = sum(r.idsw for r in reports.values())
    gt_total = sum(r.gt_count for r in reports.values())
    tp = sum(r.id_tp for r in reports.values())
    fp_id = sum(r.id_fp for r in reports.values())
    fn_id = sum(r.id_fn for r in reports.values())
    f1, idp, idr = _identity_ratios(tp, fp_id, fn_id)
    return MetricsReport(mota=mota(gt_total, fn, fp, idsw), fp=fp, fn=fn, idsw=idsw,
                         idf1=f1, idp=idp, idr=idr, gt_count=gt_total,
                         id_tp=tp, id_fp=fp_id, id_fn=fn_id,
                         per_sequence=dict(reports))
