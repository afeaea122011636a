"""Supervised training of the association model.

Frame pairs are built from ground-truth boxes with fresh node encodings on
both sides, labelled 1 where the endpoints share a ground-truth identity.
The loss is the focal loss summed over all message passing rounds (deep
supervision), mean-reduced over each pair's edges and summed across the
pairs of a batch, optimized with Adam under the warmup + cosine schedule.
Validation runs full inference on held-out sequences every couple of epochs
and the checkpoint with the best IDF1 wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import io as rio
from .errors import CorruptGroundTruth, CorruptModelFile, DimensionMismatch, \
    NoTrainingData, TrackingError
from .features import node_feature_matrix
from .graph import AssociationGraph, ModelParameters, backward, merge, propagate
from .metrics import idf1
from .nn import AdamState, LrSchedule, adam_step, lr_at, sigmoid_focal_loss, \
    sigmoid_focal_loss_grad
from .tracker import run_sequence


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16          # frame-pair graphs per optimizer step
    steps: int = 6                # message passing rounds
    alpha: float = 0.25
    gamma: float = 2.0
    seed: int = 0
    base_lr: float = 0.01
    min_lr: float = 0.001
    warmup_epochs: int | None = None   # default: min(10, epochs // 3)
    val_every: int = 2
    xi: float = 0.9
    zero_projection: bool = False

    def schedule(self) -> LrSchedule:
        warmup = self.warmup_epochs
        if warmup is None:
            warmup = min(10, max(1, self.epochs // 3))
        return LrSchedule(self.base_lr, self.min_lr, warmup, self.epochs)


@dataclass
class Checkpoint:
    params: ModelParameters
    epoch: int
    val_idf1: float | None


@dataclass
class PairSample:
    graph: AssociationGraph
    labels: np.ndarray


def make_labels(prev_ids: list[int], curr_ids: list[int]) -> np.ndarray:
    """Binary label per bipartite edge, previous-index major.

    A duplicate ground-truth id within one frame is corrupt: no player can
    appear twice at the same time.
    """
    for ids in (prev_ids, curr_ids):
        if len(set(ids)) != len(ids):
            raise CorruptGroundTruth(f"duplicate ground-truth id in frame: {ids}")
    prev = np.asarray(prev_ids)
    curr = np.asarray(curr_ids)
    return (prev[:, None] == curr[None, :]).astype(np.float64).ravel()


def pair_loss(scores: np.ndarray, labels: np.ndarray,
              weights: np.ndarray | None = None, alpha: float = 0.25,
              gamma: float = 2.0) -> tuple[float, np.ndarray]:
    """Deep-supervised focal loss over a (steps, n_edges) score array.

    Per round, the per-edge losses are mean-reduced (weighted 1/n_edges, or
    by the supplied per-edge weights for merged batches) and the rounds are
    summed.  Returns the loss and its gradient with respect to every score.
    """
    scores = np.atleast_2d(scores)
    if weights is None:
        weights = np.full(scores.shape[1], 1.0 / scores.shape[1]) \
            if scores.shape[1] else np.zeros(0)
    losses = sigmoid_focal_loss(scores, labels[None, :], alpha, gamma)
    grads = sigmoid_focal_loss_grad(scores, labels[None, :], alpha, gamma)
    return float((losses * weights[None, :]).sum()), grads * weights[None, :]


def build_pairs(sequences: list[rio.Sequence],
                zero_projection: bool = False) -> list[PairSample]:
    """Frame-pair samples from consecutive frames with ground truth.

    Pairs with an empty side contribute no edges and are skipped.  A
    detection without a ground-truth id (-1) means the sequence cannot be
    used for training.
    """
    samples = []
    for seq in sequences:
        raws: dict[int, np.ndarray] = {}
        ids: dict[int, list[int]] = {}
        for frame in seq.frames:
            dets = seq.detections.get(frame, [])
            if not dets:
                continue
            frame_ids = [d.gt_id for d in dets]
            if any(i < 0 for i in frame_ids):
                raise NoTrainingData(
                    f"sequence {seq.name} frame {frame} has detections without "
                    f"ground-truth ids")
            emb = np.stack([d.embedding for d in dets])
            fps = np.array([[d.box.x + d.box.wd / 2.0, d.box.y + d.box.ht]
                            for d in dets])
            raws[frame] = node_feature_matrix(emb, fps, seq.homographies[frame],
                                              seq.template, zero_projection)
            ids[frame] = frame_ids
        frames = [f for f in seq.frames if f in raws]
        for fa, fb in zip(frames, frames[1:]):
            graph = AssociationGraph.from_feature_arrays(raws[fa], raws[fb])
            labels = make_labels(ids[fa], ids[fb])
            samples.append(PairSample(graph, labels))
    return samples


def _validate(params: ModelParameters, val_seqs: list[rio.Sequence],
              config: TrainConfig) -> float:
    """IDF1 of full inference against the sequences' own ground-truth ids."""
    f1s = []
    weights = []
    for seq in val_seqs:
        pred = run_sequence(seq, params, xi=config.xi, steps=config.steps,
                            zero_projection=config.zero_projection)
        pred_rows = [(r.frame_id, r.track_id, r.box) for r in pred]
        gt_rows = [(f, d.gt_id, d.box) for f in seq.frames
                   for d in seq.detections.get(f, [])]
        f1, _, _ = idf1(gt_rows, pred_rows)
        f1s.append(f1)
        weights.append(max(1, len(gt_rows)))
    return float(np.average(f1s, weights=weights)) if f1s else 0.0


def train(train_seqs: list[rio.Sequence], val_seqs: list[rio.Sequence],
          config: TrainConfig = TrainConfig(), on_epoch=None) -> Checkpoint:
    """Optimize a fresh model; returns the best checkpoint by validation IDF1
    (the final parameters when no validation sequences are given).

    ``on_epoch`` receives one record dict per epoch (epoch, loss, lr,
    val_idf1) for line-delimited logging.
    """
    samples = build_pairs(train_seqs, config.zero_projection)
    if not samples:
        raise NoTrainingData("no usable frame pairs in the training sequences")

    rng = np.random.default_rng(config.seed)
    params = ModelParameters.initialize(rng)
    flat = params.to_dict()
    adam = AdamState.for_params(flat)
    schedule = config.schedule()

    best: Checkpoint | None = None
    for epoch in range(config.epochs):
        lr = lr_at(epoch, schedule)
        order = rng.permutation(len(samples))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [samples[i] for i in order[start:start + config.batch_size]]
            union = merge([s.graph for s in batch]) if len(batch) > 1 \
                else batch[0].graph
            labels = np.concatenate([s.labels for s in batch])
            scores, cache = propagate(union, params, config.steps, want_cache=True)
            loss, score_grads = pair_loss(scores, labels, union.edge_weight,
                                          config.alpha, config.gamma)
            grads = backward(union, params, cache, score_grads)
            adam_step(flat, grads, adam, lr)
            epoch_loss += loss
        epoch_loss /= len(samples)

        val = None
        if val_seqs and ((epoch + 1) % config.val_every == 0
                         or epoch == config.epochs - 1):
            val = _validate(params, val_seqs, config)
            if best is None or val > best.val_idf1:
                best = Checkpoint(params.copy(), epoch, val)
        if on_epoch is not None:
            on_epoch({"epoch": epoch, "loss": epoch_loss, "lr": lr,
                      "val_idf1": val})

    if best is None:
        best = Checkpoint(params.copy(), config.epochs - 1, None)
    return best


def save_checkpoint(checkpoint: Checkpoint | ModelParameters, path) -> None:
    params = checkpoint.params if isinstance(checkpoint, Checkpoint) else checkpoint
    rio.write_weights(path, params.to_dict())


def load_checkpoint(path) -> ModelParameters:
    """Read a weight file back into validated model parameters."""
    tensors = rio.read_weights(path)
    try:
        return ModelParameters.from_dict(tensors)
    except (DimensionMismatch, TrackingError, ValueError) as exc:
        raise CorruptModelFile(f"{path}: {exc}") from exc
