"""Command-line surface: simgen | train | infer | eval.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io as rio
from .errors import CorruptGroundTruth, CorruptModelFile, FormatError, \
    MissingHomography, NoTrainingData, TrackingError
from .metrics import combine_reports, evaluate_sequence
from .simulator import SimConfig, emit_dataset, generate_dataset
from .tracker import run_sequence
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERIC_EXIT = 3

_DATA_ERRORS = (FormatError, MissingHomography, CorruptModelFile,
                NoTrainingData, CorruptGroundTruth, OSError)


class _Parser(argparse.ArgumentParser):
    """argparse with spec exit codes: usage problems exit 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _build_parser() -> _Parser:
    parser = _Parser(prog="rinktrack",
                     description="Broadcast player tracking with a homography-"
                                 "aware association graph")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simgen", help="generate synthetic broadcast sequences")
    p.add_argument("--out", required=True, help="output sequence directory")
    p.add_argument("--count", type=int, default=1,
                   help="number of sequences (>1 writes subdirectories)")
    p.add_argument("--n-players", type=int, default=10)
    p.add_argument("--fps", type=int, default=30, choices=(30, 60))
    p.add_argument("--duration", type=float, default=10.0, help="seconds")
    p.add_argument("--occlusion-radius", type=float, default=3.0)
    p.add_argument("--occlusion-drop-prob", type=float, default=0.1)
    p.add_argument("--embed-noise-sigma", type=float, default=0.05)
    p.add_argument("--occlusion-mix", type=float, default=0.3)
    p.add_argument("--crossing-prob", type=float, default=0.0)
    p.add_argument("--static-camera", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default=None)

    p = sub.add_parser("train", help="train the association model")
    p.add_argument("--data", required=True, help="training sequence dir or root")
    p.add_argument("--val", default=None, help="validation sequence dir or root")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--steps", type=int, default=6, help="message passing rounds L")
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zero-projection", action="store_true",
                   help="appearance-only ablation: blank projection features")
    p.add_argument("--out", required=True, help="output model weight file")

    p = sub.add_parser("infer", help="run tracking over a sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--seq", required=True)
    p.add_argument("--xi", type=float, default=0.9, help="edge pruning threshold")
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--optimal-matching", action="store_true")
    p.add_argument("--zero-projection", action="store_true")
    p.add_argument("--out", required=True, help="output tracks CSV")

    p = sub.add_parser("eval", help="CLEAR-MOT and identity metrics")
    p.add_argument("--gt", required=True, help="gt CSV, sequence dir, or root")
    p.add_argument("--pred", required=True, help="tracks CSV or directory")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output metrics JSON")
    return parser


def _cmd_simgen(args) -> int:
    cfg = SimConfig(
        n_players=args.n_players, fps=args.fps, duration_s=args.duration,
        occlusion_radius=args.occlusion_radius,
        occlusion_drop_prob=args.occlusion_drop_prob,
        embed_noise_sigma=args.embed_noise_sigma,
        occlusion_mix=args.occlusion_mix, seed=args.seed,
        crossing_prob=args.crossing_prob, static_camera=args.static_camera,
        name=args.name or Path(args.out).name)
    if args.count > 1:
        paths = generate_dataset(args.out, args.count, cfg)
        print(f"wrote {len(paths)} sequences under {args.out}")
    else:
        emit_dataset(args.out, cfg)
        print(f"wrote sequence {args.out}")
    return 0


def _cmd_train(args) -> int:
    train_seqs = [rio.parse_sequence(p) for p in rio.find_sequences(args.data)]
    val_seqs = [rio.parse_sequence(p) for p in rio.find_sequences(args.val)] \
        if args.val else []
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                         steps=args.steps, alpha=args.alpha, gamma=args.gamma,
                         seed=args.seed, zero_projection=args.zero_projection)
    checkpoint = train(train_seqs, val_seqs, config,
                       on_epoch=lambda rec: print(json.dumps(rec)))
    save_checkpoint(checkpoint, args.out)
    summary = {"best_epoch": checkpoint.epoch, "val_idf1": checkpoint.val_idf1,
               "model": str(args.out)}
    print(json.dumps(summary))
    return 0


def _cmd_infer(args) -> int:
    params = load_checkpoint(args.model)
    seq = rio.parse_sequence(args.seq)
    rows = run_sequence(seq, params, xi=args.xi, steps=args.steps,
                        optimal_matching=args.optimal_matching,
                        zero_projection=args.zero_projection)
    rio.write_tracks(args.out, rows)
    print(f"wrote {len(rows)} track rows to {args.out}")
    return 0


def _collect_eval_pairs(gt_path: Path, pred_path: Path) -> list[tuple[str, Path, Path]]:
    """Pair up ground truth and prediction files.

    Accepts plain CSV files, a single sequence directory (gt.csv inside), or
    a root of sequence directories matched with <name>.csv files under the
    prediction directory.
    """
    if gt_path.is_file():
        if not pred_path.is_file():
            raise FormatError(f"{pred_path}: expected a tracks CSV file")
        return [(gt_path.stem, gt_path, pred_path)]
    pairs = []
    for seq_dir in rio.find_sequences(gt_path):
        gt_csv = seq_dir / "gt.csv"
        if not gt_csv.exists():
            raise FormatError(f"{seq_dir}: no gt.csv found")
        if pred_path.is_file():
            pred_csv = pred_path
        else:
            pred_csv = pred_path / f"{seq_dir.name}.csv"
            if not pred_csv.exists():
                raise FormatError(f"{pred_csv}: no predictions for {seq_dir.name}")
        pairs.append((seq_dir.name, gt_csv, pred_csv))
    return pairs


def _cmd_eval(args) -> int:
    pairs = _collect_eval_pairs(Path(args.gt), Path(args.pred))
    reports = {}
    for name, gt_csv, pred_csv in pairs:
        gt_rows = [(f, i, b) for f, i, b, _ in rio.parse_tracks(gt_csv)]
        pred_rows = [(f, i, b) for f, i, b, _ in rio.parse_tracks(pred_csv)]
        reports[name] = evaluate_sequence(gt_rows, pred_rows, iou_min=args.iou)
    combined = combine_reports(reports)
    rio.write_metrics_json(args.out, combined)
    print(json.dumps({"mota": combined.mota, "idf1": combined.idf1,
                      "idsw": combined.idsw}))
    return 0


_COMMANDS = {"simgen": _cmd_simgen, "train": _cmd_train,
             "infer": _cmd_infer, "eval": _cmd_eval}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except _DATA_ERRORS as exc:
        print(f"rinktrack: data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except (TrackingError, FloatingPointError, ValueError) as exc:
        print(f"rinktrack: numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
