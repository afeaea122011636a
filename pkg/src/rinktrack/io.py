"""Persistence and wire formats: the on-disk sequence layout, MOT-style
track CSVs, binary embedding and weight files, and the metrics JSON.

A sequence directory holds:

    seq.ini         name, fps, image size, rink template dimensions
    det.csv         MOT rows  frame,id,left,top,width,height,conf,-1,-1,-1
    homography.csv  frame,h11,h12,h13,h21,h22,h23,h31,h32   (h33 = 1)
    embeddings.bin  RTEB: one float32 row per det.csv row
    gt.csv          optional ground truth in the same MOT row format

Binary files are little-endian with a magic and version; parsers reject
unknown versions.  All parsers are pure functions.
"""

from __future__ import annotations

import configparser
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features
from .errors import CorruptModelFile, FormatError, MissingHomography
from .geometry import BoundingBox, HomographyMatrix, RinkTemplate
from .metrics import MetricsReport

EMBED_MAGIC = b"RTEB"
WEIGHT_MAGIC = b"RTWT"
FORMAT_VERSION = 1


@dataclass
class Detection:
    """One player observation: box, confidence, optional ground-truth id,
    and its unit-norm appearance embedding."""

    frame: int
    box: BoundingBox
    conf: float
    gt_id: int = -1
    embedding: np.ndarray | None = None


@dataclass
class Sequence:
    name: str
    fps: int
    img_width: int
    img_height: int
    template: RinkTemplate
    frames: list[int] = field(default_factory=list)
    detections: dict[int, list[Detection]] = field(default_factory=dict)
    homographies: dict[int, HomographyMatrix] = field(default_factory=dict)

    def detection_count(self) -> int:
        return sum(len(d) for d in self.detections.values())


def _fmt(v: float) -> str:
    """Shortest decimal that round-trips the float exactly."""
    return repr(float(v)) if not float(v).is_integer() else str(int(v))


def _parse_float(token: str, path: Path, lineno: int) -> float:
    try:
        return float(token)
    except ValueError as exc:
        raise FormatError(f"{path}:{lineno}: non-numeric field {token!r}") from exc


def _parse_int(token: str, path: Path, lineno: int) -> int:
    try:
        return int(float(token))
    except ValueError as exc:
        raise FormatError(f"{path}:{lineno}: non-numeric field {token!r}") from exc


# -- MOT-style track CSV ------------------------------------------------------

def write_tracks(path, rows) -> None:
    """Rows are (frame, id, BoundingBox, conf) tuples or TrackRow objects."""
    path = Path(path)
    lines = []
    for r in rows:
        frame, tid, box, conf = (r.frame_id, r.track_id, r.box, r.conf) \
            if hasattr(r, "track_id") else r
        lines.append(f"{frame},{tid},{_fmt(box.x)},{_fmt(box.y)},{_fmt(box.wd)},"
                     f"{_fmt(box.ht)},{_fmt(conf)},-1,-1,-1")
    path.write_text("".join(line + "\n" for line in lines))


def parse_tracks(path) -> list[tuple[int, int, BoundingBox, float]]:
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) not in (7, 10):
            raise FormatError(
                f"{path}:{lineno}: expected 7 or 10 fields, got {len(parts)}")
        frame = _parse_int(parts[0], path, lineno)
        tid = _parse_int(parts[1], path, lineno)
        x, y, w, h, conf = (_parse_float(p, path, lineno) for p in parts[2:7])
        rows.append((frame, tid, BoundingBox(x, y, w, h), conf))
    return rows


# -- homography CSV -----------------------------------------------------------

def write_homographies(path, homographies: dict[int, HomographyMatrix]) -> None:
    path = Path(path)
    lines = []
    for frame in sorted(homographies):
        h = homographies[frame].h
        vals = ",".join(_fmt(v) for v in h.ravel()[:8])
        lines.append(f"{frame},{vals}")
    path.write_text("".join(line + "\n" for line in lines))


def parse_homographies(path) -> dict[int, HomographyMatrix]:
    path = Path(path)
    out: dict[int, HomographyMatrix] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise FormatError(f"{path}:{lineno}: expected 9 fields, got {len(parts)}")
        frame = _parse_int(parts[0], path, lineno)
        vals = [_parse_float(p, path, lineno) for p in parts[1:]]
        h = np.array(vals + [1.0]).reshape(3, 3)
        out[frame] = HomographyMatrix(h)
    return out


# -- embeddings binary --------------------------------------------------------

def write_embeddings(path, emb: np.ndarray) -> None:
    """float32 rows, little-endian, RTEB header."""
    path = Path(path)
    emb = np.ascontiguousarray(emb, dtype="<f4")
    if emb.ndim != 2 or emb.shape[1] != features.EMBED_DIM:
        raise FormatError(f"embeddings must be (n, {features.EMBED_DIM})")
    header = EMBED_MAGIC + struct.pack("<III", FORMAT_VERSION, emb.shape[0],
                                       emb.shape[1])
    path.write_bytes(header + emb.tobytes())


def read_embeddings(path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[:4] != EMBED_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    version, rows, dim = struct.unpack("<III", blob[4:16])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unknown version {version}")
    if dim != features.EMBED_DIM:
        raise FormatError(f"{path}: embedding dim {dim} != {features.EMBED_DIM}")
    expected = 16 + rows * dim * 4
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload holds {(len(blob) - 16) // (dim * 4)} rows "
            f"but header declares {rows}")
    data = np.frombuffer(blob, dtype="<f4", offset=16).reshape(rows, dim)
    return data.astype(np.float64)


# -- model weight file --------------------------------------------------------

def write_weights(path, tensors: dict[str, np.ndarray]) -> None:
    """Named float64 tensors, little-endian, RTWT header."""
    path = Path(path)
    chunks = [WEIGHT_MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    path.write_bytes(b"".join(chunks))


def read_weights(path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()

    def take(n: int, offset: int) -> tuple[bytes, int]:
        if offset + n > len(blob):
            raise CorruptModelFile(f"{path}: truncated at byte {offset}")
        return blob[offset:offset + n], offset + n

    raw, off = take(4, 0)
    if raw != WEIGHT_MAGIC:
        raise CorruptModelFile(f"{path}: bad magic {raw!r}")
    raw, off = take(8, off)
    version, count = struct.unpack("<II", raw)
    if version != FORMAT_VERSION:
        raise CorruptModelFile(f"{path}: unknown version {version}")
    if count > 10_000:
        raise CorruptModelFile(f"{path}: implausible tensor count {count}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, off = take(4, off)
        (name_len,) = struct.unpack("<I", raw)
        if name_len > 4096:
            raise CorruptModelFile(f"{path}: implausible name length {name_len}")
        raw, off = take(name_len, off)
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptModelFile(f"{path}: undecodable tensor name") from exc
        raw, off = take(4, off)
        (rank,) = struct.unpack("<I", raw)
        if rank > 8:
            raise CorruptModelFile(f"{path}: implausible rank {rank}")
        raw, off = take(4 * rank, off)
        dims = struct.unpack(f"<{rank}I", raw)
        n_items = int(np.prod(dims, dtype=np.int64)) if rank else 1
        if n_items > 50_000_000:
            raise CorruptModelFile(f"{path}: implausible tensor size {dims}")
        raw, off = take(8 * n_items, off)
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    if off != len(blob):
        raise CorruptModelFile(f"{path}: {len(blob) - off} trailing bytes")
    return tensors


# -- sequence layout ----------------------------------------------------------

def write_sequence_ini(path, name: str, fps: int, img_width: int, img_height: int,
                       template: RinkTemplate) -> None:
    cfg = configparser.ConfigParser()
    cfg["sequence"] = {
        "name": name, "fps": str(fps),
        "img_width": str(img_width), "img_height": str(img_height),
        "rink_length": _fmt(template.length), "rink_width": _fmt(template.width),
    }
    with open(path, "w") as fh:
        cfg.write(fh)


def write_detections(path, detections: list[Detection]) -> None:
    write_tracks(path, [(d.frame, d.gt_id, d.box, d.conf) for d in detections])


def parse_sequence(seq_dir) -> Sequence:
    """Load and validate a sequence directory.

    Embeddings are L2-normalized at load.  Raises FormatError on layout
    violations and MissingHomography when a detection frame lacks a camera.
    """
    seq_dir = Path(seq_dir)
    ini_path = seq_dir / "seq.ini"
    if not ini_path.exists():
        raise FormatError(f"{seq_dir}: no seq.ini found")
    cfg = configparser.ConfigParser()
    cfg.read(ini_path)
    try:
        sec = cfg["sequence"]
        seq = Sequence(
            name=sec.get("name", seq_dir.name),
            fps=int(sec["fps"]),
            img_width=int(sec["img_width"]),
            img_height=int(sec["img_height"]),
            template=RinkTemplate(float(sec["rink_length"]), float(sec["rink_width"])),
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{ini_path}: bad or missing key ({exc})") from exc

    for piece in ("det.csv", "embeddings.bin", "homography.csv"):
        if not (seq_dir / piece).exists():
            raise FormatError(f"{seq_dir}: missing {piece}")
    det_rows = parse_tracks(seq_dir / "det.csv")
    emb = read_embeddings(seq_dir / "embeddings.bin")
    if emb.shape[0] != len(det_rows):
        raise FormatError(
            f"{seq_dir}: det.csv has {len(det_rows)} rows but embeddings.bin "
            f"has {emb.shape[0]} rows")
    seq.homographies = parse_homographies(seq_dir / "homography.csv")

    for i, (frame, tid, box, conf) in enumerate(det_rows):
        if frame not in seq.homographies:
            raise MissingHomography(f"{seq_dir}: frame {frame} has detections "
                                    f"but no homography row")
        det = Detection(frame, box, conf, tid, features.l2_normalize(emb[i]))
        seq.detections.setdefault(frame, []).append(det)
    seq.frames = sorted(seq.homographies)
    return seq


def load_gt(seq_dir) -> list[tuple[int, int, BoundingBox, float]]:
    gt_path = Path(seq_dir) / "gt.csv"
    if not gt_path.exists():
        raise FormatError(f"{seq_dir}: no gt.csv found")
    return parse_tracks(gt_path)


def find_sequences(path) -> list[Path]:
    """A sequence dir itself, or every child dir holding a seq.ini."""
    path = Path(path)
    if (path / "seq.ini").exists():
        return [path]
    found = sorted(p for p in path.iterdir() if (p / "seq.ini").exists()) \
        if path.is_dir() else []
    if not found:
        raise FormatError(f"{path}: no sequence layout found")
    return found


# -- metrics JSON -------------------------------------------------------------

def write_metrics_json(path, report: MetricsReport) -> None:
    payload = report.to_json_dict()
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
