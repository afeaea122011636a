"""Deterministic synthetic broadcast generator.

Players move on the rink plane with waypoint-seeking dynamics, a smoothly
drifting camera maps the rink to image pixels, and each visible player gets
a bounding box plus a noisy appearance embedding.  When two players skate
close enough to overlap in the broadcast view, the occlusion model either
drops the farther detection or mixes the two embeddings, corrupting exactly
the appearance cue that the rink projection is meant to back up.

Everything is driven by a single seed through independent substreams, so
every output file is bit-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io as rio
from .errors import FormatError
from .features import EMBED_DIM
from .geometry import BoundingBox, HomographyMatrix, RinkTemplate, invert, project_points

PLAYER_HEIGHT_UNITS = 6.0   # skater height in rink units
BOX_ASPECT = 0.45           # box width / height
CAMERA_VERTICAL_SCALE = 0.55
MAX_SPEED = 22.0            # rink units per second
SEEK_ACCEL = 18.0
WAYPOINT_REACHED = 6.0
WAYPOINT_TIMEOUT_S = 4.0
CONDITION_CAP = 1e6


@dataclass(frozen=True)
class SimConfig:
    n_players: int = 10
    fps: int = 30
    duration_s: float = 10.0
    occlusion_radius: float = 3.0       # rink units
    occlusion_drop_prob: float = 0.1
    embed_noise_sigma: float = 0.05
    occlusion_mix: float = 0.3
    seed: int = 0
    # artifact plumbing beyond the core knobs
    name: str = "seq"
    img_width: int = 1280
    img_height: int = 720
    rink_length: float = 200.0
    rink_width: float = 85.0
    crossing_prob: float = 0.0          # chance a new waypoint targets another player
    static_camera: bool = False

    def __post_init__(self):
        if self.fps not in (30, 60):
            raise ValueError(f"fps must be 30 or 60, got {self.fps}")
        if self.n_players < 1 or self.duration_s <= 0:
            raise ValueError("need at least one player and positive duration")
        for p in (self.occlusion_drop_prob, self.occlusion_mix, self.crossing_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        if self.embed_noise_sigma < 0 or self.occlusion_radius < 0:
            raise ValueError("sigma and occlusion radius must be non-negative")

    @property
    def n_frames(self) -> int:
        return max(1, round(self.fps * self.duration_s))

    @property
    def template(self) -> RinkTemplate:
        return RinkTemplate(self.rink_length, self.rink_width)


@dataclass
class PlayerTruth:
    identity: int
    team: int
    prototype: np.ndarray            # (512,) unit appearance vector
    positions: np.ndarray            # (n_frames, 2) rink units
    velocities: np.ndarray           # (n_frames, 2)


@dataclass
class FrameDetection:
    identity: int
    box: BoundingBox
    conf: float
    embedding: np.ndarray


def _rng(cfg: SimConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stream])


def gen_trajectories(cfg: SimConfig) -> list[PlayerTruth]:
    """Waypoint-seeking dynamics with a speed cap, smooth random accelerations
    and reflective rink boundaries."""
    rng = _rng(cfg, 0)
    n, frames, dt = cfg.n_players, cfg.n_frames, 1.0 / cfg.fps
    length, width = cfg.rink_length, cfg.rink_width
    margin = min(8.0, length / 4, width / 4)

    prototypes = rng.normal(size=(n, EMBED_DIM))
    prototypes /= np.linalg.norm(prototypes, axis=1, keepdims=True)
    assert len({p.tobytes() for p in prototypes}) == n, "prototype collision"

    pos = np.column_stack([rng.uniform(margin, length - margin, n),
                           rng.uniform(margin, width - margin, n)])
    vel = np.zeros((n, 2))
    waypoints = np.column_stack([rng.uniform(margin, length - margin, n),
                                 rng.uniform(margin, width - margin, n)])
    wp_age = np.zeros(n)
    noise = np.zeros((n, 2))

    positions = np.empty((frames, n, 2))
    velocities = np.empty((frames, n, 2))
    for t in range(frames):
        positions[t] = pos
        velocities[t] = vel

        # Ornstein-Uhlenbeck acceleration noise keeps motion smooth but agile.
        noise += (-2.5 * noise) * dt + 6.0 * np.sqrt(dt) * rng.normal(size=(n, 2))
        delta = waypoints - pos
        dist = np.linalg.norm(delta, axis=1)
        seek = SEEK_ACCEL * delta / np.maximum(dist, 1e-9)[:, None]
        vel = vel + (seek + noise) * dt
        speed = np.linalg.norm(vel, axis=1)
        fast = speed > MAX_SPEED
        vel[fast] *= (MAX_SPEED / speed[fast])[:, None]
        pos = pos + vel * dt

        # Reflective boundaries.
        for axis, hi in ((0, length), (1, width)):
            low = pos[:, axis] < 1.0
            pos[low, axis] = 2.0 - pos[low, axis]
            vel[low, axis] *= -1.0
            high = pos[:, axis] > hi - 1.0
            pos[high, axis] = 2.0 * (hi - 1.0) - pos[high, axis]
            vel[high, axis] *= -1.0
        np.clip(pos[:, 0], 0.5, length - 0.5, out=pos[:, 0])
        np.clip(pos[:, 1], 0.5, width - 0.5, out=pos[:, 1])

        wp_age += dt
        for i in range(n):
            if dist[i] < WAYPOINT_REACHED or wp_age[i] > WAYPOINT_TIMEOUT_S:
                if n > 1 and rng.uniform() < cfg.crossing_prob:
                    # Aim straight at another player to force a crossing.
                    j = int(rng.integers(n - 1))
                    j = j if j < i else j + 1
                    waypoints[i] = pos[j] + rng.normal(scale=1.5, size=2)
                else:
                    waypoints[i] = (rng.uniform(margin, length - margin),
                                    rng.uniform(margin, width - margin))
                wp_age[i] = 0.0

    return [PlayerTruth(i, i % 2, prototypes[i], positions[:, i].copy(),
                        velocities[:, i].copy()) for i in range(n)]


def gen_camera(cfg: SimConfig) -> list[HomographyMatrix]:
    """Per-frame image->rink homography from a smooth pan/zoom/shear walk.

    Every emitted matrix is invertible with a bounded condition number; the
    per-frame parameter deltas are capped so the camera never jumps.
    """
    rng = _rng(cfg, 1)
    frames = cfg.n_frames
    length, width = cfg.rink_length, cfg.rink_width

    cx = rng.uniform(0.3 * length, 0.7 * length)
    cy = rng.uniform(0.35 * width, 0.65 * width)
    zoom = rng.uniform(4.5, 6.0)
    shear = rng.uniform(-0.05, 0.05)
    drift = np.zeros(4)

    caps = np.array([0.8, 0.4, 0.05, 0.004])   # per-frame smoothness caps
    decay = 1.0 - 1.2 / cfg.fps
    out = []
    for _ in range(frames):
        m = np.array([
            [zoom, zoom * shear,
             cfg.img_width / 2.0 - zoom * cx - zoom * shear * cy],
            [0.0, zoom * CAMERA_VERTICAL_SCALE,
             cfg.img_height / 2.0 - zoom * CAMERA_VERTICAL_SCALE * cy],
            [0.0, 0.0, 1.0],
        ])
        h = invert(HomographyMatrix(m))
        assert np.linalg.cond(h.h) <= CONDITION_CAP
        out.append(h)
        if cfg.static_camera:
            continue
        drift = drift * decay + rng.normal(scale=[1.2, 0.6, 0.015, 0.0015], size=4)
        step = np.clip(drift / cfg.fps, -caps, caps)
        cx = float(np.clip(cx + step[0], 0.2 * length, 0.8 * length))
        cy = float(np.clip(cy + step[1], 0.3 * width, 0.7 * width))
        zoom = float(np.clip(zoom + step[2], 4.0, 7.0))
        shear = float(np.clip(shear + step[3], -0.12, 0.12))
    return out


def render(truth: list[PlayerTruth], cameras: list[HomographyMatrix],
           cfg: SimConfig) -> tuple[list[list[FrameDetection]],
                                    list[list[tuple[int, BoundingBox]]]]:
    """Detections plus full ground truth per frame.

    Returns (detections, gt): detections hold the visible players with their
    corrupted embeddings; gt lists every player's box, including the ones the
    occlusion model dropped.
    """
    rng = _rng(cfg, 2)
    # Teammates share an appearance bias of norm 0.6 (similar jerseys).
    team_offsets = rng.normal(size=(2, EMBED_DIM))
    team_offsets = 0.6 * team_offsets / np.linalg.norm(team_offsets, axis=1,
                                                       keepdims=True)
    n = len(truth)
    detections: list[list[FrameDetection]] = []
    gt: list[list[tuple[int, BoundingBox]]] = []

    for t, cam in enumerate(cameras):
        rink_to_img = invert(cam)
        pos = np.stack([p.positions[t] for p in truth])
        foot = project_points(rink_to_img, pos)
        box_h = PLAYER_HEIGHT_UNITS * rink_to_img.h[1, 1]
        box_w = BOX_ASPECT * box_h
        boxes = [BoundingBox(foot[i, 0] - box_w / 2.0, foot[i, 1] - box_h,
                             box_w, box_h) for i in range(n)]
        gt.append([(p.identity, boxes[i]) for i, p in enumerate(truth)])

        noise = rng.normal(scale=cfg.embed_noise_sigma, size=(n, EMBED_DIM)) \
            if cfg.embed_noise_sigma > 0 else np.zeros((n, EMBED_DIM))
        emb = np.stack([p.prototype for p in truth]) \
            + team_offsets[[p.team for p in truth]] + noise
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)

        dropped = np.zeros(n, dtype=bool)
        if n > 1 and cfg.occlusion_radius > 0:
            diff = pos[:, None, :] - pos[None, :, :]
            close = np.linalg.norm(diff, axis=2) < cfg.occlusion_radius
            for i in range(n):
                for j in range(i + 1, n):
                    if not close[i, j]:
                        continue
                    u = rng.uniform()
                    if dropped[i] or dropped[j]:
                        continue
                    if u < cfg.occlusion_drop_prob:
                        # The farther player (higher in the image) disappears
                        # behind the nearer one.
                        if foot[i, 1] < foot[j, 1]:
                            dropped[i] = True
                        elif foot[j, 1] < foot[i, 1]:
                            dropped[j] = True
                        else:
                            dropped[max(i, j)] = True
                    elif cfg.occlusion_mix > 0:
                        mi = (1 - cfg.occlusion_mix) * emb[i] + cfg.occlusion_mix * emb[j]
                        mj = (1 - cfg.occlusion_mix) * emb[j] + cfg.occlusion_mix * emb[i]
                        emb[i] = mi / np.linalg.norm(mi)
                        emb[j] = mj / np.linalg.norm(mj)

        frame_dets = [FrameDetection(truth[i].identity, boxes[i], 1.0, emb[i].copy())
                      for i in range(n) if not dropped[i]]
        detections.append(frame_dets)
    return detections, gt


def emit_dataset(out_dir, cfg: SimConfig) -> Path:
    """Generate one sequence and write the full on-disk layout."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FormatError(f"cannot create {out_dir}: {exc}") from exc

    truth = gen_trajectories(cfg)
    cameras = gen_camera(cfg)
    detections, gt = render(truth, cameras, cfg)

    rio.write_sequence_ini(out_dir / "seq.ini", cfg.name, cfg.fps,
                           cfg.img_width, cfg.img_height, cfg.template)
    rio.write_homographies(out_dir / "homography.csv",
                           {t: h for t, h in enumerate(cameras)})

    det_objs = []
    emb_rows = []
    for t, frame in enumerate(detections):
        for d in frame:
            det_objs.append(rio.Detection(t, d.box, d.conf, d.identity))
            emb_rows.append(d.embedding)
    rio.write_detections(out_dir / "det.csv", det_objs)
    emb = np.stack(emb_rows) if emb_rows else np.zeros((0, EMBED_DIM))
    rio.write_embeddings(out_dir / "embeddings.bin", emb)

    gt_rows = [(t, ident, box, 1.0) for t, frame in enumerate(gt)
               for ident, box in frame]
    rio.write_tracks(out_dir / "gt.csv", gt_rows)
    return out_dir


def generate_dataset(root, count: int, cfg: SimConfig, prefix: str = "seq") -> list[Path]:
    """Emit ``count`` sequences under ``root`` with consecutive seeds."""
    root = Path(root)
    outs = []
    for k in range(count):
        sub = replace(cfg, seed=cfg.seed + k, name=f"{prefix}_{k:03d}")
        outs.append(emit_dataset(root / sub.name, sub))
    return outs
