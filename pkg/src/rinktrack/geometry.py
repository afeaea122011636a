"""Footpoint extraction and planar homography projection onto the rink template.

All operations are pure functions on immutable values and are safe to call
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjection, InvalidBox, SingularHomography

DIVISOR_EPS = 1e-9   # homogeneous divisor below this is treated as the horizon
DET_EPS = 1e-12      # determinant magnitude below this is singular


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in image pixels: top-left corner plus size."""

    x: float
    y: float
    wd: float
    ht: float

    def validate(self) -> "BoundingBox":
        vals = (self.x, self.y, self.wd, self.ht)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidBox(f"non-finite box {vals}")
        if self.wd < 0 or self.ht < 0:
            raise InvalidBox(f"negative box size {vals}")
        return self


@dataclass(frozen=True)
class ImagePoint:
    u: float
    v: float


@dataclass(frozen=True)
class RinkPoint:
    rx: float
    ry: float


@dataclass(frozen=True)
class RinkTemplate:
    """Overhead rink coordinate frame, 200 x 85 units by default (NHL footprint)."""

    length: float = 200.0
    width: float = 85.0

    def validate(self) -> "RinkTemplate":
        if not (self.length > 0 and self.width > 0):
            raise InvalidBox(f"rink template must be positive, got {self}")
        return self


class HomographyMatrix:
    """Invertible 3x3 projective map with its bottom-right entry fixed to 1."""

    __slots__ = ("h",)

    def __init__(self, h: np.ndarray):
        h = np.asarray(h, dtype=np.float64)
        if h.shape != (3, 3):
            raise SingularHomography(f"expected 3x3 matrix, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise SingularHomography("non-finite homography entries")
        if abs(h[2, 2] - 1.0) > 1e-12:
            if abs(h[2, 2]) < DET_EPS:
                raise SingularHomography("cannot rescale: h33 is (near) zero")
            h = h / h[2, 2]
        if abs(np.linalg.det(h)) < DET_EPS:
            raise SingularHomography("determinant magnitude below 1e-12")
        self.h = h

    @classmethod
    def identity(cls) -> "HomographyMatrix":
        return cls(np.eye(3))

    def __repr__(self) -> str:
        return f"HomographyMatrix({self.h.tolist()})"


def footpoint(b: BoundingBox) -> ImagePoint:
    """Bottom-mid point of a bounding box, the skate contact point on the ice."""
    b.validate()
    return ImagePoint(b.x + b.wd / 2.0, b.y + b.ht)


def project(H: HomographyMatrix, p: ImagePoint) -> RinkPoint:
    """Apply the homography to an image point and dehomogenize."""
    a, b, w = H.h @ (p.u, p.v, 1.0)
    if abs(w) < DIVISOR_EPS:
        raise DegenerateProjection(f"homogeneous divisor {w} below {DIVISOR_EPS}")
    return RinkPoint(a / w, b / w)


def project_points(H: HomographyMatrix, uv: np.ndarray) -> np.ndarray:
    """Vectorized form of :func:`project` for an (n, 2) array of points."""
    uv = np.asarray(uv, dtype=np.float64)
    ones = np.ones((uv.shape[0], 1))
    hom = np.hstack([uv, ones]) @ H.h.T
    w = hom[:, 2]
    if np.any(np.abs(w) < DIVISOR_EPS):
        raise DegenerateProjection("homogeneous divisor below threshold")
    return hom[:, :2] / w[:, None]


def invert(H: HomographyMatrix) -> HomographyMatrix:
    """Inverse map, rescaled so its (3,3) entry is 1."""
    if abs(np.linalg.det(H.h)) < DET_EPS:
        raise SingularHomography("determinant magnitude below 1e-12")
    inv = np.linalg.inv(H.h)
    if abs(inv[2, 2]) < DET_EPS:
        raise SingularHomography("inverse has (near) zero bottom-right entry")
    return HomographyMatrix(inv / inv[2, 2])


def normalize_rink(p: RinkPoint, t: RinkTemplate) -> RinkPoint:
    """Scale rink coordinates by the template size, clamped to [-0.25, 1.25].

    The clamp band tolerates players slightly outside the template (boards,
    benches) without producing unbounded features.
    """
    t.validate()
    nx = min(max(p.rx / t.length, -0.25), 1.25)
    ny = min(max(p.ry / t.width, -0.25), 1.25)
    return RinkPoint(nx, ny)
