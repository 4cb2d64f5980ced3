"""Camera and crop geometry.

Pinhole intrinsics, square object-centric crops with their virtual cameras,
point projection, and the scale-invariant encoding between a 3D translation
and the crop-relative outputs (normalized center offset + rescaled distance).

Pixel convention: pixel (i, j) has its center at continuous coordinate
(i + 0.5, j + 0.5); continuous image coordinates therefore span [0, W] x [0, H].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

# Orthonormality tolerance for accepting a rotation matrix as-is.
ROTATION_TOL = 1e-9

# Transformed points closer than this to the camera plane are marked invalid.
MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics (focal lengths and principal point, in pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(
                f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def project(self, xyz):
        """Perspective-project camera-frame points (N, 3) -> pixel coords (N, 2)."""
        xyz = np.asarray(xyz, dtype=np.float64)
        z = xyz[..., 2]
        u = self.fx * xyz[..., 0] / z + self.cx
        v = self.fy * xyz[..., 1] / z + self.cy
        return np.stack([u, v], axis=-1)

    def backproject(self, uv, depth):
        """Lift pixel coords (N, 2) at given z-depths back to camera-frame points."""
        uv = np.asarray(uv, dtype=np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        x = (uv[..., 0] - self.cx) / self.fx * depth
        y = (uv[..., 1] - self.cy) / self.fy * depth
        return np.stack([x, y, depth], axis=-1)


def orthonormalize(matrix: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD, det forced to +1)."""
    u, _, vt = np.linalg.svd(np.asarray(matrix, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def is_rotation(matrix: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (3, 3):
        return False
    err = np.abs(matrix.T @ matrix - np.eye(3)).max()
    return err <= tol and abs(np.linalg.det(matrix) - 1.0) <= tol


class Pose6D:
    """Rigid pose: 3x3 rotation + translation (meters) in the camera frame.

    Rotations outside the orthonormality tolerance are re-orthonormalized on
    construction; pass strict=True to raise instead. Translation must have
    z > 0 (object in front of the camera). Immutable after construction.
    """

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation, translation, strict: bool = False):
        rotation = np.array(rotation, dtype=np.float64)
        translation = np.array(translation, dtype=np.float64).reshape(3)
        if rotation.shape != (3, 3):
            raise GeometryError(f"rotation must be 3x3, got {rotation.shape}")
        if not is_rotation(rotation):
            if strict:
                raise GeometryError("rotation is not in SO(3) within tolerance")
            rotation = orthonormalize(rotation)
        if not translation[2] > 0:
            raise GeometryError(f"translation z must be positive, got {translation[2]}")
        rotation.flags.writeable = False
        translation.flags.writeable = False
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    def __setattr__(self, name, value):
        raise AttributeError("Pose6D is immutable")

    def __repr__(self):
        return f"Pose6D(t={self.translation.tolist()})"

    def transform(self, points):
        """Apply the rigid transform to (N, 3) object points."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned 2D box: center (x, y) and extents (w, h), in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.w > 0 and self.h > 0):
            raise GeometryError(f"box extents must be positive, got {self.w}x{self.h}")

    @property
    def side(self) -> float:
        """Side of the square hull, max(w, h)."""
        return max(self.w, self.h)


@dataclass(frozen=True)
class CropSpec:
    """Square object-centric crop of a source image.

    center/scale are in source-image pixels, out_size is the resampled
    resolution S. The rescale factor is r = out_size / scale.
    """

    center: tuple
    scale: float
    out_size: int
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        if not self.scale > 0:
            raise GeometryError(f"crop scale must be positive, got {self.scale}")
        if not self.out_size > 0:
            raise GeometryError(f"crop out_size must be positive, got {self.out_size}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def rescale(self) -> float:
        return self.out_size / self.scale

    def to_crop(self, points):
        """Map continuous source-image coords to crop coords."""
        points = np.asarray(points, dtype=np.float64)
        c = np.array(self.center)
        return self.rescale * (points - c) + 0.5 * self.out_size

    def to_source(self, points):
        """Map continuous crop coords back to source-image coords."""
        points = np.asarray(points, dtype=np.float64)
        c = np.array(self.center)
        return (points - 0.5 * self.out_size) / self.rescale + c


@dataclass(frozen=True)
class TranslationCode:
    """Crop-relative translation encoding.

    delta_xy is the normalized offset of the projected object center inside
    the crop (0 = crop center); delta_z is the scale-invariant distance, so
    the metric distance is t_z = r * delta_z.
    """

    delta_xy: tuple
    delta_z: float

    def __post_init__(self):
        object.__setattr__(
            self, "delta_xy", (float(self.delta_xy[0]), float(self.delta_xy[1]))
        )
        if not self.delta_z > 0:
            raise GeometryError(f"delta_z must be positive, got {self.delta_z}")


def virtual_intrinsics(crop: CropSpec) -> CameraIntrinsics:
    """Intrinsics of the virtual camera associated with a crop.

    A source pixel p maps to crop pixel r*(p - center) + S/2, so the virtual
    camera has focal lengths r*f and principal point r*(c - center) + S/2.
    """
    r = crop.rescale
    k = crop.intrinsics
    half = 0.5 * crop.out_size
    return CameraIntrinsics(
        fx=r * k.fx,
        fy=r * k.fy,
        cx=r * (k.cx - crop.center[0]) + half,
        cy=r * (k.cy - crop.center[1]) + half,
    )


def recover_translation(code: TranslationCode, crop: CropSpec) -> np.ndarray:
    """Decode a TranslationCode into a metric 3D translation.

    o = S * (delta_xy + 0.5) is the projected center in crop pixels and the
    translation is t = r * delta_z * K'^{-1} [o_x, o_y, 1]^T with K' the
    crop's virtual intrinsics; in particular t_z = r * delta_z.
    """
    kv = virtual_intrinsics(crop)
    if kv.fx == 0 or kv.fy == 0:
        raise GeometryError("virtual intrinsics are not invertible")
    s = crop.out_size
    ox = s * (code.delta_xy[0] + 0.5)
    oy = s * (code.delta_xy[1] + 0.5)
    tz = crop.rescale * code.delta_z
    return np.array(
        [(ox - kv.cx) / kv.fx * tz, (oy - kv.cy) / kv.fy * tz, tz]
    )


def encode_translation(t, crop: CropSpec) -> TranslationCode:
    """Encode a metric translation as the crop-relative (delta_xy, delta_z)."""
    t = np.asarray(t, dtype=np.float64).reshape(3)
    if not t[2] > 0:
        raise GeometryError(f"translation z must be positive, got {t[2]}")
    kv = virtual_intrinsics(crop)
    o = kv.project(t[None, :])[0]
    s = crop.out_size
    return TranslationCode(
        delta_xy=(o[0] / s - 0.5, o[1] / s - 0.5),
        delta_z=t[2] / crop.rescale,
    )


def project_points(points, pose: Pose6D, k: CameraIntrinsics):
    """Project object points through a pose onto the image.

    Returns (uv, depth, valid): pixel coordinates (N, 2), camera-frame depths
    (N,), and a validity mask. Points with transformed z <= MIN_DEPTH are
    flagged invalid and get NaN pixel coordinates.
    """
    cam = pose.transform(points)
    depth = cam[:, 2].copy()
    valid = depth > MIN_DEPTH
    if valid.all():
        return k.project(cam), depth, valid
    uv = np.full((len(cam), 2), np.nan)
    if valid.any():
        uv[valid] = k.project(cam[valid])
    return uv, depth, valid
