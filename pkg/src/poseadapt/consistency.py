"""Pose-aware augmentation pairs and the self-supervised consistency losses.

An anchor crop and an augmented crop of the same detection are related by a
known transform (rescale, pixel offset, in-plane rotation). Predictions on
the two crops must then obey an exact relation in (delta_xy, delta_z) and a
camera-roll relation for the rotation; the losses here measure violations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .codebook import rotation_about_z
from .errors import GeometryError
from .geometry import BoundingBox, CameraIntrinsics, CropSpec, TranslationCode
from .kernels import bilinear_sample

# Default loss weights (xy, z, rotation, mask) for the weighted total.
DEFAULT_SELF_WEIGHTS = (10.0, 10.0, 0.1, 10.0)


@dataclass(frozen=True)
class AugTransform:
    """Relative transform between an anchor crop and its augmented variant.

    delta_s rescales the crop, delta_p offsets its center in source-image
    pixels, delta_rz rotates the crop content in-plane (radians).
    """

    delta_s: float
    delta_p: tuple
    delta_rz: float

    def __post_init__(self):
        if not self.delta_s > 0:
            raise GeometryError(f"delta_s must be positive, got {self.delta_s}")
        object.__setattr__(
            self, "delta_p", (float(self.delta_p[0]), float(self.delta_p[1]))
        )

    @property
    def rot2d(self) -> np.ndarray:
        c, s = np.cos(self.delta_rz), np.sin(self.delta_rz)
        return np.array([[c, -s], [s, c]])

    @property
    def rot3d(self) -> np.ndarray:
        """In-plane rotation as a camera z-axis rotation."""
        return rotation_about_z(self.delta_rz)

    @classmethod
    def identity(cls) -> "AugTransform":
        return cls(delta_s=1.0, delta_p=(0.0, 0.0), delta_rz=0.0)


@dataclass(frozen=True)
class AugRanges:
    """Sampling ranges for anchor/augmentation draws."""

    f_anc: tuple = (1.2, 1.6)
    delta_s: tuple = (0.8, 1.25)
    delta_p_frac: float = 0.1
    delta_rz_max: float = np.deg2rad(30.0)


@dataclass(frozen=True)
class AffineWarp:
    """2D affine map p -> matrix @ p + offset in crop pixel coordinates."""

    matrix: np.ndarray
    offset: np.ndarray

    def __call__(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.matrix.T + self.offset

    def inverse(self) -> "AffineWarp":
        inv = np.linalg.inv(self.matrix)
        return AffineWarp(matrix=inv, offset=-inv @ self.offset)


@dataclass
class PosePrediction:
    """Per-crop outputs: translation code, rotation (optional), mask (optional)."""

    code: TranslationCode
    rotation: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ConsistencyLosses:
    l_xy: float
    l_z: float
    l_r: float
    l_m: float
    weighted_total: float


def sample_anchor_box(
    detection: BoundingBox,
    f_anc: float,
    out_size: int,
    intrinsics: CameraIntrinsics,
) -> CropSpec:
    """Square crop around a detection, enlarged by the scaling factor f_anc."""
    if not f_anc > 0:
        raise GeometryError(f"f_anc must be positive, got {f_anc}")
    return CropSpec(
        center=(detection.x, detection.y),
        scale=f_anc * detection.side,
        out_size=out_size,
        intrinsics=intrinsics,
    )


def sample_aug_transform(rng: np.random.Generator, anchor_scale: float,
                         ranges: AugRanges = AugRanges()) -> AugTransform:
    """Draw a random AugTransform within the configured ranges."""
    ds = rng.uniform(*ranges.delta_s)
    dp = rng.uniform(-1.0, 1.0, size=2) * ranges.delta_p_frac * anchor_scale
    rz = rng.uniform(-ranges.delta_rz_max, ranges.delta_rz_max)
    return AugTransform(delta_s=ds, delta_p=(dp[0], dp[1]), delta_rz=rz)


def apply_aug_transform(anchor: CropSpec, delta: AugTransform):
    """Augmented crop plus the warp from anchor-crop to augmented-crop pixels.

    The augmented crop recenters by delta_p, rescales by delta_s, and rotates
    its content by delta_rz about the crop center. The returned warp maps a
    feature's anchor-crop coordinates to its augmented-crop coordinates.
    """
    aug = CropSpec(
        center=(anchor.center[0] + delta.delta_p[0], anchor.center[1] + delta.delta_p[1]),
        scale=anchor.scale * delta.delta_s,
        out_size=anchor.out_size,
        intrinsics=anchor.intrinsics,
    )
    # anchor coords a -> source p -> unrotated aug coords -> rotate about center.
    rot = delta.rot2d
    half = 0.5 * anchor.out_size
    matrix = rot / delta.delta_s
    center_shift = aug.rescale * np.asarray(delta.delta_p)
    offset = half - matrix @ np.full(2, half) - rot @ center_shift
    return aug, AffineWarp(matrix=matrix, offset=offset)


def derive_aug_pose(
    anchor_pred: PosePrediction, delta: AugTransform, anchor: CropSpec
) -> PosePrediction:
    """Targets the augmented prediction must match, from the anchor prediction.

    delta_z scales by delta_s, delta_xy maps through the in-plane rotation
    after removing the normalized center offset, and the rotation picks up a
    camera-roll premultiplication.
    """
    code = anchor_pred.code
    dxy = np.asarray(code.delta_xy)
    dp = np.asarray(delta.delta_p)
    target_xy = delta.rot2d @ (dxy - dp / anchor.scale) / delta.delta_s
    target_code = TranslationCode(
        delta_xy=(target_xy[0], target_xy[1]),
        delta_z=delta.delta_s * code.delta_z,
    )
    target_rot = None
    if anchor_pred.rotation is not None:
        target_rot = delta.rot3d @ anchor_pred.rotation
    return PosePrediction(code=target_code, rotation=target_rot)


def translation_consistency_loss(
    aug_pred: PosePrediction,
    anchor_pred: PosePrediction,
    delta: AugTransform,
    anchor: CropSpec,
):
    """L1 violations (l_z, l_xy) of the derived translation relation."""
    target = derive_aug_pose(anchor_pred, delta, anchor).code
    l_z = abs(aug_pred.code.delta_z - target.delta_z)
    l_xy = float(
        np.abs(np.asarray(aug_pred.code.delta_xy) - np.asarray(target.delta_xy)).sum()
    )
    return l_z, l_xy


def warp_mask(anchor_mask, delta: AugTransform, anchor: CropSpec):
    """Resample the anchor mask into the augmented crop frame.

    Returns (sampled, valid): the bilinear resample of the anchor mask at the
    inverse-warped augmented pixel centers (zero padding outside), and the
    mask of augmented pixels whose sample location falls inside the anchor
    grid extent.
    """
    anchor_mask = np.asarray(anchor_mask, dtype=np.float64)
    s = anchor_mask.shape[0]
    if anchor_mask.shape != (s, s) or s != anchor.out_size:
        raise GeometryError("mask resolution must match the crop out_size")
    _, warp = apply_aug_transform(anchor, delta)
    inv = warp.inverse()
    jj, ii = np.meshgrid(np.arange(s), np.arange(s))
    centers = np.stack([jj.ravel() + 0.5, ii.ravel() + 0.5], axis=1)
    src = inv(centers)
    valid = (
        (src[:, 0] >= 0.0) & (src[:, 0] <= s) & (src[:, 1] >= 0.0) & (src[:, 1] <= s)
    )
    sampled = bilinear_sample(anchor_mask, src[:, 0] - 0.5, src[:, 1] - 0.5)
    return sampled.reshape(s, s), valid.reshape(s, s)


def mask_consistency_loss(
    anchor_mask, aug_mask, delta: AugTransform, anchor: CropSpec
) -> float:
    """Mean L1 between the warped anchor mask and the augmented mask.

    Averaged over the augmented pixels whose inverse-warped location lies
    inside the anchor grid; 0 when no pixel is valid.
    """
    aug_mask = np.asarray(aug_mask, dtype=np.float64)
    sampled, valid = warp_mask(anchor_mask, delta, anchor)
    if aug_mask.shape != sampled.shape:
        raise GeometryError("anchor and augmented masks must share resolution")
    if not valid.any():
        return 0.0
    return float(np.abs(sampled[valid] - aug_mask[valid]).mean())


def aggregate_self_losses(
    l_xy: float,
    l_z: float,
    l_r: float,
    l_m: float,
    weights=DEFAULT_SELF_WEIGHTS,
) -> ConsistencyLosses:
    """Weighted sum of the consistency terms; weights order is (xy, z, r, m)."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (4,) or (w < 0).any():
        raise GeometryError("weights must be 4 nonnegative reals (xy, z, r, m)")
    total = float(w @ np.array([l_xy, l_z, l_r, l_m]))
    return ConsistencyLosses(
        l_xy=float(l_xy), l_z=float(l_z), l_r=float(l_r), l_m=float(l_m),
        weighted_total=total,
    )
