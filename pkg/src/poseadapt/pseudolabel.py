"""Depth-guided z-translation pseudo-labels.

Project model surface points under an initial pose, gate the projected and
observed depths through the predicted mask, pick the closest observed depth
with an outlier-skipping adaptive selection, and turn the offset between the
two closest points into a corrected distance label t_z_bar = delta_d + t_z.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, NoObservationError
from .geometry import CameraIntrinsics, Pose6D, project_points
from .meshes import TriangleMesh

DEFAULT_RHO = 0.9
DEFAULT_GAMMA = 0.001
DEFAULT_XI = 0.1
DEFAULT_WINDOW = 5
DEFAULT_EPSILON = 1e6
DEFAULT_N_POINTS = 2048


@dataclass(frozen=True)
class DepthImage:
    """Square grid of metric depths; 0 encodes invalid/missing."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ConfigurationError("depth image must be 2D")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ConfigurationError("depths must be finite and nonnegative")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class MaskImage:
    """Square grid of confidences in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ConfigurationError("mask image must be 2D")
        if (values < 0).any() or (values > 1).any():
            raise ConfigurationError("mask confidences must lie in [0, 1]")
        object.__setattr__(self, "values", values)


def _grid_values(image, cls):
    if isinstance(image, cls):
        return image.values
    return cls(np.asarray(image)).values


@dataclass(frozen=True)
class ProjectedPoints:
    """Per-point projection results with point identity preserved."""

    uv: np.ndarray
    depth: np.ndarray
    valid: np.ndarray

    def __len__(self):
        return len(self.depth)


@dataclass(frozen=True)
class GatedDepthSets:
    """Mask-gated projected/observed depth pairs; failed gates hold epsilon."""

    d_synth: np.ndarray
    d_real: np.ndarray
    valid: np.ndarray
    epsilon: float


@dataclass(frozen=True)
class PseudoLabel:
    t_z_bar: float
    delta_d: float
    selected_real_depth: float
    selected_index: Optional[int]


def sample_surface_points(model, n: int, seed: int) -> np.ndarray:
    """Uniform surface samples from a mesh or subsamples from a point cloud.

    Meshes get area-weighted triangle sampling with uniform barycentric
    coordinates; point clouds are subsampled without replacement (with
    replacement once n exceeds the cloud size). Deterministic given seed.
    """
    rng = np.random.default_rng(seed)
    if isinstance(model, TriangleMesh):
        if len(model.faces) == 0:
            raise ConfigurationError("mesh has no faces")
        areas = model.face_areas()
        total = areas.sum()
        if total <= 0:
            raise ConfigurationError("mesh has zero surface area")
        cum = np.cumsum(areas)
        tri = np.searchsorted(cum, rng.random(n) * total, side="right")
        tri = np.minimum(tri, len(cum) - 1)
        u = rng.random((n, 1))
        v = rng.random((n, 1))
        flip = (u + v) > 1.0
        u[flip] = 1.0 - u[flip]
        v[flip] = 1.0 - v[flip]
        corners = model.vertices[model.faces][tri]
        p0 = corners[:, 0]
        return p0 + u * (corners[:, 1] - p0) + v * (corners[:, 2] - p0)
    points = np.asarray(model, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or len(points) == 0:
        raise ConfigurationError("point cloud must be a nonempty (N, 3) array")
    replace = n > len(points)
    idx = rng.choice(len(points), size=n, replace=replace)
    return points[idx]


def render_synthetic_depth(points, pose: Pose6D, k: CameraIntrinsics) -> ProjectedPoints:
    """Project model points; keeps the i -> (u_i, v_i, depth_i) identity."""
    uv, depth, valid = project_points(points, pose, k)
    return ProjectedPoints(uv=uv, depth=depth, valid=valid)


def gate_depths(
    projected: ProjectedPoints,
    real_depth,
    mask,
    rho: float = DEFAULT_RHO,
    epsilon: float = DEFAULT_EPSILON,
) -> GatedDepthSets:
    """Mask-gated depth pairs for each projected point.

    A point passes when its pixel (nearest-neighbor lookup) is inside the
    grid, the mask confidence there is >= rho, and the observed depth is a
    real measurement (> 0); otherwise both entries take the penalty value.
    """
    depth_vals = _grid_values(real_depth, DepthImage)
    mask_vals = _grid_values(mask, MaskImage)
    if depth_vals.shape != mask_vals.shape:
        raise ConfigurationError("depth and mask resolutions differ")
    if not 0.0 <= rho <= 1.0:
        raise ConfigurationError(f"rho must lie in [0, 1], got {rho}")
    if not epsilon > depth_vals.max():
        raise ConfigurationError("epsilon must exceed every observed depth")

    h, w = depth_vals.shape
    # Pixel (i, j) has center (i+0.5, j+0.5): floor gives the nearest pixel.
    uv = projected.uv
    cols = np.full(len(projected), -1, dtype=np.int64)
    rows = np.full(len(projected), -1, dtype=np.int64)
    ok = projected.valid
    cols[ok] = np.floor(uv[ok, 0]).astype(np.int64)
    rows[ok] = np.floor(uv[ok, 1]).astype(np.int64)
    inside = ok & (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)

    passed = np.zeros(len(projected), dtype=bool)
    real = np.full(len(projected), epsilon)
    idx = np.nonzero(inside)[0]
    conf = mask_vals[rows[idx], cols[idx]]
    obs = depth_vals[rows[idx], cols[idx]]
    keep = (conf >= rho) & (obs > 0)
    passed[idx[keep]] = True
    real[idx[keep]] = obs[keep]

    synth = np.where(passed, projected.depth, epsilon)
    return GatedDepthSets(d_synth=synth, d_real=real, valid=passed, epsilon=epsilon)


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average whose window shrinks symmetrically at the ends.

    smoothed[i] = mean(values[i-h' : i+h'+1]) with h' = min(window//2, i, n-1-i),
    so the first and last entries pass through unchanged.
    """
    if window < 1:
        raise ConfigurationError(f"window must be >= 1, got {window}")
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    half = window // 2
    if half == 0 or n <= 1:
        return values.copy()
    csum = np.concatenate([[0.0], np.cumsum(values)])
    i = np.arange(n)
    h = np.minimum(half, np.minimum(i, n - 1 - i))
    return (csum[i + h + 1] - csum[i - h]) / (2 * h + 1)


def adaptive_min_depth(
    depths,
    valid=None,
    gamma: float = DEFAULT_GAMMA,
    window: int = DEFAULT_WINDOW,
    adaptive: bool = True,
):
    """Closest-depth selection that skips isolated near-camera outliers.

    Invalid entries are discarded, the rest sorted ascending and smoothed
    with a centered moving average. The value at the first index k whose gap
    to the next smoothed value is <= gamma is returned as (depth, k); when
    every gap exceeds gamma the plain minimum is returned with index None.
    With adaptive=False the plain minimum is always used.
    """
    depths = np.asarray(depths, dtype=np.float64)
    if valid is None:
        valid = np.ones(len(depths), dtype=bool)
    vals = depths[np.asarray(valid, dtype=bool)]
    if len(vals) == 0:
        raise NoObservationError("no valid depth observations")
    vals = np.sort(vals)
    if not adaptive:
        return float(vals[0]), None

    smoothed = moving_average(vals, window)
    gaps = np.diff(smoothed)
    # tiny relative slack so decimal thresholds (gap == gamma) are not lost
    # to float representation
    hits = np.nonzero(gaps <= gamma * (1.0 + 1e-9) + 1e-15)[0]
    if len(hits) == 0:
        return float(vals[0]), None
    k = int(hits[0])
    return float(smoothed[k]), k


def depth_offset(
    gated: GatedDepthSets,
    gamma: float = DEFAULT_GAMMA,
    window: int = DEFAULT_WINDOW,
    adaptive: bool = True,
) -> float:
    """Offset between the closest observed and closest projected depths."""
    if not gated.valid.any():
        raise NoObservationError("no valid gated depth observations")
    selected, _ = adaptive_min_depth(
        gated.d_real, gated.valid, gamma=gamma, window=window, adaptive=adaptive
    )
    return float(selected - gated.d_synth[gated.valid].min())


def pseudo_label(
    initial_pose: Pose6D,
    gated: GatedDepthSets,
    gamma: float = DEFAULT_GAMMA,
    window: int = DEFAULT_WINDOW,
    adaptive: bool = True,
) -> PseudoLabel:
    """Distance pseudo-label t_z_bar = delta_d + t_z for the initial pose."""
    if not gated.valid.any():
        raise NoObservationError("no valid gated depth observations")
    selected, index = adaptive_min_depth(
        gated.d_real, gated.valid, gamma=gamma, window=window, adaptive=adaptive
    )
    delta_d = float(selected - gated.d_synth[gated.valid].min())
    return PseudoLabel(
        t_z_bar=float(initial_pose.translation[2] + delta_d),
        delta_d=delta_d,
        selected_real_depth=float(selected),
        selected_index=index,
    )


def truncated_l1(t_z_bar: float, t_z_pred: float, xi: float = DEFAULT_XI) -> float:
    """L1 distance clipped at the upper bound xi."""
    if not xi > 0:
        raise ConfigurationError(f"xi must be positive, got {xi}")
    return float(min(abs(t_z_bar - t_z_pred), xi))
