"""Deterministic synthetic RGB-D-style scenes for the verification harness.

Each scene renders one object by z-buffer point splatting, optionally hides
part of it behind a fronto-parallel occluder quad, adds sensor-style depth
noise, and fabricates the outputs a pose estimator would provide: a noisy
initial pose and an eroded mask. Everything is reproducible from the seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import ndimage

from .codebook import random_rotation, rotation_about_axis
from .errors import ConfigurationError, DataError, GenerationError
from .fileio import (
    read_depth_pgm,
    read_mask_pgm,
    write_depth_pgm,
    write_mask_pgm,
)
from .geometry import (
    BoundingBox,
    CameraIntrinsics,
    CropSpec,
    Pose6D,
    project_points,
)
from .kernels import splat_min
from .meshes import TriangleMesh, make_shape
from .metrics import ObjectModelInfo
from .pseudolabel import sample_surface_points

SYMMETRIC_SHAPES = ("sphere", "cylinder")


@dataclass(frozen=True)
class NoiseSpec:
    """Controllable error model for scenes and initial estimates."""

    rotation_sigma_deg: float = 0.0
    translation_sigma_frac: float = 0.0
    mask_erosion_px: int = 0
    depth_noise_sigma: float = 0.0
    occlusion_fraction: float = 0.0

    def __post_init__(self):
        for name in ("rotation_sigma_deg", "translation_sigma_frac",
                     "mask_erosion_px", "depth_noise_sigma", "occlusion_fraction"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")
        if not self.occlusion_fraction < 1:
            raise ConfigurationError("occlusion_fraction must be < 1")


@dataclass(frozen=True)
class SceneSpec:
    """Shape, camera, sampling ranges, and render resolution of a scene."""

    shape: str = "sphere"
    size: float = 0.06
    image_size: tuple = (640, 480)
    intrinsics: CameraIntrinsics = CameraIntrinsics(572.4, 573.6, 320.0, 240.0)
    z_range: tuple = (0.7, 1.1)
    lateral_frac: float = 0.03
    n_render_points: int = 60000
    n_model_points: int = 512
    crop_size: int = 128
    render_from_model_points: bool = False


@dataclass
class SceneSample:
    """One generated frame plus the stand-ins a pose estimator would supply."""

    spec: SceneSpec
    noise: NoiseSpec
    seed: int
    model: ObjectModelInfo
    mesh: "TriangleMesh"
    gt_pose: Pose6D
    est_pose: Pose6D
    intrinsics: CameraIntrinsics
    image_size: tuple
    depth: np.ndarray
    gt_mask: np.ndarray
    est_mask: np.ndarray
    detection: BoundingBox
    scene_id: int = 0


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream)])


def render_depth_image(points, pose: Pose6D, k: CameraIntrinsics, image_size):
    """Splat camera-frame projections into a z-buffer depth image.

    Returns (depth, owner, n_outside): depth 0 where empty, owner is the
    winning point index (-1 where empty), n_outside counts valid projections
    that fell off the image.
    """
    w, h = image_size
    uv, depth, valid = project_points(points, pose, k)
    cols = np.floor(uv[valid, 0]).astype(np.int64)
    rows = np.floor(uv[valid, 1]).astype(np.int64)
    inside = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
    depth_img, owner = splat_min(h, w, cols, rows, depth[valid])
    depth_img = np.where(owner >= 0, depth_img, 0.0)
    return depth_img, owner, int((~inside).sum() + (~valid).sum())


def _mask_bbox(mask: np.ndarray) -> BoundingBox:
    rows, cols = np.nonzero(mask)
    x0, x1 = cols.min(), cols.max()
    y0, y1 = rows.min(), rows.max()
    return BoundingBox(
        x=(x0 + x1 + 1) / 2.0, y=(y0 + y1 + 1) / 2.0, w=x1 - x0 + 1, h=y1 - y0 + 1
    )


def _fit_occluder(obj_mask: np.ndarray, obj_depth: np.ndarray, fraction: float,
                  rng: np.random.Generator):
    """Occluder region covering `fraction` of the object silhouette.

    A fronto-parallel quad between camera and object projects to a half-plane
    clipped by the image; the quad edge offset is chosen so the covered pixel
    count matches the requested fraction (the "size search" reduces to a
    quantile of the silhouette pixels along a random direction).
    """
    phi = rng.uniform(0.0, 2.0 * np.pi)
    direction = np.array([np.cos(phi), np.sin(phi)])
    rows, cols = np.nonzero(obj_mask)
    proj = cols * direction[0] + rows * direction[1]
    k = int(round(fraction * len(proj)))
    if k == 0:
        return np.zeros_like(obj_mask, dtype=bool), 0.0
    thresh = np.partition(proj, k - 1)[k - 1]
    h, w = obj_mask.shape
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    region = (jj * direction[0] + ii * direction[1]) <= thresh
    quad_depth = 0.6 * obj_depth[obj_mask].min()
    return region, float(quad_depth)


def perturb_pose(pose: Pose6D, noise: NoiseSpec, detection: BoundingBox,
                 k: CameraIntrinsics, rng: np.random.Generator) -> Pose6D:
    """Noisy initial estimate mimicking a monocular predictor.

    Rotation gets a random-axis perturbation; the distance gets log-normal
    multiplicative noise (monocular error concentrates along the ray) while
    the projected center jitters by a small fraction of the detection size.
    """
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(noise.rotation_sigma_deg) * rng.standard_normal()
    rot = rotation_about_axis(axis, angle) @ pose.rotation

    t = pose.translation
    tz = t[2] * np.exp(noise.translation_sigma_frac * rng.standard_normal())
    center = k.project(t[None, :])[0]
    jitter_px = 0.1 * noise.translation_sigma_frac * detection.side
    center = center + jitter_px * rng.standard_normal(2)
    translation = k.backproject(center[None, :], np.array([tz]))[0]
    return Pose6D(rot, translation)


def generate_scene(spec: SceneSpec, noise: NoiseSpec, seed: int,
                   scene_id: int = 0) -> SceneSample:
    """Render one deterministic scene; raises GenerationError if the object
    does not project fully inside the image."""
    mesh = make_shape(spec.shape, spec.size)
    k = spec.intrinsics
    w, h = spec.image_size

    rng_pose = _stream(seed, 0)
    rotation = random_rotation(rng_pose)
    tz = rng_pose.uniform(*spec.z_range)
    txy = spec.lateral_frac * tz * rng_pose.uniform(-1.0, 1.0, size=2)
    gt_pose = Pose6D(rotation, np.array([txy[0], txy[1], tz]))

    model_points = sample_surface_points(mesh, spec.n_model_points, seed=int(seed) * 4 + 3)
    model = ObjectModelInfo.from_points(
        model_points, is_symmetric=spec.shape in SYMMETRIC_SHAPES
    )

    if spec.render_from_model_points:
        dense = model_points
    else:
        dense = sample_surface_points(mesh, spec.n_render_points, seed=int(seed) * 4 + 1)
    depth_img, owner, n_outside = render_depth_image(dense, gt_pose, k, spec.image_size)
    obj_mask = owner >= 0
    if n_outside or not obj_mask.any():
        raise GenerationError("object does not project fully inside the image")
    bbox = _mask_bbox(obj_mask)
    if bbox.x - bbox.w / 2 <= 0 or bbox.x + bbox.w / 2 >= w \
            or bbox.y - bbox.h / 2 <= 0 or bbox.y + bbox.h / 2 >= h:
        raise GenerationError("object silhouette touches the image border")

    depth = depth_img.copy()
    visible = obj_mask
    if noise.occlusion_fraction > 0:
        region, quad_depth = _fit_occluder(obj_mask, depth_img, noise.occlusion_fraction,
                                           _stream(seed, 2))
        visible = obj_mask & ~region
        depth[region] = quad_depth
        if not visible.any():
            raise GenerationError("object fully occluded")

    if noise.depth_noise_sigma > 0:
        jitter = _stream(seed, 3).normal(0.0, noise.depth_noise_sigma, size=depth.shape)
        valid = depth > 0
        depth[valid] = np.maximum(depth[valid] + jitter[valid], 1e-4)

    gt_mask = visible.astype(np.float64)
    detection = _mask_bbox(visible)

    est_pose = perturb_pose(gt_pose, noise, detection, k, _stream(seed, 4))
    if noise.mask_erosion_px > 0:
        est_mask = ndimage.binary_erosion(
            visible, iterations=int(noise.mask_erosion_px)
        ).astype(np.float64)
    else:
        est_mask = gt_mask.copy()

    return SceneSample(
        spec=spec, noise=noise, seed=int(seed), model=model, mesh=mesh,
        gt_pose=gt_pose, est_pose=est_pose, intrinsics=k,
        image_size=spec.image_size, depth=depth, gt_mask=gt_mask,
        est_mask=est_mask, detection=detection, scene_id=scene_id,
    )


def crop_image_nearest(image: np.ndarray, crop: CropSpec, inplane: float = 0.0,
                       fill: float = 0.0) -> np.ndarray:
    """Nearest-neighbor resample of a full image into a crop frame.

    `inplane` additionally rotates the crop content about its center (the
    augmented-view convention). Nearest lookup keeps metric depth values
    unblended.
    """
    s = crop.out_size
    jj, ii = np.meshgrid(np.arange(s), np.arange(s))
    q = np.stack([jj.ravel() + 0.5, ii.ravel() + 0.5], axis=1)
    if inplane != 0.0:
        c, sn = np.cos(-inplane), np.sin(-inplane)
        rot = np.array([[c, -sn], [sn, c]])
        q = (q - 0.5 * s) @ rot.T + 0.5 * s
    src = crop.to_source(q)
    cols = np.floor(src[:, 0]).astype(np.int64)
    rows = np.floor(src[:, 1]).astype(np.int64)
    out = np.full(s * s, fill)
    h, w = image.shape
    ok = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
    out[ok] = image[rows[ok], cols[ok]]
    return out.reshape(s, s)


# --------------------------------------------------------------------------
# persistence: scene_NNN/{depth.pgm, mask.pgm, meta}

_META_FLOATS = {
    "scene.size", "intrinsics.fx", "intrinsics.fy", "intrinsics.cx",
    "intrinsics.cy", "scene.z_min", "scene.z_max", "scene.lateral_frac",
    "noise.rotation_sigma_deg", "noise.translation_sigma_frac",
    "noise.depth_noise_sigma", "noise.occlusion_fraction",
    "detection.x", "detection.y", "detection.w", "detection.h",
}
_META_INTS = {
    "scene.id", "scene.seed", "image.width", "image.height",
    "scene.n_render_points", "scene.n_model_points", "scene.crop_size",
    "noise.mask_erosion_px", "scene.render_from_model_points",
}


def scene_dir_name(scene_id: int) -> str:
    return f"scene_{scene_id:03d}"


def save_scene(directory, sample: SceneSample):
    os.makedirs(directory, exist_ok=True)
    write_depth_pgm(os.path.join(directory, "depth.pgm"), sample.depth)
    write_mask_pgm(os.path.join(directory, "mask.pgm"), sample.gt_mask)
    spec, noise = sample.spec, sample.noise
    lines = {
        "scene.id": sample.scene_id,
        "scene.seed": sample.seed,
        "scene.shape": spec.shape,
        "scene.size": spec.size,
        "scene.z_min": spec.z_range[0],
        "scene.z_max": spec.z_range[1],
        "scene.lateral_frac": spec.lateral_frac,
        "scene.n_render_points": spec.n_render_points,
        "scene.n_model_points": spec.n_model_points,
        "scene.crop_size": spec.crop_size,
        "scene.render_from_model_points": int(spec.render_from_model_points),
        "image.width": spec.image_size[0],
        "image.height": spec.image_size[1],
        "intrinsics.fx": spec.intrinsics.fx,
        "intrinsics.fy": spec.intrinsics.fy,
        "intrinsics.cx": spec.intrinsics.cx,
        "intrinsics.cy": spec.intrinsics.cy,
        "gt.rotation": " ".join(repr(float(v)) for v in sample.gt_pose.rotation.ravel()),
        "gt.translation": " ".join(repr(float(v)) for v in sample.gt_pose.translation),
        "est.rotation": " ".join(repr(float(v)) for v in sample.est_pose.rotation.ravel()),
        "est.translation": " ".join(repr(float(v)) for v in sample.est_pose.translation),
        "detection.x": sample.detection.x,
        "detection.y": sample.detection.y,
        "detection.w": sample.detection.w,
        "detection.h": sample.detection.h,
        "noise.rotation_sigma_deg": noise.rotation_sigma_deg,
        "noise.translation_sigma_frac": noise.translation_sigma_frac,
        "noise.mask_erosion_px": noise.mask_erosion_px,
        "noise.depth_noise_sigma": noise.depth_noise_sigma,
        "noise.occlusion_fraction": noise.occlusion_fraction,
    }
    with open(os.path.join(directory, "meta"), "w") as f:
        for key, value in lines.items():
            if isinstance(value, (float, np.floating)):
                f.write(f"{key} = {float(value)!r}\n")
            else:
                f.write(f"{key} = {value}\n")


def _parse_meta(path) -> dict:
    meta = {}
    with open(path) as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise DataError(f"{path}:{ln}: expected 'key = value'")
            key, value = key.strip(), value.strip()
            if key in _META_FLOATS:
                meta[key] = float(value)
            elif key in _META_INTS:
                meta[key] = int(value)
            else:
                meta[key] = value
    return meta


def spec_from_meta(meta: dict) -> SceneSpec:
    return SceneSpec(
        shape=meta["scene.shape"],
        size=meta["scene.size"],
        image_size=(meta["image.width"], meta["image.height"]),
        intrinsics=CameraIntrinsics(
            meta["intrinsics.fx"], meta["intrinsics.fy"],
            meta["intrinsics.cx"], meta["intrinsics.cy"],
        ),
        z_range=(meta["scene.z_min"], meta["scene.z_max"]),
        lateral_frac=meta["scene.lateral_frac"],
        n_render_points=meta["scene.n_render_points"],
        n_model_points=meta["scene.n_model_points"],
        crop_size=meta["scene.crop_size"],
        render_from_model_points=bool(meta["scene.render_from_model_points"]),
    )


def noise_from_meta(meta: dict) -> NoiseSpec:
    return NoiseSpec(
        rotation_sigma_deg=meta["noise.rotation_sigma_deg"],
        translation_sigma_frac=meta["noise.translation_sigma_frac"],
        mask_erosion_px=meta["noise.mask_erosion_px"],
        depth_noise_sigma=meta["noise.depth_noise_sigma"],
        occlusion_fraction=meta["noise.occlusion_fraction"],
    )


def _pose_from_meta(meta: dict, prefix: str) -> Pose6D:
    rot = np.array([float(v) for v in meta[f"{prefix}.rotation"].split()]).reshape(3, 3)
    t = np.array([float(v) for v in meta[f"{prefix}.translation"].split()])
    return Pose6D(rot, t)


def load_scene(directory) -> SceneSample:
    """Rebuild a SceneSample from disk; depth comes back mm-quantized."""
    meta = _parse_meta(os.path.join(directory, "meta"))
    spec = spec_from_meta(meta)
    noise = noise_from_meta(meta)
    seed = meta["scene.seed"]
    depth = read_depth_pgm(os.path.join(directory, "depth.pgm"))
    gt_mask = read_mask_pgm(os.path.join(directory, "mask.pgm"))
    mesh = make_shape(spec.shape, spec.size)
    model_points = sample_surface_points(mesh, spec.n_model_points, seed=seed * 4 + 3)
    model = ObjectModelInfo.from_points(
        model_points, is_symmetric=spec.shape in SYMMETRIC_SHAPES
    )
    visible = gt_mask > 0.5
    if noise.mask_erosion_px > 0:
        est_mask = ndimage.binary_erosion(
            visible, iterations=int(noise.mask_erosion_px)
        ).astype(np.float64)
    else:
        est_mask = visible.astype(np.float64)
    return SceneSample(
        spec=spec, noise=noise, seed=seed, model=model, mesh=mesh,
        gt_pose=_pose_from_meta(meta, "gt"), est_pose=_pose_from_meta(meta, "est"),
        intrinsics=spec.intrinsics, image_size=spec.image_size,
        depth=depth, gt_mask=gt_mask, est_mask=est_mask,
        detection=BoundingBox(
            meta["detection.x"], meta["detection.y"],
            meta["detection.w"], meta["detection.h"],
        ),
        scene_id=meta["scene.id"],
    )


def list_scene_dirs(root):
    names = sorted(
        n for n in os.listdir(root)
        if n.startswith("scene_") and os.path.isdir(os.path.join(root, n))
    )
    return [os.path.join(root, n) for n in names]


def mixed_shape(index: int) -> str:
    return ("sphere", "box", "cylinder")[index % 3]


def generate_suite(count: int, base_spec: SceneSpec, noise: NoiseSpec, seed: int,
                   shape: str = "mixed", size_range: Optional[tuple] = None):
    """Generate `count` scenes with per-scene seeds derived from `seed`.

    Shapes cycle through sphere/box/cylinder when shape="mixed"; sizes are
    drawn from size_range when given. Retries with a fresh seed whenever a
    draw lands outside the frustum.
    """
    samples = []
    for i in range(count):
        kind = mixed_shape(i) if shape == "mixed" else shape
        attempt_seed = seed + 1000003 * i
        spec = replace(base_spec, shape=kind)
        if size_range is not None:
            size_rng = _stream(attempt_seed, 6)
            spec = replace(spec, size=float(size_rng.uniform(*size_range)))
        for attempt in range(20):
            try:
                sample = generate_scene(spec, noise, attempt_seed + 7919 * attempt,
                                        scene_id=i)
                break
            except GenerationError:
                continue
        else:
            raise GenerationError(f"could not place scene {i} inside the frustum")
        samples.append(sample)
    return samples
