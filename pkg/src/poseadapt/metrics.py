"""Standard 6D-pose evaluation: ADD, ADD-S, recall, and threshold-AUC.

Also defines the line-oriented pose-result file format and the key-value
metric report used by the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, DataError
from .geometry import Pose6D

DEFAULT_AUC_MAX = 0.10
DEFAULT_RECALL_FRACTION = 0.10


@dataclass(frozen=True)
class ObjectModelInfo:
    """Model points (meters), diameter, and the symmetry flag for dispatch."""

    points: np.ndarray
    diameter: float
    is_symmetric: bool = False

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3 or len(points) < 2:
            raise ConfigurationError("model needs at least two 3D points")
        object.__setattr__(self, "points", points)
        if not self.diameter > 0:
            raise ConfigurationError(f"diameter must be positive, got {self.diameter}")

    @classmethod
    def from_points(cls, points, is_symmetric: bool = False) -> "ObjectModelInfo":
        points = np.asarray(points, dtype=np.float64)
        return cls(points, model_diameter(points), is_symmetric)


def model_diameter(points) -> float:
    """Maximum pairwise distance between model points."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) > 2000:
        # The farthest pair lies on the convex hull.
        from scipy.spatial import ConvexHull

        points = points[ConvexHull(points).vertices]
    from scipy.spatial.distance import pdist

    return float(pdist(points).max())


def add_error(pred: Pose6D, gt: Pose6D, model: ObjectModelInfo) -> float:
    """Mean distance between correspondingly transformed model points."""
    return float(
        np.linalg.norm(pred.transform(model.points) - gt.transform(model.points), axis=1).mean()
    )


def adds_error(pred: Pose6D, gt: Pose6D, model: ObjectModelInfo) -> float:
    """Mean distance from each gt-transformed point to its nearest pred point."""
    pts_pred = pred.transform(model.points)
    pts_gt = gt.transform(model.points)
    dists, _ = cKDTree(pts_pred).query(pts_gt, k=1)
    return float(dists.mean())


def add_or_adds(pred: Pose6D, gt: Pose6D, model: ObjectModelInfo) -> float:
    """Symmetric objects use ADD-S, all others plain ADD."""
    if model.is_symmetric:
        return adds_error(pred, gt, model)
    return add_error(pred, gt, model)


def recall_at_diameter(errors, diameter: float, fraction: float = DEFAULT_RECALL_FRACTION) -> float:
    """Share of errors below fraction * diameter."""
    errors = np.asarray(errors, dtype=np.float64)
    if len(errors) == 0:
        raise DataError("empty error list")
    if not fraction > 0:
        raise ConfigurationError(f"fraction must be positive, got {fraction}")
    return float((errors < fraction * diameter).mean())


def auc(errors, max_threshold: float = DEFAULT_AUC_MAX) -> float:
    """Exact area under the accuracy-vs-threshold curve, normalized to [0, 1].

    The accuracy curve is a step function of the sorted errors; the integral
    up to max_threshold is computed in closed form. Errors at or above the
    maximum threshold contribute nothing.
    """
    errors = np.asarray(errors, dtype=np.float64)
    if len(errors) == 0:
        raise DataError("empty error list")
    if not max_threshold > 0:
        raise ConfigurationError(f"max_threshold must be positive, got {max_threshold}")
    inside = np.minimum(errors, max_threshold)
    return float((max_threshold - inside).sum() / (len(errors) * max_threshold))


def auc_binned(errors, max_threshold: float = DEFAULT_AUC_MAX, bins: int = 1000) -> float:
    """Riemann-sum AUC over evenly spaced thresholds (compatibility mode)."""
    errors = np.asarray(errors, dtype=np.float64)
    if len(errors) == 0:
        raise DataError("empty error list")
    thresholds = (np.arange(bins) + 1.0) * max_threshold / bins
    acc = (errors[None, :] < thresholds[:, None]).mean(axis=1)
    return float(acc.mean())


@dataclass(frozen=True)
class PoseRecord:
    scene_id: int
    object_id: int
    pose: Pose6D


def write_pose_records(path, records):
    """One line per estimate: scene id, object id, 9 rotation entries
    (row-major), 3 translation entries (meters)."""
    with open(path, "w") as f:
        for rec in records:
            rot = " ".join(repr(float(v)) for v in rec.pose.rotation.ravel())
            t = " ".join(repr(float(v)) for v in rec.pose.translation)
            f.write(f"{rec.scene_id} {rec.object_id} {rot} {t}\n")


def read_pose_records(path):
    records = []
    with open(path) as f:
        for ln, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 14:
                raise DataError(f"{path}:{ln}: expected 14 fields, got {len(parts)}")
            scene_id, object_id = int(parts[0]), int(parts[1])
            values = [float(p) for p in parts[2:]]
            pose = Pose6D(np.array(values[:9]).reshape(3, 3), np.array(values[9:]))
            records.append(PoseRecord(scene_id, object_id, pose))
    return records


def evaluate_pose_records(gt_records, pred_records, models) -> dict:
    """Per-object recall and AUC, as percentages keyed for the report.

    `models` maps object_id -> ObjectModelInfo. GT and prediction sets must
    cover exactly the same (scene, object) keys. `add_recall` and `auc_add`
    use the symmetry dispatch (ADD-S for symmetric objects), `auc_add_s` is
    always the nearest-neighbor variant.
    """
    gt = {(r.scene_id, r.object_id): r.pose for r in gt_records}
    pred = {(r.scene_id, r.object_id): r.pose for r in pred_records}
    if set(gt) != set(pred):
        missing = set(gt) ^ set(pred)
        raise DataError(f"GT/prediction records mismatch on {sorted(missing)[:5]}")
    by_object: dict = {}
    for (scene_id, object_id), gt_pose in gt.items():
        by_object.setdefault(object_id, []).append((gt_pose, pred[(scene_id, object_id)]))

    report = {}
    recalls, aucs_s, aucs_sym = [], [], []
    for object_id in sorted(by_object):
        if object_id not in models:
            raise DataError(f"no model for object id {object_id}")
        model = models[object_id]
        pairs = by_object[object_id]
        err_dispatch = np.array([add_or_adds(p, g, model) for g, p in pairs])
        err_adds = np.array([adds_error(p, g, model) for g, p in pairs])
        recall = recall_at_diameter(err_dispatch, model.diameter)
        auc_adds = auc(err_adds)
        auc_dispatch = auc(err_dispatch)
        report[f"object.{object_id}.add_recall"] = 100.0 * recall
        report[f"object.{object_id}.auc_add_s"] = 100.0 * auc_adds
        report[f"object.{object_id}.auc_add"] = 100.0 * auc_dispatch
        recalls.append(recall)
        aucs_s.append(auc_adds)
        aucs_sym.append(auc_dispatch)
    report["mean.add_recall"] = 100.0 * float(np.mean(recalls))
    report["mean.auc_add_s"] = 100.0 * float(np.mean(aucs_s))
    report["mean.auc_add"] = 100.0 * float(np.mean(aucs_sym))
    return report


def format_report(report: dict) -> str:
    return "".join(f"{key} = {value!r}\n" for key, value in report.items())


def parse_report(text: str) -> dict:
    report = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        report[key.strip()] = float(value)
    return report
