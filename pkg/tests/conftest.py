import numpy as np
import pytest

from poseadapt.codebook import random_rotation
from poseadapt.geometry import BoundingBox, CameraIntrinsics, CropSpec, Pose6D

# Camera used across tests unless a case needs something specific.
K = CameraIntrinsics(fx=572.4, fy=573.6, cx=320.0, cy=240.0)


def make_pose(rng, z_range=(0.6, 1.4), lateral=0.05):
    tz = rng.uniform(*z_range)
    txy = rng.uniform(-lateral, lateral, size=2) * tz
    return Pose6D(random_rotation(rng), np.array([txy[0], txy[1], tz]))


def make_crop(rng, k=K, out_size=128):
    center = (rng.uniform(100, 540), rng.uniform(80, 400))
    return CropSpec(center=center, scale=rng.uniform(60, 240), out_size=out_size,
                    intrinsics=k)


def crop_around_pose(pose, k=K, out_size=128, f_anc=1.4, side=120.0, jitter=None):
    """Crop roughly centered on the pose's projected center."""
    center = k.project(pose.translation[None, :])[0]
    if jitter is not None:
        center = center + jitter
    box = BoundingBox(x=center[0], y=center[1], w=side, h=side)
    return CropSpec(center=(box.x, box.y), scale=f_anc * box.side,
                    out_size=out_size, intrinsics=k)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
