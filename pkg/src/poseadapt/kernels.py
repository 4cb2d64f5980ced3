"""Backend selection for the hot kernels.

Prefers the compiled extension (poseadapt._kernels) and falls back to the
numpy implementations. Set POSEADAPT_FORCE_NUMPY=1 to force the fallback,
e.g. for benchmarking or debugging.
"""

import os

import numpy as np

if os.environ.get("POSEADAPT_FORCE_NUMPY"):
    from . import _kernels_np as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_np as _impl

        BACKEND = "numpy"


def splat_min(height, width, us, vs, depths):
    """Z-buffer scatter-min; see the backend modules for semantics."""
    us = np.ascontiguousarray(us, dtype=np.int64)
    vs = np.ascontiguousarray(vs, dtype=np.int64)
    depths = np.ascontiguousarray(depths, dtype=np.float64)
    return _impl.splat_min(int(height), int(width), us, vs, depths)


def bilinear_sample(image, xs, ys, fill=0.0):
    """Bilinear sampling in index space with constant padding."""
    image = np.ascontiguousarray(image, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    return _impl.bilinear_sample(image, xs, ys, float(fill))
