"""Pure numpy implementations of the hot kernels.

Fallback backend used when the compiled extension is unavailable (or when
POSEADAPT_FORCE_NUMPY is set). Must match poseadapt._kernels semantics.
"""

import numpy as np


def splat_min(height, width, us, vs, depths):
    """Scatter points into a z-buffer keeping the nearest depth per pixel.

    Out-of-bounds points are skipped. Ties on depth resolve to the lowest
    point index. Returns (depth_image, owner) with owner = -1 and
    depth = +inf on empty pixels.
    """
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    depths = np.asarray(depths, dtype=np.float64)
    depth_img = np.full((height, width), np.inf)
    owner = np.full((height, width), -1, dtype=np.int64)

    inb = (us >= 0) & (us < width) & (vs >= 0) & (vs < height)
    if not inb.any():
        return depth_img, owner
    flat = vs[inb] * width + us[inb]
    d = depths[inb]
    idx = np.nonzero(inb)[0]

    buf = depth_img.ravel()
    np.minimum.at(buf, flat, d)
    # Second pass: among points matching the per-pixel minimum, the lowest
    # point index wins (same tie-break as the compiled kernel).
    hit = d == buf[flat]
    obuf = np.full(height * width, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(obuf, flat[hit], idx[hit])
    filled = obuf != np.iinfo(np.int64).max
    owner.ravel()[filled] = obuf[filled]
    return depth_img, owner


def bilinear_sample(image, xs, ys, fill=0.0):
    """Bilinearly sample image at index-space locations (x=col, y=row).

    Out-of-range neighbours contribute `fill` (zero padding when fill=0).
    """
    image = np.asarray(image, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    rows, cols = image.shape

    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1
    wx = xs - x0
    wy = ys - y0

    def fetch(yi, xi):
        ok = (yi >= 0) & (yi < rows) & (xi >= 0) & (xi < cols)
        vals = np.full(xi.shape, fill)
        vals[ok] = image[yi[ok], xi[ok]]
        return vals

    v00 = fetch(y0, x0)
    v01 = fetch(y0, x1)
    v10 = fetch(y1, x0)
    v11 = fetch(y1, x1)
    return (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * (
        (1.0 - wx) * v10 + wx * v11
    )
