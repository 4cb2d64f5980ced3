# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: z-buffer scatter-min splatting and bilinear sampling.

Semantics must stay in lockstep with poseadapt._kernels_np; the backend is
chosen at import time in poseadapt.kernels.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def splat_min(long height, long width,
              cnp.int64_t[::1] us, cnp.int64_t[::1] vs,
              cnp.float64_t[::1] depths):
    """Scatter points into a z-buffer keeping the nearest depth per pixel.

    Out-of-bounds points are skipped. Ties on depth resolve to the lowest
    point index. Returns (depth_image, owner) where owner holds the index of
    the winning point, -1 for empty pixels, and depth_image holds +inf there.
    """
    cdef Py_ssize_t n = us.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] depth_img = np.full(
        (height, width), np.inf, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] owner = np.full(
        (height, width), -1, dtype=np.int64)
    cdef cnp.float64_t[:, ::1] dview = depth_img
    cdef cnp.int64_t[:, ::1] oview = owner
    cdef Py_ssize_t i
    cdef long u, v
    cdef double d
    for i in range(n):
        u = us[i]
        v = vs[i]
        if u < 0 or u >= width or v < 0 or v >= height:
            continue
        d = depths[i]
        if d < dview[v, u] or (d == dview[v, u] and i < oview[v, u]):
            dview[v, u] = d
            oview[v, u] = i
    return depth_img, owner


def bilinear_sample(cnp.float64_t[:, ::1] image,
                    cnp.float64_t[::1] xs, cnp.float64_t[::1] ys,
                    double fill=0.0):
    """Bilinearly sample image at index-space locations (x=col, y=row).

    Samples outside [-1, rows/cols] blend with `fill` (zero padding when
    fill=0); fully out-of-range locations return `fill`.
    """
    cdef Py_ssize_t n = xs.shape[0]
    cdef long rows = image.shape[0]
    cdef long cols = image.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] oview = out
    cdef Py_ssize_t i
    cdef double x, y, wx, wy, v00, v01, v10, v11
    cdef long x0, y0, x1, y1
    for i in range(n):
        x = xs[i]
        y = ys[i]
        x0 = <long>x if x >= 0 else <long>x - 1
        y0 = <long>y if y >= 0 else <long>y - 1
        x1 = x0 + 1
        y1 = y0 + 1
        wx = x - x0
        wy = y - y0
        v00 = image[y0, x0] if (0 <= y0 < rows and 0 <= x0 < cols) else fill
        v01 = image[y0, x1] if (0 <= y0 < rows and 0 <= x1 < cols) else fill
        v10 = image[y1, x0] if (0 <= y1 < rows and 0 <= x0 < cols) else fill
        v11 = image[y1, x1] if (0 <= y1 < rows and 0 <= x1 < cols) else fill
        oview[i] = ((1.0 - wy) * ((1.0 - wx) * v00 + wx * v01)
                    + wy * ((1.0 - wx) * v10 + wx * v11))
    return out
