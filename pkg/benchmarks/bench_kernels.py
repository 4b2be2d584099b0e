"""Compare the numba and pure-numpy grid kernels.

    python benchmarks/bench_kernels.py --n 64 --repeat 3

Each kernel is run once untimed (numba compilation / cache load), then timed
``--repeat`` times; the best time is reported together with the maximum
difference between the two backends.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from semitube_lab import _backend, _kernels
from semitube_lab.fields import GridField, MollifierKernel, RegularGrid, mollify


def best_of(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=64, help="grid nodes per axis (3-D)")
    p.add_argument("--eps-nodes", type=float, default=3.0, help="mollifier radius in grid spacings")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if not _backend.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    n = args.n
    grid = RegularGrid.cube(-1.2, 1.2, n, 3)
    x = grid.nodes()
    inside = np.sum(x**2, axis=-1) < 1.0
    u = GridField(grid, np.where(inside, -np.log(np.clip(1 - np.sqrt(np.sum(x**2, -1)), 1e-12, None)), -np.inf))
    eps = args.eps_nodes * grid.spacing
    start = grid.nearest_index(np.zeros(3))
    print(f"grid {n}^3, mollifier stencil {len(MollifierKernel(eps, grid.spacing, 3))} nodes")
    print(f"{'kernel':<14}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max |diff|':>14}")
    cases = {
        "squared_edt": lambda nb: _kernels.squared_edt(~inside, use_numba=nb),
        "mollify": lambda nb: mollify(u, eps, method="direct", use_numba=nb).values,
        "flood_fill": lambda nb: _kernels.flood_fill(inside, start, use_numba=nb),
    }
    for name, fn in cases.items():
        t_nb, a = best_of(lambda: fn(True), args.repeat)
        t_np, b = best_of(lambda: fn(False), args.repeat)
        fa, fb = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
        same = np.isfinite(fa) & np.isfinite(fb)
        diff = float(np.max(np.abs(fa[same] - fb[same]))) if same.any() else 0.0
        if not np.array_equal(np.isfinite(fa), np.isfinite(fb)):
            diff = float("inf")
        print(f"{name:<14}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}{diff:>14.3g}")


if __name__ == "__main__":
    main()
