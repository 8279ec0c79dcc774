"""Time the numba and numpy flavours of each hot kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--points 200000] [--queries 20000] [--repeat 3]

The numba flavour is warmed up once before timing so compilation (or the
on-disk cache load) is not counted.
"""
import argparse
import time

import numpy as np

from tlsreflect import kernels
from tlsreflect.core import SpatialIndex


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def make_inputs(n_points, n_queries, seed):
    r = np.random.default_rng(seed)
    # points on a few noisy planes, roughly the density of a facade scan
    uv = r.uniform(0, 20, (n_points, 2))
    pos = np.column_stack([uv[:, 0], r.integers(0, 4, n_points) * 5.0 + r.normal(0, 0.005, n_points),
                           uv[:, 1]])
    normals = np.tile([0.0, 1.0, 0.0], (n_points, 1))
    index = SpatialIndex(pos)
    ids = r.choice(n_points, n_queries, replace=False)
    axes = r.normal(size=(n_queries, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    h_a = r.random((n_queries, 11))
    h_b = r.random((n_queries, 11))
    h_a /= h_a.sum(1, keepdims=True)
    h_b /= h_b.sum(1, keepdims=True)
    return pos, normals, index, ids, axes, h_a, h_b


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--queries", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    pos, normals, index, ids, axes, h_a, h_b = make_inputs(args.points, args.queries, args.seed)
    indptr, indices = index.radius_csr(pos[ids], 0.5, exclude=ids)
    # eps-graph over every point, as plane detection builds it over the candidates
    g_ptr, g_idx = index.radius_csr(pos, 0.15, exclude=np.arange(len(pos)))

    cases = [
        ("relsfh_hist", kernels.relsfh_hist_nb, kernels.relsfh_hist_np,
         (pos, normals, pos[ids], axes, indptr, indices, 0.5, 11, 11)),
        ("hausdorff_rows", kernels.hausdorff_rows_nb, kernels.hausdorff_rows_np, (h_a, h_b)),
        ("dbscan_labels", kernels.dbscan_labels_nb, kernels.dbscan_labels_np, (g_ptr, g_idx, 5)),
    ]
    print(f"{args.points} points, {args.queries} queries, "
          f"{len(indices) / max(len(ids), 1):.0f} neighbours per query, best of {args.repeat}")
    print(f"{'kernel':>16}  {'numba s':>9}  {'numpy s':>9}  {'speedup':>7}")
    for name, nb, npf, call in cases:
        nb(*call)  # compile or load from cache
        t_nb = best_of(nb, call, args.repeat)
        t_np = best_of(npf, call, args.repeat)
        print(f"{name:>16}  {t_nb:9.4f}  {t_np:9.4f}  {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
