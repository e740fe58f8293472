"""Time the numba kernels against their numpy twins on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both flavours are imported directly, so TIPOSE_DISABLE_NUMBA has no effect here.
"""
import argparse
import timeit

import numpy as np

from tipose import kernels
from tipose.kinematics import L_FOOT, default_skeleton, rotvec_to_matrix


def cases(rng):
    grid = default_skeleton().sbp_grid(L_FOOT)
    rot = rotvec_to_matrix(rng.normal(size=3))
    om, vel, prev = rng.normal(size=3), rng.normal(size=3), grid[100]
    acc = rng.normal(size=(600, 18))

    def voronoi(fn):
        conf, owner = np.full((400, 400), np.inf), np.full((400, 400), -1)
        pts = rng.uniform(-15, 15, size=(50, 2))

        def run():
            for k, (x, y) in enumerate(pts):
                fn(conf, owner, -20.0, -20.0, 0.1, x, y, 0.5, k)
        return run

    return {
        f"sbp grid search ({len(grid)} points)": (
            lambda: kernels.sbp_argmin_numpy(grid, rot, om, vel, prev, 0.3),
            lambda: kernels.sbp_argmin_numba(grid, rot, om, vel, prev, 0.3)),
        "moving average (600x18, window 11)": (
            lambda: kernels.centered_mean_numpy(acc, 5), lambda: kernels.centered_mean_numba(acc, 5)),
        "trailing sum (600x18, 30 frames)": (
            lambda: kernels.trailing_sum_numpy(acc, 30), lambda: kernels.trailing_sum_numba(acc, 30)),
        "voronoi fill (50 observations)": (voronoi(kernels.voronoi_update_numpy),
                                           voronoi(kernels.voronoi_update_numba)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    for name, (np_fn, nb_fn) in cases(rng).items():
        nb_fn()  # compile outside the timed region
        t_np = min(timeit.repeat(np_fn, number=args.repeat, repeat=3)) / args.repeat
        t_nb = min(timeit.repeat(nb_fn, number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:40s} {t_np * 1e6:10.1f} {t_nb * 1e6:10.1f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
