import os
import subprocess
import sys

import numpy as np
import pytest

from tipose import kernels
from tipose._backend import NUMBA_AVAILABLE, backend_name
from tipose.kinematics import default_skeleton, rotvec_to_matrix

needs_numba = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")


@needs_numba
def test_sbp_costs_agree_bitwise(rng):
    grid = default_skeleton().sbp_grid(0)
    for with_prev in (False, True):
        rot = rotvec_to_matrix(rng.normal(size=3))
        om, vel = rng.normal(size=3), rng.normal(size=3)
        prev = rng.normal(size=3) * 0.1 if with_prev else None
        a = kernels.sbp_costs_numpy(grid, rot, om, vel, prev, 0.3)
        b = kernels.sbp_costs_numba(grid, rot, om, vel, prev, 0.3)
        assert np.array_equal(a, b)
        assert kernels.sbp_argmin_numpy(grid, rot, om, vel, prev, 0.3) == \
            kernels.sbp_argmin_numba(grid, rot, om, vel, prev, 0.3)


@needs_numba
@pytest.mark.parametrize("shape", [(7,), (50, 3), (200, 6, 3)])
def test_window_kernels_agree_bitwise(rng, shape):
    x = rng.normal(size=shape)
    assert np.array_equal(kernels.centered_mean_numpy(x, 5), kernels.centered_mean_numba(x, 5))
    assert np.array_equal(kernels.trailing_sum_numpy(x, 30), kernels.trailing_sum_numba(x, 30))


@needs_numba
def test_voronoi_agree_bitwise(rng):
    n = 60
    states = [(np.full((n, n), np.inf), np.full((n, n), -1)) for _ in range(2)]
    for label in range(40):
        ox, oy = rng.uniform(-3.5, 3.5, size=2)
        ca = kernels.voronoi_update_numpy(*states[0], -3.0, -3.0, 0.1, ox, oy, 0.5, label)
        cb = kernels.voronoi_update_numba(*states[1], -3.0, -3.0, 0.1, ox, oy, 0.5, label)
        assert ca == cb
    assert np.array_equal(states[0][0], states[1][0])
    assert np.array_equal(states[0][1], states[1][1])


def test_env_flag_selects_numpy():
    env = dict(os.environ, TIPOSE_DISABLE_NUMBA="1")
    code = "import tipose._backend as b, tipose.kernels as k; print(b.backend_name(), k.sbp_costs.__name__)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "sbp_costs_numpy"]


def test_default_backend():
    if os.environ.get("TIPOSE_DISABLE_NUMBA"):
        pytest.skip("numba disabled in this environment")
    assert backend_name() == ("numba" if NUMBA_AVAILABLE else "numpy")


def test_benchmark_script_runs():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    out = subprocess.run([sys.executable, os.path.join(root, "benchmarks", "bench_kernels.py"), "--repeat", "1"],
                         capture_output=True, text=True, check=True)
    assert "voronoi fill" in out.stdout and out.stdout.count("x\n") == 4
