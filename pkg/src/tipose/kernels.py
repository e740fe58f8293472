"""Hot numeric loops, each in a numba-compiled and a pure-numpy flavour.

Both flavours evaluate every output with the same sequence of IEEE
operations, so they agree bitwise.  The public names at the bottom of the
module are bound to one flavour according to :mod:`tipose._backend`.
"""
import math

import numpy as np

from tipose._backend import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# stationary-point grid search
# ---------------------------------------------------------------------------


def sbp_costs_numpy(grid, rot, omega, vel, prev, weight):
    x, y, z = grid[:, 0], grid[:, 1], grid[:, 2]
    wx = rot[0, 0] * x + rot[0, 1] * y + rot[0, 2] * z
    wy = rot[1, 0] * x + rot[1, 1] * y + rot[1, 2] * z
    wz = rot[2, 0] * x + rot[2, 1] * y + rot[2, 2] * z
    ux = (omega[1] * wz - omega[2] * wy) + vel[0]
    uy = (omega[2] * wx - omega[0] * wz) + vel[1]
    uz = (omega[0] * wy - omega[1] * wx) + vel[2]
    cost = np.sqrt(ux * ux + uy * uy + uz * uz)
    if prev is not None:
        dx = x - prev[0]
        dy = y - prev[1]
        dz = z - prev[2]
        cost = cost + weight * np.sqrt(dx * dx + dy * dy + dz * dz)
    return cost


@njit(cache=True)
def _sbp_costs_jit(grid, rot, omega, vel, prev, weight, has_prev, out):
    best = 0
    for i in range(grid.shape[0]):
        x = grid[i, 0]
        y = grid[i, 1]
        z = grid[i, 2]
        wx = rot[0, 0] * x + rot[0, 1] * y + rot[0, 2] * z
        wy = rot[1, 0] * x + rot[1, 1] * y + rot[1, 2] * z
        wz = rot[2, 0] * x + rot[2, 1] * y + rot[2, 2] * z
        ux = (omega[1] * wz - omega[2] * wy) + vel[0]
        uy = (omega[2] * wx - omega[0] * wz) + vel[1]
        uz = (omega[0] * wy - omega[1] * wx) + vel[2]
        c = math.sqrt(ux * ux + uy * uy + uz * uz)
        if has_prev:
            dx = x - prev[0]
            dy = y - prev[1]
            dz = z - prev[2]
            c = c + weight * math.sqrt(dx * dx + dy * dy + dz * dz)
        out[i] = c
        if c < out[best]:
            best = i
    return best


def sbp_costs_numba(grid, rot, omega, vel, prev, weight):
    out = np.empty(grid.shape[0])
    has_prev = prev is not None
    p = np.zeros(3) if prev is None else np.ascontiguousarray(prev, dtype=np.float64)
    _sbp_costs_jit(grid, rot, omega, vel, p, float(weight), has_prev, out)
    return out


def sbp_argmin_numpy(grid, rot, omega, vel, prev, weight):
    cost = sbp_costs_numpy(grid, rot, omega, vel, prev, weight)
    # np.argmin returns the first occurrence: lowest flat index wins ties
    i = int(np.argmin(cost))
    return i, float(cost[i])


def sbp_argmin_numba(grid, rot, omega, vel, prev, weight):
    out = np.empty(grid.shape[0])
    has_prev = prev is not None
    p = np.zeros(3) if prev is None else np.ascontiguousarray(prev, dtype=np.float64)
    i = _sbp_costs_jit(grid, rot, omega, vel, p, float(weight), has_prev, out)
    return int(i), float(out[i])


# ---------------------------------------------------------------------------
# windowed filters
# ---------------------------------------------------------------------------


def centered_mean_numpy(x, half):
    n = x.shape[0]
    acc = np.zeros_like(x)
    count = np.zeros(n)
    for k in range(-half, half + 1):
        lo = max(0, -k)
        hi = min(n, n - k)
        if hi <= lo:
            continue
        acc[lo:hi] += x[lo + k:hi + k]
        count[lo:hi] += 1.0
    return acc / count.reshape((n,) + (1,) * (x.ndim - 1))


@njit(cache=True)
def _centered_mean_jit(x, half, out):
    n, m = x.shape
    for t in range(n):
        lo = max(0, t - half)
        hi = min(n, t + half + 1)
        cnt = float(hi - lo)
        for c in range(m):
            s = 0.0
            for u in range(lo, hi):
                s += x[u, c]
            out[t, c] = s / cnt


def centered_mean_numba(x, half):
    x2 = np.ascontiguousarray(x, dtype=np.float64).reshape(x.shape[0], -1)
    out = np.empty_like(x2)
    _centered_mean_jit(x2, int(half), out)
    return out.reshape(x.shape)


def trailing_sum_numpy(x, horizon):
    n = x.shape[0]
    acc = np.zeros_like(x)
    # ascending source index, same order as the scalar loop
    for k in range(horizon - 1, -1, -1):
        if k >= n:
            continue
        acc[k:] += x[:n - k]
    return acc


@njit(cache=True)
def _trailing_sum_jit(x, horizon, out):
    n, m = x.shape
    for t in range(n):
        lo = max(0, t - horizon + 1)
        for c in range(m):
            s = 0.0
            for u in range(lo, t + 1):
                s += x[u, c]
            out[t, c] = s


def trailing_sum_numba(x, horizon):
    x2 = np.ascontiguousarray(x, dtype=np.float64).reshape(x.shape[0], -1)
    out = np.empty_like(x2)
    _trailing_sum_jit(x2, int(horizon), out)
    return out.reshape(x.shape)


# ---------------------------------------------------------------------------
# online Voronoi fill
# ---------------------------------------------------------------------------


def _cell_range(origin, cell, center, half, n):
    lo = int(math.floor((center - half - origin) / cell - 0.5)) - 1
    hi = int(math.ceil((center + half - origin) / cell - 0.5)) + 1
    return max(lo, 0), min(hi, n - 1)


def voronoi_update_numpy(conf, owner, origin_x, origin_y, cell, ox, oy, half, label):
    n = conf.shape[0]
    i0, i1 = _cell_range(origin_x, cell, ox, half, n)
    j0, j1 = _cell_range(origin_y, cell, oy, half, conf.shape[1])
    if i1 < i0 or j1 < j0:
        return 0
    cx = origin_x + (np.arange(i0, i1 + 1) + 0.5) * cell
    cy = origin_y + (np.arange(j0, j1 + 1) + 0.5) * cell
    dx = (cx - ox)[:, None]
    dy = (cy - oy)[None, :]
    inside = (np.abs(dx) <= half) & (np.abs(dy) <= half)
    dist = np.sqrt(dx * dx + dy * dy)
    sub_c = conf[i0:i1 + 1, j0:j1 + 1]
    closer = inside & (dist < sub_c)
    sub_c[closer] = dist[closer]
    owner[i0:i1 + 1, j0:j1 + 1][closer] = label
    return int(closer.sum())


@njit(cache=True)
def _voronoi_jit(conf, owner, origin_x, origin_y, cell, ox, oy, half, label, i0, i1, j0, j1):
    changed = 0
    for i in range(i0, i1 + 1):
        cx = origin_x + (i + 0.5) * cell
        dx = cx - ox
        if abs(dx) > half:
            continue
        for j in range(j0, j1 + 1):
            cy = origin_y + (j + 0.5) * cell
            dy = cy - oy
            if abs(dy) > half:
                continue
            d = math.sqrt(dx * dx + dy * dy)
            if d < conf[i, j]:
                conf[i, j] = d
                owner[i, j] = label
                changed += 1
    return changed


def voronoi_update_numba(conf, owner, origin_x, origin_y, cell, ox, oy, half, label):
    i0, i1 = _cell_range(origin_x, cell, ox, half, conf.shape[0])
    j0, j1 = _cell_range(origin_y, cell, oy, half, conf.shape[1])
    if i1 < i0 or j1 < j0:
        return 0
    return int(_voronoi_jit(conf, owner, float(origin_x), float(origin_y), float(cell),
                            float(ox), float(oy), float(half), int(label), i0, i1, j0, j1))


if USE_NUMBA:
    sbp_costs = sbp_costs_numba
    sbp_argmin = sbp_argmin_numba
    centered_mean = centered_mean_numba
    trailing_sum = trailing_sum_numba
    voronoi_update = voronoi_update_numba
else:
    sbp_costs = sbp_costs_numpy
    sbp_argmin = sbp_argmin_numpy
    centered_mean = centered_mean_numpy
    trailing_sum = trailing_sum_numpy
    voronoi_update = voronoi_update_numpy
