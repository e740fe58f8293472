import math

import numpy as np
import pytest

from tipose import motions, sbp
from tipose.kinematics import (
    DT, L_FOOT, PELVIS, BodyState, Pose, fk_arrays, matrix_to_rot6d, rot_x, rotvec_to_matrix,
)


def scalar_costs(grid, rot, omega, vel, prev=None, weight=0.3):
    out = []
    for x, y, z in grid:
        wx = rot[0, 0] * x + rot[0, 1] * y + rot[0, 2] * z
        wy = rot[1, 0] * x + rot[1, 1] * y + rot[1, 2] * z
        wz = rot[2, 0] * x + rot[2, 1] * y + rot[2, 2] * z
        ux = (omega[1] * wz - omega[2] * wy) + vel[0]
        uy = (omega[2] * wx - omega[0] * wz) + vel[1]
        uz = (omega[0] * wy - omega[1] * wx) + vel[2]
        c = math.sqrt(ux * ux + uy * uy + uz * uz)
        if prev is not None:
            dx, dy, dz = x - prev[0], y - prev[1], z - prev[2]
            c = c + weight * math.sqrt(dx * dx + dy * dy + dz * dz)
        out.append(c)
    return np.array(out)


def test_stationary_body_picks_first_grid_point_or_prev(skeleton):
    grid = skeleton.sbp_grid(L_FOOT)
    body = BodyState(np.zeros(3), np.eye(3), np.zeros(3), np.zeros(3))
    d = sbp.discover_sbp(body, grid)
    assert d.active and np.array_equal(d.offset, grid[0])
    d = sbp.discover_sbp(body, grid, prev_r=grid[37])
    assert np.array_equal(d.offset, grid[37])


def test_pivot_about_grid_point_is_found_exactly(skeleton, rng):
    grid = skeleton.sbp_grid(L_FOOT)
    rot = rotvec_to_matrix(np.array([0.1, -0.2, 0.3]))
    omega = np.array([0.0, 0.0, 1.0])
    p = grid[1234]
    body = BodyState(np.zeros(3), rot, -np.cross(omega, rot @ p), omega)
    d = sbp.discover_sbp(body, grid)
    assert d.active and np.array_equal(d.offset, p)


def test_pure_translation_is_not_stationary(skeleton):
    body = BodyState(np.zeros(3), np.eye(3), np.array([1.0, 0, 0]), np.zeros(3))
    d = sbp.discover_sbp(body, skeleton.sbp_grid(PELVIS))
    assert not d.active and d.cost == pytest.approx(1.0) and np.array_equal(d.offset, np.zeros(3))


def test_batched_costs_equal_scalar_loop(skeleton, rng):
    from tipose import kernels
    grid = skeleton.sbp_grid(PELVIS)
    for _ in range(5):
        rot = rotvec_to_matrix(rng.normal(size=3))
        om, v, prev = rng.normal(size=3), rng.normal(size=3), grid[rng.integers(len(grid))]
        for pr in (None, prev):
            ref = scalar_costs(grid, rot, om, v, pr)
            assert np.array_equal(kernels.sbp_costs(grid, rot, om, v, pr, 0.3), ref)
            i, c = kernels.sbp_argmin(grid, rot, om, v, pr, 0.3)
            assert i == int(np.argmin(ref)) and c == ref.min()


def test_label_standing_all_active_constant(skeleton):
    act, off = sbp.label_motion(skeleton, motions.standing(20))
    assert act.all()
    assert np.all(off == off[0])


def test_label_jump_flight_is_inactive(skeleton):
    act, _ = sbp.label_motion(skeleton, motions.jump())
    assert not act[42:78].any()
    assert act[:38].all()


def test_label_walk_alternates_with_double_support(skeleton):
    sm = motions.walking(300)
    act, _ = sbp.label_motion(skeleton, sm.motion)
    feet = act[:, :2]
    assert feet.any(axis=1).all()
    assert (feet[:, 0] & ~feet[:, 1]).any() and (feet[:, 1] & ~feet[:, 0]).any()
    assert (feet[:, 0] & feet[:, 1]).any()
    assert not act[:, 4].any()


def test_regularizer_smooths_offsets(skeleton):
    sm = motions.walking(300)
    steps = {}
    for w in (0.3, 0.0):
        act, off = sbp.label_motion(skeleton, sm.motion, weight=w)
        both = act[1:, 0] & act[:-1, 0]
        steps[w] = np.linalg.norm(off[1:, 0] - off[:-1, 0], axis=1)[both].mean()
    assert steps[0.3] < steps[0.0]


def test_too_short_label():
    from tipose.errors import TooShort
    from tipose.kinematics import default_skeleton
    with pytest.raises(TooShort):
        sbp.label_motion(default_skeleton(), motions.standing(2))


def test_root_correction_examples():
    v = np.array([0.3, -0.1, 0.05])
    assert np.array_equal(sbp.root_correction(v, np.zeros((0, 3)), np.zeros((0, 3))), v)
    cur = np.array([[0.02, 0.0, 0.0]])
    out = sbp.root_correction(v, cur, np.zeros((1, 3)))
    assert out[0] == pytest.approx(0.3 - 0.02 / DT) and out[2] == v[2]
    # replaying the frame with the corrected velocity leaves the point still
    moved = cur[0] + (out - v) * DT
    assert np.abs(moved[:2]).max() < 1e-9
    sym = sbp.root_correction(np.zeros(3), np.array([[0.01, 0, 0], [-0.01, 0, 0]]), np.zeros((2, 3)))
    assert sym[0] == 0.0


def test_contact_vector_layout():
    act = np.array([1, 0, 1, 0, 1.0])
    off = np.arange(15, dtype=float).reshape(5, 3)
    c = sbp.contact_vectors(act, off)
    assert c.shape == (20,) and np.array_equal(c[::4], act) and np.array_equal(c[1:4], off[0])
    a2, o2 = sbp.split_contacts(c)
    assert np.array_equal(a2, act) and np.array_equal(o2, off)
    f = sbp.SbpFrame.from_vector(c)
    assert np.array_equal(f.to_vector(), c)


def _seated(skeleton):
    pose = motions.seated_pose()
    offsets = np.zeros((5, 3))
    offsets[L_FOOT] = [0.05, 0.0, -0.08]
    offsets[PELVIS] = [-0.1, 0.0, -0.14]
    return pose, offsets


def _pair_vector(skeleton, pose, offsets, pair):
    pos, rot = fk_arrays(skeleton, pose.root_position, pose.root_orientation, pose.local_matrices())
    w = sbp.sbp_world_positions(skeleton, pos, rot, offsets)
    return w[pair[1]] - w[pair[0]]


def test_pair_ik_noop_when_vector_matches(skeleton):
    pose, offsets = _seated(skeleton)
    pair = (L_FOOT, PELVIS)
    d0 = _pair_vector(skeleton, pose, offsets, pair)
    res = sbp.sbp_pair_ik(skeleton, pose, pair, offsets, d0)
    assert np.allclose(res.pose.joint_rotations, pose.joint_rotations, atol=1e-9)


def test_pair_ik_restores_seated_leg(skeleton):
    pose, offsets = _seated(skeleton)
    pair = (L_FOOT, PELVIS)
    d0 = _pair_vector(skeleton, pose, offsets, pair)
    knee = skeleton.index("l_knee")
    local = pose.local_matrices()
    local[knee - 1] = local[knee - 1] @ rot_x(0.025)  # about 1 cm at the foot
    drifted = Pose(pose.root_position, pose.root_orientation, matrix_to_rot6d(local))
    assert np.linalg.norm(_pair_vector(skeleton, drifted, offsets, pair) - d0) > 0.005
    res = sbp.sbp_pair_ik(skeleton, drifted, pair, offsets, d0)
    assert np.linalg.norm(_pair_vector(skeleton, res.pose, offsets, pair) - d0) < 1e-6
    changed = set(np.flatnonzero(np.any(res.pose.joint_rotations != drifted.joint_rotations, axis=1)) + 1)
    assert changed <= {skeleton.index("l_hip"), knee}


def test_pair_tracker_lifecycle():
    tr = sbp.PairTracker()
    world = np.arange(15, dtype=float).reshape(5, 3)
    on = np.array([1, 0, 0, 0, 1], dtype=bool)
    assert tr.update(on, world) == []
    assert (L_FOOT, PELVIS) in tr.onsets
    assert tr.update(on, world) == [(L_FOOT, PELVIS)]
    assert tr.update(np.array([1, 0, 0, 0, 0], dtype=bool), world) == []
    assert tr.onsets == {}
