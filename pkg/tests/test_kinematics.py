import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from tipose.errors import DegenerateInput, SingularRotation
from tipose.kinematics import (
    DT, BodyState, MotionSequence, Pose, body_velocities, fk_arrays, forward_kinematics, get_skeleton,
    is_rotation, log_map, matrix_to_rot6d, motion_fk, point_velocity, project_to_rotation, rot6d_to_matrix,
    rot_x, rot_y, rot_z, rotation_angle, rotvec_to_matrix, sequence_velocities, two_bone_ik,
)

rotvecs = st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3)


def test_skeleton_shape(skeleton):
    assert skeleton.n_bodies == 19 and skeleton.n_joints == 18
    assert skeleton.check() is skeleton
    assert 1.6 < skeleton.height() < 1.8
    assert get_skeleton("tip19").body_names == skeleton.body_names
    with pytest.raises(ValueError):
        get_skeleton("smpl")


def test_rest_pose_fk_is_offset_sum(skeleton):
    pose = Pose.identity(root_position=(0.0, 0.0, 0.0))
    pos, rot = fk_arrays(skeleton, pose.root_position, pose.root_orientation, pose.local_matrices())
    for i in range(1, skeleton.n_bodies):
        expect = pos[skeleton.parents[i]] + skeleton.offsets[i]
        assert np.allclose(pos[i], expect, atol=1e-15)
    assert np.allclose(rot, np.eye(3))


@given(rotvecs)
@settings(max_examples=50, deadline=None)
def test_rot6d_roundtrip(rv):
    r = rotvec_to_matrix(np.array(rv))
    assert np.allclose(rot6d_to_matrix(matrix_to_rot6d(r)), r, atol=1e-12)


def test_rot6d_gram_schmidt_and_degenerate():
    r6 = np.array([2.0, 0, 0, 1.0, 3.0, 0])
    assert np.allclose(rot6d_to_matrix(r6), np.eye(3))
    with pytest.raises(DegenerateInput):
        rot6d_to_matrix(np.array([0, 0, 0, 0, 1.0, 0]))
    with pytest.raises(DegenerateInput):
        rot6d_to_matrix(np.array([1.0, 0, 0, 2.0, 0, 0]))


@given(rotvecs)
@settings(max_examples=50, deadline=None)
def test_rotvec_and_log_agree_with_scipy(rv):
    rv = np.array(rv)
    if np.linalg.norm(rv) > np.pi - 1e-3:
        return
    r = rotvec_to_matrix(rv)
    assert np.allclose(r, Rotation.from_rotvec(rv).as_matrix(), atol=1e-12)
    assert np.allclose(log_map(r), rv, atol=1e-9)
    assert rotation_angle(r) == pytest.approx(np.linalg.norm(rv), abs=1e-12)


def test_log_map_singular_near_pi():
    with pytest.raises(SingularRotation):
        log_map(rot_z(np.pi))


def test_rotation_angle_is_exact_for_identity_products(rng):
    r = Rotation.random(20, random_state=1).as_matrix()
    assert np.all(rotation_angle(r @ np.swapaxes(r, -1, -2)) == 0.0)


def test_project_to_rotation(rng):
    r = rotvec_to_matrix(np.array([0.3, -0.2, 1.0]))
    noisy = r + 1e-3 * rng.standard_normal((3, 3))
    p = project_to_rotation(noisy)
    assert is_rotation(p, 1e-12)
    assert rotation_angle(p.T @ r) < 2e-3
    assert is_rotation(project_to_rotation(-np.eye(3)), 1e-12)


def test_body_velocities_match_analytic(skeleton):
    w = np.array([0.0, 0.0, 1.5])
    poses = [Pose((0.3 * t * DT, 0.0, 0.96), rotvec_to_matrix(w * t * DT), Pose.identity().joint_rotations)
             for t in (-1, 0, 1)]
    states = body_velocities(skeleton, poses)
    pelvis = states[0]
    assert np.allclose(pelvis.angular_velocity, w, atol=1e-9)
    assert np.allclose(pelvis.linear_velocity, [0.3, 0, 0], atol=1e-12)
    # a body away from the axis moves with w x r on top of the root velocity
    head = states[skeleton.index("l_wrist")]
    arm = head.position - pelvis.position
    expect = np.array([0.3, 0, 0]) + np.cross(w, arm)
    assert np.allclose(head.linear_velocity, expect, rtol=1e-3)


def test_sequence_velocities_constant_spin():
    t = np.arange(10) * DT
    rots = np.stack([rot_x(2.0 * s) for s in t])[:, None]
    pos = np.zeros((10, 1, 3))
    lin, ang = sequence_velocities(pos, rots)
    assert np.allclose(ang[..., 0], 2.0, atol=1e-9) and np.allclose(lin, 0)


def test_point_velocity_zero_at_pivot():
    body = BodyState(np.zeros(3), np.eye(3), -np.cross([0, 0, 1.0], [0.1, 0, 0]), np.array([0, 0, 1.0]))
    assert np.allclose(point_velocity(body, [0.1, 0, 0]), 0, atol=1e-15)


def test_motion_sequence_slicing_and_velocity():
    n = 5
    m = MotionSequence(np.arange(n * 3, dtype=float).reshape(n, 3), np.tile(np.eye(3), (n, 1, 1)),
                       np.tile(Pose.identity().joint_rotations, (n, 1, 1)))
    assert len(m[1:4]) == 3
    assert isinstance(m[2], Pose)
    v = m.velocities()
    assert np.allclose(v[0], 0) and np.allclose(v[1:], 3 * 60)
    with pytest.raises(ValueError):
        MotionSequence(m.root_positions, m.root_orientations, m.joint_rotations, fps=30)


def _leg(skeleton):
    return tuple(skeleton.index(n) for n in ("l_hip", "l_knee", "l_ankle"))


def test_two_bone_ik_reaches_random_targets(skeleton, rng):
    chain = _leg(skeleton)
    base = Pose.identity()
    pos, _ = fk_arrays(skeleton, base.root_position, base.root_orientation, base.local_matrices())
    hip = pos[chain[0]]
    for _ in range(50):
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        target = hip + d * rng.uniform(0.1, 0.8)
        res = two_bone_ik(skeleton, base, chain, target)
        assert not res.clamped
        assert res.error < 1e-9
        changed = np.flatnonzero(np.any(res.pose.joint_rotations != base.joint_rotations, axis=1)) + 1
        assert set(changed) <= {chain[0], chain[1]}


def test_two_bone_ik_clamps_unreachable(skeleton):
    chain = _leg(skeleton)
    base = Pose.identity()
    res = two_bone_ik(skeleton, base, chain, base.root_position + np.array([0, 0.09, -3.0]))
    assert res.clamped and res.error > 1.0


def test_two_bone_ik_with_effector_offset(skeleton):
    chain = _leg(skeleton)
    pose = Pose.from_matrices((0, 0, 0.9), np.eye(3), Pose.identity().local_matrices())
    eff = np.array([0.12, 0.0, -0.08])
    ankle = forward_kinematics(skeleton, pose)[chain[2]].position
    target = ankle + np.array([0.2, 0.05, 0.15])
    res = two_bone_ik(skeleton, pose, chain, target, effector=eff)
    assert res.error < 1e-9


def test_fk_batched_matches_single(skeleton, rng):
    n = 4
    local = rotvec_to_matrix(0.3 * rng.standard_normal((n, 18, 3)))
    roots = rng.standard_normal((n, 3))
    rr = rotvec_to_matrix(rng.standard_normal((n, 3)))
    m = MotionSequence(roots, rr, matrix_to_rot6d(local))
    pos, rot = motion_fk(skeleton, m)
    for t in range(n):
        p1, r1 = fk_arrays(skeleton, roots[t], rr[t], local[t])
        assert np.allclose(pos[t], p1, atol=1e-14) and np.allclose(rot[t], r1, atol=1e-14)


def test_basic_rotations_are_rotations():
    for f in (rot_x, rot_y, rot_z):
        assert is_rotation(f(0.7), 1e-12)
