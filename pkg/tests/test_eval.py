import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from tipose import motions
from tipose.errors import LengthMismatch, TooShort
from tipose.evaluation import (EvalReport, evaluate, jitter, joint_angle_error, root_error_windows,
                               root_relative_position_error, window_starts)
from tipose.kinematics import MotionSequence, matrix_to_rot6d, rot_x, rotvec_to_matrix


@pytest.fixture(scope="module")
def walk():
    return motions.walking(720).motion


def test_self_comparison_is_exactly_zero(walk, skeleton):
    rep = evaluate(walk, walk, skeleton)
    assert rep.joint_angle_deg == 0.0 and rep.position_cm == 0.0
    assert all(v == 0.0 for v in rep.root_error_m.values())
    assert set(rep.root_error_m) == {2.0, 5.0, 10.0}


def test_single_joint_ten_degrees(rng):
    gt = rotvec_to_matrix(rng.normal(size=(4, 18, 3)))
    pred = gt.copy()
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    pred[:, 7] = rotvec_to_matrix(np.radians(10) * axis) @ gt[:, 7]
    assert joint_angle_error(pred, gt) == pytest.approx(10 / 18, abs=1e-12)


def test_joint_angle_matches_quaternion_oracle(rng):
    a = Rotation.random(500, random_state=1)
    b = Rotation.random(500, random_state=2)
    qa, qb = a.as_quat(), b.as_quat()
    oracle = np.degrees(2 * np.arccos(np.clip(np.abs(np.sum(qa * qb, axis=1)), 0, 1))).mean()
    got = joint_angle_error(matrix_to_rot6d(a.as_matrix()).reshape(50, 10, 6),
                            matrix_to_rot6d(b.as_matrix()).reshape(50, 10, 6))
    assert abs(got - oracle) < 1e-9


def test_root_translation_is_aligned(walk, skeleton):
    moved = MotionSequence(walk.root_positions + 1.0, walk.root_orientations, walk.joint_rotations)
    assert root_relative_position_error(moved, walk, skeleton) == 0.0


def test_single_body_displaced_five_cm(skeleton):
    gt = motions.standing(3)
    q = gt.joint_rotations.copy()
    # the neck joint (index 2) carries the head 0.1 m out; a chord of 5 cm
    theta = 2 * np.arcsin(0.05 / (2 * 0.1))
    q[:, 2] = matrix_to_rot6d(rot_x(theta) @ np.eye(3))
    pred = MotionSequence(gt.root_positions, gt.root_orientations, q)
    assert root_relative_position_error(pred, gt, skeleton) == pytest.approx(5 / 18, abs=1e-12)


def test_constant_drift_horizons(walk):
    n = len(walk)
    pred = walk.root_positions.copy()
    pred[:, 0] += 0.01 * np.arange(n) / 60
    err = root_error_windows(pred, walk.root_positions)
    for h, e in {2.0: 0.02, 5.0: 0.05, 10.0: 0.10}.items():
        assert err[h] == pytest.approx(e, abs=1e-12)


def test_initial_offset_is_aligned_away(walk):
    err = root_error_windows(walk.root_positions + [0.3, -2.0, 0.1], walk.root_positions)
    assert all(v < 1e-12 for v in err.values())


def test_window_sampler():
    assert list(window_starts(300, 120)) == [0, 60, 120]
    a = window_starts(1000, 120, n_random=20, rng=4)
    assert np.array_equal(a, window_starts(1000, 120, n_random=20, rng=4))
    assert a.max() <= 1000 - 1 - 120
    with pytest.raises(TooShort):
        window_starts(100, 120)


def test_jitter_cubic_and_low_degree():
    t = np.arange(50.0)
    p = np.zeros((50, 3))
    p[:, 0] = t**3
    assert jitter(p, fps=1) == 6.0
    for poly in (np.ones_like(t), 2 * t - 1, 3 * t**2 - t + 2):
        p[:, 0] = poly
        assert jitter(p, fps=1) == 0.0
    s = t / 60.0
    p[:, 0] = s**3
    assert jitter(p) == pytest.approx(6.0, rel=1e-9)
    with pytest.raises(TooShort):
        jitter(np.zeros((3, 3)))


def test_metrics_invariant_to_shared_rigid_transform(walk, skeleton, rng):
    pred = motions.walking(720, speed=1.0).motion
    R = rotvec_to_matrix(np.array([0.0, 0.0, 0.7]))
    shift = np.array([1.0, -2.0, 0.3])

    def move(m):
        return MotionSequence(m.root_positions @ R.T + shift, R @ m.root_orientations, m.joint_rotations)

    a = evaluate(pred, walk, skeleton)
    b = evaluate(move(pred), move(walk), skeleton)
    assert b.joint_angle_deg == a.joint_angle_deg
    assert b.position_cm == pytest.approx(a.position_cm, abs=1e-9)
    for h in a.root_error_m:
        assert b.root_error_m[h] == pytest.approx(a.root_error_m[h], abs=1e-9)
    assert b.joint_jitter == pytest.approx(a.joint_jitter, rel=1e-6)


def test_length_mismatch(walk, skeleton):
    with pytest.raises(LengthMismatch):
        evaluate(walk[:100], walk[:101], skeleton)


def test_report_formats(walk, skeleton):
    rep = evaluate(walk[:200], walk[:200], skeleton)
    assert set(rep.root_error_m) == {2.0}
    text = rep.to_text()
    assert "joint_angle_error_deg = 0" in text and "window_mode = strided" in text
    assert rep.to_table().startswith("metric\tvalue\n")
    assert isinstance(rep, EvalReport)
