import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from tipose import imu, motions
from tipose.errors import ExcessiveMotion, TooShort
from tipose.kinematics import rotvec_to_matrix


def brute_moving_average(x, window=11):
    h = window // 2
    out = np.empty_like(x)
    for t in range(len(x)):
        lo, hi = max(0, t - h), min(len(x), t + h + 1)
        s = np.zeros(x.shape[1:])
        for u in range(lo, hi):
            s = s + x[u]
        out[t] = s / float(hi - lo)
    return out


def brute_trailing_sum(x, horizon=30):
    out = np.empty_like(x)
    for t in range(len(x)):
        s = np.zeros(x.shape[1:])
        for u in range(max(0, t - horizon + 1), t + 1):
            s = s + x[u]
        out[t] = s
    return out


def test_constant_acceleration_is_recovered(skeleton):
    m = motions.constant_acceleration(30, accel=(1.0, -0.5, 0.25))
    s = imu.synthesize_imu(skeleton, m)
    assert s.accelerations.shape == (30, 6, 3)
    assert np.allclose(s.accelerations, [1.0, -0.5, 0.25], atol=1e-8)
    assert np.allclose(s.orientations, np.eye(3))


def test_synthesis_needs_three_frames(skeleton):
    with pytest.raises(TooShort):
        imu.synthesize_imu(skeleton, motions.standing(2))


def test_moving_average_matches_brute_force(rng):
    x = rng.standard_normal((57, 18))
    assert np.array_equal(imu.moving_average_filter(x), brute_moving_average(x))
    short = rng.standard_normal((4, 18))
    assert np.array_equal(imu.moving_average_filter(short), brute_moving_average(short))


def test_trailing_sum_matches_brute_force(rng):
    x = rng.standard_normal((75, 18))
    assert np.array_equal(imu.integration_features(x), brute_trailing_sum(x))


def test_filter_rejects_even_window():
    with pytest.raises(ValueError):
        imu.moving_average_filter(np.zeros((5, 3)), window=4)


def test_feature_layout(skeleton):
    s = imu.synthesize_imu(skeleton, motions.walking(60).motion)
    f = imu.imu_features(s)
    assert f.shape == (60, imu.FEATURE_DIM) == (60, 90)
    assert np.array_equal(f[:, :54], s.orientations.reshape(60, 54))
    assert np.array_equal(f[:, 72:], brute_trailing_sum(s.accelerations.reshape(60, 18)))


def test_streaming_matches_batch_with_five_frame_delay(skeleton, rng):
    s = imu.add_noise(imu.synthesize_imu(skeleton, motions.walking(90).motion), 0.3, rng)
    batch = imu.imu_features(s)
    sf = imu.StreamingFeatures()
    got = []
    for n in range(len(s)):
        r = sf.push(s[n])
        if n < imu.LOOKAHEAD:
            assert r is None
        else:
            assert r[0] == n - 5
            got.append(r)
    got.extend(sf.flush())
    assert [t for t, _ in got] == list(range(len(s)))
    assert np.array_equal(np.stack([f for _, f in got]), batch)


def test_highfreq_noise_is_attenuated_by_filter(rng):
    clean = np.zeros((5000, 18))
    noisy = clean + imu.highfreq_noise(clean.shape, 0.5, rng)
    assert np.std(noisy) == pytest.approx(0.5, rel=0.05)
    gap = np.sqrt(np.mean((imu.moving_average_filter(noisy) - clean) ** 2))
    assert gap < 0.1


def _random_calibration(rng):
    rots = lambda: np.stack([rotvec_to_matrix(v) for v in rng.uniform(-2, 2, (6, 3))])  # noqa: E731
    return imu.CalibrationSet(rots(), rots(), rng.normal(0, 0.3, (6, 3)) + imu.GRAVITY)


def test_calibration_roundtrip_noise_free(rng, skeleton):
    calib = _random_calibration(rng)
    still_r, still_a = imu.still_readings(calib, 180)
    tpose = imu.tpose_readings(calib, None, 180)
    est = imu.calibrate(still_r, tpose, still_acc=still_a)
    assert np.abs(est.global_offsets - calib.global_offsets).max() < 1e-9
    assert np.abs(est.sensor_to_bone - calib.sensor_to_bone).max() < 1e-9
    assert np.abs(est.bias - calib.bias).max() < 1e-9
    stream = imu.synthesize_imu(skeleton, motions.walking(30).motion)
    raw_r, raw_a = imu.uncalibrate(stream, calib)
    back = imu.apply_calibration(raw_r, raw_a, est)
    assert np.allclose(back.orientations, stream.orientations, atol=1e-9)
    assert np.allclose(back.accelerations, stream.accelerations, atol=1e-7)
    frame = imu.apply_calibration(raw_r[0], raw_a[0], est)
    assert isinstance(frame, imu.ImuFrame)


def test_calibration_rejects_motion_and_short_input(rng):
    calib = _random_calibration(rng)
    still_r, _ = imu.still_readings(calib, 180)
    with pytest.raises(TooShort):
        imu.calibrate_global(still_r[:100])
    moving = still_r.copy()
    moving[90:, 2] = moving[90:, 2] @ rotvec_to_matrix(np.array([0, 0, 0.3]))
    with pytest.raises(ExcessiveMotion):
        imu.calibrate_global(moving)


def test_chordal_mean_matches_scipy_mean(rng):
    base = Rotation.from_rotvec([0.2, 0.4, -0.1])
    samples = base * Rotation.from_rotvec(rng.normal(0, 0.02, (200, 3)))
    ours = imu.chordal_mean(samples.as_matrix())
    ref = samples.mean().as_matrix()
    assert np.degrees(Rotation.from_matrix(ours.T @ ref).magnitude()) < 1e-3
