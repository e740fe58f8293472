"""Virtual IMU synthesis, acceleration preprocessing and two-step frame calibration."""
from collections import deque
from dataclasses import dataclass

import numpy as np

from tipose import kernels
from tipose.errors import ExcessiveMotion, TooShort
from tipose.kinematics import DT, motion_fk, project_to_rotation, rotation_angle

N_SENSORS = 6
FILTER_WINDOW = 11
INTEGRATION_HORIZON = 30
LOOKAHEAD = FILTER_WINDOW // 2
FEATURE_DIM = 54 + 36
GRAVITY = np.array([0.0, 0.0, 9.81])


@dataclass
class ImuFrame:
    orientations: np.ndarray  # (6, 3, 3) bone orientation in the global frame
    accelerations: np.ndarray  # (6, 3) gravity-free, global frame


@dataclass
class ImuStream:
    orientations: np.ndarray  # (T, 6, 3, 3)
    accelerations: np.ndarray  # (T, 6, 3)
    fps: int = 60

    def __len__(self):
        return len(self.orientations)

    def __getitem__(self, t):
        if isinstance(t, slice):
            return ImuStream(self.orientations[t], self.accelerations[t], self.fps)
        return ImuFrame(self.orientations[t], self.accelerations[t])

    @classmethod
    def from_frames(cls, frames):
        return cls(np.stack([f.orientations for f in frames]), np.stack([f.accelerations for f in frames]))


def synthesize_imu(skeleton, motion):
    """Place virtual sensors on the flagged bodies and differentiate their paths twice."""
    n = len(motion)
    if n < 3:
        raise TooShort("IMU synthesis needs at least 3 frames")
    pos, rot = motion_fk(skeleton, motion)
    bodies = list(skeleton.imu_bodies)
    ori = rot[:, bodies]
    site = pos[:, bodies] + np.einsum("tsij,sj->tsi", ori, skeleton.imu_offsets)
    acc = np.empty_like(site)
    acc[1:-1] = (site[2:] - 2.0 * site[1:-1] + site[:-2]) / DT**2
    acc[0] = acc[1]
    acc[-1] = acc[-2]
    return ImuStream(ori, acc)


def moving_average_filter(acc, window=FILTER_WINDOW):
    """Centered moving average along axis 0; windows shrink at the ends."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and positive")
    acc = np.asarray(acc, dtype=np.float64)
    return kernels.centered_mean(acc, window // 2)


def integration_features(raw_acc, horizon=INTEGRATION_HORIZON):
    """Sum of the last ``horizon`` raw readings (fewer at the start)."""
    if horizon < 1:
        raise ValueError("horizon must be positive")
    raw_acc = np.asarray(raw_acc, dtype=np.float64)
    return kernels.trailing_sum(raw_acc, horizon)


def imu_features(stream):
    """Per-frame model input: 54 orientation entries then 36 acceleration channels."""
    n = len(stream)
    acc = stream.accelerations.reshape(n, 18)
    feats = np.empty((n, FEATURE_DIM))
    feats[:, :54] = stream.orientations.reshape(n, 54)
    feats[:, 54:72] = moving_average_filter(acc)
    feats[:, 72:] = integration_features(acc)
    return feats


def _ordered_sum(rows, lo, hi):
    s = np.zeros(rows.shape[1])
    for u in range(lo, hi):
        s = s + rows[u]
    return s


class StreamingFeatures:
    """Online twin of :func:`imu_features`.

    ``push`` takes sensor frame ``n`` and returns the features of frame ``n - 5``
    (``None`` while the look-ahead fills); ``flush`` drains the tail.
    Output is bitwise identical to the batch computation.
    """

    def __init__(self, window=FILTER_WINDOW, horizon=INTEGRATION_HORIZON):
        self.half = window // 2
        self.horizon = horizon
        keep = horizon + self.half + 1
        self._acc = deque(maxlen=keep)
        self._ori = deque(maxlen=self.half + 1)
        self.received = 0
        self.emitted = 0

    def _emit(self, end):
        t = self.emitted
        first = self.received - len(self._acc)
        rows = np.array(self._acc)
        lo = max(0, t - self.half)
        hi = min(end, t + self.half + 1)
        feat = np.empty(FEATURE_DIM)
        feat[:54] = self._ori[t - (self.received - len(self._ori))].reshape(54)
        feat[54:72] = _ordered_sum(rows, lo - first, hi - first) / float(hi - lo)
        feat[72:] = _ordered_sum(rows, max(0, t - self.horizon + 1) - first, t + 1 - first)
        self.emitted += 1
        return t, feat

    def push(self, frame):
        self._acc.append(np.asarray(frame.accelerations, dtype=np.float64).reshape(18))
        self._ori.append(np.asarray(frame.orientations, dtype=np.float64))
        self.received += 1
        if self.received - self.emitted > self.half:
            return self._emit(self.received)
        return None

    def flush(self):
        out = []
        while self.emitted < self.received:
            out.append(self._emit(self.received))
        return out


def highfreq_noise(shape, sigma, rng):
    """First-differenced white noise scaled to standard deviation ``sigma``."""
    w = rng.standard_normal((shape[0] + 1,) + tuple(shape[1:]))
    return sigma * np.diff(w, axis=0) / np.sqrt(2.0)


def add_noise(stream, sigma, rng=None, kind="highfreq"):
    if sigma <= 0:
        return ImuStream(stream.orientations.copy(), stream.accelerations.copy())
    rng = np.random.default_rng(rng)
    if kind == "highfreq":
        noise = highfreq_noise(stream.accelerations.shape, sigma, rng)
    elif kind == "white":
        noise = sigma * rng.standard_normal(stream.accelerations.shape)
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    return ImuStream(stream.orientations.copy(), stream.accelerations + noise)


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------


@dataclass
class CalibrationSet:
    global_offsets: np.ndarray  # (6, 3, 3) sensor base frame -> user global frame
    sensor_to_bone: np.ndarray  # (6, 3, 3)
    bias: np.ndarray  # (6, 3) constant acceleration bias in the global frame

    @classmethod
    def identity(cls, bias=GRAVITY):
        return cls(np.tile(np.eye(3), (N_SENSORS, 1, 1)), np.tile(np.eye(3), (N_SENSORS, 1, 1)),
                   np.tile(np.asarray(bias, dtype=np.float64), (N_SENSORS, 1)))


def chordal_mean(rots, max_spread_deg=None):
    """Rotation nearest the arithmetic mean of ``rots`` (N, 3, 3)."""
    rots = np.asarray(rots, dtype=np.float64)
    mean = project_to_rotation(rots.mean(axis=0))
    if max_spread_deg is not None:
        spread = np.degrees(rotation_angle(np.swapaxes(rots, -1, -2) @ mean)).max()
        if spread >= max_spread_deg:
            raise ExcessiveMotion(f"sensor moved {spread:.2f} deg during a still phase")
    return mean


def _min_frames(raw, n=180):
    if raw.shape[0] < n:
        raise TooShort(f"calibration needs at least {n} frames, got {raw.shape[0]}")


def calibrate_global(raw_orientations, raw_accelerations=None, max_spread_deg=5.0, min_frames=180):
    """Step one: sensors lie still, aligned with the user's global frame.

    Returns the per-sensor global offsets and, when accelerations are given, the
    constant bias (mean still-phase acceleration rotated into the global frame).
    """
    raw_orientations = np.asarray(raw_orientations, dtype=np.float64)
    _min_frames(raw_orientations, min_frames)
    n_s = raw_orientations.shape[1]
    offsets = np.stack([chordal_mean(raw_orientations[:, s], max_spread_deg).T for s in range(n_s)])
    if raw_accelerations is None:
        return offsets, np.tile(GRAVITY, (n_s, 1))
    world = np.einsum("sij,tsjk,tsk->tsi", offsets, raw_orientations, np.asarray(raw_accelerations))
    return offsets, world.mean(axis=0)


def calibrate_sensor_to_bone(raw_tpose, global_offsets, tpose_bones=None, max_spread_deg=5.0, min_frames=180):
    """Step two: T-pose readings give the fixed sensor-to-bone rotation."""
    raw_tpose = np.asarray(raw_tpose, dtype=np.float64)
    _min_frames(raw_tpose, min_frames)
    n_s = raw_tpose.shape[1]
    if tpose_bones is None:
        tpose_bones = np.tile(np.eye(3), (n_s, 1, 1))
    out = []
    for s in range(n_s):
        reading = chordal_mean(raw_tpose[:, s], max_spread_deg)
        out.append(reading.T @ global_offsets[s].T @ tpose_bones[s])
    return np.stack(out)


def calibrate(raw_still, raw_tpose, tpose_bones=None, still_acc=None, **kw):
    offsets, bias = calibrate_global(raw_still, still_acc, **kw)
    return CalibrationSet(offsets, calibrate_sensor_to_bone(raw_tpose, offsets, tpose_bones, **kw), bias)


def apply_calibration(raw_orientations, raw_accelerations, calib):
    """Map raw sensor readings (one frame or a stream) to bone-frame IMU input."""
    raw_orientations = np.asarray(raw_orientations, dtype=np.float64)
    raw_accelerations = np.asarray(raw_accelerations, dtype=np.float64)
    ori = calib.global_offsets @ raw_orientations @ calib.sensor_to_bone
    acc = np.einsum("...sij,...sj->...si", calib.global_offsets @ raw_orientations, raw_accelerations) - calib.bias
    if ori.ndim == 3:
        return ImuFrame(ori, acc)
    return ImuStream(ori, acc)


def uncalibrate(stream, calib):
    """Raw sensor readings that ``apply_calibration`` maps back onto ``stream``."""
    g_inv = np.swapaxes(calib.global_offsets, -1, -2)
    raw_ori = g_inv @ stream.orientations @ np.swapaxes(calib.sensor_to_bone, -1, -2)
    world = stream.accelerations + calib.bias
    raw_acc = np.einsum("...sji,...sj->...si", calib.global_offsets @ raw_ori, world)
    return raw_ori, raw_acc


def still_readings(calib, n_frames=180):
    """Raw readings of sensors lying still and aligned with the global frame."""
    g_inv = np.swapaxes(calib.global_offsets, -1, -2)
    ori = np.broadcast_to(g_inv, (n_frames,) + g_inv.shape).copy()
    acc = np.broadcast_to(calib.bias, (n_frames,) + calib.bias.shape).copy()
    return ori, acc


def tpose_readings(calib, tpose_bones=None, n_frames=180):
    if tpose_bones is None:
        tpose_bones = np.tile(np.eye(3), (N_SENSORS, 1, 1))
    g_inv = np.swapaxes(calib.global_offsets, -1, -2)
    r = g_inv @ tpose_bones @ np.swapaxes(calib.sensor_to_bone, -1, -2)
    return np.broadcast_to(r, (n_frames,) + r.shape).copy()
