"""Reconstruction metrics: joint angles, root-relative positions, root drift, jitter."""
from dataclasses import dataclass, field, replace

import numpy as np

from tipose.errors import LengthMismatch, TooShort
from tipose.kinematics import FPS, MotionSequence, motion_fk, rot6d_to_matrix, rotation_angle

HORIZONS = (2.0, 5.0, 10.0)
WINDOW = 600


def _local_matrices(x):
    if isinstance(x, MotionSequence):
        return rot6d_to_matrix(x.joint_rotations)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] == 6:
        return rot6d_to_matrix(x)
    return x


def _same_length(a, b):
    if len(a) != len(b):
        raise LengthMismatch(f"sequences differ in length: {len(a)} vs {len(b)}")


def joint_angle_error(pred, gt):
    """Mean geodesic angle (degrees) between predicted and true local joint rotations."""
    rp, rg = _local_matrices(pred), _local_matrices(gt)
    _same_length(rp, rg)
    if rp.shape != rg.shape:
        raise LengthMismatch(f"joint arrays differ in shape: {rp.shape} vs {rg.shape}")
    return float(np.degrees(rotation_angle(rp @ np.swapaxes(rg, -1, -2))).mean())


def root_relative_position_error(pred, gt, skeleton):
    """Mean distance (cm) of the non-root bodies after translating roots together."""
    _same_length(pred, gt)
    # FK with the root pinned at the origin, so translation cannot leak in through rounding
    rel_p, _ = motion_fk(skeleton, replace(pred, root_positions=np.zeros_like(pred.root_positions)))
    rel_g, _ = motion_fk(skeleton, replace(gt, root_positions=np.zeros_like(gt.root_positions)))
    return float(100.0 * np.linalg.norm(rel_p[:, 1:] - rel_g[:, 1:], axis=-1).mean())


def window_starts(n_frames, horizon, stride=FPS, n_random=None, rng=None):
    """Start frames of evaluation windows of ``horizon`` frames (strided or seeded random)."""
    last = n_frames - 1 - horizon
    if last < 0:
        raise TooShort(f"sequence of {n_frames} frames is shorter than the {horizon}-frame horizon")
    if n_random is None:
        return np.arange(0, last + 1, stride)
    rng = np.random.default_rng(rng)
    return rng.integers(0, last + 1, size=n_random)


def root_error_windows(pred_root, gt_root, horizons=HORIZONS, fps=FPS, stride=FPS, n_random=None, rng=None):
    """Mean root position error (m) at the end of start-aligned windows, per horizon in seconds."""
    pred_root = np.asarray(pred_root.root_positions if isinstance(pred_root, MotionSequence) else pred_root)
    gt_root = np.asarray(gt_root.root_positions if isinstance(gt_root, MotionSequence) else gt_root)
    _same_length(pred_root, gt_root)
    out = {}
    for h in horizons:
        n = int(round(h * fps))
        s = window_starts(len(gt_root), n, stride, n_random, rng)
        dp = pred_root[s + n] - pred_root[s]
        dg = gt_root[s + n] - gt_root[s]
        out[h] = float(np.linalg.norm(dp - dg, axis=-1).mean())
    return out


def jitter(positions, fps=FPS):
    """Mean norm of the third finite difference, in m/s^3.

    ``positions`` is ``(T, 3)`` or ``(T, J, 3)``; the joint variant averages over joints.
    """
    p = np.asarray(positions, dtype=np.float64)
    if len(p) < 4:
        raise TooShort("jitter needs at least 4 frames")
    d3 = p[3:] - 3.0 * p[2:-1] + 3.0 * p[1:-2] - p[:-3]
    return float((np.linalg.norm(d3, axis=-1) * float(fps) ** 3).mean())


@dataclass
class EvalReport:
    joint_angle_deg: float
    position_cm: float
    root_error_m: dict
    joint_jitter: float
    root_jitter: float
    meta: dict = field(default_factory=dict)

    def rows(self):
        rows = [("joint_angle_error_deg", self.joint_angle_deg), ("root_relative_position_error_cm", self.position_cm)]
        rows += [(f"root_error_{h:g}s_m", v) for h, v in sorted(self.root_error_m.items())]
        rows += [("joint_jitter_m_s3", self.joint_jitter), ("root_jitter_m_s3", self.root_jitter)]
        return rows

    def to_text(self):
        lines = [f"{k} = {v:.9g}" for k, v in self.rows()]
        lines += [f"{k} = {v}" for k, v in sorted(self.meta.items())]
        return "\n".join(lines) + "\n"

    def to_table(self):
        return "metric\tvalue\n" + "".join(f"{k}\t{v:.17g}\n" for k, v in self.rows())


def evaluate(pred, gt, skeleton, horizons=HORIZONS, stride=FPS, n_random=None, rng=None):
    _same_length(pred, gt)
    usable = tuple(h for h in horizons if int(round(h * FPS)) < len(gt))
    pp, _ = motion_fk(skeleton, pred)
    return EvalReport(
        joint_angle_error(pred, gt),
        root_relative_position_error(pred, gt, skeleton),
        root_error_windows(pred, gt, usable, stride=stride, n_random=n_random, rng=rng),
        jitter(pp[:, 1:]),
        jitter(pred.root_positions),
        {"frames": len(gt), "window_mode": "strided" if n_random is None else "random",
         "horizons_s": ",".join(f"{h:g}" for h in usable)},
    )
