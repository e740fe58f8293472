"""Online pose estimation: IMU stream in, poses, contacts and terrain out.

Per frame the model prediction is stabilized in this order: horizontal root
correction from persisting SBPs, vertical correction from the terrain map,
root integration, SBP-pair IK written back into the history only, and
finally EMA smoothing of the emitted pose.
"""
from dataclasses import dataclass

import numpy as np

from tipose import imu as imu_mod
from tipose import sbp
from tipose.errors import NotCalibrated
from tipose.kinematics import DT, WAIST_SENSOR, MotionSequence, Pose, default_skeleton, fk_arrays, orthonormalize6d
from tipose.model import HistoryBuffer, predict_step
from tipose.terrain import FLOOR_MARGIN, TerrainState, TerrainTracker, vertical_root_correction

EMA_Q = 0.8
EMA_ROOT = 0.9


def ema_filter(prev, value, alpha):
    """``alpha * value + (1 - alpha) * prev``; ``prev=None`` starts the filter."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    value = np.asarray(value, dtype=np.float64)
    if prev is None or alpha == 1.0:
        return value.copy()
    return alpha * value + (1.0 - alpha) * prev


@dataclass
class PoserConfig:
    ema_q: float = EMA_Q  # 1 disables smoothing
    ema_root: float = EMA_ROOT
    root_correction: bool = True
    terrain: bool = True
    soft_ik: bool = True
    w: float = None  # floor depth below the initial root; default: root height above the start ground + margin
    k: float = 0.2
    gate_frames: int = 50
    extent: float = 40.0
    grid: float = 0.1


@dataclass
class FrameOutput:
    frame: int  # sensor frame this pose belongs to
    pose: Pose
    contacts: np.ndarray  # (20,) predicted c
    vertical_proposal: float


class Poser:
    """Stateful estimator; feed frames with :meth:`push`, drain with :meth:`flush`."""

    def __init__(self, model, initial_pose=None, initial_contacts=None, skeleton=None, config=None,
                 start_ground=0.0):
        self.model = model
        self.skeleton = skeleton or default_skeleton()
        self.config = config or PoserConfig()
        self.features = imu_mod.StreamingFeatures()
        self.buffer = HistoryBuffer(model.config.max_window)
        self.initial_pose = initial_pose
        self.frame = 0
        self._ema_q = None
        self._ema_root = None
        self.pairs = sbp.PairTracker()
        if initial_pose is not None:
            self.buffer.seed(initial_pose.joint_rotations.reshape(-1), initial_contacts)
            self.root = np.asarray(initial_pose.root_position, dtype=np.float64).copy()
            root_z = float(self.root[2])
            w = self.config.w if self.config.w is not None else root_z - start_ground + FLOOR_MARGIN
            self.terrain = TerrainState.for_start(self.root, w, k=self.config.k, extent=self.config.extent,
                                                  grid=self.config.grid)
            self.tracker = TerrainTracker(self.terrain, gate_frames=self.config.gate_frames)
        self._prev_active = np.zeros(5, dtype=bool)
        self._prev_bodies = None  # (positions, rotations) of last corrected pose

    def _check(self):
        if self.initial_pose is None:
            raise NotCalibrated("an initial pose is required before streaming")

    # -- frame processing ---------------------------------------------------

    def _fk(self, root, rot, q):
        return fk_arrays(self.skeleton, root, rot, Pose(root, rot, q).local_matrices())

    def process(self, t, feat):
        """Run one frame given its features; frame 0 emits the initial pose."""
        cfg = self.config
        root_rot = feat[9 * WAIST_SENSOR:9 * WAIST_SENSOR + 9].reshape(3, 3).copy()
        if t == 0:
            q = orthonormalize6d(self.initial_pose.joint_rotations)
            pos, rot = self._fk(self.root, root_rot, q)
            self._prev_bodies = (pos, rot)
            c = self.buffer.c.copy()
            self._prev_active = sbp.split_contacts(c)[0] > sbp.ACTIVE
            return self._emit(t, q, c, 0.0, root_rot)

        q_raw, v, c = predict_step(self.model, self.buffer, feat)
        q = orthonormalize6d(q_raw.reshape(-1, 6))
        active, offsets = sbp.split_contacts(c)
        active = active > sbp.ACTIVE
        persisting = active & self._prev_active

        v = v.copy()
        if cfg.root_correction and persisting.any():
            pos, rot = self._fk(self.root + v * DT, root_rot, q)
            cur = sbp.sbp_world_positions(self.skeleton, pos, rot, offsets)[persisting]
            ppos, prot = self._prev_bodies
            anc = sbp.sbp_world_positions(self.skeleton, ppos, prot, offsets)[persisting]
            v = sbp.root_correction(v, cur, anc)

        p = 0.0
        if cfg.terrain:
            pos, rot = self._fk(self.root + v * DT, root_rot, q)
            world = sbp.sbp_world_positions(self.skeleton, pos, rot, offsets)
            feet = (pos[self.skeleton.sbp_bodies[sbp.L_FOOT], 2], pos[self.skeleton.sbp_bodies[sbp.R_FOOT], 2])
            p = self.tracker.update(active, world, feet)
            v[2] = vertical_root_correction(v[2], p, DT)

        self.root = self.root + v * DT
        pos, rot = self._fk(self.root, root_rot, q)
        self._prev_bodies = (pos, rot)
        self._prev_active = active

        q_hist = q_raw
        if cfg.soft_ik:
            world = sbp.sbp_world_positions(self.skeleton, pos, rot, offsets)
            live = self.pairs.update(persisting, world)
            if live:
                pose = Pose(self.root, root_rot, q)
                for pair in live:
                    pose = sbp.sbp_pair_ik(self.skeleton, pose, pair, offsets, self.pairs.onsets[pair],
                                           self.pairs.chains).pose
                q_hist = pose.joint_rotations.reshape(-1)
        self.buffer.commit(feat, q_hist, c)
        return self._emit(t, q, c, p, root_rot)

    def _emit(self, t, q, c, p, root_rot):
        cfg = self.config
        self._ema_q = ema_filter(self._ema_q, q, cfg.ema_q)
        self._ema_root = ema_filter(self._ema_root, self.root, cfg.ema_root)
        self.frame = t + 1
        pose = Pose(self._ema_root.copy(), root_rot, orthonormalize6d(self._ema_q))
        return FrameOutput(t, pose, np.asarray(c, dtype=np.float64).copy(), p)

    # -- streaming ------------------------------------------------------------

    def push(self, frame):
        """Consume sensor frame ``n``; returns the output for frame ``n - 5`` or None."""
        self._check()
        r = self.features.push(frame)
        return None if r is None else self.process(*r)

    def flush(self):
        self._check()
        out = [self.process(t, f) for t, f in self.features.flush()]
        if self.config.terrain:
            self.tracker.finish()
        return out


@dataclass
class RunResult:
    motion: MotionSequence
    contacts: np.ndarray  # (T, 20)
    proposals: np.ndarray  # (T,)
    terrain: TerrainState


def _collect(outputs, poser):
    poses = [o.pose for o in outputs]
    return RunResult(MotionSequence.from_poses(poses), np.stack([o.contacts for o in outputs]),
                     np.array([o.vertical_proposal for o in outputs]), getattr(poser, "terrain", None))


def run_streaming(poser, stream):
    outs = []
    for t in range(len(stream)):
        r = poser.push(stream[t])
        if r is not None:
            outs.append(r)
    outs.extend(poser.flush())
    return _collect(outs, poser)


def run_batch(poser, stream):
    """Offline replay: whole-sequence features, then the same per-frame loop."""
    poser._check()
    feats = imu_mod.imu_features(stream)
    outs = [poser.process(t, feats[t]) for t in range(len(feats))]
    if poser.config.terrain:
        poser.tracker.finish()
    return _collect(outs, poser)
