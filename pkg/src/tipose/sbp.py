"""Stationary body points: ground-truth discovery and run-time corrections."""
from dataclasses import dataclass, field

import numpy as np

from tipose import kernels
from tipose.errors import TooShort
from tipose.kinematics import (
    DT, L_FOOT, L_HAND, PELVIS, R_FOOT, R_HAND, BodyState, fk_arrays, motion_fk, sequence_velocities,
    two_bone_ik,
)

THRESHOLD = 0.25
REG_WEIGHT = 0.3
ACTIVE = 0.5
N_SBP = 5


@dataclass
class SbpFrame:
    """Five (active, offset) entries; flattened as ``[b, rx, ry, rz] * 5``."""

    active: np.ndarray  # (5,) bits or probabilities
    offsets: np.ndarray  # (5, 3) body-frame offsets

    def to_vector(self):
        return np.concatenate([self.active[:, None], self.offsets], axis=1).reshape(20)

    @classmethod
    def from_vector(cls, c):
        c = np.asarray(c, dtype=np.float64).reshape(5, 4)
        return cls(c[:, 0].copy(), c[:, 1:].copy())

    @classmethod
    def empty(cls):
        return cls(np.zeros(5), np.zeros((5, 3)))


def contact_vectors(active, offsets):
    """Stack ``(T, 5)`` flags and ``(T, 5, 3)`` offsets into ``(T, 20)`` vectors."""
    active = np.asarray(active, dtype=np.float64)
    return np.concatenate([active[..., None], offsets], axis=-1).reshape(active.shape[:-1] + (20,))


def split_contacts(c):
    c = np.asarray(c).reshape(np.shape(c)[:-1] + (5, 4))
    return c[..., 0], c[..., 1:]


@dataclass
class Discovery:
    active: bool
    offset: np.ndarray
    cost: float


def discover_sbp(body, grid, prev_r=None, weight=REG_WEIGHT, threshold=THRESHOLD):
    """Grid point of minimal velocity (plus temporal regularizer) on one body.

    ``grid`` is an ``(N, 3)`` array of body-frame sample points.
    """
    i, cost = kernels.sbp_argmin(
        grid, np.ascontiguousarray(body.rotation, dtype=np.float64),
        np.ascontiguousarray(body.angular_velocity, dtype=np.float64),
        np.ascontiguousarray(body.linear_velocity, dtype=np.float64),
        None if prev_r is None else np.asarray(prev_r, dtype=np.float64), weight)
    if cost < threshold:
        return Discovery(True, grid[i].copy(), cost)
    return Discovery(False, np.zeros(3), cost)


def label_motion(skeleton, motion, weight=REG_WEIGHT, threshold=THRESHOLD, dt=DT):
    """Per-frame SBP labels ``(active (T, 5), offsets (T, 5, 3))`` for a motion."""
    n = len(motion)
    if n < 3:
        raise TooShort("labeling needs at least 3 frames")
    pos, rot = motion_fk(skeleton, motion)
    lin, ang = sequence_velocities(pos, rot, dt)
    active = np.zeros((n, N_SBP), dtype=bool)
    offsets = np.zeros((n, N_SBP, 3))
    for k, body in enumerate(skeleton.sbp_bodies):
        grid = skeleton.sbp_grid(k)
        prev = None
        for t in range(n):
            state = BodyState(pos[t, body], rot[t, body], lin[t, body], ang[t, body])
            d = discover_sbp(state, grid, prev, weight, threshold)
            active[t, k] = d.active
            offsets[t, k] = d.offset
            prev = d.offset if d.active else None
    return active, offsets


def sbp_world_positions(skeleton, body_pos, body_rot, offsets):
    """World positions of the five SBP offsets on posed bodies."""
    idx = list(skeleton.sbp_bodies)
    return body_pos[..., idx, :] + np.einsum("...kij,...kj->...ki", body_rot[..., idx, :, :], offsets)


def root_correction(v_pred, current, anchors, dt=DT):
    """Horizontal root velocity that keeps anchored SBPs still.

    ``current`` holds the SBP world positions obtained by integrating ``v_pred``;
    ``anchors`` the positions of the same body points one frame earlier.  Only
    x and y are corrected; with no anchors ``v_pred`` is returned unchanged.
    """
    v_pred = np.asarray(v_pred, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64).reshape(-1, 3)
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 3)
    if len(current) == 0:
        return v_pred.copy()
    implied = v_pred - (current - anchors) / dt
    out = v_pred.copy()
    out[:2] = implied[:, :2].mean(axis=0)
    return out


# pair -> (chain bodies by name, SBP whose body is the chain end)
DEFAULT_CHAINS = {
    (L_FOOT, PELVIS): (("l_hip", "l_knee", "l_ankle"), L_FOOT),
    (R_FOOT, PELVIS): (("r_hip", "r_knee", "r_ankle"), R_FOOT),
    (L_FOOT, L_HAND): (("l_shoulder", "l_elbow", "l_wrist"), L_HAND),
    (R_FOOT, L_HAND): (("l_shoulder", "l_elbow", "l_wrist"), L_HAND),
    (L_HAND, PELVIS): (("l_shoulder", "l_elbow", "l_wrist"), L_HAND),
    (L_FOOT, R_HAND): (("r_shoulder", "r_elbow", "r_wrist"), R_HAND),
    (R_FOOT, R_HAND): (("r_shoulder", "r_elbow", "r_wrist"), R_HAND),
    (R_HAND, PELVIS): (("r_shoulder", "r_elbow", "r_wrist"), R_HAND),
}


@dataclass
class PairIkResult:
    pose: object
    clamped: bool
    error: float


def sbp_pair_ik(skeleton, pose, pair, offsets, onset_vector, chains=None):
    """Restore the world vector between two SBPs to its value at pair onset.

    ``onset_vector`` is ``p[pair[1]] - p[pair[0]]`` recorded when the pair became
    active; ``offsets`` are the current (5, 3) SBP offsets.  Only the chain mapped
    to ``pair`` is modified.
    """
    chains = DEFAULT_CHAINS if chains is None else chains
    key = tuple(sorted(pair))
    names, moving = chains[key]
    chain = tuple(skeleton.index(n) for n in names)
    fixed = key[0] if moving == key[1] else key[1]
    pos, rot = fk_arrays(skeleton, pose.root_position, pose.root_orientation, pose.local_matrices())
    world = sbp_world_positions(skeleton, pos, rot, offsets)
    sign = 1.0 if (fixed, moving) == tuple(pair) else -1.0
    target = world[fixed] + sign * np.asarray(onset_vector, dtype=np.float64)
    res = two_bone_ik(skeleton, pose, chain, target, effector=offsets[moving])
    return PairIkResult(res.pose, res.clamped, res.error)


@dataclass
class PairTracker:
    """Remembers onset vectors of SBP pairs while both stay active."""

    chains: dict = field(default_factory=lambda: dict(DEFAULT_CHAINS))
    onsets: dict = field(default_factory=dict)

    def update(self, persisting, world):
        """Drop pairs that broke, start new ones; return pairs to enforce this frame."""
        on = set(np.flatnonzero(persisting).tolist())
        live = []
        for key in list(self.onsets):
            if not (key[0] in on and key[1] in on):
                del self.onsets[key]
        used_chains = set()
        for key in sorted(self.chains):
            if key[0] in on and key[1] in on:
                chain = self.chains[key][0]
                if key not in self.onsets:
                    self.onsets[key] = world[key[1]] - world[key[0]]
                    continue
                if chain in used_chains:
                    continue
                used_chains.add(chain)
                live.append(key)
        return live
