"""Scripted synthetic motions with analytically known contacts.

Feet are modelled as rocker soles: during stance the sole arc rolls without
slipping, so the instantaneous contact point is exactly stationary and moves
from heel to toe across the foot.
"""
from dataclasses import dataclass

import numpy as np

from tipose.kinematics import (
    DT, FPS, L_FOOT, N_JOINTS, R_FOOT, ROOT_HEIGHT, SOLE_DEPTH, MotionSequence, Pose,
    default_skeleton, fk_arrays, matrix_to_rot6d, rot_x, rot_y, rot_z, two_bone_ik,
)

ROCKER_RADIUS = 0.30
ROCKER_CENTER = np.array([0.08, 0.0, -SOLE_DEPTH + ROCKER_RADIUS])
ROLL_ANGLE = 0.4


def min_jerk(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def rocker_contact(theta):
    """Contact point on the sole in foot coordinates for pitch ``theta``."""
    theta = np.asarray(theta, dtype=np.float64)
    return ROCKER_CENTER + ROCKER_RADIUS * np.stack(
        [np.sin(theta), np.zeros_like(theta), -np.cos(theta)], axis=-1)


@dataclass
class ScriptedMotion:
    motion: MotionSequence
    contact_active: np.ndarray  # (T, 5) exact contact flags
    contact_offsets: np.ndarray  # (T, 5, 3) exact body-frame contact points
    stance: np.ndarray  # (T, 2) per-foot stance flags
    ground_heights: np.ndarray = None  # (T, 2) ground height under each foot during stance


def _leg_chain(sk, side):
    names = ("l_hip", "l_knee", "l_ankle") if side == 0 else ("r_hip", "r_knee", "r_ankle")
    return tuple(sk.index(n) for n in names)


def _foot_schedule(t, start, stance_len, swing_len, n_steps, stride, x0, heights, y, lift):
    """Pose of one foot at time ``t``: origin, pitch, stance flag, contact offset."""
    cycle = stance_len + swing_len
    k = int(np.floor((t - start) / cycle))
    k = min(max(k, -1), n_steps - 1)
    local = t - start - k * cycle

    def stance_pose(k, theta):
        g0 = x0 + k * stride
        h = heights[max(min(k, n_steps - 1), 0)]
        g = np.array([g0 + ROCKER_RADIUS * (theta + ROLL_ANGLE), y, h])
        rc = rocker_contact(theta)
        return g - rot_y(theta) @ rc, rc, h

    if local < stance_len or k == n_steps - 1:
        s = min(local / stance_len, 1.0)
        theta = -ROLL_ANGLE + 2.0 * ROLL_ANGLE * float(min_jerk(s))
        o, rc, h = stance_pose(k, theta)
        return o, theta, True, rc, h
    s = (local - stance_len) / swing_len
    o0, _, h0 = stance_pose(k, ROLL_ANGLE)
    o1, _, h1 = stance_pose(k + 1, -ROLL_ANGLE)
    m = float(min_jerk(s))
    o = o0 + m * (o1 - o0)
    o[2] += (lift + max(h1 - h0, 0.0)) * np.sin(np.pi * s)
    theta = ROLL_ANGLE - 2.0 * ROLL_ANGLE * m
    return o, theta, False, np.zeros(3), np.nan


def walking(n_frames=600, speed=0.9, cycle=1.1, duty=0.6, heights=None, lift=0.06,
            root_height=0.87, arm_swing=0.3, seed=None):
    """Straight-line walk along +x; ``heights`` gives ground height per footstep index.

    Footstep ``k`` of the left foot and ``k`` of the right foot share a height entry
    pair ``heights[2k]`` / ``heights[2k+1]`` when given.
    """
    sk = default_skeleton()
    stride = speed * cycle
    stance_len = duty * cycle
    swing_len = cycle - stance_len
    duration = n_frames * DT
    n_steps = int(np.ceil(duration / cycle)) + 2
    if heights is None:
        hl = hr = np.zeros(n_steps)
    else:
        heights = np.asarray(heights, dtype=np.float64)
        need = 2 * n_steps
        if len(heights) < need:
            heights = np.concatenate([heights, np.full(need - len(heights), heights[-1])])
        hl, hr = heights[0::2], heights[1::2]
    starts = (0.0, cycle / 2.0)
    x0s = (0.0, stride / 2.0)
    ys = (0.09, -0.09)
    hs = (hl, hr)

    # support height follows the stance feet; smooth it over stance midpoints
    mids, mid_h = [], []
    for side in (0, 1):
        for k in range(n_steps):
            mids.append(starts[side] + k * cycle + stance_len / 2.0)
            mid_h.append(hs[side][k])
    order = np.argsort(mids)
    mids = np.asarray(mids)[order]
    mid_h = np.asarray(mid_h)[order]

    base = Pose.identity()
    local0 = base.local_matrices()
    l_sh, r_sh = sk.index("l_shoulder"), sk.index("r_shoulder")
    spine = sk.index("spine1")
    # put the hip over the ankle at left mid-stance
    mid_origin, *_ = _foot_schedule(stance_len / 2.0, 0.0, stance_len, swing_len, n_steps,
                                    stride, 0.0, hl, 0.09, lift)
    x_shift = mid_origin[0] - speed * stance_len / 2.0

    roots, rots, qs = [], [], []
    stance = np.zeros((n_frames, 2), dtype=bool)
    act = np.zeros((n_frames, 5), dtype=bool)
    offs = np.zeros((n_frames, 5, 3))
    ground = np.full((n_frames, 2), np.nan)
    for f in range(n_frames):
        t = f * DT
        phase = 2.0 * np.pi * t / cycle
        support = float(np.interp(t, mids, mid_h))
        root = np.array([speed * t + x_shift,
                         0.02 * np.sin(phase),
                         root_height + support + 0.015 * np.cos(2.0 * phase)])
        root_rot = rot_z(0.05 * np.sin(phase))
        local = local0.copy()
        local[spine - 1] = rot_x(0.03 * np.sin(phase))
        local[l_sh - 1] = rot_y(-arm_swing * np.sin(phase)) @ rot_x(1.3)
        local[r_sh - 1] = rot_y(arm_swing * np.sin(phase)) @ rot_x(-1.3)
        pose = Pose.from_matrices(root, root_rot, local)
        for side in (0, 1):
            o, theta, on, rc, h = _foot_schedule(t, starts[side], stance_len, swing_len, n_steps,
                                                 stride, x0s[side], hs[side], ys[side], lift)
            chain = _leg_chain(sk, side)
            res = two_bone_ik(sk, pose, chain, o)
            pose = res.pose
            _, grot = fk_arrays(sk, pose.root_position, pose.root_orientation, pose.local_matrices())
            q = pose.joint_rotations.copy()
            q[chain[2] - 1] = matrix_to_rot6d(grot[chain[1]].T @ rot_y(theta))
            pose = Pose(pose.root_position, pose.root_orientation, q)
            stance[f, side] = on
            if on:
                slot = L_FOOT if side == 0 else R_FOOT
                act[f, slot] = True
                offs[f, slot] = rc
                ground[f, side] = h
        roots.append(pose.root_position)
        rots.append(pose.root_orientation)
        qs.append(pose.joint_rotations)
    motion = MotionSequence(np.array(roots), np.array(rots), np.array(qs))
    return ScriptedMotion(motion, act, offs, stance, ground)


def stair_climb(step_height=0.18, n_frames=480):
    """Two risers between flat ground and a top landing, one footstep per tread change."""
    # footstep index order: L0 R0 L1 R1 ...; contacts start every half stride (0.495 m)
    heights = [0.0, 0.0, 0.0, step_height, 2 * step_height, 2 * step_height]
    return walking(n_frames=n_frames, heights=heights, lift=0.08, root_height=0.85)


def standing(n_frames=600, root_position=(0.0, 0.0, ROOT_HEIGHT)):
    """T-pose held still."""
    pose = Pose.identity(root_position=root_position)
    return MotionSequence(np.tile(pose.root_position, (n_frames, 1)),
                          np.tile(np.eye(3), (n_frames, 1, 1)),
                          np.tile(pose.joint_rotations, (n_frames, 1, 1)))


def seated_pose(seat_height=None):
    sk = default_skeleton()
    local = Pose.identity().local_matrices()
    for side in ("l", "r"):
        local[sk.index(f"{side}_hip") - 1] = rot_y(-np.pi / 2)
        local[sk.index(f"{side}_knee") - 1] = rot_y(np.pi / 2)
        local[sk.index(f"{side}_shoulder") - 1] = rot_x(1.3 if side == "l" else -1.3)
    root_z = 0.06 + 0.40 + SOLE_DEPTH if seat_height is None else seat_height
    return Pose.from_matrices((0.0, 0.0, root_z), np.eye(3), local)


def sitting(n_frames=600):
    pose = seated_pose()
    return MotionSequence(np.tile(pose.root_position, (n_frames, 1)),
                          np.tile(pose.root_orientation, (n_frames, 1, 1)),
                          np.tile(pose.joint_rotations, (n_frames, 1, 1)))


def jump(n_frames=120, speed=1.5, flight=(40, 80), apex=0.25):
    """Standing long jump: ballistic flight along +x between two frames."""
    base = Pose.identity()
    roots = np.tile(base.root_position, (n_frames, 1))
    t0, t1 = flight
    x_land = speed * (t1 - t0) * DT
    for f in range(n_frames):
        if f < t0:
            continue
        if f >= t1:
            roots[f, 0] = x_land
            continue
        s = (f - t0) / (t1 - t0)
        roots[f, 0] = speed * (f - t0) * DT
        roots[f, 2] += 4.0 * apex * s * (1.0 - s)
    return MotionSequence(roots, np.tile(np.eye(3), (n_frames, 1, 1)),
                          np.tile(base.joint_rotations, (n_frames, 1, 1)))


def constant_acceleration(n_frames=60, accel=(1.0, 0.0, 0.0)):
    base = Pose.identity()
    t = np.arange(n_frames) * DT
    roots = base.root_position + 0.5 * t[:, None] ** 2 * np.asarray(accel)
    return MotionSequence(roots, np.tile(np.eye(3), (n_frames, 1, 1)),
                          np.tile(base.joint_rotations, (n_frames, 1, 1)))


def vertical_bounce(n_frames=120, amplitude=0.1, freq=1.0):
    base = Pose.identity()
    t = np.arange(n_frames) * DT
    roots = np.tile(base.root_position, (n_frames, 1))
    roots[:, 2] += amplitude * np.sin(2.0 * np.pi * freq * t)
    return MotionSequence(roots, np.tile(np.eye(3), (n_frames, 1, 1)),
                          np.tile(base.joint_rotations, (n_frames, 1, 1)))


SCRIPTS = {
    "stand": lambda n: standing(n),
    "walk": lambda n: walking(n).motion,
    "stairs": lambda n: stair_climb(n_frames=n).motion,
    "sit": lambda n: sitting(n),
    "jump": lambda n: jump(n),
}


def scripted(name, n_frames):
    try:
        return SCRIPTS[name](n_frames)
    except KeyError:
        raise ValueError(f"unknown motion script {name!r}") from None


__all__ = ["FPS", "N_JOINTS", "walking", "stair_climb", "standing", "sitting", "seated_pose", "jump",
           "constant_acceleration", "vertical_bounce", "rocker_contact", "scripted", "ScriptedMotion"]
