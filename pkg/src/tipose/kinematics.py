"""Simplified 19-body skeleton, rotation helpers, forward kinematics and two-bone IK.

Frames follow x front, y left, z up.  Body ``i`` has its origin at joint ``i``;
``joint_rotations[j]`` is the local rotation of body ``j + 1``.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from tipose.errors import DegenerateInput, SingularRotation

FPS = 60
DT = 1.0 / FPS

BODY_NAMES = (
    "pelvis", "spine1", "spine2", "neck", "head",
    "l_collar", "l_shoulder", "l_elbow", "l_wrist",
    "r_collar", "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
)
N_BODIES = len(BODY_NAMES)
N_JOINTS = N_BODIES - 1

# sensor order: left wrist, right wrist, left lower leg, right lower leg, head, waist
IMU_NAMES = ("l_wrist", "r_wrist", "l_lowerleg", "r_lowerleg", "head", "waist")
WAIST_SENSOR = 5

# SBP order inside the 20-dim contact vector
SBP_NAMES = ("l_foot", "r_foot", "l_hand", "r_hand", "pelvis")
L_FOOT, R_FOOT, L_HAND, R_HAND, PELVIS = range(5)


@dataclass(frozen=True)
class SearchBox:
    """Axis-aligned box in body coordinates sampled on a regular grid."""

    lower: tuple
    upper: tuple
    spacing: float

    def points(self):
        axes = []
        for lo, hi in zip(self.lower, self.upper):
            n = int(round((hi - lo) / self.spacing)) + 1
            axes.append(lo + self.spacing * np.arange(n))
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def contains(self, r, tol=1e-9):
        r = np.asarray(r)
        return bool(np.all(r >= np.asarray(self.lower) - tol) and np.all(r <= np.asarray(self.upper) + tol))


@dataclass
class Skeleton:
    name: str
    body_names: tuple
    parents: np.ndarray
    offsets: np.ndarray
    imu_bodies: tuple = ()
    imu_offsets: np.ndarray = None
    sbp_bodies: tuple = ()
    sbp_boxes: tuple = ()
    head_top: float = 0.0
    sole_depth: float = 0.0
    _grids: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.parents = np.asarray(self.parents, dtype=np.int64)
        self.offsets = np.asarray(self.offsets, dtype=np.float64)
        if self.imu_offsets is None:
            self.imu_offsets = np.zeros((len(self.imu_bodies), 3))
        self.imu_offsets = np.asarray(self.imu_offsets, dtype=np.float64)

    @property
    def n_bodies(self):
        return len(self.parents)

    @property
    def n_joints(self):
        return len(self.parents) - 1

    def index(self, name):
        return self.body_names.index(name)

    def sbp_grid(self, i):
        if i not in self._grids:
            self._grids[i] = np.ascontiguousarray(self.sbp_boxes[i].points())
        return self._grids[i]

    def rest_positions(self):
        pos = np.zeros((self.n_bodies, 3))
        for i in range(1, self.n_bodies):
            pos[i] = pos[self.parents[i]] + self.offsets[i]
        return pos

    def height(self):
        """Standing height in the rest pose, sole to crown."""
        pos = self.rest_positions()
        return float(pos[:, 2].max() + self.head_top - (pos[:, 2].min() - self.sole_depth))

    def bone_length(self, i):
        return float(np.linalg.norm(self.offsets[i]))

    def check(self):
        if self.parents[0] != -1:
            raise ValueError("root parent must be -1")
        for i in range(1, self.n_bodies):
            if not 0 <= self.parents[i] < i:
                raise ValueError(f"body {i} is not topologically sorted")
        if not np.all(np.isfinite(self.offsets)):
            raise ValueError("non-finite bone offset")
        if len(self.imu_bodies) != 6 or len(self.sbp_bodies) != 5:
            raise ValueError("expected 6 IMU sites and 5 SBP sites")
        if not 1.4 <= self.height() <= 2.0:
            raise ValueError(f"implausible skeleton height {self.height():.3f} m")
        for box in self.sbp_boxes:
            if box.spacing <= 0 or len(box.points()) < 8:
                raise ValueError("degenerate SBP search box")
        return self


ROOT_HEIGHT = 0.96
SOLE_DEPTH = 0.08


def default_skeleton():
    """19-body figure about 1.70 m tall standing in a T-pose at identity."""
    parents = [-1, 0, 1, 2, 3, 2, 5, 6, 7, 2, 9, 10, 11, 0, 13, 14, 0, 16, 17]
    offsets = [
        (0, 0, 0), (0, 0, 0.10), (0, 0, 0.20), (0, 0, 0.22), (0, 0, 0.10),
        (0, 0.05, 0.17), (0, 0.13, 0), (0, 0.28, 0), (0, 0.25, 0),
        (0, -0.05, 0.17), (0, -0.13, 0), (0, -0.28, 0), (0, -0.25, 0),
        (0, 0.09, -0.06), (0, 0, -0.42), (0, 0, -0.40),
        (0, -0.09, -0.06), (0, 0, -0.42), (0, 0, -0.40),
    ]
    names = BODY_NAMES
    imu_bodies = tuple(names.index(n) for n in ("l_wrist", "r_wrist", "l_knee", "r_knee", "head", "pelvis"))
    imu_offsets = [(0, 0, 0), (0, 0, 0), (0, 0, -0.20), (0, 0, -0.20), (0, 0, 0.05), (0, 0, 0)]
    sbp_bodies = tuple(names.index(n) for n in ("l_ankle", "r_ankle", "l_wrist", "r_wrist", "pelvis"))
    # 6 cm thick slab around the sole, 30 x 20 cm footprint
    foot = SearchBox((-0.07, -0.10, -SOLE_DEPTH - 0.03), (0.23, 0.10, -SOLE_DEPTH + 0.03), 0.01)
    l_hand = SearchBox((-0.04, 0.0, -0.04), (0.04, 0.18, 0.03), 0.01)
    r_hand = SearchBox((-0.04, -0.18, -0.04), (0.04, 0.0, 0.03), 0.01)
    pelvis = SearchBox((-0.30, -0.15, -0.20), (0.10, 0.15, -0.10), 0.02)
    return Skeleton(
        name="tip19",
        body_names=names,
        parents=parents,
        offsets=offsets,
        imu_bodies=imu_bodies,
        imu_offsets=imu_offsets,
        sbp_bodies=sbp_bodies,
        sbp_boxes=(foot, foot, l_hand, r_hand, pelvis),
        head_top=0.12,
        sole_depth=SOLE_DEPTH,
    )


SKELETONS = {"tip19": default_skeleton}


def get_skeleton(name="tip19"):
    try:
        return SKELETONS[name]()
    except KeyError:
        raise ValueError(f"unknown skeleton {name!r}") from None


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------


def rot6d_to_matrix(r6, check=True):
    """Gram-Schmidt the two stored columns; works on ``(..., 6)`` arrays."""
    r6 = np.asarray(r6, dtype=np.float64)
    a1 = r6[..., 0:3]
    a2 = r6[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if check and np.any(n1 < 1e-9):
        raise DegenerateInput("first 6D column has near-zero norm")
    b1 = a1 / np.where(n1 < 1e-12, 1.0, n1)
    u2 = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(u2, axis=-1, keepdims=True)
    if check and (np.any(np.linalg.norm(a2, axis=-1) < 1e-9) or np.any(n2 < 1e-9)):
        raise DegenerateInput("second 6D column is zero or parallel to the first")
    b2 = u2 / np.where(n2 < 1e-12, 1.0, n2)
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def matrix_to_rot6d(rot):
    rot = np.asarray(rot, dtype=np.float64)
    return np.concatenate([rot[..., :, 0], rot[..., :, 1]], axis=-1)


def orthonormalize6d(r6):
    return matrix_to_rot6d(rot6d_to_matrix(r6, check=False))


def skew(w):
    w = np.asarray(w, dtype=np.float64)
    z = np.zeros(w.shape[:-1])
    return np.stack([
        np.stack([z, -w[..., 2], w[..., 1]], -1),
        np.stack([w[..., 2], z, -w[..., 0]], -1),
        np.stack([-w[..., 1], w[..., 0], z], -1),
    ], -2)


def rotvec_to_matrix(rv):
    """Rodrigues formula, batched over leading axes."""
    rv = np.asarray(rv, dtype=np.float64)
    theta = np.linalg.norm(rv, axis=-1)[..., None, None]
    k = skew(rv)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + a * k + b * (k @ k)


def axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    return rotvec_to_matrix(axis / np.linalg.norm(axis) * angle)


def rot_x(a):
    return axis_angle((1.0, 0, 0), a)


def rot_y(a):
    return axis_angle((0, 1.0, 0), a)


def rot_z(a):
    return axis_angle((0, 0, 1.0), a)


def rotation_angle(rot):
    """Geodesic angle; atan2 keeps precision near 0 and pi."""
    rot = np.asarray(rot)
    tr = np.trace(rot, axis1=-2, axis2=-1)
    s = np.stack([rot[..., 2, 1] - rot[..., 1, 2], rot[..., 0, 2] - rot[..., 2, 0],
                  rot[..., 1, 0] - rot[..., 0, 1]], axis=-1)
    return np.arctan2(0.5 * np.linalg.norm(s, axis=-1), 0.5 * (tr - 1.0))


def log_map(rot, singular_tol=1e-9):
    """Rotation vector of ``rot``; raises SingularRotation within ``singular_tol`` of pi."""
    rot = np.asarray(rot, dtype=np.float64)
    theta = rotation_angle(rot)
    if np.any(np.pi - theta < singular_tol):
        raise SingularRotation("relative rotation angle too close to pi")
    vee = np.stack([
        rot[..., 2, 1] - rot[..., 1, 2],
        rot[..., 0, 2] - rot[..., 2, 0],
        rot[..., 1, 0] - rot[..., 0, 1],
    ], axis=-1)
    s = np.sin(theta)
    small = theta < 1e-6
    scale = np.where(small, 0.5 + theta**2 / 12.0, theta / (2.0 * np.where(small, 1.0, s)))
    return vee * scale[..., None]


def is_rotation(rot, tol=1e-6):
    rot = np.asarray(rot)
    eye = np.eye(3)
    return bool(np.all(np.abs(np.swapaxes(rot, -1, -2) @ rot - eye) < tol)
                and np.all(np.abs(np.linalg.det(rot) - 1.0) < tol))


def project_to_rotation(m):
    """Closest rotation in Frobenius norm (orthogonal polar factor)."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    u = u.copy()
    u[..., :, -1] *= d[..., None] if np.ndim(d) else d
    return u @ vt


# ---------------------------------------------------------------------------
# poses
# ---------------------------------------------------------------------------


@dataclass
class Pose:
    root_position: np.ndarray
    root_orientation: np.ndarray
    joint_rotations: np.ndarray  # (n_joints, 6)

    def __post_init__(self):
        self.root_position = np.asarray(self.root_position, dtype=np.float64)
        self.root_orientation = np.asarray(self.root_orientation, dtype=np.float64)
        self.joint_rotations = np.asarray(self.joint_rotations, dtype=np.float64)

    @classmethod
    def identity(cls, n_joints=N_JOINTS, root_position=(0.0, 0.0, ROOT_HEIGHT)):
        q = np.tile([1.0, 0, 0, 0, 1.0, 0], (n_joints, 1))
        return cls(np.array(root_position, dtype=np.float64), np.eye(3), q)

    @classmethod
    def from_matrices(cls, root_position, root_orientation, local_rotations):
        return cls(root_position, root_orientation, matrix_to_rot6d(local_rotations))

    def local_matrices(self):
        return rot6d_to_matrix(self.joint_rotations)

    def copy(self):
        return Pose(self.root_position.copy(), self.root_orientation.copy(), self.joint_rotations.copy())

    def validate(self, tol=1e-6):
        if not is_rotation(self.root_orientation, tol):
            raise DegenerateInput("root orientation is not a rotation")
        if not is_rotation(rot6d_to_matrix(self.joint_rotations), tol):
            raise DegenerateInput("joint rotation block is not a rotation")
        return self


@dataclass
class MotionSequence:
    root_positions: np.ndarray  # (T, 3)
    root_orientations: np.ndarray  # (T, 3, 3)
    joint_rotations: np.ndarray  # (T, n_joints, 6)
    fps: int = FPS
    skeleton: str = "tip19"
    root_velocities: np.ndarray = None

    def __post_init__(self):
        if self.fps != FPS:
            raise ValueError(f"only {FPS} fps motion is supported")
        self.root_positions = np.asarray(self.root_positions, dtype=np.float64)
        self.root_orientations = np.asarray(self.root_orientations, dtype=np.float64)
        self.joint_rotations = np.asarray(self.joint_rotations, dtype=np.float64)

    def __len__(self):
        return len(self.root_positions)

    def __getitem__(self, t):
        if isinstance(t, slice):
            rv = None if self.root_velocities is None else self.root_velocities[t]
            return replace(self, root_positions=self.root_positions[t],
                           root_orientations=self.root_orientations[t],
                           joint_rotations=self.joint_rotations[t], root_velocities=rv)
        return Pose(self.root_positions[t], self.root_orientations[t], self.joint_rotations[t])

    @property
    def frames(self):
        return [self[t] for t in range(len(self))]

    @classmethod
    def from_poses(cls, poses, **kw):
        return cls(np.stack([p.root_position for p in poses]),
                   np.stack([p.root_orientation for p in poses]),
                   np.stack([p.joint_rotations for p in poses]), **kw)

    def velocities(self):
        """Backward-difference root velocity; integrating it reproduces the root path."""
        if self.root_velocities is not None:
            return self.root_velocities
        v = np.zeros_like(self.root_positions)
        v[1:] = (self.root_positions[1:] - self.root_positions[:-1]) * self.fps
        return v


# ---------------------------------------------------------------------------
# forward kinematics
# ---------------------------------------------------------------------------


@dataclass
class BodyState:
    position: np.ndarray
    rotation: np.ndarray
    linear_velocity: np.ndarray = None
    angular_velocity: np.ndarray = None


def fk_arrays(skeleton, root_positions, root_orientations, local_rotations):
    """Batched FK.  ``local_rotations`` is ``(..., n_joints, 3, 3)``.

    Returns world positions ``(..., J, 3)`` and orientations ``(..., J, 3, 3)``.
    """
    lead = np.shape(root_positions)[:-1]
    nb = skeleton.n_bodies
    pos = np.empty(lead + (nb, 3))
    rot = np.empty(lead + (nb, 3, 3))
    pos[..., 0, :] = root_positions
    rot[..., 0, :, :] = root_orientations
    parents = skeleton.parents
    offsets = skeleton.offsets
    for i in range(1, nb):
        p = parents[i]
        pos[..., i, :] = pos[..., p, :] + rot[..., p, :, :] @ offsets[i]
        rot[..., i, :, :] = rot[..., p, :, :] @ local_rotations[..., i - 1, :, :]
    return pos, rot


def forward_kinematics(skeleton, pose):
    pos, rot = fk_arrays(skeleton, pose.root_position, pose.root_orientation, pose.local_matrices())
    return [BodyState(pos[i], rot[i]) for i in range(skeleton.n_bodies)]


def motion_fk(skeleton, motion):
    return fk_arrays(skeleton, motion.root_positions, motion.root_orientations,
                     rot6d_to_matrix(motion.joint_rotations))


def body_velocities(skeleton, poses, dt=DT):
    """Central-difference body velocities at the middle of three consecutive poses."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if len(poses) != 3:
        raise ValueError("need exactly three poses")
    states = [forward_kinematics(skeleton, p) for p in poses]
    out = []
    for i in range(skeleton.n_bodies):
        prev, mid, nxt = states[0][i], states[1][i], states[2][i]
        v = (nxt.position - prev.position) / (2.0 * dt)
        try:
            w = log_map(nxt.rotation @ prev.rotation.T) / (2.0 * dt)
        except SingularRotation:
            w = log_map(nxt.rotation @ mid.rotation.T, singular_tol=0.0) / dt
        out.append(BodyState(mid.position, mid.rotation, v, w))
    return out


def sequence_velocities(positions, rotations, dt=DT):
    """Velocities for every frame of ``(T, J, 3)`` / ``(T, J, 3, 3)`` arrays.

    Interior frames use central differences, the two ends one-sided ones.
    """
    n = positions.shape[0]
    if n < 2:
        raise ValueError("need at least two frames")
    lin = np.empty_like(positions)
    ang = np.empty_like(positions)
    lin[1:-1] = (positions[2:] - positions[:-2]) / (2.0 * dt)
    lin[0] = (positions[1] - positions[0]) / dt
    lin[-1] = (positions[-1] - positions[-2]) / dt
    rt = np.swapaxes(rotations, -1, -2)
    if n > 2:
        rel = rotations[2:] @ rt[:-2]
        theta = rotation_angle(rel)
        bad = np.pi - theta < 1e-9
        if np.any(bad):
            fallback = rotations[2:] @ rt[1:-1]
            rel = np.where(bad[..., None, None], fallback, rel)
            ang[1:-1] = log_map(rel, singular_tol=0.0) / np.where(bad, dt, 2.0 * dt)[..., None]
        else:
            ang[1:-1] = log_map(rel) / (2.0 * dt)
    ang[0] = log_map(rotations[1] @ rt[0], singular_tol=0.0) / dt
    ang[-1] = log_map(rotations[-1] @ rt[-2], singular_tol=0.0) / dt
    return lin, ang


def point_velocity(body, r):
    """World velocity of the point at body-frame offset ``r``."""
    return np.cross(body.angular_velocity, body.rotation @ np.asarray(r, dtype=np.float64)) + body.linear_velocity


def point_position(body, r):
    return body.position + body.rotation @ np.asarray(r, dtype=np.float64)


# ---------------------------------------------------------------------------
# two-bone IK
# ---------------------------------------------------------------------------


@dataclass
class IkResult:
    pose: Pose
    clamped: bool
    error: float


def _unit(x):
    n = np.linalg.norm(x)
    return x / n if n > 0 else x


def _angle_between(u, v):
    return float(np.arccos(np.clip(np.dot(_unit(u), _unit(v)), -1.0, 1.0)))


def _align(u, v):
    """Smallest rotation taking direction ``u`` onto direction ``v``."""
    u, v = _unit(u), _unit(v)
    axis = np.cross(u, v)
    s = np.linalg.norm(axis)
    c = float(np.dot(u, v))
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        ortho = np.cross(u, (1.0, 0, 0))
        if np.linalg.norm(ortho) < 1e-6:
            ortho = np.cross(u, (0, 1.0, 0))
        return axis_angle(ortho, np.pi)
    return axis_angle(axis, np.arctan2(s, c))


def two_bone_ik(skeleton, pose, chain, target, effector=(0.0, 0.0, 0.0), eps=1e-9, bend_axis=(0.0, 1.0, 0.0)):
    """Move the point ``effector`` (end-body coordinates) onto ``target``.

    ``chain`` is ``(upper, middle, end)`` body indices forming a parent chain.
    Only the local rotations of ``upper`` and ``middle`` change.  When the chain is
    straight the bend happens about ``bend_axis`` expressed in the middle body.
    """
    ia, ib, ic = chain
    if skeleton.parents[ib] != ia or skeleton.parents[ic] != ib:
        raise ValueError("chain must be parent -> child -> grandchild")
    target = np.asarray(target, dtype=np.float64)
    local = pose.local_matrices()
    pos, rot = fk_arrays(skeleton, pose.root_position, pose.root_orientation, local)
    a, b = pos[ia], pos[ib]
    e = pos[ic] + rot[ic] @ np.asarray(effector, dtype=np.float64)

    lab = np.linalg.norm(b - a)
    lbe = np.linalg.norm(e - b)
    want = np.linalg.norm(target - a)
    lo = abs(lab - lbe) + eps
    hi = lab + lbe - eps
    dist = min(max(want, lo), hi)
    clamped = not (lo <= want <= hi)

    # bend at the middle joint so |e - a| becomes dist
    cur_inner = _angle_between(a - b, e - b)
    cos_new = (lab**2 + lbe**2 - dist**2) / (2.0 * lab * lbe)
    new_inner = float(np.arccos(np.clip(cos_new, -1.0, 1.0)))
    axis = np.cross(a - b, e - b)
    if np.linalg.norm(axis) < 1e-9 * lab * lbe:
        axis = rot[ib] @ np.asarray(bend_axis, dtype=np.float64)
        # straight chain: the inner angle is pi, opening means folding
        bend = axis_angle(axis, -(new_inner - cur_inner))
    else:
        bend = axis_angle(axis, new_inner - cur_inner)
    e_bent = b + bend @ (e - b)
    swing = _align(e_bent - a, target - a) if want > 1e-12 else np.eye(3)

    parent_rot = rot[skeleton.parents[ia]]
    new_a = swing @ rot[ia]
    new_b = swing @ bend @ rot[ib]
    q = pose.joint_rotations.copy()
    q[ia - 1] = matrix_to_rot6d(parent_rot.T @ new_a)
    q[ib - 1] = matrix_to_rot6d(new_a.T @ new_b)
    out = Pose(pose.root_position.copy(), pose.root_orientation.copy(), q)

    pos2, rot2 = fk_arrays(skeleton, out.root_position, out.root_orientation, out.local_matrices())
    reached = pos2[ic] + rot2[ic] @ np.asarray(effector, dtype=np.float64)
    return IkResult(out, clamped, float(np.linalg.norm(reached - target)))
