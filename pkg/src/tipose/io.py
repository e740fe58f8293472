"""Plain-text file formats for motions, IMU streams, SBP labels, calibrations and terrain.

Every file starts with a ``# tip<kind> v1 key=value ...`` header; floats are
written with ``%.17g`` so values round-trip exactly.  Per-frame files lead
each line with the frame index ``t``, the calibration file with the sensor id.
"""
import io as _io
import os

import numpy as np

from tipose.errors import FormatError
from tipose.imu import CalibrationSet, ImuStream
from tipose.kinematics import FPS, N_JOINTS, MotionSequence
from tipose.terrain import SbpCluster, TerrainState

FLOAT = "%.17g"


def _header(kind, **fields):
    parts = [f"# {kind} v1"] + [f"{k}={v}" for k, v in fields.items()]
    return " ".join(parts)


def parse_header(line, kind):
    tokens = line.strip().split()
    if len(tokens) < 3 or tokens[0] != "#" or tokens[1] != kind or tokens[2] != "v1":
        raise FormatError(f"expected a '# {kind} v1' header, got {line.strip()[:60]!r}")
    fields = {}
    for tok in tokens[3:]:
        if "=" not in tok:
            raise FormatError(f"malformed header field {tok!r}")
        k, v = tok.split("=", 1)
        fields[k] = v
    return fields


def _write(path, header, rows, indexed=True):
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    buf = _io.StringIO()
    buf.write(header + "\n")
    if rows.size:
        if indexed:
            lines = (f"{i} " + " ".join(FLOAT % x for x in row) for i, row in enumerate(rows))
            buf.write("\n".join(lines) + "\n")
        else:
            np.savetxt(buf, rows, fmt=FLOAT)
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def _read(path, kind, width=None, indexed=True):
    try:
        with open(path) as fh:
            first = fh.readline()
            fields = parse_header(first, kind)
            body = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path} is not a text file") from exc
    try:
        rows = np.loadtxt(_io.StringIO(body), ndmin=2) if body.strip() else np.zeros((0, width or 0))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if indexed and len(rows):
        if not np.array_equal(rows[:, 0], np.arange(len(rows))):
            raise FormatError(f"{path}: leading index column must count 0, 1, 2, ...")
        rows = rows[:, 1:]
    elif indexed:
        rows = rows.reshape(0, width or 0)
    if width is not None and rows.shape[1] != width:
        raise FormatError(f"{path}: expected {width} data columns, found {rows.shape[1]}")
    return fields, rows


def _fps(fields, path):
    fps = int(fields.get("fps", FPS))
    if fps != FPS:
        raise FormatError(f"{path}: only {FPS} fps is supported, file says {fps}")
    return fps


# -- motion: t, root position (3), root rotation matrix (9, row-major), 6D joints --

MOTION_WIDTH = 3 + 9 + 6 * N_JOINTS


def save_motion(path, motion):
    n = len(motion)
    rows = np.concatenate([motion.root_positions, motion.root_orientations.reshape(n, 9),
                           motion.joint_rotations.reshape(n, -1)], axis=1)
    _write(path, _header("tipmotion", fps=motion.fps, skeleton=motion.skeleton), rows)


def load_motion(path):
    fields, rows = _read(path, "tipmotion", MOTION_WIDTH)
    n = len(rows)
    return MotionSequence(rows[:, :3], rows[:, 3:12].reshape(n, 3, 3), rows[:, 12:].reshape(n, N_JOINTS, 6),
                          fps=_fps(fields, path), skeleton=fields.get("skeleton", "tip19"))


# -- imu: t, 6 rotation matrices (54) then 6 accelerations (18) --

IMU_WIDTH = 72


def save_imu(path, stream):
    n = len(stream)
    rows = np.concatenate([stream.orientations.reshape(n, 54), stream.accelerations.reshape(n, 18)], axis=1)
    _write(path, _header("tipimu", fps=stream.fps), rows)


def load_imu(path):
    fields, rows = _read(path, "tipimu", IMU_WIDTH)
    n = len(rows)
    return ImuStream(rows[:, :54].reshape(n, 6, 3, 3), rows[:, 54:].reshape(n, 6, 3), _fps(fields, path))


# -- sbp: t, then [b, rx, ry, rz] for l_foot, r_foot, l_hand, r_hand, pelvis --


def save_sbp(path, active, offsets):
    n = len(active)
    rows = np.concatenate([np.asarray(active, dtype=np.float64)[..., None], offsets], axis=-1).reshape(n, 20)
    _write(path, _header("tipsbp", fps=FPS), rows)


def load_sbp(path):
    _, rows = _read(path, "tipsbp", 20)
    c = rows.reshape(len(rows), 5, 4)
    return c[..., 0] > 0.5, c[..., 1:].copy()


# -- calibration: per sensor, id, global offset (9), sensor-to-bone (9), bias (3) --


def save_calibration(path, calib):
    rows = np.concatenate([calib.global_offsets.reshape(-1, 9), calib.sensor_to_bone.reshape(-1, 9), calib.bias],
                          axis=1)
    _write(path, _header("tipcalib"), rows)


def load_calibration(path):
    _, rows = _read(path, "tipcalib", 21)
    if len(rows) != 6:
        raise FormatError(f"{path}: expected 6 sensor rows, found {len(rows)}")
    return CalibrationSet(rows[:, :9].reshape(6, 3, 3), rows[:, 9:18].reshape(6, 3, 3), rows[:, 18:].copy())


# -- terrain grids --


def save_terrain(path, state, which="height"):
    grid = state.height_map if which == "height" else state.conf
    header = _header("tipterrain", grid=FLOAT % state.grid, origin_x=FLOAT % state.origin[0],
                     origin_y=FLOAT % state.origin[1], L=state.L, map=which)
    _write(path, header, grid, indexed=False)


def load_terrain(path):
    """Returns ``(grid (L, L), fields)``."""
    fields, rows = _read(path, "tipterrain", indexed=False)
    for key in ("grid", "origin_x", "origin_y", "L"):
        if key not in fields:
            raise FormatError(f"{path}: header lacks {key}")
    L = int(fields["L"])
    if rows.shape != (L, L):
        raise FormatError(f"{path}: expected a {L}x{L} grid, found {rows.shape}")
    return rows, fields


def save_terrain_state(path, state):
    """Binary dump of the full terrain state (npz, no pickled objects)."""
    members = [m for c in state.clusters for m in c.members]
    member_cluster = [i for i, c in enumerate(state.clusters) for _ in c.members]
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array("tipterrainstate v1"),
                 params=np.array([state.grid, state.origin[0], state.origin[1], state.floor, state.k,
                                  state.influence, state.join_radius, state.join_height, state.L]),
                 conf=state.conf, owner=state.owner,
                 counts=np.array([c.count for c in state.clusters], dtype=np.int64),
                 means=np.array([c.mean for c in state.clusters], dtype=np.float64),
                 members=np.array(members, dtype=np.float64).reshape(-1, 2),
                 member_cluster=np.array(member_cluster, dtype=np.int64))


def load_terrain_state(path):
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read terrain state {path}: {exc}") from exc
    with data:
        if "header" not in data or str(data["header"]) != "tipterrainstate v1":
            raise FormatError(f"{path} is not a terrain state dump")
        g, ox, oy, floor, k, infl, jr, jh, L = data["params"]
        state = TerrainState(floor=floor, extent=g * int(L), grid=g, k=k, influence=infl,
                             join_radius=jr, join_height=jh)
        state.origin = np.array([ox, oy])
        state.conf = data["conf"].copy()
        state.owner = data["owner"].copy()
        members, mc = data["members"], data["member_cluster"]
        state.clusters = [SbpCluster(int(n), float(m), [members[j].copy() for j in np.flatnonzero(mc == i)])
                          for i, (n, m) in enumerate(zip(data["counts"], data["means"]))]
    return state


def remove_quietly(path):
    try:
        os.remove(path)
    except OSError:
        pass
