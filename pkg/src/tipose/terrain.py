"""Online height-map reconstruction from stationary body points.

Accepted contact heights are bucketed into clusters; each grid cell remembers
the closest observation seen so far (``conf``) and which cluster it belongs to
(``owner``), so the map is a Voronoi diagram whose cell heights follow the
current cluster means.
"""
from dataclasses import dataclass, field

import numpy as np

from tipose import kernels
from tipose.errors import OutOfBounds
from tipose.kinematics import L_FOOT, PELVIS, R_FOOT

GRID = 0.1
EXTENT = 40.0
INFLUENCE = 0.5
JOIN_RADIUS = 1.0
JOIN_HEIGHT = 0.1
K_CORRECT = 0.2
GATE_FRAMES = 50
PELVIS_CLEARANCE = 0.2
FLOOR_MARGIN = 0.05
TERRAIN_SOURCES = (L_FOOT, R_FOOT, PELVIS)


@dataclass
class SbpCluster:
    count: int
    mean: float
    members: list = field(default_factory=list)  # horizontal positions

    def add(self, xy, height):
        self.count += 1
        self.mean += (height - self.mean) / self.count
        self.members.append(np.asarray(xy, dtype=np.float64)[:2].copy())

    def horizontal_distance(self, xy):
        m = np.asarray(self.members)
        return float(np.sqrt(((m - np.asarray(xy)[:2]) ** 2).sum(axis=1)).min())


@dataclass
class Observation:
    position: np.ndarray  # world position of the SBP
    source: int  # L_FOOT, R_FOOT or PELVIS
    age: int = 0


class TerrainState:
    """Square height map centred on ``center`` with ``floor`` as the lowest level.

    ``floor`` is the initial root height minus ``w``.
    """

    def __init__(self, center=(0.0, 0.0), floor=0.0, extent=EXTENT, grid=GRID, k=K_CORRECT,
                 influence=INFLUENCE, join_radius=JOIN_RADIUS, join_height=JOIN_HEIGHT):
        self.grid = float(grid)
        self.L = int(round(extent / grid))
        self.origin = np.array([center[0] - 0.5 * self.L * grid, center[1] - 0.5 * self.L * grid])
        self.floor = float(floor)
        self.k = float(k)
        self.influence = float(influence)
        self.join_radius = float(join_radius)
        self.join_height = float(join_height)
        self.conf = np.full((self.L, self.L), np.inf)
        self.owner = np.full((self.L, self.L), -1, dtype=np.int64)
        self.clusters = []

    @classmethod
    def for_start(cls, root_position, w, **kw):
        root_position = np.asarray(root_position, dtype=np.float64)
        return cls(center=root_position[:2], floor=float(root_position[2]) - w, **kw)

    # -- map -------------------------------------------------------------

    def cluster_means(self):
        return np.array([max(c.mean, self.floor) for c in self.clusters])

    @property
    def height_map(self):
        h = np.full((self.L, self.L), self.floor)
        seen = self.owner >= 0
        if seen.any():
            h[seen] = self.cluster_means()[self.owner[seen]]
        return h

    def cell_index(self, xy):
        i = int(np.floor((xy[0] - self.origin[0]) / self.grid))
        j = int(np.floor((xy[1] - self.origin[1]) / self.grid))
        if not (0 <= i < self.L and 0 <= j < self.L):
            raise OutOfBounds(f"point ({xy[0]:.3f}, {xy[1]:.3f}) lies outside the terrain map")
        return i, j

    def query_height(self, xy):
        i, j = self.cell_index(xy)
        c = self.owner[i, j]
        return self.floor if c < 0 else max(self.clusters[c].mean, self.floor)

    def cell_centers(self):
        return self.origin[0] + (np.arange(self.L) + 0.5) * self.grid, \
            self.origin[1] + (np.arange(self.L) + 0.5) * self.grid

    def voronoi_update(self, xy, cluster_id):
        return kernels.voronoi_update(self.conf, self.owner, float(self.origin[0]), float(self.origin[1]),
                                      self.grid, float(xy[0]), float(xy[1]), self.influence, int(cluster_id))

    # -- observations -----------------------------------------------------

    def match_cluster(self, position):
        """Index of the horizontally nearest cluster passing both gates, or -1."""
        best, best_d = -1, np.inf
        for idx, c in enumerate(self.clusters):
            if abs(position[2] - max(c.mean, self.floor)) >= self.join_height:
                continue
            d = c.horizontal_distance(position)
            if d < self.join_radius and d < best_d:
                best, best_d = idx, d
        return best

    def observe(self, position):
        """Accept one SBP observation; returns ``(cluster id, proposal p)``."""
        position = np.asarray(position, dtype=np.float64)
        idx = self.match_cluster(position)
        if idx < 0:
            self.clusters.append(SbpCluster(1, float(position[2]), [position[:2].copy()]))
            idx, p = len(self.clusters) - 1, 0.0
        else:
            self.clusters[idx].add(position, position[2])
            p = self.proposal(position[2], idx)
        self.voronoi_update(position, idx)
        return idx, p

    def proposal(self, height, cluster_id):
        """Vertical root offset (m per frame) pulling ``height`` toward the cluster mean."""
        d = height - max(self.clusters[cluster_id].mean, self.floor)
        return -self.k * d

    def refresh(self, position, cluster_id):
        """Re-observe an already accepted SBP that is still active."""
        self.voronoi_update(position, cluster_id)
        return self.proposal(position[2], cluster_id)

    def penetration(self, positions):
        """Depth of each point below the height map (0 when above)."""
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        return np.array([max(self.query_height(p) - p[2], 0.0) for p in positions])


def vertical_root_correction(v_z, p, dt):
    """Corrected vertical root velocity; ``p`` is a per-frame offset in metres."""
    return v_z + p / dt


class TerrainTracker:
    """Age gating and per-frame proposals for foot and pelvis SBPs."""

    def __init__(self, state, gate_frames=GATE_FRAMES, pelvis_clearance=PELVIS_CLEARANCE):
        self.state = state
        self.gate_frames = gate_frames
        self.pelvis_clearance = pelvis_clearance
        self.age = {s: 0 for s in TERRAIN_SOURCES}
        self.last = {s: None for s in TERRAIN_SOURCES}
        self.cluster = {s: -1 for s in TERRAIN_SOURCES}
        self._feet_z = ()

    def _allowed(self, source, position, feet_z):
        if source != PELVIS:
            return True
        return all(abs(position[2] - z) > self.pelvis_clearance for z in feet_z)

    def update(self, active, positions, feet_z):
        """Advance one frame.

        ``active`` are the five persisting SBP flags, ``positions`` their world
        positions and ``feet_z`` the heights of both feet.  Returns the mean
        vertical proposal of all accepted, still active SBPs (0 if none).
        """
        props = []
        self._feet_z = tuple(feet_z)
        for s in TERRAIN_SOURCES:
            if active[s]:
                self.age[s] += 1
                pos = np.asarray(positions[s], dtype=np.float64)
                self.last[s] = pos
                if not self._allowed(s, pos, feet_z):
                    continue
                if self.cluster[s] >= 0:
                    props.append(self.state.refresh(pos, self.cluster[s]))
                elif self.age[s] >= self.gate_frames:
                    self.cluster[s], p = self.state.observe(pos)
                    props.append(p)
            else:
                # an SBP that ends before the gate is accepted at its last position
                if self.age[s] > 0 and self.cluster[s] < 0 and self.last[s] is not None \
                        and self._allowed(s, self.last[s], feet_z):
                    self.state.observe(self.last[s])
                self.age[s] = 0
                self.last[s] = None
                self.cluster[s] = -1
        return float(np.mean(props)) if props else 0.0

    def finish(self):
        """Accept SBPs still waiting for the gate when the stream ends."""
        for s in TERRAIN_SOURCES:
            if self.age[s] > 0 and self.cluster[s] < 0 and self.last[s] is not None \
                    and self._allowed(s, self.last[s], self._feet_z):
                self.state.observe(self.last[s])
