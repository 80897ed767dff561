"""Geometry-driven LiDAR obstacle tracking.

Per frame: ground/range crop and voxel downsampling, density clustering,
axis-aligned boxes, Hungarian association against the previous boxes,
birth/death bookkeeping, a motion-consistency flag, and a constant-velocity
Kalman filter per track.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .config import LidarTrackParams
from .core import Aabb3, NumericalFailure, PointCloud, RobotState, aabb_iou3d

FORBIDDEN = 1e9


# -- filtering -----------------------------------------------------------------

def roi_filter(cloud: PointCloud, robot: RobotState, params: LidarTrackParams) -> PointCloud:
    pts = cloud.points
    if len(pts) == 0:
        return cloud
    keep = pts[:, 2] >= params.ground_z + params.ground_margin
    dxy = pts[:, :2] - robot.position[:2]
    keep &= np.einsum("ij,ij->i", dxy, dxy) <= params.r_roi**2
    pts = pts[keep]
    if len(pts) == 0:
        return PointCloud(cloud.timestamp, pts.reshape(0, 3))
    keys = np.floor(pts / params.voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    # voxel centroid, one point per occupied voxel, ordered by voxel key
    sums = np.zeros((len(counts), 3))
    np.add.at(sums, inverse, pts)
    return PointCloud(cloud.timestamp, sums / counts[:, None])


# -- clustering ----------------------------------------------------------------

@dataclass
class Cluster:
    points: np.ndarray
    centroid: np.ndarray
    box: Aabb3

    @classmethod
    def of(cls, points: np.ndarray) -> "Cluster":
        return cls(points, points.mean(axis=0), Aabb3.from_points(points))


def dbscan_labels(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Cluster label per point, -1 for noise.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``. Border points join the cluster of their nearest core
    neighbor, so the partition does not depend on input order.
    """
    n = len(points)
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return labels
    tree = cKDTree(points)
    neighbors = tree.query_ball_point(points, eps)
    core = np.array([len(nb) >= min_pts for nb in neighbors])
    next_label = 0
    for i in range(n):
        if not core[i] or labels[i] >= 0:
            continue
        labels[i] = next_label
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in neighbors[p]:
                if core[q] and labels[q] < 0:
                    labels[q] = next_label
                    queue.append(q)
        next_label += 1
    for i in np.flatnonzero(~core):
        cores = [q for q in neighbors[i] if core[q]]
        if cores:
            d = np.linalg.norm(points[cores] - points[i], axis=1)
            labels[i] = labels[cores[int(np.argmin(d))]]
    return labels


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> tuple[list[Cluster], np.ndarray]:
    """Clusters (ordered by label) and the indices of noise points."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    labels = dbscan_labels(points, eps, min_pts)
    clusters = [Cluster.of(points[labels == k]) for k in range(labels.max(initial=-1) + 1)]
    return clusters, np.flatnonzero(labels < 0)


# -- assignment ----------------------------------------------------------------

def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost assignment for a rectangular cost matrix, O(n^3).

    Returns (row, col) pairs; every row is assigned when rows <= cols and
    every column otherwise.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return []
    transposed = cost.shape[0] > cost.shape[1]
    a = cost.T if transposed else cost
    n, m = a.shape
    rows = a.tolist()
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    match = [0] * (m + 1)  # match[j] = row (1-based) assigned to column j
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = match[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    pairs = [(match[j] - 1, j - 1) for j in range(1, m + 1) if match[j]]
    if transposed:
        pairs = [(c, r) for r, c in pairs]
    return sorted(pairs)


def box_cost(a: Aabb3, b: Aabb3) -> float:
    """Association cost with doubled weight on horizontal displacement."""
    d = a.center - b.center
    return 2.0 * math.hypot(d[0], d[1]) + abs(d[2]) - aabb_iou3d(a, b)


@dataclass
class Association:
    matches: list[tuple[int, int]]
    unmatched_prev: list[int]
    unmatched_curr: list[int]


def associate(prev: list[Aabb3], curr: list[Aabb3], gate: float = 1.0) -> Association:
    n, m = len(prev), len(curr)
    if n == 0 or m == 0:
        return Association([], list(range(n)), list(range(m)))
    cost = np.empty((n, m))
    for i, a in enumerate(prev):
        for j, b in enumerate(curr):
            dxy = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
            cost[i, j] = box_cost(a, b) if dxy <= gate else FORBIDDEN
    matches = [(i, j) for i, j in hungarian(cost) if cost[i, j] < FORBIDDEN]
    mi = {i for i, _ in matches}
    mj = {j for _, j in matches}
    return Association(matches, [i for i in range(n) if i not in mi], [j for j in range(m) if j not in mj])


# -- tracks ----------------------------------------------------------------------

@dataclass
class ObstacleTrack:
    id: int
    state: np.ndarray  # [px, py, pz, vx, vy, vz]
    covariance: np.ndarray
    radius_est: float
    box: Aabb3
    hits: int = 1
    misses: int = 0
    confirmed: bool = False
    dynamic: bool = False
    last_time: float = 0.0
    history: deque = field(default_factory=lambda: deque(maxlen=10))

    @property
    def position(self) -> np.ndarray:
        return self.state[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.state[3:]

    def window(self):
        """(times, positions, velocities) of the retained history."""
        if not self.history:
            return np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3))
        t = np.array([h[0] for h in self.history])
        p = np.array([h[1] for h in self.history])
        v = np.array([h[2] for h in self.history])
        return t, p, v


def new_track(track_id: int, measurement: np.ndarray, box: Aabb3, radius: float, t: float,
              params: LidarTrackParams) -> ObstacleTrack:
    state = np.concatenate([measurement, np.zeros(3)])
    cov = np.diag([params.sigma_z**2] * 3 + [params.sigma_v0**2] * 3)
    tr = ObstacleTrack(track_id, state, cov, radius, box, last_time=t,
                       history=deque(maxlen=params.history))
    tr.confirmed = tr.hits >= params.m_confirm
    tr.history.append((t, measurement.copy(), np.zeros(3)))
    return tr


def kalman_predict(track: ObstacleTrack, dt: float, sigma_a: float) -> None:
    if dt <= 0:
        raise ValueError("kalman step requires dt > 0")
    F = np.eye(6)
    F[:3, 3:] = dt * np.eye(3)
    q = sigma_a**2
    Q = np.zeros((6, 6))
    Q[:3, :3] = (dt**4 / 4.0) * q * np.eye(3)
    Q[:3, 3:] = Q[3:, :3] = (dt**3 / 2.0) * q * np.eye(3)
    Q[3:, 3:] = dt**2 * q * np.eye(3)
    track.state = F @ track.state
    P = F @ track.covariance @ F.T + Q
    track.covariance = 0.5 * (P + P.T)


def kalman_correct(track: ObstacleTrack, z: np.ndarray, sigma_z) -> None:
    """Position update; ``sigma_z`` is a scalar or per-axis measurement std."""
    H = np.zeros((3, 6))
    H[:, :3] = np.eye(3)
    R = np.diag(np.broadcast_to(np.asarray(sigma_z, dtype=float) ** 2, (3,)))
    P = track.covariance
    S = H @ P @ H.T + R
    try:
        K = np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"singular innovation covariance for track {track.id}") from exc
    track.state = track.state + K @ (z - H @ track.state)
    IKH = np.eye(6) - K @ H
    P = IKH @ P @ IKH.T + K @ R @ K.T  # Joseph form
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)) or np.linalg.eigvalsh(P)[0] < -1e-12:
        raise NumericalFailure(f"covariance of track {track.id} is not PSD")
    track.covariance = P


def kalman_update(track: ObstacleTrack, measurement: np.ndarray, dt: float,
                  sigma_a: float = 3.0, sigma_z=0.05) -> ObstacleTrack:
    """Constant-velocity predict + position update, in place. Returns the track."""
    kalman_predict(track, dt, sigma_a)
    kalman_correct(track, np.asarray(measurement, dtype=float), sigma_z)
    return track


def motion_stats(track: ObstacleTrack) -> tuple[float, float]:
    """Trace of the position covariance and std of speed over the history."""
    _, p, v = track.window()
    tr = float(np.trace(np.atleast_2d(np.cov(p.T, bias=True))))
    sv = float(np.std(np.linalg.norm(v, axis=1)))
    return tr, sv


def motion_filter(tracks: list[ObstacleTrack], params: LidarTrackParams) -> list[ObstacleTrack]:
    """Flag tracks as dynamic when position or speed varies over a full window.

    Tracks with a short history are left unflagged (not dynamic).
    """
    for tr in tracks:
        if len(tr.history) < params.history:
            tr.dynamic = False
            continue
        cov_trace, speed_std = motion_stats(tr)
        tr.dynamic = cov_trace > params.eps_p or speed_std > params.eps_v
    return tracks


def update_lifecycle(tracks: list[ObstacleTrack], assoc: Association, boxes: list[Aabb3],
                     params: LidarTrackParams, next_id: int, t: float,
                     measurements: list[np.ndarray] | None = None,
                     radii: list[float] | None = None) -> tuple[list[ObstacleTrack], int]:
    """Birth/death bookkeeping. Returns surviving tracks and the next free id.

    Matched tracks get hits+1, misses reset and (when ``measurements`` is given)
    a Kalman update; unmatched tracks accumulate misses and die past ``m_die``.
    """
    if measurements is None:
        measurements = [b.center for b in boxes]
    if radii is None:
        radii = [float(max(b.half_extents[0], b.half_extents[1])) for b in boxes]
    for i, j in assoc.matches:
        tr = tracks[i]
        tr.hits += 1
        tr.misses = 0
        tr.box = boxes[j]
        tr.radius_est = radii[j]
        dt = t - tr.last_time
        if dt > 0:
            kalman_update(tr, measurements[j], dt, params.sigma_a, params.sigma_z)
        tr.last_time = t
        tr.history.append((t, measurements[j].copy(), tr.velocity.copy()))
        if tr.hits >= params.m_confirm:
            tr.confirmed = True
    for i in assoc.unmatched_prev:
        tracks[i].misses += 1
    survivors = [tr for tr in tracks if tr.misses <= params.m_die]
    for j in assoc.unmatched_curr:
        tr = new_track(next_id, measurements[j], boxes[j], radii[j], t, params)
        tr.confirmed = tr.hits >= params.m_confirm
        survivors.append(tr)
        next_id += 1
    return survivors, next_id


class LidarTracker:
    """Per-trial LiDAR pipeline state; call :meth:`step` once per frame in time order."""

    def __init__(self, params: LidarTrackParams, sensor_height: float = 0.15):
        self.params = params
        self.sensor_height = sensor_height
        self.tracks: list[ObstacleTrack] = []
        self.next_id = 0
        self.last_time: float | None = None
        self.clusters: list[Cluster] = []

    def _measurement(self, box: Aabb3, robot: RobotState) -> tuple[np.ndarray, float]:
        radius = float(max(box.half_extents[0], box.half_extents[1]))
        center = box.center.copy()
        if self.params.bias_compensation:
            sensor = robot.position + np.array([0.0, 0.0, self.sensor_height])
            ray = center - sensor
            n = float(np.linalg.norm(ray))
            if n > 1e-9:
                center = center + 0.5 * radius * ray / n
        return center, radius

    def step(self, cloud: PointCloud, robot: RobotState) -> list[ObstacleTrack]:
        p = self.params
        t = cloud.timestamp
        if self.last_time is not None and t <= self.last_time:
            raise ValueError("LiDAR frames must arrive in strictly increasing time order")
        self.last_time = t
        roi = roi_filter(cloud, robot, p)
        clusters, _ = dbscan(roi.points, p.eps, p.min_pts)
        self.clusters = clusters
        boxes = [c.box for c in clusters]
        meas = [self._measurement(b, robot) for b in boxes]
        assoc = associate([tr.box for tr in self.tracks], boxes, p.gate)
        self.tracks, self.next_id = update_lifecycle(
            self.tracks, assoc, boxes, p, self.next_id, t,
            measurements=[m for m, _ in meas], radii=[r for _, r in meas])
        motion_filter(self.tracks, p)
        return self.tracks

    def dynamic_tracks(self) -> list[ObstacleTrack]:
        return [tr for tr in self.tracks if tr.confirmed and tr.dynamic]

    def estimate_at(self, track: ObstacleTrack, t: float) -> np.ndarray:
        """Track state extrapolated to time ``t`` with the constant-velocity model."""
        dt = t - track.last_time
        return np.concatenate([track.position + track.velocity * dt, track.velocity])


def lidar_pipeline(cloud: PointCloud, robot: RobotState, state: LidarTracker) -> list[ObstacleTrack]:
    return state.step(cloud, robot)
