"""RGB-D refinement of obstacle states.

2D detections are associated over time in two confidence tiers, each track's
box center seeds a depth-consistent region grow, and the region is lifted to
3D for a centroid, an effective radius and a differenced velocity.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .config import CameraTrackParams
from .core import CameraModel, backproject
from .lidar_percept import hungarian
from .sensors import DepthImage, Detection2D


def iou2d(a, b) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


@dataclass
class Track2D:
    id: int
    bbox: tuple
    label: str
    confidence: float
    age: int = 1
    misses: int = 0
    # box-center displacement per frame, used to predict the next box
    motion: tuple = (0.0, 0.0)

    def predicted_bbox(self) -> tuple:
        du, dv = self.motion
        u0, v0, u1, v1 = self.bbox
        return (u0 + du, v0 + dv, u1 + du, v1 + dv)


class Tracker2D:
    """Two-tier IoU tracker in the style of ByteTrack.

    Tier 1 matches confident detections to all tracks, tier 2 gives the
    remaining tracks a chance at low-confidence detections. Only confident
    unmatched detections start tracks.
    """

    def __init__(self, params: CameraTrackParams):
        self.params = params
        self.tracks: list[Track2D] = []
        self.next_id = 0

    def _match(self, tracks, dets):
        if not tracks or not dets:
            return [], list(range(len(tracks))), list(range(len(dets)))
        iou = np.array([[iou2d(t.predicted_bbox(), d.bbox) for d in dets] for t in tracks])
        pairs = [(i, j) for i, j in hungarian(-iou) if iou[i, j] >= self.params.iou_min]
        ti = {i for i, _ in pairs}
        dj = {j for _, j in pairs}
        return (pairs, [i for i in range(len(tracks)) if i not in ti],
                [j for j in range(len(dets)) if j not in dj])

    @staticmethod
    def _apply(track: Track2D, det: Detection2D) -> None:
        old_c = ((track.bbox[0] + track.bbox[2]) / 2, (track.bbox[1] + track.bbox[3]) / 2)
        new_c = ((det.bbox[0] + det.bbox[2]) / 2, (det.bbox[1] + det.bbox[3]) / 2)
        steps = track.misses + 1
        track.motion = ((new_c[0] - old_c[0]) / steps, (new_c[1] - old_c[1]) / steps)
        track.bbox = det.bbox
        track.confidence = det.confidence
        track.label = det.label
        track.age += 1
        track.misses = 0

    def step(self, dets: list[Detection2D]) -> list[Track2D]:
        hi = [d for d in dets if d.confidence >= self.params.high_conf]
        lo = [d for d in dets if d.confidence < self.params.high_conf]
        pairs, rest, new_hi = self._match(self.tracks, hi)
        for i, j in pairs:
            self._apply(self.tracks[i], hi[j])
        remaining = [self.tracks[i] for i in rest]
        pairs2, unmatched, _ = self._match(remaining, lo)
        for i, j in pairs2:
            self._apply(remaining[i], lo[j])
        for i in unmatched:
            tr = remaining[i]
            tr.misses += 1
            tr.bbox = tr.predicted_bbox()
        self.tracks = [t for t in self.tracks if t.misses <= self.params.m2_die]
        for j in new_hi:
            d = hi[j]
            self.tracks.append(Track2D(self.next_id, d.bbox, d.label, d.confidence))
            self.next_id += 1
        return self.tracks


def track2d(prev: Tracker2D, dets: list[Detection2D]) -> list[Track2D]:
    return prev.step(dets)


# -- depth segmentation ------------------------------------------------------------

@dataclass
class Segment:
    mask: np.ndarray
    seed_on_background: bool = False
    seed: tuple | None = None

    @property
    def size(self) -> int:
        return int(self.mask.sum())


def bfs_segment(seed, depth: DepthImage, tau_depth: float) -> Segment:
    """Region of 4-connected pixels reachable from ``seed`` (u, v) through depth steps <= tau.

    Reachability is computed by labelling an edge-refined grid: pixel nodes sit
    at even coordinates and a link node between two pixels is set when their
    depth difference is within tolerance. This is the same set a breadth-first
    flood fill visits, independent of visit order.
    """
    u, v = seed
    d = depth.depth
    valid = depth.valid()
    h, w = d.shape
    if not (0 <= v < h and 0 <= u < w) or not valid[v, u]:
        return Segment(np.zeros_like(valid), True, seed)
    # label inside a window around the seed and widen it until the region
    # stays clear of every window edge that is not an image edge
    half = 32
    while True:
        v0, v1 = max(0, v - half), min(h, v + half + 1)
        u0, u1 = max(0, u - half), min(w, u + half + 1)
        sub = _component(d[v0:v1, u0:u1], valid[v0:v1, u0:u1], v - v0, u - u0, tau_depth)
        open_edge = ((v0 > 0 and sub[0].any()) or (v1 < h and sub[-1].any())
                     or (u0 > 0 and sub[:, 0].any()) or (u1 < w and sub[:, -1].any()))
        if not open_edge:
            break
        half *= 2
    mask = np.zeros_like(valid)
    mask[v0:v1, u0:u1] = sub
    return Segment(mask, False, seed)


def _component(d: np.ndarray, valid: np.ndarray, v: int, u: int, tau_depth: float) -> np.ndarray:
    h, w = d.shape
    grid = np.zeros((2 * h - 1, 2 * w - 1), dtype=bool)
    grid[::2, ::2] = valid
    grid[::2, 1::2] = valid[:, :-1] & valid[:, 1:] & (np.abs(d[:, 1:] - d[:, :-1]) <= tau_depth)
    grid[1::2, ::2] = valid[:-1, :] & valid[1:, :] & (np.abs(d[1:, :] - d[:-1, :]) <= tau_depth)
    labels, _ = ndimage.label(grid)
    return labels[::2, ::2] == labels[2 * v, 2 * u]


def find_seed(depth: DepthImage, bbox, search: int = 5):
    """Box-center pixel, or the nearest valid pixel within ``search`` px (square rings)."""
    u = int(round((bbox[0] + bbox[2]) / 2))
    v = int(round((bbox[1] + bbox[3]) / 2))
    h, w = depth.depth.shape
    valid = depth.valid()
    for ring in range(search + 1):
        for dv in range(-ring, ring + 1):
            for du in range(-ring, ring + 1):
                if max(abs(du), abs(dv)) != ring:
                    continue
                uu, vv = u + du, v + dv
                if 0 <= uu < w and 0 <= vv < h and valid[vv, uu]:
                    return uu, vv
    return u, v


@dataclass(frozen=True)
class Estimate3D:
    position: np.ndarray  # world frame
    radius: float
    n_points: int
    method: str = "sphere"


def fit_sphere(pts: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Algebraic least-squares sphere through points: |p|^2 = 2 c.p + k."""
    A = np.hstack([2.0 * pts, np.ones((len(pts), 1))])
    b = np.einsum("ij,ij->i", pts, pts)
    sol, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
    if rank < 4 or sv[-1] < 1e-9 * sv[0]:
        return None
    c = sol[:3]
    r2 = sol[3] + c @ c
    if not r2 > 0:
        return None
    return c, float(math.sqrt(r2))


def mean_distance_estimate(pts: np.ndarray) -> tuple[np.ndarray, float]:
    """Centroid pushed back by r/2 along the view ray, r = 1.5 x mean spread.

    For a sphere seen as a disk of visible points the mean distance from the
    centroid is about 2r/3, hence the 3/2 factor.
    """
    c = pts.mean(axis=0)
    radius = 1.5 * float(np.linalg.norm(pts - c, axis=1).mean())
    return c + 0.5 * radius * c / np.linalg.norm(c), radius


def estimate_3d(mask: np.ndarray, depth: DepthImage, cam: CameraModel, n_min: int = 20) -> Estimate3D | None:
    """World-frame center and radius of a segmented blob, or None if too small.

    A sphere is fitted to the back-projected points. When the fit is
    degenerate (flat or shallow blobs) or disagrees with the blob's spread by
    more than 2x, the mean-distance estimate is used instead.
    """
    vs, us = np.nonzero(mask)
    if len(us) < n_min:
        return None
    pts = backproject(cam, us, vs, depth.depth[vs, us])
    c_md, r_md = mean_distance_estimate(pts)
    if r_md <= 0:
        return None
    fit = fit_sphere(pts)
    if fit is not None:
        c_fit, r_fit = fit
        # the fitted center must lie behind the visible surface
        if 0.5 * r_md <= r_fit <= 2.0 * r_md and np.linalg.norm(c_fit) > np.linalg.norm(pts.mean(axis=0)):
            return Estimate3D(cam.camera_to_world(c_fit), r_fit, len(us), "sphere")
    return Estimate3D(cam.camera_to_world(c_md), r_md, len(us), "mean_distance")


# -- velocity ----------------------------------------------------------------------

def lsq_slope(times: np.ndarray, positions: np.ndarray) -> np.ndarray:
    t = times - times.mean()
    denom = float(t @ t)
    if denom <= 0:
        return np.zeros(positions.shape[1])
    return t @ (positions - positions.mean(axis=0)) / denom


def camera_velocity(positions, times, k_c: int = 5, lambda_v: float = 0.5,
                    previous: np.ndarray | None = None) -> tuple[np.ndarray, bool]:
    """Smoothed velocity from recent positions; returns (velocity, estimated)."""
    positions = np.asarray(positions, dtype=float)
    times = np.asarray(times, dtype=float)
    if len(positions) < 2:
        return np.zeros(3), False
    raw = lsq_slope(times[-k_c:], positions[-k_c:])
    if previous is None:
        return raw, True
    return lambda_v * raw + (1.0 - lambda_v) * previous, True


@dataclass
class CameraObstacle:
    track_id: int
    position: np.ndarray
    velocity: np.ndarray
    radius: float
    n_points: int
    time: float
    velocity_valid: bool = False
    # LiDAR identity once bridged
    id: int | None = None
    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    velocities: list = field(default_factory=list)

    def window(self):
        return np.array(self.times), np.array(self.positions), np.array(self.velocities)


class CameraPerception:
    """Per-trial camera pipeline: 2D tracking, segmentation, 3D estimate, velocity."""

    def __init__(self, params: CameraTrackParams, history: int = 10):
        self.params = params
        self.tracker = Tracker2D(params)
        self.history = history
        self._hist: dict[int, deque] = {}
        self._vel: dict[int, np.ndarray] = {}

    def step(self, depth: DepthImage, dets: list[Detection2D], cam: CameraModel, t: float) -> list[CameraObstacle]:
        p = self.params
        tracks = self.tracker.step(dets)
        alive = {tr.id for tr in tracks}
        for tid in list(self._hist):
            if tid not in alive:
                del self._hist[tid]
                self._vel.pop(tid, None)
        out = []
        for tr in tracks:
            if tr.misses:
                continue
            seed = find_seed(depth, tr.bbox, p.seed_search)
            seg = bfs_segment(seed, depth, p.tau_depth)
            if seg.seed_on_background:
                continue
            est = estimate_3d(seg.mask, depth, cam, p.n_min)
            if est is None:
                continue
            hist = self._hist.setdefault(tr.id, deque(maxlen=self.history))
            hist.append((t, est.position, None))
            times = [h[0] for h in hist]
            positions = [h[1] for h in hist]
            vel, ok = camera_velocity(positions, times, p.k_c, p.lambda_v, self._vel.get(tr.id))
            if ok:
                self._vel[tr.id] = vel
            hist[-1] = (t, est.position, vel)
            out.append(CameraObstacle(
                tr.id, est.position, vel, est.radius, est.n_points, t, ok,
                times=times, positions=positions, velocities=[h[2] for h in hist],
            ))
        return out


def bridge(obstacles: list[CameraObstacle], target_id: int, target_position: np.ndarray,
           radius: float = 0.5) -> CameraObstacle | None:
    """Camera obstacle closest to the LiDAR target within ``radius``; it inherits the id."""
    best, best_d = None, radius
    for ob in obstacles:
        d = float(np.linalg.norm(ob.position - target_position))
        if d <= best_d:
            best, best_d = ob, d
    if best is not None:
        best.id = target_id
    return best
