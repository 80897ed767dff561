"""Synthetic LiDAR, depth camera and 2D detector driven by ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import DetectorSpec, LidarSpec
from .core import CameraModel, PointCloud, rot_z
from .simworld import WorldState

__all__ = [
    "LidarSpec",
    "Detection2D",
    "DepthImage",
    "render_lidar",
    "render_depth",
    "synthetic_detector",
    "sphere_bbox",
]


@dataclass(frozen=True)
class Detection2D:
    label: str
    bbox: tuple[float, float, float, float]  # u_min, v_min, u_max, v_max
    confidence: float
    time: float

    def __post_init__(self):
        u0, v0, u1, v1 = self.bbox
        if not (u0 < u1 and v0 < v1):
            raise ValueError(f"degenerate bbox {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class DepthImage:
    depth: np.ndarray  # (height, width); 0 = no return
    timestamp: float
    far: float

    def valid(self) -> np.ndarray:
        return (self.depth > 0) & (self.depth < self.far)


@lru_cache(maxsize=8)
def _ray_grid(n_az: int, n_el: int, el_min: float, el_max: float) -> np.ndarray:
    az = np.arange(n_az) * (2.0 * math.pi / n_az)
    el = np.array([0.5 * (el_min + el_max)]) if n_el == 1 else np.linspace(el_min, el_max, n_el)
    A, E = np.meshgrid(az, el, indexing="ij")
    dirs = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1)
    dirs = dirs.reshape(-1, 3)
    dirs.setflags(write=False)
    return dirs


def _ray_spheres(origin: np.ndarray, dirs: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Nearest positive hit distance per unit ray over all spheres (inf on miss)."""
    best = np.full(len(dirs), np.inf)
    for c, r in zip(centers, radii):
        oc = origin - c
        b = dirs @ oc
        disc = b * b - (oc @ oc - r * r)
        hit = disc >= 0
        if not hit.any():
            continue
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t0 = -b - sq
        t1 = -b + sq
        t = np.where(t0 > 1e-9, t0, np.where(t1 > 1e-9, t1, np.inf))
        t = np.where(hit, t, np.inf)
        np.minimum(best, t, out=best)
    return best


def render_lidar(world: WorldState, spec: LidarSpec, rng: np.random.Generator) -> PointCloud:
    """Instantaneous spinning-grid scan of obstacle spheres and the ground plane z=0."""
    robot = world.robot
    origin = robot.position + np.array([0.0, 0.0, spec.mount_height])
    dirs = _ray_grid(spec.rays_azimuth, spec.rays_elevation, spec.elevation_min, spec.elevation_max)
    dirs = dirs @ rot_z(robot.yaw).T
    active = [o for o in world.obstacles if o.active]
    if active:
        centers = np.array([o.position for o in active])
        radii = np.array([o.radius for o in active])
        t = _ray_spheres(origin, dirs, centers, radii)
    else:
        t = np.full(len(dirs), np.inf)
    down = dirs[:, 2] < -1e-12
    t_ground = np.where(down, -origin[2] / np.where(down, dirs[:, 2], -1.0), np.inf)
    t = np.minimum(t, np.where(t_ground > 0, t_ground, np.inf))
    # noise and dropout are drawn for every ray so the stream is scene-independent
    noise = rng.standard_normal(len(dirs)) * spec.range_noise
    keep = rng.random(len(dirs)) >= spec.dropout
    hit = np.isfinite(t) & (t <= spec.max_range) & keep
    if spec.range_noise > 0:
        t = t + noise
        hit &= t > 0
    pts = origin + dirs[hit] * t[hit, None]
    return PointCloud(world.time, pts)


def sphere_bbox(cam: CameraModel, center_world: np.ndarray, radius: float):
    """Exact pixel bounding box of a sphere's silhouette, or None when not in front.

    Bounds come from the tangent planes through the camera's x and y axes.
    Returned unclipped; callers clip to the image.
    """
    x, y, z = cam.world_to_camera(center_world)
    rho_x = math.hypot(x, z)
    rho_y = math.hypot(y, z)
    if z <= radius or rho_x <= radius or rho_y <= radius:
        return None
    ax, dx = math.atan2(x, z), math.asin(radius / rho_x)
    ay, dy = math.atan2(y, z), math.asin(radius / rho_y)
    if ax + dx >= math.pi / 2 or ax - dx <= -math.pi / 2 or ay + dy >= math.pi / 2 or ay - dy <= -math.pi / 2:
        return None
    u0 = cam.fx * math.tan(ax - dx) + cam.cx
    u1 = cam.fx * math.tan(ax + dx) + cam.cx
    v0 = cam.fy * math.tan(ay - dy) + cam.cy
    v1 = cam.fy * math.tan(ay + dy) + cam.cy
    return u0, v0, u1, v1


def _pixel_window(cam: CameraModel, bbox):
    u0, v0, u1, v1 = bbox
    i0, i1 = max(0, math.floor(u0)), min(cam.width - 1, math.ceil(u1))
    j0, j1 = max(0, math.floor(v0)), min(cam.height - 1, math.ceil(v1))
    if i0 > i1 or j0 > j1:
        return None
    return i0, i1, j0, j1


def render_depth(world: WorldState, cam: CameraModel, rng: np.random.Generator | None = None,
                 far: float = 10.0, noise: float = 0.0) -> DepthImage:
    """Per-pixel z-depth of the nearest sphere; background pixels hold ``far``.

    Pixel (i, j) samples the ray through pixel-center coordinates (u=i, v=j).
    """
    depth = np.full((cam.height, cam.width), far)
    for o in world.obstacles:
        if not o.active:
            continue
        c = cam.world_to_camera(o.position)
        r = o.radius
        bbox = sphere_bbox(cam, o.position, r)
        if bbox is None:
            if c[2] + r <= 0:
                continue
            win = (0, cam.width - 1, 0, cam.height - 1)
        else:
            win = _pixel_window(cam, bbox)
            if win is None:
                continue
        i0, i1, j0, j1 = win
        uu, vv = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1))
        a = (uu - cam.cx) / cam.fx
        b = (vv - cam.cy) / cam.fy
        # ray p = t * (a, b, 1); solve |p - c|^2 = r^2 with z-depth t
        qa = a * a + b * b + 1.0
        qb = a * c[0] + b * c[1] + c[2]
        qc = float(c @ c) - r * r
        disc = qb * qb - qa * qc
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t0 = (qb - sq) / qa
        t1 = (qb + sq) / qa
        t = np.where(t0 > 1e-9, t0, np.where(t1 > 1e-9, t1, np.inf))
        t = np.where(hit, t, np.inf)
        sub = depth[j0:j1 + 1, i0:i1 + 1]
        np.minimum(sub, t, out=sub)
    if noise > 0 and rng is not None:
        surf = depth < far
        n = int(surf.sum())
        if n:
            depth[surf] = np.clip(depth[surf] + rng.standard_normal(n) * noise, 1e-3, far)
    return DepthImage(depth, world.time, far)


def synthetic_detector(world: WorldState, cam: CameraModel, spec: DetectorSpec,
                       rng: np.random.Generator) -> list[Detection2D]:
    """Stand-in for a neural detector: jittered silhouette boxes plus clutter."""
    dets = []
    w, h = cam.width, cam.height
    for o in world.obstacles:
        # fixed number of draws per obstacle keeps the stream aligned
        jitter = rng.standard_normal(4) * spec.corner_noise_px
        drop = rng.random() < spec.false_negative
        conf = spec.confidence_mean + spec.confidence_std * rng.standard_normal()
        if not o.active or drop:
            continue
        bbox = sphere_bbox(cam, o.position, o.radius)
        if bbox is None:
            continue
        u0, v0, u1, v1 = np.array(bbox) + jitter
        area = max(u1 - u0, 1e-9) * max(v1 - v0, 1e-9)
        cu0, cv0 = max(u0, 0.0), max(v0, 0.0)
        cu1, cv1 = min(u1, w - 1.0), min(v1, h - 1.0)
        if cu1 - cu0 < 1.0 or cv1 - cv0 < 1.0:
            continue
        visible = (cu1 - cu0) * (cv1 - cv0) / area
        # truncated objects are reported with lower confidence
        conf = float(np.clip(conf * min(1.0, visible), 0.0, 1.0))
        dets.append(Detection2D(o.label, (cu0, cv0, cu1, cv1), conf, world.time))
    n_fp = rng.poisson(spec.false_positive_rate)
    for _ in range(n_fp):
        cu, cv = rng.uniform(0, w - 1), rng.uniform(0, h - 1)
        half = rng.uniform(3.0, 20.0)
        conf = float(rng.uniform(0.1, 0.6))
        box = (max(cu - half, 0.0), max(cv - half, 0.0), min(cu + half, w - 1.0), min(cv + half, h - 1.0))
        if box[2] - box[0] >= 1.0 and box[3] - box[1] >= 1.0:
            dets.append(Detection2D("ball", box, conf, world.time))
    return dets
