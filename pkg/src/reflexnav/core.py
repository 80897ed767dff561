"""Geometry primitives, frames and the pinhole camera model.

Vectors are plain ``numpy`` float arrays of shape (3,) (or (2,) for planar
quantities). Distances are meters, angles radians, times seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


class NumericalFailure(RuntimeError):
    """A numeric routine produced an invalid state (e.g. non-PSD covariance)."""


def vec3(x=0.0, y=0.0, z=0.0) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.pi - math.fmod(math.pi - a, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    elif w > math.pi:
        w -= TWO_PI
    return w


def unit(v: np.ndarray, fallback: np.ndarray | None = None) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        return np.zeros_like(v) if fallback is None else np.asarray(fallback, dtype=float)
    return v / n


def rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RobotState:
    position: np.ndarray
    velocity: np.ndarray
    yaw: float = 0.0
    yaw_rate: float = 0.0

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))


@dataclass(frozen=True)
class Command:
    """Planar velocity / yaw-rate reference sent to the locomotion layer."""

    v_ref: np.ndarray = field(default_factory=lambda: np.zeros(2))
    yaw_rate_ref: float = 0.0
    beta: float = 0.0
    maneuver: str = "none"


@dataclass(frozen=True)
class Aabb3:
    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        if not np.all(np.asarray(self.half_extents) > 0):
            raise ValueError("Aabb3 half extents must be strictly positive")

    @classmethod
    def from_points(cls, points: np.ndarray, min_half: float = 1e-3) -> "Aabb3":
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        return cls((lo + hi) / 2.0, np.maximum((hi - lo) / 2.0, min_half))

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.half_extents

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.half_extents

    @property
    def volume(self) -> float:
        return float(np.prod(2.0 * self.half_extents))


def aabb_iou3d(a: Aabb3, b: Aabb3) -> float:
    overlap = np.minimum(a.hi, b.hi) - np.maximum(a.lo, b.lo)
    if np.any(overlap <= 0):
        return 0.0
    # roundoff in hi/lo can push the overlap past the smaller box
    inter = min(float(np.prod(overlap)), a.volume, b.volume)
    return min(1.0, inter / (a.volume + b.volume - inter))


@dataclass(frozen=True)
class PointCloud:
    timestamp: float
    points: np.ndarray  # (N, 3), world frame

    def __len__(self) -> int:
        return len(self.points)


class Pixel(NamedTuple):
    u: float
    v: float
    z: float


# Camera axes (x right, y down, z forward) expressed in the robot body frame
# (x forward, y left, z up).
BODY_FROM_CAMERA = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera; ``rotation``/``translation`` map camera to world coordinates."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        r = np.asarray(self.rotation, dtype=float)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with det +1")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov: float, rotation=None, translation=None) -> "CameraModel":
        f = (width / 2.0) / math.tan(hfov / 2.0)
        return cls(
            fx=f,
            fy=f,
            cx=(width - 1) / 2.0,
            cy=(height - 1) / 2.0,
            width=width,
            height=height,
            rotation=np.eye(3) if rotation is None else np.asarray(rotation, dtype=float),
            translation=np.zeros(3) if translation is None else np.asarray(translation, dtype=float),
        )

    @property
    def hfov(self) -> float:
        return 2.0 * math.atan(self.width / (2.0 * self.fx))

    def with_pose(self, rotation: np.ndarray, translation: np.ndarray) -> "CameraModel":
        return CameraModel(self.fx, self.fy, self.cx, self.cy, self.width, self.height,
                           np.asarray(rotation, dtype=float), np.asarray(translation, dtype=float))

    def mounted_on(self, robot: RobotState, forward: float, height: float) -> "CameraModel":
        """Camera rigidly mounted on the robot, looking along its heading."""
        r_wb = rot_z(robot.yaw)
        t = robot.position + r_wb @ np.array([forward, 0.0, height])
        return self.with_pose(r_wb @ BODY_FROM_CAMERA, t)

    def world_to_camera(self, p_world: np.ndarray) -> np.ndarray:
        return (np.asarray(p_world, dtype=float) - self.translation) @ self.rotation

    def camera_to_world(self, p_cam: np.ndarray) -> np.ndarray:
        return np.asarray(p_cam, dtype=float) @ self.rotation.T + self.translation

    def in_bounds(self, u: float, v: float) -> bool:
        return -0.5 <= u <= self.width - 0.5 and -0.5 <= v <= self.height - 0.5


def project(cam: CameraModel, p_world: np.ndarray) -> Pixel | None:
    """Pixel coordinates and camera depth of a world point, or None if out of view."""
    x, y, z = cam.world_to_camera(p_world)
    if z <= 0:
        return None
    u = cam.fx * x / z + cam.cx
    v = cam.fy * y / z + cam.cy
    if not cam.in_bounds(u, v):
        return None
    return Pixel(float(u), float(v), float(z))


def backproject(cam: CameraModel, u, v, z):
    """Camera-frame point(s) for pixel coordinates and depth. Accepts arrays."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("backproject requires strictly positive depth")
    x = (np.asarray(u, dtype=float) - cam.cx) * z / cam.fx
    y = (np.asarray(v, dtype=float) - cam.cy) * z / cam.fy
    return np.stack([x, y, z], axis=-1)
