"""Threat scoring, time-to-collision, target hysteresis and LiDAR/camera fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ThreatParams


def closing_speed(dp: np.ndarray, v_rel: np.ndarray) -> float:
    """Rate at which the distance shrinks; positive when approaching.

    ``dp`` is obstacle minus robot position, ``v_rel`` obstacle minus robot velocity.
    """
    n = float(np.linalg.norm(dp))
    if n == 0.0:
        return 0.0
    return -float(np.dot(v_rel, dp)) / n


def threat(dp: np.ndarray, v_rel: np.ndarray, params: ThreatParams) -> float:
    """Distance-normalized approach speed blended with a proximity prior."""
    d = float(np.linalg.norm(dp)) + params.eps
    closing = max(0.0, closing_speed(dp, v_rel))
    return params.alpha * closing / d + (1.0 - params.alpha) * (params.r_safe / d) ** params.gamma


def ttc(dp: np.ndarray, v_rel: np.ndarray, eps: float = 1e-3) -> float:
    """Constant-velocity time to contact; about |dp|/eps when not closing."""
    return float(np.linalg.norm(dp)) / (max(0.0, closing_speed(dp, v_rel)) + eps)


@dataclass
class TargetSelector:
    """Active-target hysteresis: a challenger must dominate for ``n_switch`` steps in a row."""

    n_switch: int = 5
    active: int | None = None
    challenger: int | None = None
    counter: int = 0

    def update(self, threats: dict[int, float]) -> int | None:
        if not threats:
            self.active, self.challenger, self.counter = None, None, 0
            return None
        if self.active not in threats:
            # argmax, ties to the lower id
            self.active = min(threats, key=lambda i: (-threats[i], i))
            self.challenger, self.counter = None, 0
            return self.active
        t_active = threats[self.active]
        above = {i: t for i, t in threats.items() if i != self.active and t > t_active}
        if not above:
            self.challenger, self.counter = None, 0
            return self.active
        best = min(above, key=lambda i: (-above[i], i))
        self.counter = self.counter + 1 if best == self.challenger else 1
        self.challenger = best
        if self.counter >= self.n_switch:
            self.active, self.challenger, self.counter = best, None, 0
        return self.active


def select_target(history: list[dict[int, float]], params: ThreatParams) -> int | None:
    """Replay a sequence of per-step LiDAR threat maps and return the final active target."""
    sel = TargetSelector(params.n_switch)
    active = None
    for threats in history:
        active = sel.update(threats)
    return active


def fuse(t_lidar: float, t_camera: float | None, camera_age: int = 0, stale_frames: int = 3) -> float:
    """Camera threat replaces the LiDAR one while the camera estimate is fresh."""
    if t_camera is None or camera_age > stale_frames:
        return t_lidar
    return t_camera


@dataclass
class ThreatReport:
    time: float
    lidar: dict[int, float] = field(default_factory=dict)
    camera: dict[int, float] = field(default_factory=dict)
    fused: dict[int, float] = field(default_factory=dict)
    active: int | None = None
    counter: int = 0

    @property
    def active_fused(self) -> float:
        return self.fused.get(self.active, 0.0) if self.active is not None else 0.0

    @property
    def active_lidar(self) -> float:
        return self.lidar.get(self.active, 0.0) if self.active is not None else 0.0

    @property
    def max_lidar(self) -> float:
        return max(self.lidar.values(), default=0.0)

    @property
    def active_camera(self) -> float | None:
        return self.camera.get(self.active) if self.active is not None else None
