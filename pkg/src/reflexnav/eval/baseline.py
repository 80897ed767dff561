"""Reactive raw-point-cloud baseline: repulsive potential field, no tracking."""

from __future__ import annotations

import numpy as np

from ..config import LidarTrackParams, RaycastParams
from ..core import Command, PointCloud, RobotState
from ..lidar_percept import roi_filter


def raycast_baseline(cloud: PointCloud, robot: RobotState, params: RaycastParams | None = None,
                     v_max: float = 1.5, roi: LidarTrackParams | None = None,
                     filtered: bool = False) -> Command:
    """Velocity away from nearby returns, weighted by inverse distance.

    The repulsion is the mean of (p_robot - p_i)/|p_robot - p_i|^2 over ROI
    points within ``params.influence`` (planar), times ``params.gain``,
    capped at ``v_max``. Yaw rate and blend factor are always zero.
    """
    params = params or RaycastParams()
    if not filtered:
        cloud = roi_filter(cloud, robot, roi or LidarTrackParams())
    pts = cloud.points
    if len(pts) == 0:
        return Command(np.zeros(2), 0.0, 0.0, "none")
    rel = robot.position[:2] - pts[:, :2]
    d2 = np.einsum("ij,ij->i", rel, rel)
    near = (d2 <= params.influence**2) & (d2 > 1e-12)
    if not near.any():
        return Command(np.zeros(2), 0.0, 0.0, "none")
    force = (rel[near] / d2[near, None]).mean(axis=0)
    v = params.gain * force
    n = float(np.linalg.norm(v))
    if n > v_max:
        v *= v_max / n
    return Command(v, 0.0, 0.0, "none")
