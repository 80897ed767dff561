"""Threat-aware controller: reorientation, navigation retreat, scored reflex, blending."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ControlGains, RobotSpec, ThreatParams
from .core import Command, RobotState, wrap_angle

MANEUVERS = ("dodge_left", "dodge_right", "retreat_burst")


def schedule_g(T: float, params: ThreatParams) -> float:
    """Monotone map from threat to blend factor: linear ramp between t_lo and t_hi."""
    return min(1.0, max(0.0, (T - params.t_lo) / (params.t_hi - params.t_lo)))


def reorient(robot: RobotState, target_dp: np.ndarray, t_lidar: float, t_fused: float,
             gains: ControlGains) -> float:
    """Yaw-rate reference turning toward the target, scaled by the LiDAR-over-fused threat gap."""
    gap = max(0.0, t_lidar - t_fused)
    if gap == 0.0:
        return 0.0
    phi = math.atan2(target_dp[1], target_dp[0])
    rate = gains.k_psi * gap * wrap_angle(phi - robot.yaw)
    return min(gains.yaw_sat, max(-gains.yaw_sat, rate))


def navigate(robot: RobotState, obstacle_position: np.ndarray, t_camera: float, gains: ControlGains,
             params: ThreatParams, previous_dir: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Planar retreat reference away from the obstacle; returns (v_ref, retreat direction)."""
    away = (robot.position - obstacle_position)[:2]
    n = float(np.linalg.norm(away))
    if n < 1e-9:
        u = np.array([1.0, 0.0]) if previous_dir is None else previous_dir
    else:
        u = away / n
    speed = gains.k_r_min + (gains.k_r_max - gains.k_r_min) * schedule_g(t_camera, params)
    return speed * u, u


# -- reflex scoring ------------------------------------------------------------------

@dataclass
class Rollout:
    """Simulated robot/obstacle trajectory over a short horizon (planar robot)."""

    robot_pos: np.ndarray  # (H+1, 2), includes the start
    robot_vel: np.ndarray  # (H+1, 2)
    accel: np.ndarray  # (H, 2) commanded accelerations actually applied
    obstacle_pos: np.ndarray  # (H+1, 2)
    obstacle_vel: np.ndarray  # (2,)
    obstacle_radius: float
    robot_radius: float
    dt: float
    prev_accel: np.ndarray
    final_heading_error: float = 0.0
    # accelerations enter the effort terms as multiples of this scale
    accel_scale: float = 1.0

    def clearance(self) -> np.ndarray:
        d = np.linalg.norm(self.obstacle_pos - self.robot_pos, axis=1)
        return d - self.obstacle_radius - self.robot_radius


def reward_terms(ro: Rollout, r_safe: float) -> dict[str, float]:
    """Unweighted composite-reward terms for one rollout."""
    dt = ro.dt
    safe = -math.exp(-float(ro.clearance().min()) / r_safe)
    # velocity toward the obstacle is penalized at every step
    rel = ro.obstacle_pos[1:] - ro.robot_pos[1:]
    dist = np.linalg.norm(rel, axis=1)
    toward = np.einsum("ij,ij->i", ro.robot_vel[1:], rel) / np.maximum(dist, 1e-9)
    dir_pen = -float(np.maximum(toward, 0.0).sum() * dt)
    # net displacement away from the obstacle's approach line
    vn = float(np.linalg.norm(ro.obstacle_vel))
    line_dir = ro.obstacle_vel / vn if vn > 1e-9 else None
    if line_dir is None:
        rel0 = ro.robot_pos[0] - ro.obstacle_pos[0]
        gain = float(np.linalg.norm(ro.robot_pos[-1] - ro.obstacle_pos[0]) - np.linalg.norm(rel0))
    else:
        def off_line(p):
            r = p - ro.obstacle_pos[0]
            return abs(r[0] * line_dir[1] - r[1] * line_dir[0])
        gain = off_line(ro.robot_pos[-1]) - off_line(ro.robot_pos[0])
    acc = ro.accel / ro.accel_scale
    da = np.diff(np.vstack([ro.prev_accel / ro.accel_scale, acc]), axis=0)
    return {
        "safe": safe,
        "dir": dir_pen + gain,
        "ene": -float(np.einsum("ij,ij->", acc, acc) * dt),
        "stab": -float(np.einsum("ij,ij->", da, da) * dt),
        "rec": -(float(np.linalg.norm(ro.robot_vel[-1])) + abs(ro.final_heading_error)),
    }


def reward_eval(ro: Rollout, gains: ControlGains, T: float, params: ThreatParams) -> float:
    terms = reward_terms(ro, params.r_safe)
    total = (gains.lam_safe * terms["safe"] + gains.lam_dir * terms["dir"] + gains.lam_ene * terms["ene"]
             + gains.lam_stab * terms["stab"] + gains.lam_rec * terms["rec"])
    return schedule_g(T, params) * total


def rollout(robot: RobotState, v_cmd: np.ndarray, obstacle_pos: np.ndarray, obstacle_vel: np.ndarray,
            obstacle_radius: float, spec: RobotSpec, dt: float, horizon: float,
            prev_accel: np.ndarray) -> Rollout:
    """Constant velocity command under the simulator's acceleration clamp; obstacle at constant velocity."""
    n = max(1, int(round(horizon / dt)))
    p = robot.position[:2].astype(float).copy()
    v = robot.velocity[:2].astype(float).copy()
    cmd = np.asarray(v_cmd, dtype=float)
    c = float(np.linalg.norm(cmd))
    if c > spec.v_max:
        cmd = cmd * (spec.v_max / c)
    P = np.empty((n + 1, 2))
    V = np.empty((n + 1, 2))
    A = np.empty((n, 2))
    P[0], V[0] = p, v
    max_dv = spec.a_max * dt
    for k in range(n):
        dv = cmd - v
        dn = math.hypot(dv[0], dv[1])
        if dn > max_dv:
            dv = dv * (max_dv / dn)
        A[k] = dv / dt
        v = v + dv
        p = p + v * dt
        P[k + 1], V[k + 1] = p, v
    steps = np.arange(n + 1)[:, None] * dt
    O = obstacle_pos[None, :2] + steps * obstacle_vel[None, :2]
    return Rollout(P, V, A, O, np.asarray(obstacle_vel[:2], dtype=float), obstacle_radius, spec.radius, dt,
                   np.asarray(prev_accel, dtype=float).reshape(1, 2), accel_scale=spec.a_max)


def maneuver_directions(robot: RobotState, obstacle_pos: np.ndarray, mix: float) -> dict[str, np.ndarray]:
    """Unit planar directions of the maneuver library, relative to the obstacle bearing."""
    to_obs = (obstacle_pos - robot.position)[:2]
    n = float(np.linalg.norm(to_obs))
    d = to_obs / n if n > 1e-9 else np.array([1.0, 0.0])
    away = -d
    left = np.array([-d[1], d[0]])
    out = {}
    for name, side in (("dodge_left", left), ("dodge_right", -left)):
        v = side + mix * away
        out[name] = v / np.linalg.norm(v)
    out["retreat_burst"] = away
    return out


def reflex_select(robot: RobotState, obstacle_pos: np.ndarray, obstacle_vel: np.ndarray, obstacle_radius: float,
                  T: float, gains: ControlGains, params: ThreatParams, spec: RobotSpec, dt: float,
                  prev_accel: np.ndarray | None = None) -> tuple[str, np.ndarray, dict[str, float]]:
    """Score each maneuver primitive by rollout and return (tag, v_ref, scores).

    Primitives are rolled out at full speed so the ranking does not vanish with
    the threat; the chosen command is then scaled by g(T). Ties keep the
    earlier primitive in library order.
    """
    g = schedule_g(T, params)
    prev_accel = np.zeros(2) if prev_accel is None else prev_accel
    dirs = maneuver_directions(robot, obstacle_pos, gains.dodge_away_mix)
    scores = {}
    # score with the ramp saturated; g(T) multiplies every score equally
    t_score = params.t_hi
    for name in MANEUVERS:
        ro = rollout(robot, spec.v_max * dirs[name], obstacle_pos, obstacle_vel, obstacle_radius, spec, dt,
                     gains.rollout_horizon, prev_accel)
        scores[name] = reward_eval(ro, gains, t_score, params)
    best = MANEUVERS[0]
    for name in MANEUVERS[1:]:
        if scores[name] > scores[best] + 1e-12 * max(1.0, abs(scores[best])):
            best = name
    return best, g * spec.v_max * dirs[best], scores


def blend(nav: Command, reflex: Command, beta: float, beta_trig: float = 0.5) -> Command:
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    v = (1.0 - beta) * np.asarray(nav.v_ref) + beta * np.asarray(reflex.v_ref)
    w = (1.0 - beta) * nav.yaw_rate_ref + beta * reflex.yaw_rate_ref
    return Command(v, w, beta, reflex.maneuver if beta >= beta_trig else "none")
