"""Deterministic stepped world: robot kinematics, obstacle motion, collisions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ConfigError, RobotSpec, ScenarioConfig
from .core import Command, RobotState, vec3, wrap_angle

GRAVITY = 9.81
TRAJECTORIES = ("linear", "ballistic", "waypoint", "sudden")


def label_for_radius(radius: float) -> str:
    """Detector class label. Shapes stay spheres; the label only drives detection."""
    if radius >= 0.22:
        return "human"
    if radius <= 0.1:
        return "stick"
    return "ball"


@dataclass(frozen=True)
class ObstacleTruth:
    id: int
    position: np.ndarray
    velocity: np.ndarray
    radius: float
    trajectory: str = "linear"
    active: bool = True
    label: str = "ball"
    # remaining waypoints for "waypoint" obstacles
    waypoints: tuple = ()
    speed: float = 0.0
    # time of the velocity jump and its factor for "sudden" obstacles
    boost_time: float = math.inf
    boost_factor: float = 1.0
    bearing: float = 0.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("obstacle radius must be positive")


@dataclass(frozen=True)
class WorldState:
    time: float
    robot: RobotState
    obstacles: tuple[ObstacleTruth, ...] = ()
    collided: bool = False


def _sample_trajectory(rng: np.random.Generator, weights: dict[str, float]) -> str:
    names = [n for n in TRAJECTORIES if weights.get(n, 0.0) > 0]
    w = np.array([weights[n] for n in names], dtype=float)
    return names[int(rng.choice(len(names), p=w / w.sum()))]


def spawn_scenario(config: ScenarioConfig) -> WorldState:
    """Initial world for ``config.seed``: robot at rest at the origin, obstacles aimed at it."""
    sp = config.spawn
    robot_spec = config.robot
    if sp.speed_max <= 0 or sp.range_min / sp.speed_max > config.duration:
        raise ConfigError("spawn ranges cannot produce an obstacle reaching the robot within the duration")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5EED]))
    robot = RobotState(vec3(0.0, 0.0, robot_spec.body_height), vec3(), 0.0, 0.0)
    obstacles = []
    for i in range(sp.count):
        bearing = float(rng.uniform(sp.direction_min, sp.direction_max))
        rng_m = float(rng.uniform(sp.range_min, sp.range_max))
        speed = float(rng.uniform(sp.speed_min, sp.speed_max))
        radius = float(rng.uniform(sp.radius_min, sp.radius_max))
        kind = _sample_trajectory(rng, sp.type_weights)
        offset = float(rng.uniform(-sp.aim_offset, sp.aim_offset))
        # draws below are always made so the stream does not depend on the type
        launch = float(rng.uniform(sp.launch_height_min, sp.launch_height_max))
        detour = float(rng.uniform(0.6, 1.5)) * (1.0 if rng.uniform() < 0.5 else -1.0)
        dwell = float(rng.uniform(0.3, 0.7))
        boost = float(rng.uniform(sp.boost_min, sp.boost_max))

        heading = robot.yaw + bearing
        radial = np.array([math.cos(heading), math.sin(heading), 0.0])
        lateral = np.array([-math.sin(heading), math.cos(heading), 0.0])
        target = robot.position + offset * lateral
        start = robot.position + rng_m * radial
        travel = target - start
        t_hit = rng_m / max(speed, 1e-9)
        obs = dict(id=i, radius=radius, trajectory=kind, label=label_for_radius(radius),
                   speed=speed, bearing=bearing)
        if kind == "ballistic":
            start = start + np.array([0.0, 0.0, launch])
            t_hit = min(t_hit, sp.ballistic_flight_max)
            vz = (target[2] - start[2] + 0.5 * GRAVITY * t_hit**2) / t_hit
            vel = np.array([travel[0] / t_hit, travel[1] / t_hit, vz])
            obstacles.append(ObstacleTruth(position=start, velocity=vel, **obs))
        elif kind == "waypoint":
            mid = start + 0.5 * travel + detour * lateral
            vel = speed * (mid - start) / np.linalg.norm(mid - start)
            obstacles.append(ObstacleTruth(position=start, velocity=vel, waypoints=(mid, target), **obs))
        elif kind == "sudden":
            vel = speed * travel / np.linalg.norm(travel)
            obstacles.append(ObstacleTruth(position=start, velocity=vel, boost_time=dwell * t_hit,
                                           boost_factor=boost, **obs))
        else:
            obstacles.append(ObstacleTruth(position=start, velocity=speed * travel / np.linalg.norm(travel), **obs))
    world = WorldState(0.0, robot, tuple(obstacles), False)
    return replace(world, collided=check_collision(world, robot_spec.radius)[0])


def check_collision(state: WorldState, robot_radius: float) -> tuple[bool, float]:
    """Collision flag and surface clearance (+inf when no active obstacle)."""
    clearance = math.inf
    p = state.robot.position
    for o in state.obstacles:
        if not o.active:
            continue
        d = float(np.linalg.norm(o.position - p)) - o.radius - robot_radius
        clearance = min(clearance, d)
    return clearance < 0.0, clearance


def step_robot(robot: RobotState, cmd: Command, dt: float, spec: RobotSpec) -> RobotState:
    """First-order velocity tracking with acceleration clamp; semi-implicit Euler."""
    v_des = np.array([cmd.v_ref[0], cmd.v_ref[1], 0.0])
    n = float(np.linalg.norm(v_des))
    if n > spec.v_max:
        v_des *= spec.v_max / n
    dv = v_des - robot.velocity
    dn = float(np.linalg.norm(dv))
    max_dv = spec.a_max * dt
    if dn > max_dv:
        dv *= max_dv / dn
    v = robot.velocity + dv
    s = float(np.linalg.norm(v))
    if s > spec.v_max:
        v *= spec.v_max / s
    rate = min(max(cmd.yaw_rate_ref, -spec.omega_max), spec.omega_max)
    return RobotState(robot.position + v * dt, v, wrap_angle(robot.yaw + rate * dt), rate)


def step_obstacle(o: ObstacleTruth, t: float, dt: float) -> ObstacleTruth:
    if not o.active:
        return o
    if o.trajectory == "ballistic":
        acc = np.array([0.0, 0.0, -GRAVITY])
        # exact for constant acceleration
        p = o.position + o.velocity * dt + 0.5 * acc * dt * dt
        v = o.velocity + acc * dt
        active = p[2] > o.radius
        return replace(o, position=p, velocity=v if active else np.zeros(3), active=active)
    if o.trajectory == "sudden" and t + dt > o.boost_time:
        o = replace(o, velocity=o.velocity * o.boost_factor, boost_time=math.inf)
    if o.trajectory == "waypoint" and o.waypoints:
        wp = o.waypoints[0]
        to_wp = wp - o.position
        dist = float(np.linalg.norm(to_wp))
        step = o.speed * dt
        if dist <= step:
            rest = o.waypoints[1:]
            if rest:
                direction = rest[0] - wp
            else:
                direction = o.velocity
            direction = direction / max(float(np.linalg.norm(direction)), 1e-12)
            v = o.speed * direction
            return replace(o, position=wp + v * ((step - dist) / max(o.speed, 1e-12)), velocity=v,
                           waypoints=rest)
    return replace(o, position=o.position + o.velocity * dt)


def step_world(state: WorldState, cmd: Command, dt: float, spec: RobotSpec) -> WorldState:
    robot = step_robot(state.robot, cmd, dt, spec)
    obstacles = tuple(step_obstacle(o, state.time, dt) for o in state.obstacles)
    new = WorldState(state.time + dt, robot, obstacles, state.collided)
    if not state.collided:
        new = replace(new, collided=check_collision(new, spec.radius)[0])
    return new
