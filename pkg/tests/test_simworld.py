import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reflexnav.config import ConfigError, ScenarioConfig, SpawnSpec, apply_overrides
from reflexnav.core import Command, RobotState, vec3
from reflexnav.simworld import GRAVITY, ObstacleTruth, WorldState, check_collision, spawn_scenario, step_world


def world_with(*obstacles, robot=None):
    robot = robot or RobotState(vec3(0, 0, 0.3), vec3(), 0.0, 0.0)
    return WorldState(0.0, robot, tuple(obstacles), False)


def test_spawn_is_deterministic():
    a = spawn_scenario(ScenarioConfig(seed=42))
    b = spawn_scenario(ScenarioConfig(seed=42))
    assert len(a.obstacles) == len(b.obstacles)
    for x, y in zip(a.obstacles, b.obstacles):
        assert x.position.tobytes() == y.position.tobytes()
        assert x.velocity.tobytes() == y.velocity.tobytes()
        assert (x.radius, x.trajectory, x.label) == (y.radius, y.trajectory, y.label)


def test_spawn_rear_range_contained():
    for seed in range(50):
        cfg = apply_overrides(ScenarioConfig(seed=seed),
                              [f"spawn.direction_min={math.pi - 0.1}", f"spawn.direction_max={math.pi + 0.1}"])
        w = spawn_scenario(cfg)
        for o in w.obstacles:
            assert math.pi - 0.1 <= o.bearing <= math.pi + 0.1
            rel = o.position[:2] - w.robot.position[:2]
            assert abs(abs(math.atan2(rel[1], rel[0])) - math.pi) <= 0.1 + 1e-9


def test_spawn_degenerate_speed_range():
    spawn = SpawnSpec(speed_min=1.0, speed_max=1.0, type_weights={"linear": 1.0})
    for seed in range(20):
        w = spawn_scenario(ScenarioConfig(seed=seed, spawn=spawn))
        for o in w.obstacles:
            assert np.linalg.norm(o.velocity) == pytest.approx(1.0, abs=1e-12)


def test_spawn_aims_at_robot_within_duration():
    cfg = ScenarioConfig(spawn=SpawnSpec(type_weights={"linear": 1.0}, aim_offset=0.0))
    for seed in range(20):
        w = spawn_scenario(replace(cfg, seed=seed))
        o = w.obstacles[0]
        rel = w.robot.position - o.position
        t_hit = (rel @ o.velocity) / (o.velocity @ o.velocity)
        miss = rel - o.velocity * t_hit
        assert 0 < t_hit <= cfg.duration
        assert np.linalg.norm(miss) < 1e-9


def test_spawn_rejects_unreachable_ranges():
    spawn = SpawnSpec(range_min=50.0, range_max=60.0, speed_min=1.0, speed_max=1.0)
    with pytest.raises(ConfigError):
        spawn_scenario(ScenarioConfig(spawn=spawn))


def test_config_rejects_inverted_range():
    with pytest.raises(ConfigError):
        SpawnSpec(speed_min=3.0, speed_max=1.0)


def test_zero_command_static_obstacle_is_fixed_point(cfg):
    o = ObstacleTruth(0, vec3(3, 0, 0.3), vec3(), 0.2)
    w = world_with(o)
    n = step_world(w, Command(), cfg.dt, cfg.robot)
    assert np.array_equal(n.robot.position, w.robot.position)
    assert np.array_equal(n.robot.velocity, w.robot.velocity)
    assert np.array_equal(n.obstacles[0].position, o.position)


def test_linear_obstacle_euler_step(cfg):
    o = ObstacleTruth(0, vec3(3, 0, 0.3), vec3(-1, 0, 0), 0.2)
    n = step_world(world_with(o), Command(), 0.02, cfg.robot)
    assert n.obstacles[0].position[0] == pytest.approx(3 - 0.02, abs=1e-15)


def test_ballistic_vz_drops_by_g_dt(cfg):
    o = ObstacleTruth(0, vec3(3, 0, 5.0), vec3(-1, 0, 2.0), 0.2, trajectory="ballistic")
    n = step_world(world_with(o), Command(), 0.02, cfg.robot)
    assert n.obstacles[0].velocity[2] == pytest.approx(2.0 - GRAVITY * 0.02, abs=1e-12)


def test_ballistic_matches_closed_form_over_5s(cfg):
    p0, v0 = vec3(0, 0, 200.0), vec3(1.0, 0.5, 3.0)
    o = ObstacleTruth(0, p0, v0, 0.2, trajectory="ballistic")
    w = world_with(o, robot=RobotState(vec3(100, 100, 0.3), vec3()))
    for _ in range(250):
        w = step_world(w, Command(), 0.02, cfg.robot)
    t = w.time
    truth = p0 + v0 * t + 0.5 * np.array([0, 0, -GRAVITY]) * t * t
    assert np.linalg.norm(w.obstacles[0].position - truth) < 1e-6
    assert w.obstacles[0].velocity[2] == pytest.approx(v0[2] - GRAVITY * t, abs=1e-9)


def test_sudden_obstacle_scales_velocity(cfg):
    o = ObstacleTruth(0, vec3(5, 0, 0.3), vec3(-1, 0, 0), 0.2, trajectory="sudden", boost_time=0.1,
                      boost_factor=2.0)
    w = world_with(o)
    for _ in range(10):
        w = step_world(w, Command(), 0.02, cfg.robot)
    assert w.obstacles[0].velocity[0] == pytest.approx(-2.0)


def test_clearance_arithmetic():
    w = world_with(ObstacleTruth(0, vec3(5, 0, 0.3), vec3(), 0.2))
    assert check_collision(w, 0.3) == (False, pytest.approx(4.5))


def test_coincident_centers_collide():
    w = world_with(ObstacleTruth(0, vec3(0, 0, 0.3), vec3(), 0.2))
    collided, clearance = check_collision(w, 0.3)
    assert collided and clearance < 0


def test_no_obstacles_infinite_clearance():
    assert check_collision(world_with(), 0.3) == (False, math.inf)


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=40))
def test_kinematic_bounds_hold(cmds):
    cfg = ScenarioConfig()
    w = world_with()
    for vx, vy, wz in cmds:
        w = step_world(w, Command(np.array([vx, vy]), wz), cfg.dt, cfg.robot)
        assert np.linalg.norm(w.robot.velocity) <= cfg.robot.v_max + 1e-12
        assert abs(w.robot.yaw_rate) <= cfg.robot.omega_max
        assert -math.pi < w.robot.yaw <= math.pi


def test_collision_latches(cfg):
    o = ObstacleTruth(0, vec3(0.6, 0, 0.3), vec3(-10, 0, 0), 0.2)
    w = world_with(o)
    flags = []
    for _ in range(30):
        w = step_world(w, Command(), cfg.dt, cfg.robot)
        flags.append(w.collided)
    assert any(flags)
    first = flags.index(True)
    assert all(flags[first:])
    # the obstacle has flown through and away, the latch stays set
    assert not check_collision(w, cfg.robot.radius)[0]
