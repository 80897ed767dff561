import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reflexnav.config import ScenarioConfig, SpawnSpec
from reflexnav.core import PointCloud, RobotState, vec3
from reflexnav.eval import formats, harness
from reflexnav.eval.baseline import raycast_baseline
from reflexnav.eval.harness import SensorRecord, SensorReplay, run_batch, run_trial, summarize
from reflexnav.eval.metrics import (StepLog, compute_metrics, normalized_trigger_lead, quadrant,
                                    surrogate_energy, wilson_interval)
from reflexnav.sensors import Detection2D
from reflexnav.simworld import ObstacleTruth, WorldState


def test_tnl_example():
    assert normalized_trigger_lead(2.0, 1.0, 2.0) == 0.5


def test_energy_example():
    # 10 N on a 1 kg body is 10 m/s^2; at 1 m/s for 2 s
    n = 100
    assert surrogate_energy(1.0, np.full(n, 10.0), np.ones(n), 2.0 / n) == pytest.approx(20.0, abs=1e-9)


def synthetic_log(beta, clearance, speed=None, ttc=None, dt=0.02):
    n = len(beta)
    log = StepLog()
    log.t = list(dt * np.arange(n))
    log.beta = list(beta)
    log.clearance = list(clearance)
    v = np.zeros(n) if speed is None else np.asarray(speed)
    log.vx, log.vy = list(v), list(np.zeros(n))
    log.ttc = list(np.full(n, 2.0) if ttc is None else ttc)
    log.accel = list(np.zeros(n))
    return log


def test_no_trigger_gives_null_tnl():
    m = compute_metrics(synthetic_log(np.zeros(50), np.linspace(3, 1, 50)), 0.02, 15.0)
    assert m.t_trig is None and m.tnl is None and m.energy is None
    assert m.d_min == pytest.approx(1.0)


def test_metrics_on_synthetic_log():
    n = 151
    beta = np.where(np.arange(n) >= 50, 1.0, 0.0)
    clearance = np.abs(np.arange(n) - 100) * 0.01 + 0.2
    m = compute_metrics(synthetic_log(beta, clearance), 0.02, 15.0)
    assert m.t_trig == pytest.approx(1.0) and m.t_closest == pytest.approx(2.0)
    assert m.tnl == pytest.approx(0.5)


def test_empty_log_rejected():
    with pytest.raises(ValueError):
        compute_metrics(StepLog(), 0.02, 15.0)


def test_wilson_interval_reference():
    # 8 of 10 at 95%
    lo, hi = wilson_interval(8, 10)
    assert lo == pytest.approx(0.4901624, abs=1e-6) and hi == pytest.approx(0.9433178, abs=1e-6)


@given(st.integers(1, 500), st.data())
def test_wilson_contains_estimate(n, data):
    s = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(s, n)
    assert 0.0 <= lo <= s / n <= hi <= 1.0


def test_quadrants():
    assert [quadrant(b) for b in (0.0, math.pi / 2, -math.pi / 2, math.pi, 3 * math.pi)] == [
        "front", "left", "right", "rear", "rear"]


def robot_at_origin():
    return RobotState(vec3(0, 0, 0.3), vec3())


def test_raycast_empty_cloud():
    cmd = raycast_baseline(PointCloud(0.0, np.zeros((0, 3))), robot_at_origin())
    assert np.all(cmd.v_ref == 0) and cmd.beta == 0.0


def test_raycast_point_east_pushes_west():
    cmd = raycast_baseline(PointCloud(0.0, np.array([[1.0, 0, 0.3]])), robot_at_origin(), filtered=True)
    assert cmd.v_ref[0] < 0 and cmd.v_ref[1] == 0


def test_raycast_symmetric_points_cancel_laterally():
    pts = np.array([[1.0, 0.5, 0.3], [1.0, -0.5, 0.3]])
    cmd = raycast_baseline(PointCloud(0.0, pts), robot_at_origin(), filtered=True)
    assert cmd.v_ref[1] == pytest.approx(0, abs=1e-15) and cmd.v_ref[0] < 0


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1)), min_size=1, max_size=30))
def test_raycast_capped(pts):
    cmd = raycast_baseline(PointCloud(0.0, np.array(pts)), robot_at_origin(), v_max=1.5, filtered=True)
    assert np.linalg.norm(cmd.v_ref) <= 1.5 + 1e-12


def test_trial_deterministic():
    cfg = ScenarioConfig(seed=11)
    a, b = run_trial(cfg), run_trial(cfg)
    assert a.to_dict() == b.to_dict()
    assert formats.step_log_csv(a.log) == formats.step_log_csv(b.log)


def miss_config():
    spawn = SpawnSpec(range_min=5.0, range_max=5.0, direction_min=0.0, direction_max=0.0, speed_min=2.0,
                      speed_max=2.0, radius_min=0.2, radius_max=0.2, aim_offset=3.0,
                      type_weights={"linear": 1.0})
    return replace(ScenarioConfig(seed=5), spawn=spawn)


def test_geometric_miss_succeeds_without_trigger():
    cfg = miss_config()
    world = harness.spawn_scenario(cfg)
    o = world.obstacles[0]
    # closest approach of the straight path to the robot's start exceeds the combined radius
    u = o.velocity[:2] / np.linalg.norm(o.velocity[:2])
    rel = -o.position[:2]
    miss = abs(rel[0] * u[1] - rel[1] * u[0])
    assert miss > o.radius + cfg.robot.radius + 1.0
    r = run_trial(cfg)
    assert r.success and max(r.log.beta) < cfg.control.beta_trig and r.tnl is None


def test_teleported_obstacle_collides(monkeypatch):
    cfg = ScenarioConfig(seed=0)
    real = harness.spawn_scenario

    def onto_robot(config):
        w = real(config)
        o = replace(w.obstacles[0], position=w.robot.position.copy(), velocity=vec3(), trajectory="linear")
        return replace(w, obstacles=(o,))

    monkeypatch.setattr(harness, "spawn_scenario", onto_robot)
    r = run_trial(cfg)
    assert r.collided and not r.success and r.d_min < 0


def test_unknown_variant_rejected():
    with pytest.raises(ValueError):
        run_trial(ScenarioConfig(), "bogus")


def test_batch_of_one_equals_trial():
    cfg = ScenarioConfig(seed=4)
    rep = run_batch(cfg, ["full"], 1, workers=1)["full"]
    r = run_trial(cfg, keep_log=False)
    assert rep.n_total == 1 and rep.results[0].to_dict() == r.to_dict()
    assert rep.asr == float(r.success)
    if r.success:
        assert rep.d_min["mean"] == round(r.d_min, 9)


def test_all_miss_batch_has_full_asr():
    rep = run_batch(miss_config(), ["full"], 3, workers=1)["full"]
    assert rep.asr == 1.0


def test_batch_independent_of_worker_count():
    cfg = ScenarioConfig(seed=20)
    a = run_batch(cfg, ["full", "no_threat"], 3, workers=1)
    b = run_batch(cfg, ["full", "no_threat"], 3, workers=2)
    assert formats.summary_csv(a) == formats.summary_csv(b)
    assert formats.results_to_jsonl([r for v in a.values() for r in v.results]) == \
        formats.results_to_jsonl([r for v in b.values() for r in v.results])


def test_summary_success_implies_nonnegative_clearance():
    rep = run_batch(ScenarioConfig(seed=30), ["full"], 4, workers=1)["full"]
    assert 0.0 <= rep.asr <= 1.0
    assert all(r.d_min >= 0 for r in rep.results if r.success)


# -- formats ---------------------------------------------------------------------------------

def test_cloud_round_trip():
    rng = np.random.default_rng(0)
    clouds = [PointCloud(0.02 * k, rng.normal(size=(int(rng.integers(0, 50)), 3))) for k in range(5)]
    back = formats.decode_clouds(formats.encode_clouds(clouds))
    assert [c.timestamp for c in back] == [c.timestamp for c in clouds]
    for a, b in zip(clouds, back):
        np.testing.assert_array_equal(b.points, a.points.astype(np.float32))


def test_cloud_layout():
    data = formats.encode_clouds([PointCloud(1.5, np.array([[1.0, 2.0, 3.0]]))])
    assert data[:8] == b"APRE\0PC1"
    assert data[8:16] == np.float64(1.5).tobytes() and data[16:20] == (1).to_bytes(4, "little")
    assert len(data) == 8 + 12 + 12


def test_cloud_errors():
    good = formats.encode_clouds([PointCloud(0.0, np.ones((4, 3)))])
    with pytest.raises(formats.FormatError):
        formats.decode_clouds(b"XXXX\0PC1" + good[8:])
    with pytest.raises(formats.FormatError):
        formats.decode_clouds(good[:-1])
    with pytest.raises(formats.FormatError):
        formats.decode_clouds(good[:12])


def test_detection_round_trip_and_grouping():
    frames = [[Detection2D("ball", (1.0, 2.0, 3.5, 4.25), 0.9, 0.0)], [],
              [Detection2D("ball", (5.0, 6.0, 7.0, 8.0), 0.4, 0.04), Detection2D("box", (0, 0, 1, 1), 0.7, 0.04)]]
    dets = formats.parse_detections(formats.detections_csv(frames))
    assert formats.detections_by_step(dets, 0.02, 3) == frames


def test_detection_header_checked():
    with pytest.raises(formats.FormatError):
        formats.parse_detections("t,label,a,b,c,d,e\n")


def test_replay_reproduces_recorded_trial():
    cfg = ScenarioConfig(seed=7)
    rec = SensorRecord()
    live = run_trial(cfg, record=rec)
    clouds = formats.decode_clouds(formats.encode_clouds(rec.clouds))
    dets = formats.detections_by_step(formats.parse_detections(formats.detections_csv(rec.detections)),
                                      cfg.dt, cfg.n_steps)
    again = run_trial(cfg, replay=SensorReplay(clouds, dets))
    assert again.success == live.success and again.collided == live.collided
    assert again.d_min == pytest.approx(live.d_min, abs=1e-3)


def test_short_replay_reports_exhaustion():
    cfg = ScenarioConfig(seed=7)
    with pytest.raises(ValueError, match="exhausted"):
        run_trial(cfg, replay=SensorReplay([PointCloud(0.0, np.zeros((0, 3)))], None))
