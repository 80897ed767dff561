"""Closed-loop trials and seeded batches for every pipeline variant."""

from __future__ import annotations

import math
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..camera_percept import CameraPerception, bridge
from ..config import ScenarioConfig, config_digest
from ..control import blend, navigate, reflex_select, reorient, schedule_g
from ..core import CameraModel, Command, NumericalFailure, PointCloud, RobotState
from ..lidar_percept import LidarTracker
from ..predict import NoForecast, Predictor, PredictorInput
from ..sensors import DepthImage, Detection2D, render_depth, render_lidar, synthetic_detector
from ..simworld import WorldState, check_collision, spawn_scenario, step_world
from ..threat import TargetSelector, fuse, threat, ttc
from .baseline import raycast_baseline
from .metrics import StepLog, compute_metrics, quadrant, wilson_interval

VARIANTS = ("full", "no_prediction", "no_reorient", "no_threat", "raycast_baseline", "lidar_only")
QUADRANTS = ("front", "left", "right", "rear")

# independent random streams per trial
_LIDAR_STREAM, _DEPTH_STREAM, _DETECT_STREAM = 1, 2, 3


@dataclass
class TrialResult:
    seed: int
    variant: str
    success: bool
    collided: bool
    d_min: float
    t_trig: float | None
    t_closest: float
    ttc_at_trig: float | None
    tnl: float | None
    energy: float | None
    t_rec: float | None
    final_speed: float
    bearing: float
    quadrant: str
    trajectory: str
    label: str
    log: StepLog | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "seed", "variant", "success", "collided", "d_min", "t_trig", "t_closest", "ttc_at_trig",
            "tnl", "energy", "t_rec", "final_speed", "bearing", "quadrant", "trajectory", "label")}
        for k, v in out.items():
            if isinstance(v, float):
                out[k] = round(v, 9) if math.isfinite(v) else None
        return out


@dataclass
class SensorReplay:
    """Recorded sensor streams substituted for the renderers, consumed in frame order."""

    clouds: list[PointCloud] | None = None
    detections: list[list[Detection2D]] | None = None


@dataclass
class SensorRecord:
    clouds: list[PointCloud] = field(default_factory=list)
    detections: list[list[Detection2D]] = field(default_factory=list)


@dataclass
class SensorFrame:
    """Everything captured at one step, delivered to perception after the configured latency."""

    time: float
    robot: RobotState
    cloud: PointCloud | None
    detections: list[Detection2D] | None
    depth: DepthImage | None
    camera: CameraModel | None


class _Pipeline:
    """Perception, threat and control state for one trial."""

    def __init__(self, cfg: ScenarioConfig, variant: str):
        self.cfg = cfg
        self.variant = variant
        self.lidar = LidarTracker(cfg.lidar_track, cfg.lidar.mount_height)
        self.use_camera = variant != "lidar_only"
        self.use_reorient = variant not in ("no_reorient", "lidar_only")
        self.camera = CameraPerception(cfg.camera_track, cfg.predict.window) if self.use_camera else None
        backend = "identity" if variant == "no_prediction" else cfg.predict.backend
        self.predictor = Predictor(backend, cfg.predict.degree)
        self.selector = TargetSelector(cfg.threat.n_switch)
        self.frame = 0
        # last camera threat of the active target and the frame it was computed in
        self.cam_threat: float | None = None
        self.cam_state: tuple | None = None
        self.cam_frame = -(10**9)
        self.cam_target: int | None = None
        self.prev_dir: np.ndarray | None = None
        self.prev_accel = np.zeros(2)

    def _forecast(self, times, positions, velocities, t_now: float):
        """Forecast at the reaction horizon past ``t_now``, plus the state extrapolated to ``t_now``."""
        inp = PredictorInput(np.asarray(times, float), np.asarray(positions, float),
                             np.asarray(velocities, float))
        lag = t_now - float(times[-1])
        ahead = self.predictor(inp, self.cfg.react_budget + lag)
        now = self.predictor(inp, lag)
        return ahead.position, ahead.velocity, now.position, now.velocity

    def _relative(self, robot: RobotState, pos: np.ndarray, vel: np.ndarray):
        p_robot = robot.position + robot.velocity * self.cfg.react_budget
        return pos - p_robot, vel - robot.velocity

    def step(self, world: WorldState, frame: SensorFrame | None) -> tuple[Command, dict]:
        """One control step at ``world.time`` using the sensor frame delivered now, if any."""
        cfg = self.cfg
        robot = world.robot
        t = world.time
        if frame is not None and frame.cloud is not None:
            self.lidar.step(frame.cloud, frame.robot)
        lidar_threat: dict[int, float] = {}
        lidar_state: dict[int, tuple] = {}
        for tr in self.lidar.dynamic_tracks():
            times, pos, vel = tr.window()
            try:
                p, v, p_now, v_now = self._forecast(times, pos, vel, t)
            except NoForecast:
                continue
            dp, v_rel = self._relative(robot, p, v)
            lidar_threat[tr.id] = threat(dp, v_rel, cfg.threat)
            lidar_state[tr.id] = (p, v, tr.radius_est, p_now, v_now, tr.position.copy())
        active = self.selector.update(lidar_threat)
        if active != self.cam_target:
            self.cam_threat, self.cam_state, self.cam_target = None, None, active

        cam_fresh = None
        if self.use_camera and frame is not None and frame.detections is not None:
            cam_obs = self.camera.step(frame.depth, frame.detections, frame.camera, frame.time)
            if active is not None:
                # the track's filtered position refers to the latest scan, close to the frame time
                ob = bridge(cam_obs, active, lidar_state[active][5], cfg.camera_track.bridge_radius)
                if ob is not None and ob.velocity_valid:
                    times, pos, vel = ob.window()
                    p, v, p_now, v_now = self._forecast(times, pos, vel, t)
                    dp, v_rel = self._relative(robot, p, v)
                    self.cam_threat = threat(dp, v_rel, cfg.threat)
                    self.cam_state = (p, v, ob.radius, p_now, v_now)
                    self.cam_frame = self.frame
                    cam_fresh = self.cam_threat
        self.frame += 1

        if active is None:
            return Command(np.zeros(2), 0.0, 0.0, "none"), {"threat": 0.0, "target": -1, "fresh": None}

        age = self.frame - 1 - self.cam_frame
        t_lidar = lidar_threat[active]
        t_cam = self.cam_threat if self.cam_threat is not None and age <= cfg.camera_track.stale_frames else None
        t_fused = fuse(t_lidar, t_cam, age, cfg.camera_track.stale_frames)
        p_obs, v_obs, r_obs, p_now, v_now = self.cam_state if t_cam is not None else lidar_state[active][:5]
        dp, v_rel = self._relative(robot, p_obs, v_obs)

        if self.variant == "no_threat":
            beta = 1.0 if ttc(dp, v_rel, cfg.threat.eps) < cfg.control.ttc_trigger else 0.0
        else:
            beta = schedule_g(t_fused, cfg.threat)

        yaw_rate = 0.0
        if self.use_reorient:
            # the gap is the part of the LiDAR threat not yet confirmed by the camera
            yaw_rate = reorient(robot, lidar_state[active][3] - robot.position, t_lidar,
                                t_cam if t_cam is not None else 0.0, cfg.control)
        if t_fused >= cfg.control.nav_engage:
            # retreat speed follows the camera-confirmed threat only
            v_nav, self.prev_dir = navigate(robot, p_now, t_cam if t_cam is not None else 0.0,
                                            cfg.control, cfg.threat, self.prev_dir)
        else:
            v_nav = np.zeros(2)
        nav = Command(v_nav, yaw_rate, 0.0, "none")
        if beta > 0.0:
            # the TTC rule fires the reflex at full intensity
            t_reflex = cfg.threat.t_hi if self.variant == "no_threat" else t_fused
            tag, v_reflex, _ = reflex_select(robot, p_now, v_now, r_obs, t_reflex, cfg.control, cfg.threat,
                                             cfg.robot, cfg.dt, self.prev_accel)
            reflex = Command(v_reflex, yaw_rate, 1.0, tag)
        else:
            reflex = Command(np.zeros(2), yaw_rate, 1.0, "none")
        cmd = blend(nav, reflex, beta, cfg.control.beta_trig)
        return cmd, {"threat": t_fused, "target": active, "fresh": cam_fresh}


def _true_ttc(world: WorldState, idx: int, eps: float) -> float:
    o = world.obstacles[idx]
    return ttc(o.position - world.robot.position, o.velocity - world.robot.velocity, eps)


def _next_replay(it, name: str, k: int):
    try:
        return next(it)
    except StopIteration:
        raise ValueError(f"replay {name} exhausted at step {k}") from None


def run_trial(config: ScenarioConfig, variant: str = "full", replay: SensorReplay | None = None,
              record: SensorRecord | None = None, keep_log: bool = True) -> TrialResult:
    """One closed-loop trial at the configured rate; deterministic per (seed, variant).

    Sensors are sampled every step (LiDAR every ``lidar.frame_period``) and the
    captured frame reaches perception ``sensor_latency`` seconds later.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    cfg = config
    world = spawn_scenario(cfg)
    seq = lambda stream: np.random.default_rng(np.random.SeedSequence([cfg.seed, stream]))
    rng_lidar, rng_depth, rng_det = seq(_LIDAR_STREAM), seq(_DEPTH_STREAM), seq(_DETECT_STREAM)
    pipe = _Pipeline(cfg, variant) if variant != "raycast_baseline" else None
    use_camera = pipe is not None and pipe.use_camera
    cam0 = CameraModel.from_fov(cfg.camera.width, cfg.camera.height, cfg.camera.hfov)
    log = StepLog()
    first = world.obstacles[0] if world.obstacles else None
    n = cfg.n_steps
    lidar_every = max(1, int(round(cfg.lidar.frame_period / cfg.dt)))
    delay = int(round(cfg.sensor_latency / cfg.dt))
    clouds = iter(replay.clouds) if replay is not None and replay.clouds is not None else None
    detections = iter(replay.detections) if replay is not None and replay.detections is not None else None
    pending: deque[SensorFrame] = deque()
    last_cloud: PointCloud | None = None
    prev_v = world.robot.velocity.copy()
    for k in range(n + 1):
        collided, clearance = check_collision(world, cfg.robot.radius)
        nearest = -1
        if world.obstacles:
            gaps = [np.linalg.norm(o.position - world.robot.position) - o.radius if o.active else math.inf
                    for o in world.obstacles]
            nearest = int(np.argmin(gaps))
        if k == n:
            break
        # capture
        cloud = None
        if k % lidar_every == 0:
            cloud = _next_replay(clouds, "clouds", k) if clouds is not None else render_lidar(
                world, cfg.lidar, rng_lidar)
            if record is not None:
                record.clouds.append(cloud)
        dets = depth = cam = None
        if use_camera:
            cam = cam0.mounted_on(world.robot, cfg.camera.mount_forward, cfg.camera.mount_height)
            dets = _next_replay(detections, "detections", k) if detections is not None else synthetic_detector(
                world, cam, cfg.detector, rng_det)
            if record is not None:
                record.detections.append(dets)
            if dets:
                depth = render_depth(world, cam, rng_depth, cfg.camera.far_plane, cfg.camera.depth_noise)
        pending.append(SensorFrame(world.time, world.robot, cloud, dets, depth, cam))
        frame = pending.popleft() if len(pending) > delay else None
        # perceive, assess, act
        try:
            if pipe is None:
                if frame is not None and frame.cloud is not None:
                    last_cloud = frame.cloud
                if last_cloud is None:
                    cmd = Command(np.zeros(2), 0.0, 0.0, "none")
                else:
                    # the baseline reacts to the latest delivered scan from where the robot is now
                    cmd = raycast_baseline(last_cloud, world.robot, cfg.raycast, cfg.robot.v_max, cfg.lidar_track)
                info = {"threat": 0.0, "target": -1}
            else:
                cmd, info = pipe.step(world, frame)
        except NumericalFailure as exc:
            raise NumericalFailure(f"frame {k}: {exc}") from exc
        new_world = step_world(world, cmd, cfg.dt, cfg.robot)
        dv = (new_world.robot.velocity - prev_v)[:2]
        if pipe is not None:
            pipe.prev_accel = dv / cfg.dt
        prev_v = new_world.robot.velocity.copy()
        r = world.robot
        log.t.append(world.time)
        log.px.append(float(r.position[0]))
        log.py.append(float(r.position[1]))
        log.pz.append(float(r.position[2]))
        log.vx.append(float(r.velocity[0]))
        log.vy.append(float(r.velocity[1]))
        log.yaw.append(float(r.yaw))
        log.beta.append(float(cmd.beta))
        log.threat.append(float(info["threat"]))
        log.target_id.append(int(info["target"]))
        log.clearance.append(float(clearance))
        log.ttc.append(_true_ttc(world, nearest, cfg.threat.eps) if nearest >= 0 else math.inf)
        log.accel.append(float(np.linalg.norm(dv)) / cfg.dt)
        log.nearest.append(nearest)
        world = new_world
    final_speed = float(np.linalg.norm(world.robot.velocity[:2]))
    m = compute_metrics(log, cfg.dt, cfg.robot.mass, cfg.control.beta_trig, cfg.recovery_speed)
    collided = bool(world.collided or m.d_min < 0.0)
    success = (not collided) and final_speed < cfg.recovery_speed
    bearing = first.bearing if first is not None else 0.0
    return TrialResult(
        cfg.seed, variant, success, collided, m.d_min, m.t_trig, m.t_closest, m.ttc_at_trig, m.tnl,
        m.energy, m.t_rec, final_speed, bearing, quadrant(bearing),
        first.trajectory if first is not None else "none", first.label if first is not None else "none",
        log if keep_log else None)


# -- batches ------------------------------------------------------------------------


def _stats(values: list[float]) -> dict:
    if not values:
        return {"mean": None, "std": None, "n": 0}
    a = np.asarray(values, dtype=float)
    return {"mean": round(float(a.mean()), 9), "std": round(float(a.std()), 9), "n": len(values)}


@dataclass
class BatchReport:
    variant: str
    digest: str
    n_total: int
    n_success: int
    asr: float
    asr_ci: tuple[float, float]
    d_min: dict
    tnl: dict
    energy: dict
    quadrants: dict
    results: list[TrialResult] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant, "config_digest": self.digest, "n_total": self.n_total,
            "n_success": self.n_success, "asr": round(self.asr, 9),
            "asr_ci": [round(self.asr_ci[0], 9), round(self.asr_ci[1], 9)],
            "d_min": self.d_min, "tnl": self.tnl, "energy": self.energy, "quadrants": self.quadrants,
        }


def summarize(results: list[TrialResult], variant: str, digest: str) -> BatchReport:
    n = len(results)
    ok = [r for r in results if r.success]
    quads = {}
    for q in QUADRANTS:
        rs = [r for r in results if r.quadrant == q]
        s = sum(r.success for r in rs)
        quads[q] = {"n": len(rs), "success": s, "asr": round(s / len(rs), 9) if rs else None}
    return BatchReport(
        variant, digest, n, len(ok), len(ok) / n if n else 0.0, wilson_interval(len(ok), n),
        _stats([r.d_min for r in ok]),
        _stats([r.tnl for r in ok if r.tnl is not None]),
        _stats([r.energy for r in ok if r.energy is not None]),
        quads, results)


def _trial_job(args):
    cfg, variant = args
    return run_trial(cfg, variant, keep_log=False)


def run_batch(config: ScenarioConfig, variants=("full",), n: int = 50, workers: int | None = None
              ) -> dict[str, BatchReport]:
    """Seeds ``config.seed`` .. ``config.seed + n - 1`` per variant, merged in seed order."""
    if n < 1:
        raise ValueError("need at least one trial")
    if isinstance(variants, str):
        variants = (variants,)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    jobs = [(replace(config, seed=config.seed + i), v) for v in variants for i in range(n)]
    workers = workers if workers is not None else min(os.cpu_count() or 1, 8)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_trial_job(j) for j in jobs]
    digest = config_digest(config)
    reports = {}
    for i, v in enumerate(variants):
        rs = sorted(results[i * n:(i + 1) * n], key=lambda r: r.seed)
        reports[v] = summarize(rs, v, digest)
    return reports
