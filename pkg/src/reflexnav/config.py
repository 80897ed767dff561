"""Scenario and pipeline configuration.

Every tunable lives here as a plain dataclass so a whole trial is described by
one ``ScenarioConfig`` value. Configs round-trip through YAML/JSON and accept
dotted ``key=value`` overrides from the command line.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration."""


def _check_range(name: str, lo: float, hi: float) -> None:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError(f"{name}: non-finite range ({lo}, {hi})")
    if lo > hi:
        raise ConfigError(f"{name}: lower bound {lo} exceeds upper bound {hi}")


@dataclass
class RobotSpec:
    v_max: float = 1.5
    a_max: float = 6.0
    omega_max: float = 3.0
    radius: float = 0.3
    mass: float = 15.0
    # height of the body center above the ground plane
    body_height: float = 0.3

    def __post_init__(self):
        for name in ("v_max", "a_max", "omega_max", "radius", "mass"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"robot.{name} must be positive")


@dataclass
class SpawnSpec:
    count: int = 1
    range_min: float = 4.0
    range_max: float = 6.5
    # bearing of the spawn point relative to the robot heading, radians
    direction_min: float = -math.pi
    direction_max: float = math.pi
    speed_min: float = 1.5
    speed_max: float = 4.5
    radius_min: float = 0.08
    radius_max: float = 0.3
    # lateral miss distance of the aim point, meters (0 = dead center)
    aim_offset: float = 0.15
    type_weights: dict[str, float] = field(
        default_factory=lambda: {"linear": 0.4, "ballistic": 0.2, "waypoint": 0.2, "sudden": 0.2}
    )
    # ballistic launch height above the robot body center
    launch_height_min: float = 0.2
    launch_height_max: float = 0.8
    # longest ballistic flight; slower throws are sped up so the arc stays low
    ballistic_flight_max: float = 1.0
    # sudden-acceleration velocity multiplier
    boost_min: float = 1.5
    boost_max: float = 3.0

    def __post_init__(self):
        if self.count < 0:
            raise ConfigError("spawn.count must be >= 0")
        _check_range("spawn.range", self.range_min, self.range_max)
        _check_range("spawn.direction", self.direction_min, self.direction_max)
        _check_range("spawn.speed", self.speed_min, self.speed_max)
        _check_range("spawn.radius", self.radius_min, self.radius_max)
        _check_range("spawn.launch_height", self.launch_height_min, self.launch_height_max)
        _check_range("spawn.boost", self.boost_min, self.boost_max)
        if self.range_min <= 0 or self.radius_min <= 0 or self.speed_min < 0:
            raise ConfigError("spawn ranges must be positive")
        if self.ballistic_flight_max <= 0:
            raise ConfigError("spawn.ballistic_flight_max must be positive")
        if self.aim_offset < 0:
            raise ConfigError("spawn.aim_offset must be >= 0")
        unknown = set(self.type_weights) - {"linear", "ballistic", "waypoint", "sudden"}
        if unknown:
            raise ConfigError(f"spawn.type_weights: unknown trajectory types {sorted(unknown)}")
        if any(w < 0 for w in self.type_weights.values()) or sum(self.type_weights.values()) <= 0:
            raise ConfigError("spawn.type_weights must be non-negative with positive sum")


@dataclass
class LidarSpec:
    rays_azimuth: int = 360
    rays_elevation: int = 16
    elevation_min: float = math.radians(-7.0)
    elevation_max: float = math.radians(52.0)
    max_range: float = 20.0
    range_noise: float = 0.02
    dropout: float = 0.02
    # sensor height above the robot body center
    mount_height: float = 0.15
    # scan period; the control loop runs faster and holds the last scan
    frame_period: float = 0.02

    def __post_init__(self):
        if self.rays_azimuth <= 0 or self.rays_elevation <= 0:
            raise ConfigError("lidar ray counts must be positive")
        _check_range("lidar.elevation", self.elevation_min, self.elevation_max)
        if self.range_noise < 0:
            raise ConfigError("lidar.range_noise must be >= 0")
        if not 0.0 <= self.dropout <= 1.0:
            raise ConfigError("lidar.dropout must lie in [0, 1]")
        if self.frame_period <= 0:
            raise ConfigError("lidar.frame_period must be positive")
        if self.max_range <= 0:
            raise ConfigError("lidar.max_range must be positive")


@dataclass
class CameraSpec:
    width: int = 320
    height: int = 240
    hfov: float = math.radians(87.0)
    # mount point in the robot body frame (x forward, z up, relative to body center)
    mount_forward: float = 0.25
    mount_height: float = 0.05
    far_plane: float = 10.0
    depth_noise: float = 0.005

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("camera image size must be positive")
        if not 0 < self.hfov < math.pi:
            raise ConfigError("camera.hfov must lie in (0, pi)")
        if self.far_plane <= 0 or self.depth_noise < 0:
            raise ConfigError("camera.far_plane must be positive and depth_noise >= 0")


@dataclass
class DetectorSpec:
    corner_noise_px: float = 1.0
    false_negative: float = 0.05
    false_positive_rate: float = 0.02
    confidence_mean: float = 0.85
    confidence_std: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.false_negative <= 1.0:
            raise ConfigError("detector.false_negative must lie in [0, 1]")
        if self.corner_noise_px < 0 or self.false_positive_rate < 0:
            raise ConfigError("detector noise and false-positive rate must be >= 0")


@dataclass
class LidarTrackParams:
    eps: float = 0.35
    min_pts: int = 4
    voxel: float = 0.08
    r_roi: float = 8.0
    ground_z: float = 0.0
    ground_margin: float = 0.12
    gate: float = 1.0
    m_confirm: int = 3
    m_die: int = 3
    history: int = 10
    eps_p: float = 1e-3
    eps_v: float = 0.1
    sigma_a: float = 3.0
    sigma_z: float = 0.05
    # prior std of the velocity of a newborn track
    sigma_v0: float = 5.0
    bias_compensation: bool = True

    def __post_init__(self):
        if self.eps <= 0 or self.min_pts < 1 or self.voxel <= 0:
            raise ConfigError("lidar_track: eps > 0, min_pts >= 1, voxel > 0 required")
        if self.m_confirm < 1 or self.m_die < 0 or self.history < 2:
            raise ConfigError("lidar_track: lifecycle counters out of range")
        if self.sigma_a < 0 or self.sigma_z < 0 or self.sigma_v0 <= 0:
            raise ConfigError("lidar_track: noise parameters out of range")


@dataclass
class CameraTrackParams:
    high_conf: float = 0.5
    iou_min: float = 0.1
    m2_die: int = 5
    tau_depth: float = 0.15
    n_min: int = 20
    seed_search: int = 5
    k_c: int = 5
    lambda_v: float = 0.5
    bridge_radius: float = 0.5
    stale_frames: int = 3

    def __post_init__(self):
        if not 0.0 <= self.high_conf <= 1.0 or not 0.0 < self.lambda_v <= 1.0:
            raise ConfigError("camera_track: confidence/lambda out of range")
        if self.tau_depth < 0 or self.n_min < 1 or self.k_c < 2:
            raise ConfigError("camera_track: tau_depth >= 0, n_min >= 1, k_c >= 2 required")


@dataclass
class PredictParams:
    backend: str = "lsq"
    degree: int = 1
    window: int = 10

    def __post_init__(self):
        if self.backend not in ("cv", "lsq", "identity"):
            raise ConfigError(f"predict.backend: unknown backend {self.backend!r}")
        if self.degree not in (1, 2):
            raise ConfigError("predict.degree must be 1 or 2")


@dataclass
class ThreatParams:
    alpha: float = 0.6
    gamma: float = 2.0
    r_safe: float = 1.0
    eps: float = 1e-3
    n_switch: int = 5
    t_lo: float = 0.2
    t_hi: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("threat.alpha must lie in [0, 1]")
        if self.gamma < 1 or self.r_safe <= 0 or self.eps <= 0:
            raise ConfigError("threat: gamma >= 1, r_safe > 0, eps > 0 required")
        if not self.t_lo < self.t_hi:
            raise ConfigError("threat: t_lo must be below t_hi")
        if self.n_switch < 1:
            raise ConfigError("threat.n_switch must be >= 1")


@dataclass
class ControlGains:
    k_psi: float = 2.0
    yaw_sat: float = 3.0
    k_r_min: float = 0.2
    k_r_max: float = 1.2
    beta_trig: float = 0.5
    lam_safe: float = 1.0
    lam_dir: float = 0.5
    lam_ene: float = 0.1
    lam_stab: float = 0.1
    lam_rec: float = 0.3
    # reflex rollout horizon, seconds
    rollout_horizon: float = 0.5
    # share of the away-from-obstacle direction mixed into a sidestep
    dodge_away_mix: float = 0.5
    # fixed trigger for the TTC-only ablation, seconds
    ttc_trigger: float = 0.8
    # below this fused threat the navigation retreat is disengaged
    nav_engage: float = 0.2

    def __post_init__(self):
        if self.k_psi <= 0 or self.yaw_sat <= 0:
            raise ConfigError("control: k_psi and yaw_sat must be positive")
        if not 0 <= self.k_r_min <= self.k_r_max:
            raise ConfigError("control: need 0 <= k_r_min <= k_r_max")
        if not 0 < self.beta_trig < 1:
            raise ConfigError("control.beta_trig must lie in (0, 1)")
        if min(self.lam_safe, self.lam_dir, self.lam_ene, self.lam_stab, self.lam_rec) < 0:
            raise ConfigError("control: reward weights must be >= 0")
        if self.rollout_horizon <= 0 or self.ttc_trigger <= 0:
            raise ConfigError("control: rollout_horizon and ttc_trigger must be positive")


@dataclass
class RaycastParams:
    gain: float = 1.5
    influence: float = 2.5

    def __post_init__(self):
        if self.gain <= 0 or self.influence <= 0:
            raise ConfigError("raycast: gain and influence must be positive")


@dataclass
class ScenarioConfig:
    seed: int = 0
    dt: float = 0.02
    duration: float = 6.0
    # forecast horizon for threat evaluation past the newest measurement's
    # latency; one control step by default, longer values scale with the reaction budget
    react_budget: float = 0.02
    # speed below which the robot counts as recovered
    recovery_speed: float = 0.1
    # time from sensor capture to the frame reaching perception
    sensor_latency: float = 0.06
    robot: RobotSpec = field(default_factory=RobotSpec)
    spawn: SpawnSpec = field(default_factory=SpawnSpec)
    lidar: LidarSpec = field(default_factory=LidarSpec)
    camera: CameraSpec = field(default_factory=CameraSpec)
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    lidar_track: LidarTrackParams = field(default_factory=LidarTrackParams)
    camera_track: CameraTrackParams = field(default_factory=CameraTrackParams)
    predict: PredictParams = field(default_factory=PredictParams)
    threat: ThreatParams = field(default_factory=ThreatParams)
    control: ControlGains = field(default_factory=ControlGains)
    raycast: RaycastParams = field(default_factory=RaycastParams)

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if self.react_budget < 0:
            raise ConfigError("react_budget must be >= 0")
        if self.sensor_latency < 0:
            raise ConfigError("sensor_latency must be >= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


def _build(cls, data: Any, path: str):
    if not dataclasses.is_dataclass(cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _nested_type(cls, name)
        kwargs[name] = _build(sub, value, f"{path}.{name}" if path else name) if sub else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def _nested_type(cls, name):
    default = cls()
    value = getattr(default, name)
    return type(value) if dataclasses.is_dataclass(value) else None


def config_from_dict(data: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, data, "")


def config_to_dict(cfg: ScenarioConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(data or {})


def apply_overrides(cfg: ScenarioConfig, overrides: list[str]) -> ScenarioConfig:
    """Apply ``section.key=value`` overrides; values are parsed as YAML scalars."""
    data = config_to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"override {key!r}: no section {p!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"override {key!r}: unknown field")
        node[parts[-1]] = yaml.safe_load(raw)
    return config_from_dict(data)


def config_digest(cfg: ScenarioConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
