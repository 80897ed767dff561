"""Trial metrics: clearance, trigger timing, normalized trigger lead, effort."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class StepLog:
    """Columnar per-step record of one trial."""

    t: list = field(default_factory=list)
    px: list = field(default_factory=list)
    py: list = field(default_factory=list)
    pz: list = field(default_factory=list)
    vx: list = field(default_factory=list)
    vy: list = field(default_factory=list)
    yaw: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    threat: list = field(default_factory=list)
    target_id: list = field(default_factory=list)
    clearance: list = field(default_factory=list)
    # ground-truth TTC and acceleration magnitude applied during the step
    ttc: list = field(default_factory=list)
    accel: list = field(default_factory=list)
    nearest: list = field(default_factory=list)

    CSV_COLUMNS = ("t", "px", "py", "pz", "vx", "vy", "yaw", "beta", "threat", "target_id", "clearance")

    def __len__(self) -> int:
        return len(self.t)

    def speed(self) -> np.ndarray:
        return np.hypot(np.asarray(self.vx, dtype=float), np.asarray(self.vy, dtype=float))


@dataclass
class Metrics:
    d_min: float
    t_closest: float
    t_trig: float | None
    ttc_at_trig: float | None
    tnl: float | None
    t_rec: float | None
    energy: float | None


def normalized_trigger_lead(t_closest: float, t_trig: float, ttc_at_trig: float) -> float:
    return (t_closest - t_trig) / ttc_at_trig


def surrogate_energy(mass: float, accel: np.ndarray, speed: np.ndarray, dt: float) -> float:
    """Planar work-rate sum m*|a|*|v|*dt (stands in for joint work)."""
    return float(np.sum(mass * np.asarray(accel) * np.asarray(speed)) * dt)


def compute_metrics(log: StepLog, dt: float, mass: float, beta_trig: float = 0.5,
                    recovery_speed: float = 0.1) -> Metrics:
    clearance = np.asarray(log.clearance, dtype=float)
    t = np.asarray(log.t, dtype=float)
    if len(t) == 0:
        raise ValueError("empty log")
    k_close = int(np.argmin(clearance))
    d_min = float(clearance[k_close])
    t_closest = float(t[k_close])
    beta = np.asarray(log.beta, dtype=float)
    trig = np.flatnonzero(beta >= beta_trig)
    if len(trig) == 0:
        return Metrics(d_min, t_closest, None, None, None, None, None)
    k_trig = int(trig[0])
    t_trig = float(t[k_trig])
    ttc_trig = float(log.ttc[k_trig])
    # a trigger already in contact has no lead to normalize
    tnl = normalized_trigger_lead(t_closest, t_trig, ttc_trig) if 0.0 < ttc_trig < math.inf else None
    speed = log.speed()
    k_rec = len(t) - 1
    for k in range(max(k_close, k_trig), len(t)):
        if speed[k] < recovery_speed and beta[k] < beta_trig:
            k_rec = k
            break
    acc = np.asarray(log.accel, dtype=float)
    energy = surrogate_energy(mass, acc[k_trig:k_rec + 1], speed[k_trig:k_rec + 1], dt)
    return Metrics(d_min, t_closest, t_trig, ttc_trig, tnl, float(t[k_rec]), energy)


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # the bounds are exactly 0 and 1 at the extremes; keep roundoff from leaking in
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return lo, hi


def quadrant(bearing: float) -> str:
    """Approach sector of a bearing relative to the robot heading."""
    b = math.degrees(math.atan2(math.sin(bearing), math.cos(bearing)))
    if -45.0 <= b <= 45.0:
        return "front"
    if 45.0 < b < 135.0:
        return "left"
    if -135.0 < b < -45.0:
        return "right"
    return "rear"
