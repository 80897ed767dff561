"""Short-horizon obstacle forecasting behind a small backend switch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NoForecast(ValueError):
    """The input window cannot support the requested backend."""


@dataclass(frozen=True)
class PredictorInput:
    times: np.ndarray  # (n,)
    positions: np.ndarray  # (n, 3)
    velocities: np.ndarray  # (n, 3)

    def __post_init__(self):
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("predictor timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class Forecast:
    position: np.ndarray
    velocity: np.ndarray
    horizon: float


def predict(inp: PredictorInput, horizon: float, backend: str = "lsq", degree: int = 1) -> Forecast:
    """Forecast an obstacle ``horizon`` seconds past the last sample.

    ``cv`` extrapolates the last state; ``lsq`` fits a per-axis polynomial of
    ``degree`` to the window positions; ``identity`` returns the last state.
    """
    n = len(inp)
    if n == 0:
        raise NoForecast("empty window")
    p_last = np.asarray(inp.positions[-1], dtype=float)
    v_last = np.asarray(inp.velocities[-1], dtype=float)
    if backend == "identity":
        return Forecast(p_last.copy(), v_last.copy(), horizon)
    if backend == "cv":
        return Forecast(p_last + v_last * horizon, v_last.copy(), horizon)
    if backend != "lsq":
        raise ValueError(f"unknown predictor backend {backend!r}")
    if n < degree + 1:
        if n < 2:
            raise NoForecast("least-squares backend needs at least 2 samples")
        degree = n - 1
    t = np.asarray(inp.times, dtype=float) - inp.times[-1]
    P = np.asarray(inp.positions, dtype=float)
    # center positions on the last sample so the fit is translation equivariant
    V = np.vander(t, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, P - p_last, rcond=None)
    h = float(horizon)
    powers = np.array([h**k for k in range(degree + 1)])
    dpowers = np.array([k * h ** (k - 1) if k else 0.0 for k in range(degree + 1)])
    return Forecast(p_last + powers @ coef, dpowers @ coef, horizon)


class Predictor:
    """Configured backend; forecasts fall back to the last state when a window is too short."""

    def __init__(self, backend: str = "lsq", degree: int = 1):
        self.backend = backend
        self.degree = degree

    def __call__(self, inp: PredictorInput, horizon: float) -> Forecast:
        try:
            return predict(inp, horizon, self.backend, self.degree)
        except NoForecast:
            if len(inp) == 0:
                raise
            return predict(inp, horizon, "cv")
