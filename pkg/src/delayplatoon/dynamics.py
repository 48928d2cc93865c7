"""Third-order longitudinal vehicle model with input delay.

State is (q, v, a): position, velocity, acceleration.  The engine lag tau
drives a via a first-order response to the commanded input, which acts with
an actuation delay phi.  Because the control input is held between samples
(zero-order hold), the sampled dynamics admit an exact discretization, which
is what this module provides in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DelayGranularityError, HistoryDepthError

__all__ = [
    "VehicleParams",
    "VehicleState",
    "InputHistory",
    "DiscreteModel",
    "matrix_exponential_closed_form",
    "discretize",
    "delay_steps",
    "step",
    "open_loop_step_response",
    "StepResponse",
]


@dataclass(frozen=True)
class VehicleParams:
    """Engine time constant tau [s] and actuation delay phi [s]."""

    tau: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0.0):
            raise ValueError(f"tau must be finite and > 0, got {self.tau}")
        if not (math.isfinite(self.phi) and self.phi >= 0.0):
            raise ValueError(f"phi must be finite and >= 0, got {self.phi}")

    def system_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Continuous-time (A, B) of the delayed third-order model."""
        a = np.array(
            [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0 / self.tau]]
        )
        b = np.array([0.0, 0.0, 1.0 / self.tau])
        return a, b


@dataclass(frozen=True)
class VehicleState:
    """Longitudinal position [m], velocity [m/s] and acceleration [m/s^2]."""

    q: float = 0.0
    v: float = 0.0
    a: float = 0.0

    def __post_init__(self):
        for name in ("q", "v", "a"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.q, self.v, self.a])

    @classmethod
    def from_array(cls, x) -> "VehicleState":
        return cls(float(x[0]), float(x[1]), float(x[2]))


@dataclass(frozen=True)
class InputHistory:
    """Buffered past inputs covering the delay window [t - phi, t).

    ``samples`` is chronological: ``samples[0]`` is the oldest value
    u(t - depth*Ts) and ``samples[-1]`` the most recent u(t - Ts).  In the
    d-step predictor sum, index j = 1 (most recent) maps to ``samples[-1]``.
    """

    samples: tuple[float, ...]
    sample_period: float
    depth: int

    def __post_init__(self):
        if self.depth < 0:
            raise HistoryDepthError(f"depth must be >= 0, got {self.depth}")
        if self.sample_period <= 0.0:
            raise ValueError("sample_period must be > 0")
        if len(self.samples) != self.depth:
            raise HistoryDepthError(
                f"history holds {len(self.samples)} samples, expected {self.depth}"
            )

    @classmethod
    def zeros(cls, depth: int, sample_period: float) -> "InputHistory":
        return cls((0.0,) * depth, sample_period, depth)

    @classmethod
    def constant(cls, value: float, depth: int, sample_period: float) -> "InputHistory":
        return cls((float(value),) * depth, sample_period, depth)

    @property
    def oldest(self) -> float:
        """u(t - phi): the input the plant applies during the next step."""
        return self.samples[0]

    def push(self, u: float) -> "InputHistory":
        """Shift the window one sample: drop the oldest, append u(t)."""
        if self.depth == 0:
            return self
        return InputHistory(self.samples[1:] + (float(u),), self.sample_period, self.depth)

    def as_array(self) -> np.ndarray:
        return np.array(self.samples)


@dataclass(frozen=True)
class DiscreteModel:
    """Exact ZOH discretization: x(k+1) = Phi x(k) + Gamma u(k - d)."""

    Phi: np.ndarray
    Gamma: np.ndarray
    Ts: float

    def cache_key(self) -> tuple:
        return (self.Phi.tobytes(), self.Gamma.tobytes(), self.Ts)


def matrix_exponential_closed_form(params: VehicleParams, t: float) -> np.ndarray:
    """e^{A t} for the triangular third-order model, in closed form."""
    if not math.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    tau = params.tau
    em = -math.expm1(-t / tau)  # 1 - exp(-t/tau), accurate for small t
    return np.array(
        [
            [1.0, t, tau * t - tau * tau * em],
            [0.0, 1.0, tau * em],
            [0.0, 0.0, 1.0 - em],
        ]
    )


def delay_steps(params: VehicleParams, Ts: float) -> int:
    """phi / Ts as an integer; DelayGranularityError if it is not one."""
    if Ts <= 0.0 or not math.isfinite(Ts):
        raise ValueError(f"Ts must be finite and > 0, got {Ts}")
    ratio = params.phi / Ts
    d = int(round(ratio))
    if abs(ratio - d) > 1e-9 * max(1.0, abs(ratio)):
        raise DelayGranularityError(
            f"phi = {params.phi} is not an integer multiple of Ts = {Ts}"
        )
    return d


def discretize(params: VehicleParams, Ts: float) -> DiscreteModel:
    """Exact ZOH discretization over one sample period.

    Gamma is the closed form of int_0^Ts e^{A s} ds B; the three scalar
    integrals follow from the triangular structure of A.
    """
    delay_steps(params, Ts)  # validates Ts and the phi/Ts ratio
    tau = params.tau
    em = -math.expm1(-Ts / tau)  # 1 - exp(-Ts/tau)
    gamma = np.array(
        [
            0.5 * Ts * Ts - tau * Ts + tau * tau * em,
            Ts - tau * em,
            em,
        ]
    )
    return DiscreteModel(matrix_exponential_closed_form(params, Ts), gamma, Ts)


def step(model: DiscreteModel, x: VehicleState, u_delayed: float) -> VehicleState:
    """One exact sample step with the delayed, held input."""
    if not math.isfinite(u_delayed):
        raise ValueError("u_delayed must be finite")
    xn = model.Phi @ x.as_array() + model.Gamma * u_delayed
    return VehicleState.from_array(xn)


class StepResponse(NamedTuple):
    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    a: np.ndarray


def open_loop_step_response(
    params: VehicleParams, u_amplitude: float, horizon: float, Ts: float
) -> StepResponse:
    """Response from rest (zero state, zero history) to a constant input.

    The acceleration column equals u*(1 - e^{-(t-phi)/tau}) for t >= phi and
    0 before, up to rounding, since the discretization is exact.
    """
    model = discretize(params, Ts)
    d = delay_steps(params, Ts)
    n = int(round(horizon / Ts))
    out = np.zeros((n + 1, 3))
    x = np.zeros(3)
    for k in range(n):
        u_delayed = u_amplitude if k >= d else 0.0
        x = model.Phi @ x + model.Gamma * u_delayed
        out[k + 1] = x
    t = np.arange(n + 1) * Ts
    return StepResponse(t, out[:, 0], out[:, 1], out[:, 2])
