"""Discrete-time closed-loop simulation of an N+1 vehicle platoon.

Controllers are the continuous-time laws evaluated at the 100 Hz-class
sample instants with a zero-order hold; vehicle propagation between samples
is exact.  Within a step the leader input is computed first and the
followers run front to back, each using predecessor values from the same
sample instant (ideal channels); optional sample-and-hold flags emulate the
coarser radar and V2V rates, both off by default.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .controllers import ControllerGains, ControllerSpec, validate_gains
from .dynamics import (
    InputHistory,
    VehicleParams,
    VehicleState,
    delay_steps,
    discretize,
)
from .errors import DegreeError, HistoryDepthError
from .predictor import prediction_weights
from .spacing import PolicyKind, SpacingPolicy

__all__ = [
    "SegmentKind",
    "LeaderSegment",
    "LeaderProfile",
    "leader_input",
    "MeasurementOptions",
    "MeasurementModel",
    "VehicleSetup",
    "PlatoonConfig",
    "TrajectoryLog",
    "run",
    "error_dynamics_reference",
]

_POLICY_CODE = {
    PolicyKind.DELAYED_CONSTANT: _kernels.POLICY_CONSTANT,
    PolicyKind.DELAYED_CONSTANT_HEADWAY: _kernels.POLICY_DCH,
    PolicyKind.DELAYED_EXTENDED_HEADWAY: _kernels.POLICY_EXT,
}


class SegmentKind(enum.Enum):
    CRUISE = "cruise"
    PULSE = "pulse"


@dataclass(frozen=True)
class LeaderSegment:
    """One leader-profile segment: closed-loop cruise or open-loop pulse."""

    kind: SegmentKind
    duration: float
    v_ref: float = 0.0
    gain: float = 0.0
    amplitude: float = 0.0

    def __post_init__(self):
        if not (self.duration > 0.0 and math.isfinite(self.duration)):
            raise ValueError("segment duration must be finite and > 0")
        if self.kind is SegmentKind.CRUISE and self.gain <= 0.0:
            raise ValueError("cruise gain must be > 0")

    @classmethod
    def cruise(cls, duration: float, v_ref: float, gain: float) -> "LeaderSegment":
        return cls(SegmentKind.CRUISE, duration, v_ref=v_ref, gain=gain)

    @classmethod
    def pulse(cls, duration: float, amplitude: float) -> "LeaderSegment":
        return cls(SegmentKind.PULSE, duration, amplitude=amplitude)


@dataclass(frozen=True)
class LeaderProfile:
    """Contiguous leader segments; the input is 0 past the last segment."""

    segments: tuple[LeaderSegment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("leader profile needs at least one segment")

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)


def leader_input(profile: LeaderProfile, t: float, v_leader: float) -> float:
    """Leader input at time t: gain*(v_ref - v) in cruise, the amplitude in
    a pulse, 0 past the profile end."""
    end = 0.0
    for seg in profile.segments:
        end += seg.duration
        if t < end:
            if seg.kind is SegmentKind.CRUISE:
                return seg.gain * (seg.v_ref - v_leader)
            return seg.amplitude
    return 0.0


@dataclass(frozen=True)
class MeasurementOptions:
    """Sample-and-hold emulation of the real sensor rates (both off by default
    so the theory-level tests see exact values)."""

    radar_hold: bool = False
    radar_rate_hz: float = 16.7
    v2v_hold: bool = False
    v2v_rate_hz: float = 25.0

    def __post_init__(self):
        if self.radar_rate_hz <= 0.0 or self.v2v_rate_hz <= 0.0:
            raise ValueError("hold rates must be > 0")


class MeasurementModel:
    """Stateful sample-and-hold of the radar and V2V channels.

    ``sample`` maps exact measurement values at time t to what the controller
    sees: unchanged when the holds are off, otherwise the values captured at
    the most recent refresh instant of each channel.
    """

    def __init__(self, options: MeasurementOptions):
        self.options = options
        self._next_radar = 0.0
        self._next_v2v = 0.0
        self._radar: tuple[float, float] | None = None
        self._v2v: tuple[float, float, float] | None = None

    def sample(
        self,
        t: float,
        delta: float,
        delta_dot: float,
        predecessor_v: float,
        predecessor_a: float,
        predecessor_u_delayed: float,
    ) -> tuple[float, float, float, float, float]:
        if self.options.radar_hold:
            if t >= self._next_radar:
                self._radar = (delta, delta_dot)
                self._next_radar += 1.0 / self.options.radar_rate_hz
            delta, delta_dot = self._radar
        if self.options.v2v_hold:
            if t >= self._next_v2v:
                self._v2v = (predecessor_v, predecessor_a, predecessor_u_delayed)
                self._next_v2v += 1.0 / self.options.v2v_rate_hz
            predecessor_v, predecessor_a, predecessor_u_delayed = self._v2v
        return delta, delta_dot, predecessor_v, predecessor_a, predecessor_u_delayed


@dataclass(frozen=True)
class VehicleSetup:
    """Initial condition of one vehicle; history defaults to all zeros."""

    params: VehicleParams
    state: VehicleState = field(default_factory=VehicleState)
    history: InputHistory | None = None


@dataclass(frozen=True)
class PlatoonConfig:
    """Vehicles (index 0 the leader), per-follower policies and controllers,
    sample period and horizon.  Every phi must be an integer multiple of Ts."""

    vehicles: tuple[VehicleSetup, ...]
    policies: tuple[SpacingPolicy, ...]
    controllers: tuple[ControllerSpec, ...]
    ts: float
    horizon: float
    measurement: MeasurementOptions = field(default_factory=MeasurementOptions)
    clamp_reverse: bool = False

    def __post_init__(self):
        if len(self.vehicles) < 1:
            raise ValueError("need at least the leader vehicle")
        nf = len(self.vehicles) - 1
        if len(self.policies) != nf or len(self.controllers) != nf:
            raise ValueError(
                f"{nf} followers need {nf} policies and controllers, got "
                f"{len(self.policies)} / {len(self.controllers)}"
            )
        if not (self.ts > 0.0 and self.horizon > 0.0):
            raise ValueError("ts and horizon must be > 0")
        for setup in self.vehicles:
            d = delay_steps(setup.params, self.ts)  # raises DelayGranularityError
            if setup.history is not None and setup.history.depth != d:
                raise HistoryDepthError(
                    f"history depth {setup.history.depth} != phi/Ts = {d}"
                )
        for f, (policy, spec) in enumerate(zip(self.policies, self.controllers)):
            if spec.policy != policy:
                raise ValueError(f"controller {f + 1} is for a different policy")
            if spec.ego != self.vehicles[f + 1].params:
                raise ValueError(f"controller {f + 1} ego params mismatch")
            if (
                spec.predecessor is not None
                and spec.predecessor != self.vehicles[f].params
            ):
                raise ValueError(f"controller {f + 1} predecessor params mismatch")


@dataclass(frozen=True)
class TrajectoryLog:
    """Uniformly sampled trajectories: per-vehicle q, v, a, u as
    (n_samples, n_vehicles) columns and per-follower e, delta, delta_ref."""

    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    a: np.ndarray
    u: np.ndarray
    e: np.ndarray
    delta: np.ndarray
    delta_ref: np.ndarray
    ts: float

    @property
    def n_vehicles(self) -> int:
        return self.q.shape[1]

    @property
    def n_followers(self) -> int:
        return self.e.shape[1]


def _kernel_arrays(config: PlatoonConfig):
    nv = len(config.vehicles)
    ts = config.ts
    tau = np.array([s.params.tau for s in config.vehicles])
    d = np.array([delay_steps(s.params, ts) for s in config.vehicles], dtype=np.int64)
    dmax = max(int(d.max()), 1)

    phi_mat = np.empty((nv, 3, 3))
    gamma = np.empty((nv, 3))
    phi_pow_d = np.empty((nv, 3, 3))
    pred_w = np.zeros((nv, 3, dmax))
    hist0 = np.zeros((nv, dmax))
    x0 = np.empty((nv, 3))
    for i, setup in enumerate(config.vehicles):
        model = discretize(setup.params, ts)
        phi_mat[i] = model.Phi
        gamma[i] = model.Gamma
        di = int(d[i])
        pd, w_oldest_first = prediction_weights(model, di)
        phi_pow_d[i] = pd
        # kernel indexes weights by j (most recent first)
        if di > 0:
            pred_w[i, :, :di] = w_oldest_first[:, ::-1]
        history = setup.history or InputHistory.zeros(di, ts)
        hist0[i, :di] = history.samples
        x0[i] = setup.state.as_array()

    nf = nv - 1
    policy = np.zeros(max(nf, 1), dtype=np.int64)
    h_v = np.zeros(max(nf, 1))
    h_a = np.zeros(max(nf, 1))
    standstill = np.zeros(max(nf, 1))
    k_p = np.zeros(max(nf, 1))
    k_d = np.zeros(max(nf, 1))
    k_dd = np.zeros(max(nf, 1))
    for f, (pol, spec) in enumerate(zip(config.policies, config.controllers)):
        policy[f] = _POLICY_CODE[pol.kind]
        h_v[f] = pol.h_v
        h_a[f] = pol.h_a
        standstill[f] = pol.standstill
        k_p[f] = spec.gains.k_p
        k_d[f] = spec.gains.k_d
        k_dd[f] = spec.gains.k_dd
    return tau, d, phi_mat, gamma, phi_pow_d, pred_w, policy, h_v, h_a, standstill, k_p, k_d, k_dd, x0, hist0


def _profile_arrays(profile: LeaderProfile):
    ns = len(profile.segments)
    seg_kind = np.empty(ns, dtype=np.int64)
    seg_t_end = np.empty(ns)
    seg_p1 = np.empty(ns)
    seg_p2 = np.empty(ns)
    end = 0.0
    for m, seg in enumerate(profile.segments):
        end += seg.duration
        seg_t_end[m] = end
        if seg.kind is SegmentKind.CRUISE:
            seg_kind[m] = _kernels.SEG_CRUISE
            seg_p1[m] = seg.v_ref
            seg_p2[m] = seg.gain
        else:
            seg_kind[m] = _kernels.SEG_PULSE
            seg_p1[m] = seg.amplitude
            seg_p2[m] = 0.0
    return seg_kind, seg_t_end, seg_p1, seg_p2


def run(config: PlatoonConfig, leader: LeaderProfile) -> TrajectoryLog:
    """Simulate the platoon over the horizon; deterministic in its inputs."""
    n_steps = int(round(config.horizon / config.ts))
    (
        tau, d, phi_mat, gamma, phi_pow_d, pred_w,
        policy, h_v, h_a, standstill, k_p, k_d, k_dd, x0, hist0,
    ) = _kernel_arrays(config)
    seg_kind, seg_t_end, seg_p1, seg_p2 = _profile_arrays(leader)
    opts = config.measurement
    out = _kernels.run_closed_loop(
        n_steps,
        config.ts,
        tau, d, phi_mat, gamma, phi_pow_d, pred_w,
        policy, h_v, h_a, standstill, k_p, k_d, k_dd,
        seg_kind, seg_t_end, seg_p1, seg_p2,
        x0, hist0,
        opts.radar_hold,
        1.0 / opts.radar_rate_hz,
        opts.v2v_hold,
        1.0 / opts.v2v_rate_hz,
        config.clamp_reverse,
    )
    t, q, v, a, u, e, delta, dref = out
    nf = len(config.vehicles) - 1
    return TrajectoryLog(
        t, q, v, a, u, e[:, :nf], delta[:, :nf], dref[:, :nf], config.ts
    )


def error_dynamics_reference(
    rho_bar: int,
    gains: ControllerGains,
    e0: float,
    horizon: float,
    ts: float,
) -> np.ndarray:
    """Analytic e(t) at the sample grid for the closed-loop error ODE.

    The controllers realize e' = -k_p e (rho_bar 1), e'' = -k_d e' - k_p e
    (rho_bar 2) or e''' = -k_dd e'' - k_d e' - k_p e (rho_bar 3) from
    initial condition (e0, 0, 0).  Evaluated through the exponential of the
    companion matrix, which also covers repeated or complex eigenvalues.
    """
    violations = validate_gains(rho_bar, gains)
    if violations:
        raise ValueError("invalid gains: " + "; ".join(violations))
    if rho_bar == 1:
        companion = np.array([[-gains.k_p]])
    elif rho_bar == 2:
        companion = np.array([[0.0, 1.0], [-gains.k_p, -gains.k_d]])
    elif rho_bar == 3:
        companion = np.array(
            [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-gains.k_p, -gains.k_d, -gains.k_dd]]
        )
    else:
        raise DegreeError(f"unsupported relative degree {rho_bar}")
    n = int(round(horizon / ts))
    step_matrix = scipy.linalg.expm(companion * ts)
    y = np.zeros(companion.shape[0])
    y[0] = e0
    series = np.empty(n + 1)
    series[0] = y[0]
    for k in range(n):
        y = step_matrix @ y
        series[k + 1] = y[0]
    return series
