"""Exact d-step-ahead prediction of the ego state over the delay horizon.

With a zero-order hold and an integer delay d = phi/Ts, the state at t + phi
is an exact function of the current state and the d buffered inputs:

    x(k + d) = Phi^d x(k) + sum_{j=1..d} Phi^{j-1} Gamma u(k - j)

so no approximation is involved.  Powers of Phi are precomputed per
(model, depth) pair and cached, since prediction runs every control step.
"""

from __future__ import annotations

import functools
import math

import numpy as np

from .dynamics import DiscreteModel, InputHistory, VehicleParams, VehicleState
from .errors import HistoryDepthError

__all__ = ["predict", "predict_acceleration_continuous", "prediction_weights"]


@functools.lru_cache(maxsize=256)
def _weights_cached(key, phi_bytes, gamma_bytes, depth):
    phi = np.frombuffer(phi_bytes).reshape(3, 3)
    gamma = np.frombuffer(gamma_bytes)
    phi_d = np.eye(3)
    # columns ordered oldest-first to match InputHistory.samples:
    # column m multiplies u(k - (depth - m)), i.e. weight Phi^{depth-1-m} Gamma
    w = np.zeros((3, depth))
    for j in range(1, depth + 1):  # phi_d = Phi^{j-1} at loop entry
        w[:, depth - j] = phi_d @ gamma
        phi_d = phi @ phi_d
    w.setflags(write=False)
    phi_d.setflags(write=False)
    return phi_d, w


def prediction_weights(model: DiscreteModel, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """(Phi^depth, W) with W @ history.samples the forced response at t + phi."""
    return _weights_cached(model.cache_key(), model.Phi.tobytes(), model.Gamma.tobytes(), depth)


def predict(model: DiscreteModel, x: VehicleState, history: InputHistory) -> VehicleState:
    """State at t + depth*Ts, exact for the ZOH discrete system."""
    if len(history.samples) != history.depth:
        raise HistoryDepthError(
            f"history holds {len(history.samples)} samples, expected {history.depth}"
        )
    if not math.isclose(history.sample_period, model.Ts, rel_tol=1e-12):
        raise HistoryDepthError(
            f"history sample period {history.sample_period} != model Ts {model.Ts}"
        )
    if history.depth == 0:
        return x
    phi_d, w = prediction_weights(model, history.depth)
    xh = phi_d @ x.as_array() + w @ history.as_array()
    return VehicleState.from_array(xh)


def predict_acceleration_continuous(
    params: VehicleParams, a_now: float, history: InputHistory
) -> float:
    """a(t + phi) from the convolution integral, closed form per ZOH segment.

    a(t+phi) = e^{-phi/tau} a(t) + int_{t-phi}^{t} (1/tau) e^{-(t-s)/tau} u(s) ds,
    where u is piecewise constant on the sample grid.  Agrees with the
    acceleration component of predict() to rounding.
    """
    if len(history.samples) != history.depth:
        raise HistoryDepthError(
            f"history holds {len(history.samples)} samples, expected {history.depth}"
        )
    tau = params.tau
    ts = history.sample_period
    d = history.depth
    acc = math.exp(-d * ts / tau) * a_now
    # segment j covers s in [t - j*Ts, t - (j-1)*Ts), value samples[d - j]
    for j in range(1, d + 1):
        seg = math.exp(-(j - 1) * ts / tau) - math.exp(-j * ts / tau)
        acc += history.samples[d - j] * seg
    return acc
