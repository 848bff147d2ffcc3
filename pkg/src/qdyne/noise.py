"""Ornstein-Uhlenbeck dephasing noise with exact discrete updates.

The conditional law over any interval ``dt`` is Gaussian,

    x(t+dt) | x(t) ~ N(x(t) e^{-dt/tau_B}, Delta_B^2 (1 - e^{-2 dt/tau_B})),

so one update rule covers fine integration steps and long skip-aheads alike.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OuParams:
    tau_B: float
    delta_B: float

    def __post_init__(self):
        if not self.tau_B > 0:
            raise ValueError(f"tau_B must be positive, got {self.tau_B}")
        if not self.delta_B >= 0:
            raise ValueError(f"delta_B must be non-negative, got {self.delta_B}")


@dataclass(frozen=True)
class OuState:
    params: OuParams
    value: float = 0.0
    time: float = 0.0


def ou_init(params: OuParams, rng: np.random.Generator) -> OuState:
    """Draw the initial value from the stationary law N(0, Delta_B^2)."""
    value = params.delta_B * rng.standard_normal() if params.delta_B > 0 else 0.0
    return OuState(params, float(value), 0.0)


def ou_advance(state: OuState, dt: float, rng: np.random.Generator) -> OuState:
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    p = state.params
    decay = math.exp(-dt / p.tau_B)
    value = state.value * decay
    if p.delta_B > 0 and dt > 0:
        value += p.delta_B * math.sqrt(-math.expm1(-2.0 * dt / p.tau_B)) * rng.standard_normal()
    return OuState(p, value, state.time + dt)


def ou_path(state: OuState, times, rng: np.random.Generator):
    """Sample the process at increasing ``times`` (all >= ``state.time``).

    Vectorised equivalent of chaining :func:`ou_advance`.  Returns the sampled
    values and the state at ``times[-1]``.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.empty(0), state
    if times[0] < state.time or np.any(np.diff(times) < 0):
        raise ValueError("times must be non-decreasing and start at or after state.time")
    p = state.params
    dts = np.diff(times, prepend=state.time)
    decay = np.exp(-dts / p.tau_B)
    innov = p.delta_B * np.sqrt(-np.expm1(-2.0 * dts / p.tau_B)) * rng.standard_normal(times.size)

    out = np.empty(times.size)
    x = state.value
    n = times.size
    start = 0
    # Between direct steps, x_j = D_j (x_0 + sum_i innov_i / D_i) with D the
    # cumulative decay; chunks keep D inside the float range.
    while start < n:
        x = decay[start] * x + innov[start]
        out[start] = x
        start += 1
        if start == n:
            break
        log_d = np.cumsum(-dts[start : start + 65536] / p.tau_B)
        stop = start + int(np.searchsorted(-log_d, 50.0, side="right"))
        if stop > start:
            log_d = log_d[: stop - start]
            vals = np.exp(log_d) * (x + np.cumsum(innov[start:stop] * np.exp(-log_d)))
            out[start:stop] = vals
            x = vals[-1]
            start = stop
    return out, OuState(p, float(x), float(times[-1]))
