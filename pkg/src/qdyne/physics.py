"""Field/sensor parameters and the rotating-frame signal they produce.

A transverse field ``b . sigma cos(omega t + phi_s)`` acting on a qubit with
splitting ``omega0`` looks, in the frame rotating at ``omega0``, like a slow
RF field of amplitude ``k_s`` rotating at the beat ``Delta = omega - omega0``.
All angular quantities are in rad/s, times in seconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SignalField:
    """Lab-frame oscillating field.

    Parameters
    ----------
    omega : float
        Angular frequency of the field (rad/s).
    phi_s : float
        Initial phase (rad).
    b : tuple of 3 floats
        Coupling strengths ``(b_x, b_y, b_z)`` in rad/s.
    gamma : float
        Intrinsic linewidth, FWHM of the field spectrum (rad/s).
    """

    omega: float
    phi_s: float = 0.0
    b: tuple = (0.0, 0.0, 0.0)
    gamma: float = 0.0

    def __post_init__(self):
        b = tuple(float(x) for x in self.b)
        if len(b) != 3:
            raise ValueError("b must have three components")
        object.__setattr__(self, "b", b)
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if not all(math.isfinite(x) for x in b):
            raise ValueError("b must be finite")


@dataclass(frozen=True)
class Sensor:
    """Two-level sensor ``H = (omega0/2) sigma_z``."""

    omega0: float

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ValueError(f"omega0 must be positive, got {self.omega0}")


@dataclass(frozen=True)
class RotatingFrameParams:
    """Parameters of the effective RF signal seen in the frame rotating at omega0."""

    delta_big: float
    k_s: float
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not self.k_s >= 0:
            raise ValueError(f"k_s must be non-negative, got {self.k_s}")

    def with_phase(self, phi: float) -> "RotatingFrameParams":
        return RotatingFrameParams(self.delta_big, self.k_s, self.theta, phi)

    def detuning(self, tau: float) -> float:
        """Residual detuning ``delta = Delta - pi/tau`` from the decoupling filter."""
        return self.delta_big - math.pi / tau


@dataclass(frozen=True)
class RegimeReport:
    ratio_lo: float
    ratio_hi: float
    ok: bool
    margin: float = field(default=10.0)


def coupling_phase(b_x: float, b_y: float) -> float:
    """Phase of the transverse coupling in the rotating frame.

    At ``t = 0`` the co-rotating half of ``(b_x sigma_x + b_y sigma_y)`` points
    along ``(b_x, b_y)``, so the phase is the polar angle of that vector.
    """
    return math.atan2(b_y, b_x)


def derive_rotating_frame(field: SignalField, sensor: Sensor) -> RotatingFrameParams:
    b_x, b_y, _ = field.b
    theta = coupling_phase(b_x, b_y)
    return RotatingFrameParams(
        delta_big=field.omega - sensor.omega0,
        k_s=math.hypot(b_x, b_y),
        theta=theta,
        phi=field.phi_s + theta,
    )


def validate_regime(
    rf: RotatingFrameParams, field: SignalField, sensor: Sensor, margin: float = 10.0
) -> RegimeReport:
    """Check ``k_s << |Delta| << omega + omega0`` with ``<<`` meaning a factor ``margin``."""
    if margin < 1:
        raise ValueError("margin must be >= 1")
    abs_delta = abs(rf.delta_big)
    ratio_lo = rf.k_s / abs_delta if abs_delta > 0 else math.inf
    ratio_hi = abs_delta / (field.omega + sensor.omega0)
    ok = abs_delta > 0 and rf.k_s * margin <= abs_delta and abs_delta * margin <= field.omega + sensor.omega0
    return RegimeReport(ratio_lo=ratio_lo, ratio_hi=ratio_hi, ok=bool(ok), margin=margin)


def hamiltonian_coeffs_rotating(rf: RotatingFrameParams, noise_value, t):
    """Pauli coefficients ``(h_x, h_y, h_z)`` of the rotating-frame Hamiltonian.

    Vectorised over ``t`` and ``noise_value``; the last axis of the result has
    length 3.
    """
    arg = rf.delta_big * np.asarray(t, dtype=float) + rf.phi
    half = 0.5 * rf.k_s
    hx = half * np.cos(arg)
    hy = half * np.sin(arg)
    hz = 0.5 * np.asarray(noise_value, dtype=float)
    hx, hy, hz = np.broadcast_arrays(hx, hy, hz)
    return np.stack([hx, hy, hz], axis=-1)


def hamiltonian_coeff_toggling(rf: RotatingFrameParams, tau: float, t):
    """sigma_y coefficient of the CPMG toggling-frame Hamiltonian."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    delta = rf.delta_big - math.pi / tau
    return rf.k_s / math.pi * np.cos(delta * np.asarray(t, dtype=float) + rf.phi)
