"""Single-run qubit dynamics under the rotating-frame signal and decoupling pulses.

States are complex arrays whose last axis holds the amplitudes ``(c0, c1)``
on ``{|0>, |1>}`` with ``sigma_z = |0><0| - |1><1|``; leading axes are batch
axes.  Evolution over each sub-interval is the exact SU(2) exponential of the
Hamiltonian sampled at the sub-interval midpoint.  Step unitaries are
multiplied by pairwise tree reduction, which keeps the Python-level loop
logarithmic in the number of steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, SaturationNotFoundError, StepBudgetError
from .noise import OuParams, OuState, ou_advance, ou_path
from .physics import RotatingFrameParams, Sensor, SignalField

KET0 = np.array([1.0 + 0j, 0.0 + 0j])
KET1 = np.array([0.0 + 0j, 1.0 + 0j])
KET_PLUS = np.array([1.0 + 0j, 1.0 + 0j]) / math.sqrt(2.0)

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_AXIS_VEC = {"x": np.array([1.0, 0.0, 0.0]), "y": np.array([0.0, 1.0, 0.0])}

_PATTERNS = {"CPMG": "xx", "XY8": "xyxyyxyx", "FREE": "--"}

# Upper bound on complex entries materialised per reduction chunk.
_CHUNK_ENTRIES = 1 << 21


@dataclass(frozen=True)
class PulseSequence:
    """Decoupling sequence ``(tau - pi - tau - pi ...)^{n_units}``.

    ``kind`` is ``"CPMG"`` (two pi_x pulses per unit), ``"XY8"`` (eight pulses,
    x/y alternating) or ``"FREE"`` (same timing, no pulses).  With a finite
    ``pulse_width`` each pulse occupies the last ``pulse_width`` seconds of its
    tau interval, so the total duration is unchanged.
    """

    kind: str = "CPMG"
    tau: float = 0.5e-6
    n_units: int = 1
    pulse_width: float = 0.0

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in _PATTERNS:
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if int(self.n_units) != self.n_units or self.n_units < 1:
            raise ValueError("n_units must be a positive integer")
        object.__setattr__(self, "n_units", int(self.n_units))
        if not 0 <= self.pulse_width < self.tau:
            raise ValueError("pulse_width must satisfy 0 <= pulse_width < tau")

    @property
    def pattern(self) -> str:
        return _PATTERNS[self.kind]

    @property
    def pulses_per_unit(self) -> int:
        return len(self.pattern)

    @property
    def unit_duration(self) -> float:
        return self.pulses_per_unit * self.tau

    @property
    def duration(self) -> float:
        """Total interaction time T_s."""
        return self.n_units * self.unit_duration

    def with_units(self, n_units: int) -> "PulseSequence":
        return PulseSequence(self.kind, self.tau, n_units, self.pulse_width)


@dataclass(frozen=True)
class SingleRunResult:
    p_plus: float
    t_s: float


# --------------------------------------------------------------------------
# SU(2) primitives


def _check_finite(h):
    if not np.all(np.isfinite(h)):
        raise NonFiniteError("non-finite Hamiltonian coefficient")


def step_unitaries(h, dt):
    """``exp(-i dt h.sigma)`` for coefficient arrays ``h[..., 3]``; returns ``[..., 2, 2]``."""
    h = np.asarray(h, dtype=float)
    _check_finite(h)
    hx, hy, hz = h[..., 0], h[..., 1], h[..., 2]
    norm = np.sqrt(hx * hx + hy * hy + hz * hz)
    dt_b = np.broadcast_to(np.asarray(dt, dtype=float), norm.shape)
    c = np.cos(norm * dt_b)
    s = dt_b * np.sinc(norm * dt_b / math.pi)  # sin(|h| dt) / |h|
    u = np.empty(norm.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1j * s * hz
    u[..., 0, 1] = -1j * s * (hx - 1j * hy)
    u[..., 1, 0] = -1j * s * (hx + 1j * hy)
    u[..., 1, 1] = c + 1j * s * hz
    return u


def reduce_product(u):
    """Time-ordered product ``u[M-1] @ ... @ u[0]`` over the first axis."""
    u = np.asarray(u)
    while u.shape[0] > 1:
        if u.shape[0] % 2:
            tail = u[-1:]
            u = np.concatenate([u[1:-1:2] @ u[0:-1:2], tail], axis=0)
        else:
            u = u[1::2] @ u[0::2]
    return u[0]


def apply_unitary(u, state):
    return np.einsum("...ij,...j->...i", u, state)


def apply_pulse(state, axis: str, angle: float = math.pi):
    """Instantaneous rotation ``exp(-i angle sigma_axis / 2)``."""
    u = math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * _PAULI[axis]
    return apply_unitary(u, np.asarray(state, dtype=complex))


def population_plus(state):
    state = np.asarray(state)
    return 0.5 * np.abs(state[..., 0] + state[..., 1]) ** 2


def _midpoint_grid(t0, t1, dt_max):
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    if t1 == t0:
        return np.empty(0), 0.0
    m = max(1, math.ceil((t1 - t0) / dt_max - 1e-9))
    dt = (t1 - t0) / m
    return t0 + (np.arange(m) + 0.5) * dt, dt


def propagate_piecewise(state, coeff, t0: float, t1: float, dt_max: float):
    """Evolve ``state`` from ``t0`` to ``t1`` under ``H(t) = coeff(t) . sigma``.

    ``coeff`` maps an array of times ``(M,)`` to coefficients ``(M, ..., 3)``.
    """
    state = np.asarray(state, dtype=complex)
    mids, dt = _midpoint_grid(t0, t1, dt_max)
    if mids.size == 0:
        return state.copy()
    u = reduce_product(step_unitaries(coeff(mids), dt))
    return apply_unitary(u, state)


# --------------------------------------------------------------------------
# Rotating-frame runs


@dataclass(frozen=True)
class _UnitGrid:
    """Sub-step layout of one sequence unit (shared by every unit)."""

    mids: np.ndarray      # step midpoints relative to the unit start
    dts: np.ndarray       # step lengths
    drive: np.ndarray     # (M, 3) finite-width pulse drive, zero when free
    pulses: tuple         # ((step index after which to apply, axis), ...)


def _unit_grid(seq: PulseSequence, dt_max: float) -> _UnitGrid:
    mids, dts, drive, pulses = [], [], [], []
    n = 0
    for slot, axis in enumerate(seq.pattern):
        start = slot * seq.tau
        free_end = start + seq.tau - (seq.pulse_width if axis != "-" else 0.0)
        m, dt = _midpoint_grid(start, free_end, dt_max)
        mids.append(m)
        dts.append(np.full(m.size, dt))
        drive.append(np.zeros((m.size, 3)))
        n += m.size
        if axis == "-":
            continue
        if seq.pulse_width > 0:
            m, dt = _midpoint_grid(free_end, start + seq.tau, dt_max)
            mids.append(m)
            dts.append(np.full(m.size, dt))
            drive.append(np.tile(0.5 * math.pi / seq.pulse_width * _AXIS_VEC[axis], (m.size, 1)))
            n += m.size
        else:
            pulses.append((n - 1, axis))
    return _UnitGrid(np.concatenate(mids), np.concatenate(dts), np.concatenate(drive), tuple(pulses))


def default_dt_max(rf: RotatingFrameParams, seq: PulseSequence) -> float:
    span = seq.tau
    if rf.delta_big != 0:
        span = min(span, 2 * math.pi / abs(rf.delta_big))
    return span / 200.0


def run_midpoints(seq: PulseSequence, dt_max: float) -> np.ndarray:
    """Midpoint times of every integration step of a run, relative to its start."""
    grid = _unit_grid(seq, dt_max)
    offsets = np.arange(seq.n_units) * seq.unit_duration
    return (offsets[:, None] + grid.mids[None, :]).ravel()


def _pulse_unitary(axis):
    return -1j * _PAULI[axis]  # exp(-i pi sigma/2)


def simulate_runs(
    rf: RotatingFrameParams,
    seq: PulseSequence,
    phase_offsets,
    noise=None,
    dt_max: float | None = None,
    record_units: bool = False,
):
    """Vectorised rotating-frame simulation of a batch of runs.

    Parameters
    ----------
    phase_offsets : array_like, shape (B,)
        Signal phase used in the Hamiltonian for each run.
    noise : array_like, shape (B, M) or (M,), optional
        dB(t) at the step midpoints returned by :func:`run_midpoints`.
    record_units : bool
        Also return the |+> population after every sequence unit.

    Returns
    -------
    p_plus : ndarray, shape (B,) or (B, n_units) when ``record_units``.
    """
    if dt_max is None:
        dt_max = default_dt_max(rf, seq)
    phases = np.atleast_1d(np.asarray(phase_offsets, dtype=float))
    batch = phases.size
    grid = _unit_grid(seq, dt_max)
    m_unit = grid.mids.size
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
        if noise.ndim == 1:
            noise = noise[None, :]
        if noise.shape[-1] != m_unit * seq.n_units:
            raise ValueError("noise must be sampled on run_midpoints(seq, dt_max)")
        noise = np.broadcast_to(noise, (batch, noise.shape[-1]))

    pulse_u = {axis: _pulse_unitary(axis) for axis in "xy"}
    after = {}
    for idx, axis in grid.pulses:
        after.setdefault(idx, []).append(axis)
    # Split each unit at pulse positions; chunk long blocks to bound memory.
    cuts = sorted(after)
    blocks, lo = [], 0
    for c in cuts:
        blocks.append((lo, c + 1))
        lo = c + 1
    if lo < m_unit:
        blocks.append((lo, m_unit))
    chunk = max(1, _CHUNK_ENTRIES // (4 * batch))

    state = np.tile(KET1, (batch, 1))
    record = np.empty((batch, seq.n_units)) if record_units else None
    for unit in range(seq.n_units):
        t_off = unit * seq.unit_duration
        for lo, hi in blocks:
            for a in range(lo, hi, chunk):
                b = min(hi, a + chunk)
                t = t_off + grid.mids[a:b]
                arg = rf.delta_big * t[:, None] + phases[None, :]
                h = np.empty((b - a, batch, 3))
                h[..., 0] = 0.5 * rf.k_s * np.cos(arg) + grid.drive[a:b, 0, None]
                h[..., 1] = 0.5 * rf.k_s * np.sin(arg) + grid.drive[a:b, 1, None]
                if noise is None:
                    h[..., 2] = 0.0
                else:
                    h[..., 2] = 0.5 * noise[:, unit * m_unit + a : unit * m_unit + b].T
                u = reduce_product(step_unitaries(h, grid.dts[a:b, None]))
                state = apply_unitary(u, state)
            for axis in after.get(hi - 1, ()):
                state = apply_unitary(pulse_u[axis], state)
        if record_units:
            record[:, unit] = population_plus(state)
    if not np.all(np.isfinite(state)):
        raise NonFiniteError("state became non-finite")
    return record if record_units else population_plus(state)


def simulate_single_run(
    rf: RotatingFrameParams,
    seq: PulseSequence,
    ou: OuParams | None = None,
    ou_state: OuState | None = None,
    phase_offset: float | None = None,
    dt_max: float | None = None,
    rng: np.random.Generator | None = None,
):
    """Initialise |1>, evolve for T_s under the signal (+ noise) and pulses.

    Returns ``(SingleRunResult, OuState)``.  The returned noise state sits at
    the end of the interaction window so the caller can skip it ahead over
    readout and delay time.
    """
    if dt_max is None:
        dt_max = default_dt_max(rf, seq)
    phi = rf.phi if phase_offset is None else phase_offset
    noise = None
    if ou is not None and ou.delta_B > 0:
        if rng is None:
            raise ValueError("rng required when noise is on")
        if ou_state is None:
            from .noise import ou_init

            ou_state = ou_init(ou, rng)
        t0 = ou_state.time
        noise, ou_state = ou_path(ou_state, t0 + run_midpoints(seq, dt_max), rng)
        ou_state = ou_advance(ou_state, t0 + seq.duration - ou_state.time, rng)
    p = simulate_runs(rf, seq, [phi], noise=noise, dt_max=dt_max)[0]
    return SingleRunResult(float(p), seq.duration), ou_state


# --------------------------------------------------------------------------
# Analytic oracles


def analytic_phi_amplitude(rf: RotatingFrameParams, seq: PulseSequence, phase_offset=None):
    """Accumulated signal angle ``Phi`` of the toggling-frame Hamiltonian."""
    phi = rf.phi if phase_offset is None else np.asarray(phase_offset, dtype=float)
    t_s = seq.duration
    delta = rf.detuning(seq.tau)
    x = 0.5 * delta * t_s
    return rf.k_s * t_s / math.pi * np.sinc(x / math.pi) * np.cos(x + phi)


def analytic_population(rf: RotatingFrameParams, seq: PulseSequence, phase_offset=None):
    """|+> population ``sin^2(Phi - pi/4)`` after a CPMG-type run."""
    return np.sin(analytic_phi_amplitude(rf, seq, phase_offset) - math.pi / 4) ** 2


def contrast_from_samples(p) -> float:
    p = np.asarray(p, dtype=float)
    hi, lo = p.max(), p.min()
    return float((hi - lo) / (hi + lo)) if hi + lo > 0 else 0.0


def contrast(rf: RotatingFrameParams, seq: PulseSequence, grid_points: int = 1024) -> float:
    """(max - min)/(max + min) of the population over the signal phase."""
    if grid_points < 64:
        raise ValueError("grid_points must be >= 64")
    phis = np.linspace(0.0, 2 * math.pi, grid_points, endpoint=False)
    return contrast_from_samples(analytic_population(rf, seq, phis))


def find_saturation_ns(
    rf: RotatingFrameParams,
    tau: float,
    c_threshold: float,
    ns_max: int = 200,
    grid_points: int = 1024,
    kind: str = "CPMG",
) -> int:
    """Smallest sequence number whose contrast reaches ``c_threshold``."""
    if not 0 <= c_threshold < 1:
        raise ValueError("c_threshold must lie in [0, 1)")
    for ns in range(1, ns_max + 1):
        if contrast(rf, PulseSequence(kind, tau, ns), grid_points) >= c_threshold:
            return ns
    raise SaturationNotFoundError(f"contrast never reaches {c_threshold} for N_s <= {ns_max}")


# --------------------------------------------------------------------------
# Lab-frame oracle


def simulate_lab_frame(
    field: SignalField,
    sensor: Sensor,
    seq: PulseSequence,
    phase_offset: float | None = None,
    dt_max: float | None = None,
    max_steps: int = 20_000_000,
) -> SingleRunResult:
    """Evolve under ``H_p + H_s`` without the rotating-wave approximation.

    Pulses are ideal rotations defined in the frame rotating at ``omega0``;
    the final state is mapped back into that frame before readout.
    ``phase_offset`` replaces the field phase ``phi_s``.
    """
    w0 = sensor.omega0
    w = field.omega
    limit = 2 * math.pi / (50 * (w + w0))
    dt_max = limit if dt_max is None else dt_max
    if dt_max > limit:
        raise ValueError(f"dt_max must resolve the carrier: <= {limit:.3e} s")
    if seq.pulse_width:
        raise ValueError("lab-frame oracle supports instantaneous pulses only")
    phi_s = field.phi_s if phase_offset is None else phase_offset
    n_steps = math.ceil(seq.duration / dt_max)
    if n_steps > max_steps:
        raise StepBudgetError(f"{n_steps} steps exceed the budget of {max_steps}")
    bx, by, bz = field.b

    def coeff(t):
        c = np.cos(w * t + phi_s)
        return np.stack([bx * c, by * c, 0.5 * w0 + bz * c], axis=-1)

    def frame(t):  # R(t) = exp(-i w0 t sigma_z / 2)
        return np.diag([np.exp(-0.5j * w0 * t), np.exp(0.5j * w0 * t)])

    state = KET1.copy()
    t = 0.0
    for _ in range(seq.n_units):
        for axis in seq.pattern:
            state = propagate_piecewise(state, coeff, t, t + seq.tau, dt_max)
            t += seq.tau
            if axis != "-":
                r = frame(t)
                state = r @ _pulse_unitary(axis) @ r.conj().T @ state
    state = frame(t).conj().T @ state
    return SingleRunResult(float(population_plus(state)), seq.duration)
