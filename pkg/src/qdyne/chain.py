"""The Qdyne measurement chain: N clock-synchronised single runs and their readout.

Run ``n`` (1-based) starts at ``t_n = (n-1) T_L`` and sees the signal phase
``phi_n = omega t_n + phi``.  Because ``omega t_n`` reaches ~1e11 rad for
GHz fields over seconds, the per-run phase increment ``omega T_L mod 2 pi``
is evaluated in extended precision and accumulated in cycles.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import mpmath
import numpy as np

from . import rng as rngmod
from .dynamics import PulseSequence, analytic_population, default_dt_max, run_midpoints, simulate_runs
from .errors import ChainRunError, ConfigError
from .noise import OuParams, ou_init, ou_path
from .physics import RotatingFrameParams, SignalField
from .readout import ReadoutModel, sample_photons

_MP_DPS = 50


@dataclass(frozen=True)
class ChainConfig:
    t_s: float
    t_r: float
    t_d: float
    n_runs: int
    mode: str = "analytic"
    seed: int = 0
    phase_reference: str = "absolute"
    dt_max: float | None = None

    def __post_init__(self):
        mode = self.mode.lower()
        aliases = {"analyticeq3": "analytic", "numericeq1": "numeric"}
        mode = aliases.get(mode, mode)
        if mode not in ("analytic", "numeric"):
            raise ConfigError(f"unknown chain mode {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if self.phase_reference not in ("absolute", "reduced"):
            raise ConfigError("phase_reference must be 'absolute' or 'reduced'")
        if min(self.t_s, self.t_r, self.t_d) < 0:
            raise ConfigError("chain times must be non-negative")
        if not self.t_L > 0:
            raise ConfigError("T_L must be positive")
        if int(self.n_runs) != self.n_runs or self.n_runs < 1:
            raise ConfigError("n_runs must be a positive integer")
        object.__setattr__(self, "n_runs", int(self.n_runs))

    @property
    def t_L(self) -> float:
        return self.t_s + self.t_r + self.t_d

    @property
    def f_L(self) -> float:
        return 1.0 / self.t_L


@dataclass(frozen=True)
class ReducedFrequency:
    delta_L: float
    n_L: int


@dataclass
class TimeTrace:
    counts: np.ndarray
    times: np.ndarray
    f_L: float
    metadata: dict = field(default_factory=dict)
    populations: np.ndarray | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        self.times = np.asarray(self.times, dtype=float)
        if self.counts.shape != self.times.shape or self.counts.ndim != 1:
            raise ValueError("counts and times must be 1-D arrays of equal length")

    def __len__(self):
        return self.counts.size

    @property
    def n_runs(self) -> int:
        return self.counts.size

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "t_n", "z_n"])
            for i, (t, z) in enumerate(zip(self.times.tolist(), self.counts.tolist()), start=1):
                w.writerow([i, repr(float(t)), z])
        meta = dict(self.metadata, f_L=self.f_L, n_runs=self.n_runs)
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path) -> "TimeTrace":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(path.with_suffix(".json").read_text())
        counts = data[:, 2]
        if np.all(counts == np.round(counts)):
            counts = counts.astype(np.int64)
        return cls(counts, data[:, 1], float(meta["f_L"]), meta)


# --------------------------------------------------------------------------
# Frequency bookkeeping


def _reduce(omega, f_L_mp):
    with mpmath.workdps(_MP_DPS):
        x = mpmath.mpf(omega) / (2 * mpmath.pi * f_L_mp)
        n_L = int(mpmath.ceil(x - mpmath.mpf(0.5)))
        delta_L = mpmath.mpf(omega) - 2 * mpmath.pi * n_L * f_L_mp
        return ReducedFrequency(float(delta_L), n_L)


def reduce_frequency(omega: float, f_L: float) -> ReducedFrequency:
    """Alias ``omega`` into ``(-pi f_L, pi f_L]``: ``omega = 2 pi N_L f_L + delta_L``."""
    if not f_L > 0:
        raise ValueError("f_L must be positive")
    return _reduce(omega, mpmath.mpf(f_L))


def reduce_frequency_for_period(omega: float, t_L: float) -> ReducedFrequency:
    """As :func:`reduce_frequency` with ``f_L = 1/t_L`` taken exactly."""
    with mpmath.workdps(_MP_DPS):
        return _reduce(omega, 1 / mpmath.mpf(t_L))


def clock_phases(omega: float, t_L: float, n_runs: int, phi: float = 0.0, reference: str = "absolute"):
    """Signal phases ``phi_n`` (wrapped to [0, 2 pi)) at the start of each run."""
    n = np.arange(n_runs, dtype=np.int64)
    if reference == "reduced":
        delta_L = reduce_frequency_for_period(omega, t_L).delta_L
        return np.mod(delta_L * (n * t_L) + phi, 2 * math.pi)
    with mpmath.workdps(_MP_DPS):
        cycles = mpmath.mpf(omega) * mpmath.mpf(t_L) / (2 * mpmath.pi)
        frac = float(cycles - mpmath.floor(cycles))
    # n * frac stays below ~1e5 cycles so its rounding error is ~1e-11 cycles.
    run_cycles = np.mod(n * frac, 1.0)
    return np.mod(2 * math.pi * run_cycles + phi, 2 * math.pi)


def linewidth_phases(gamma: float, t_L: float, n_runs: int, rng: np.random.Generator):
    """Brownian field phase with variance ``gamma * t`` (Lorentzian FWHM ``gamma``)."""
    if gamma == 0:
        return np.zeros(n_runs)
    steps = rng.standard_normal(n_runs - 1) * math.sqrt(gamma * t_L)
    return np.concatenate([[0.0], np.cumsum(steps)])


# --------------------------------------------------------------------------
# Chain


def _numeric_populations(cfg, rf, seq, ou, phases, rng_noise, batch=256):
    dt_max = cfg.dt_max or default_dt_max(rf, seq)
    mids = run_midpoints(seq, dt_max)
    t_L = cfg.t_L
    state = ou_init(ou, rng_noise) if ou is not None and ou.delta_B > 0 else None
    pops = np.empty(cfg.n_runs)
    for start in range(0, cfg.n_runs, batch):
        stop = min(cfg.n_runs, start + batch)
        try:
            noise = None
            if state is not None:
                starts = np.arange(start, stop) * t_L
                noise, state = ou_path(state, (starts[:, None] + mids[None, :]).ravel(), rng_noise)
                noise = noise.reshape(stop - start, mids.size)
            pops[start:stop] = simulate_runs(rf, seq, phases[start:stop], noise=noise, dt_max=dt_max)
        except Exception as exc:  # surface with the failing run index
            raise ChainRunError(start + 1, exc) from exc
    return np.clip(pops, 0.0, 1.0)


def run_chain(
    cfg: ChainConfig,
    rf: RotatingFrameParams,
    field: SignalField,
    seq: PulseSequence,
    ou: OuParams | None = None,
    model: ReadoutModel | None = None,
) -> TimeTrace:
    """Simulate the chain and return the photon-count time trace.

    Noise persists as one trajectory over the chain; between interaction
    windows it is advanced exactly over readout and delay time.  The sensor
    itself does not evolve outside the interaction window.
    """
    if not math.isclose(cfg.t_s, seq.duration, rel_tol=1e-9, abs_tol=0.0):
        raise ConfigError(f"t_s={cfg.t_s} does not match the sequence duration {seq.duration}")
    model = model or ReadoutModel.bernoulli()
    t_L = cfg.t_L
    phases = clock_phases(field.omega, t_L, cfg.n_runs, rf.phi, cfg.phase_reference)
    if field.gamma > 0:
        phases = phases + linewidth_phases(field.gamma, t_L, cfg.n_runs, rngmod.substream(cfg.seed, "linewidth"))

    if cfg.mode == "analytic":
        pops = np.clip(analytic_population(rf, seq, phases), 0.0, 1.0)
    else:
        pops = _numeric_populations(cfg, rf, seq, ou, phases, rngmod.substream(cfg.seed, "noise"))

    counts = sample_photons(pops, model, rngmod.substream(cfg.seed, "readout"))
    times = np.arange(cfg.n_runs, dtype=np.int64) * t_L
    metadata = {
        "chain": asdict(cfg),
        "field": asdict(field),
        "rotating_frame": asdict(rf),
        "sequence": asdict(seq),
        "noise": asdict(ou) if ou is not None else None,
        "readout": asdict(model),
        "seed": cfg.seed,
        "t_L": t_L,
    }
    return TimeTrace(np.atleast_1d(counts), times, cfg.f_L, metadata, pops)
