"""Experiment configuration: a versioned JSON document and named presets.

Angular quantities are stored as ordinary frequencies in Hz (``*_hz`` keys)
so configs read naturally; they are multiplied by 2 pi when the library
objects are built.
"""
from __future__ import annotations

import copy
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .chain import ChainConfig
from .dynamics import PulseSequence
from .errors import ConfigError
from .noise import OuParams
from .physics import RotatingFrameParams, Sensor, SignalField, derive_rotating_frame, validate_regime
from .readout import ReadoutModel

SCHEMA_VERSION = 1
PIPELINES = ("fig2a", "fig2b", "fig2c", "fig3", "fig4", "chain")
PRESETS = ("fig2a", "fig2b", "fig2c", "fig3", "fig4")
TWO_PI = 2.0 * math.pi


@dataclass
class FieldSection:
    freq_hz: float = 1801.501232e6
    phi_s: float = 0.0
    coupling_hz: list = field(default_factory=lambda: [50e3, 0.0, 0.0])
    linewidth_hz: float = 0.0


@dataclass
class SensorSection:
    freq_hz: float = 1800.501e6


@dataclass
class SequenceSection:
    kind: str = "CPMG"
    tau: float = 0.5e-6
    n_units: int = 9
    pulse_width: float = 0.0


@dataclass
class NoiseSection:
    tau_b: float = 4e-3
    sigma_hz: float = 100e3


@dataclass
class ReadoutSection:
    variant: str = "poisson"
    mu0: float = 0.7
    mu1: float = 1.0


@dataclass
class ChainSection:
    t_r: float = 5e-6
    t_d: float = 86e-6
    n_runs: int = 100_000
    mode: str = "analytic"
    phase_reference: str = "absolute"
    dt_max: float | None = None


@dataclass
class FitSection:
    guard_bins: int = 3
    half_window: int = 10


@dataclass
class ProcessSection:
    """Synthetic tone process used by the spectral scaling study."""

    a: float = 0.5
    b: float = 0.3
    bin_fraction: float = 0.15
    bin_offset: float = 0.0


@dataclass
class AnalysisSection:
    pipeline: str = "chain"
    realizations: int = 500
    ns_max: int = 40
    phase_points: int = 32
    contrast_threshold: float = 0.95
    contrast_grid: int = 1024
    n_values: list = field(default_factory=lambda: [2000, 5000, 10000, 20000])
    omega_prior_hz: float | None = None
    prior_sigma_hz: float | None = None
    numeric_spot_check: int = 0
    regime_margin: float = 10.0
    process: ProcessSection = field(default_factory=ProcessSection)


_SECTIONS = {
    "field": FieldSection,
    "sensor": SensorSection,
    "sequence": SequenceSection,
    "noise": NoiseSection,
    "readout": ReadoutSection,
    "chain": ChainSection,
    "fit": FitSection,
    "analysis": AnalysisSection,
}


@dataclass
class ExperimentConfig:
    name: str = "custom"
    seed: int = 0
    out: str = "out"
    field: FieldSection = dataclasses.field(default_factory=FieldSection)
    sensor: SensorSection = dataclasses.field(default_factory=SensorSection)
    sequence: SequenceSection = dataclasses.field(default_factory=SequenceSection)
    noise: NoiseSection | None = dataclasses.field(default_factory=NoiseSection)
    readout: ReadoutSection = dataclasses.field(default_factory=ReadoutSection)
    chain: ChainSection = dataclasses.field(default_factory=ChainSection)
    fit: FitSection = dataclasses.field(default_factory=FitSection)
    analysis: AnalysisSection = dataclasses.field(default_factory=AnalysisSection)
    schema_version: int = SCHEMA_VERSION

    # -- library objects -------------------------------------------------
    def signal_field(self) -> SignalField:
        b = [TWO_PI * float(x) for x in self.field.coupling_hz]
        return SignalField(TWO_PI * self.field.freq_hz, self.field.phi_s, tuple(b), TWO_PI * self.field.linewidth_hz)

    def sensor_obj(self) -> Sensor:
        return Sensor(TWO_PI * self.sensor.freq_hz)

    def rotating_frame(self) -> RotatingFrameParams:
        return derive_rotating_frame(self.signal_field(), self.sensor_obj())

    def pulse_sequence(self) -> PulseSequence:
        s = self.sequence
        return PulseSequence(s.kind, s.tau, s.n_units, s.pulse_width)

    def ou_params(self) -> OuParams | None:
        if self.noise is None or self.noise.sigma_hz == 0:
            return None
        return OuParams(self.noise.tau_b, TWO_PI * self.noise.sigma_hz)

    def readout_model(self) -> ReadoutModel:
        r = self.readout
        if r.variant.lower() == "bernoulli":
            return ReadoutModel.bernoulli()
        return ReadoutModel(r.variant, r.mu0, r.mu1)

    def chain_config(self, n_runs: int | None = None) -> ChainConfig:
        c = self.chain
        return ChainConfig(
            self.pulse_sequence().duration, c.t_r, c.t_d,
            c.n_runs if n_runs is None else n_runs,
            c.mode, self.seed, c.phase_reference, c.dt_max,
        )

    def omega_prior(self) -> float:
        a = self.analysis
        return TWO_PI * (self.field.freq_hz if a.omega_prior_hz is None else a.omega_prior_hz)

    def validate(self) -> "ExperimentConfig":
        """Build every library object so all invariants are checked up front."""
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"config schema version {self.schema_version} != supported {SCHEMA_VERSION}")
        if self.analysis.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.analysis.pipeline!r}; choose from {PIPELINES}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if len(self.field.coupling_hz) != 3:
            raise ConfigError("field.coupling_hz must have three components")
        a = self.analysis
        if a.realizations < 1 or a.phase_points < 1 or a.ns_max < 1:
            raise ConfigError("analysis counts must be positive")
        try:
            field_, sensor = self.signal_field(), self.sensor_obj()
            rf = derive_rotating_frame(field_, sensor)
            validate_regime(rf, field_, sensor, a.regime_margin)
            self.pulse_sequence()
            self.ou_params()
            self.readout_model()
            self.chain_config()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # -- serialisation ---------------------------------------------------
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if "schema_version" not in data:
            raise ConfigError("config lacks schema_version")
        if data["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"config schema version {data['schema_version']} != supported {SCHEMA_VERSION}")
        top = _check_keys(cls, data, "config")
        kwargs = {}
        for key, value in top.items():
            if key in _SECTIONS:
                if value is None and key == "noise":
                    kwargs[key] = None
                    continue
                kwargs[key] = _build(_SECTIONS[key], value, key)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())


def _check_keys(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return data


def _build(cls, data, where):
    data = dict(_check_keys(cls, data, where))
    if cls is AnalysisSection and "process" in data:
        data["process"] = _build(ProcessSection, data["process"], f"{where}.process")
    return cls(**data)


def preset(name: str) -> ExperimentConfig:
    """Named, ready-to-run configurations (one per bundled study)."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    cfg = ExperimentConfig(name=name)
    cfg.analysis.pipeline = name
    if name.startswith("fig2"):
        cfg.readout = ReadoutSection("bernoulli", 0.0, 1.0)
        cfg.chain.n_runs = 1
        cfg.analysis.realizations = 500
        if name == "fig2b":
            cfg.analysis.phase_points = 32
    elif name == "fig3":
        cfg.noise = None
        cfg.readout = ReadoutSection("poisson", 0.1, 1.1)
        cfg.analysis.realizations = 500
        cfg.analysis.n_values = [2000, 5000, 10000, 20000]
    else:  # fig4
        cfg.chain.n_runs = 100_000
        cfg.analysis.omega_prior_hz = 1801.501e6
        cfg.analysis.numeric_spot_check = 1000
    return copy.deepcopy(cfg)
