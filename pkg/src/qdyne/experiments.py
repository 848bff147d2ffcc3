"""Pipelines behind each preset; each writes its artifacts into an output directory."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .chain import TimeTrace, reduce_frequency_for_period, run_chain
from .config import ExperimentConfig
from .dynamics import (
    PulseSequence,
    analytic_population,
    contrast,
    contrast_from_samples,
    default_dt_max,
    find_saturation_ns,
    run_midpoints,
    simulate_runs,
)
from .errors import SaturationNotFoundError
from .metrology import qfi_chain
from .noise import ou_init, ou_path
from .physics import validate_regime
from .readout import sample_photons
from .spectrum import (
    ToneProcess,
    fit_peak,
    peak_search,
    power_spectrum,
    reconstruct_frequency,
    scaling_statistics,
    write_fit_report,
)

TWO_PI = 2.0 * math.pi


@dataclass
class RunOutcome:
    summary: str
    analysis: dict
    files: list = field(default_factory=list)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _noise_paths(cfg: ExperimentConfig, times: np.ndarray, count: int) -> np.ndarray | None:
    """``count`` independent stationary noise trajectories sampled at ``times``."""
    ou = cfg.ou_params()
    if ou is None:
        return None
    out = np.empty((count, times.size))
    for r in range(count):
        g = rngmod.substream(cfg.seed, "noise", r)
        out[r], _ = ou_path(ou_init(ou, g), times, g)
    return out


# --------------------------------------------------------------------------
# Single-run population studies


def _fig2a(cfg: ExperimentConfig, out: Path) -> RunOutcome:
    rf = cfg.rotating_frame()
    base = cfg.pulse_sequence()
    ns_max = cfg.analysis.ns_max
    seq = base.with_units(ns_max)
    ns = np.arange(1, ns_max + 1)
    phi = rf.phi
    analytic = np.array([analytic_population(rf, base.with_units(int(n)), phi) for n in ns])
    dt_max = cfg.chain.dt_max or default_dt_max(rf, seq)
    numeric = simulate_runs(rf, seq, [phi], dt_max=dt_max, record_units=True)[0]

    reps = cfg.analysis.realizations
    noise = _noise_paths(cfg, run_midpoints(seq, dt_max), reps)
    free = PulseSequence("FREE", base.tau, ns_max)
    if noise is not None:
        with_dd = simulate_runs(rf, seq, np.full(reps, phi), noise, dt_max, True).mean(axis=0)
        without_dd = simulate_runs(rf, free, np.full(reps, phi), noise, dt_max, True).mean(axis=0)
    else:
        with_dd = numeric
        without_dd = simulate_runs(rf, free, [phi], dt_max=dt_max, record_units=True)[0]

    path = out / "curve.csv"
    _write_rows(path, ["n_s", "p_analytic", "p_numeric", "p_noise_dd", "p_noise_free"],
                zip(ns.tolist(), analytic, numeric, with_dd, without_dd))
    dev = np.abs(numeric - analytic)
    analysis = {
        "pipeline": "fig2a",
        "phi": phi,
        "max_abs_numeric_minus_analytic": float(dev.max()),
        "argmax_n_s": int(ns[dev.argmax()]),
        "realizations": reps,
        "p_noise_dd_final": float(with_dd[-1]),
        "p_noise_free_final": float(without_dd[-1]),
    }
    summary = f"fig2a: max |P_numeric - P_analytic| = {dev.max():.4f} over N_s = 1..{ns_max}"
    return RunOutcome(summary, analysis, [path])


def _fig2b(cfg: ExperimentConfig, out: Path) -> RunOutcome:
    rf = cfg.rotating_frame()
    seq = cfg.pulse_sequence()
    m = cfg.analysis.phase_points
    phis = TWO_PI * np.arange(m) / m
    analytic = analytic_population(rf, seq, phis)
    shifted = analytic_population(rf, seq, phis + TWO_PI)
    dt_max = cfg.chain.dt_max or default_dt_max(rf, seq)
    clean = simulate_runs(rf, seq, phis, dt_max=dt_max)
    noise = _noise_paths(cfg, run_midpoints(seq, dt_max), 1)
    noisy = clean if noise is None else simulate_runs(rf, seq, phis, noise[0], dt_max)

    path = out / "curve.csv"
    _write_rows(path, ["phi", "p_analytic", "p_numeric", "p_numeric_noise"],
                zip(phis, analytic, clean, noisy))
    analysis = {
        "pipeline": "fig2b",
        "n_s": seq.n_units,
        "periodicity_max_abs": float(np.max(np.abs(shifted - analytic))),
        "max_abs_noise_free": float(np.max(np.abs(clean - analytic))),
        "max_abs_single_realization": float(np.max(np.abs(noisy - analytic))),
    }
    summary = (f"fig2b: max |P_numeric - P_analytic| = {analysis['max_abs_single_realization']:.4f} "
               f"under one noise realization ({m} phases)")
    return RunOutcome(summary, analysis, [path])


def _fig2c(cfg: ExperimentConfig, out: Path) -> RunOutcome:
    rf = cfg.rotating_frame()
    base = cfg.pulse_sequence()
    a = cfg.analysis
    ns = np.arange(1, a.ns_max + 1)
    c_analytic = np.array([contrast(rf, base.with_units(int(n)), a.contrast_grid) for n in ns])
    seq = base.with_units(a.ns_max)
    phis = TWO_PI * np.arange(64) / 64
    pops = simulate_runs(rf, seq, phis, record_units=True)
    c_numeric = np.array([contrast_from_samples(pops[:, i]) for i in range(a.ns_max)])
    try:
        ns_star = find_saturation_ns(rf, base.tau, a.contrast_threshold, a.ns_max, a.contrast_grid, base.kind)
    except SaturationNotFoundError:
        ns_star = None
    path = out / "curve.csv"
    _write_rows(path, ["n_s", "contrast_analytic", "contrast_numeric"], zip(ns.tolist(), c_analytic, c_numeric))
    analysis = {
        "pipeline": "fig2c",
        "threshold": a.contrast_threshold,
        "ns_star": ns_star,
        "contrast_at_ns_star": None if ns_star is None else float(c_analytic[ns_star - 1]),
        "contrast_at_configured_ns": float(c_analytic[min(base.n_units, a.ns_max) - 1]),
    }
    summary = f"fig2c: N_s* = {ns_star} at contrast threshold {a.contrast_threshold}"
    return RunOutcome(summary, analysis, [path])


# --------------------------------------------------------------------------
# Spectral scaling of a synthetic tone


def _fig3(cfg: ExperimentConfig, out: Path) -> RunOutcome:
    p = cfg.analysis.process
    proc = ToneProcess(p.a, p.b, p.bin_fraction, p.bin_offset, cfg.readout_model())
    res = scaling_statistics(proc, cfg.analysis.n_values, cfg.analysis.realizations,
                             rngmod.substream(cfg.seed, "ensemble"))
    n = int(cfg.analysis.n_values[-1])
    counts = sample_photons(proc.populations(n), proc.model, rngmod.substream(cfg.seed, "readout"))
    trace = TimeTrace(counts, np.arange(n, dtype=float), 1.0,
                      {"process": asdict(p), "readout": asdict(proc.model), "seed": cfg.seed})
    spec = power_spectrum(trace)
    files = [out / "trace.csv", out / "spectrum.csv", out / "fit.json"]
    trace.to_csv(files[0])
    files.append(files[0].with_suffix(".json"))
    spec.to_csv(files[1], n // 2 + 1)
    peak = peak_search(spec, cfg.fit.guard_bins)
    fit = fit_peak(spec, peak.k, cfg.fit.half_window)
    write_fit_report(files[2], fit, extra={"peak": asdict(peak)})
    analysis = {"pipeline": "fig3", "scaling": res.to_dict(), "realizations": cfg.analysis.realizations}
    summary = f"fig3: c2 = {res.c2:.5f}, c3 = {res.c3:.5f}, SNR slope = {res.slope_snr:.3f}"
    return RunOutcome(summary, analysis, files)


# --------------------------------------------------------------------------
# Full measurement chain


def _chain(cfg: ExperimentConfig, out: Path) -> RunOutcome:
    field_, sensor = cfg.signal_field(), cfg.sensor_obj()
    rf = cfg.rotating_frame()
    regime = validate_regime(rf, field_, sensor, cfg.analysis.regime_margin)
    seq = cfg.pulse_sequence()
    ccfg = cfg.chain_config()
    ou, model = cfg.ou_params(), cfg.readout_model()
    trace = run_chain(ccfg, rf, field_, seq, ou, model)
    spec = power_spectrum(trace)
    peak = peak_search(spec, cfg.fit.guard_bins)
    fit = fit_peak(spec, peak.k, cfg.fit.half_window)
    prior_sigma = None if cfg.analysis.prior_sigma_hz is None else TWO_PI * cfg.analysis.prior_sigma_hz
    est = reconstruct_frequency(fit, ccfg.f_L, trace.n_runs, cfg.omega_prior(), prior_sigma)
    fisher = qfi_chain(rf, seq, ccfg, rf.phi, field_.omega)
    truth = reduce_frequency_for_period(field_.omega, ccfg.t_L)

    files = [out / "trace.csv", out / "spectrum.csv", out / "fit.json"]
    trace.to_csv(files[0])
    files.append(files[0].with_suffix(".json"))
    spec.to_csv(files[1], trace.n_runs // 2 + 1)
    write_fit_report(files[2], fit, est, {"peak": asdict(peak)})

    analysis = {
        "pipeline": cfg.analysis.pipeline,
        "mode": ccfg.mode,
        "n_runs": trace.n_runs,
        "f_L": ccfg.f_L,
        "regime": asdict(regime),
        "peak_k": peak.k,
        "delta_bar_L": fit.delta_bar_L,
        "delta_bar_L_sigma": fit.delta_sigma,
        "delta_L_hz": est.delta_L / TWO_PI,
        "omega_hat_hz": est.omega_hat / TWO_PI,
        "sigma_omega_hz": est.sigma_omega / TWO_PI,
        "true_omega_hz": field_.omega / TWO_PI,
        "true_delta_L_hz": truth.delta_L / TWO_PI,
        "true_delta_bar_L": truth.delta_L * trace.n_runs / (TWO_PI * ccfg.f_L),
        "candidates_hz": [c / TWO_PI for c in est.candidates],
        "fisher": fisher.to_dict(),
        "crb_hz": fisher.crb / TWO_PI,
    }
    spot = cfg.analysis.numeric_spot_check
    if spot and ccfg.mode == "analytic":
        analysis["numeric_spot_check"] = numeric_spot_check(cfg, min(spot, ccfg.n_runs))
    summary = (f"{cfg.name}: omega/2pi = {est.omega_hat / TWO_PI:.3f} +- {est.sigma_omega / TWO_PI:.3g} Hz, "
               f"delta_L/2pi = {est.delta_L / TWO_PI:.4f} Hz (bin {fit.delta_bar_L:.3f})")
    return RunOutcome(summary, analysis, files)


def numeric_spot_check(cfg: ExperimentConfig, n_runs: int) -> dict:
    """Compare numeric and analytic per-run populations on the head of the chain."""
    field_ = cfg.signal_field()
    rf, seq = cfg.rotating_frame(), cfg.pulse_sequence()
    base = cfg.chain_config(n_runs)
    out = {"n_runs": n_runs}
    for label, ou in (("noise_free", None), ("with_noise", cfg.ou_params())):
        if label == "with_noise" and ou is None:
            continue
        num = run_chain(replace(base, mode="numeric"), rf, field_, seq, ou).populations
        ana = run_chain(replace(base, mode="analytic"), rf, field_, seq, ou).populations
        dev = np.abs(num - ana)
        out[label] = {"max_abs": float(dev.max()), "mean_abs": float(dev.mean())}
    return out


_PIPELINES = {"fig2a": _fig2a, "fig2b": _fig2b, "fig2c": _fig2c, "fig3": _fig3, "fig4": _chain, "chain": _chain}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunOutcome:
    """Validate ``cfg``, run its pipeline and write artifacts plus ``analysis.json``."""
    cfg.validate()
    out = Path(cfg.out if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outcome = _PIPELINES[cfg.analysis.pipeline](cfg, out)
    cfg_path = out / "config.json"
    cfg.save(cfg_path)
    analysis_path = out / "analysis.json"
    _write_json(analysis_path, dict(outcome.analysis, summary=outcome.summary, seed=cfg.seed))
    outcome.files += [cfg_path, analysis_path]
    return outcome
