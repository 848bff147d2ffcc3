"""Fisher information of the Qdyne chain and empirical precision experiments."""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .chain import ChainConfig, clock_phases, run_chain
from .dynamics import PulseSequence, analytic_phi_amplitude
from .errors import SingularPointError
from .physics import RotatingFrameParams, SignalField
from .readout import ReadoutModel
from .spectrum import fit_peak, peak_search, power_spectrum, reconstruct_frequency

SMALL_N = 100


@dataclass
class FisherReport:
    per_run: np.ndarray
    total: float
    crb: float
    closed_form_total: float
    approx_total: float
    small_n: bool
    singular_runs: int = 0

    def to_dict(self):
        d = asdict(self)
        d["per_run"] = None  # too large for reports
        return d


def _dphi_domega(rf: RotatingFrameParams, seq: PulseSequence, phases, t_n):
    """Exact ``dPhi_n/d omega`` including the detuning dependence."""
    t_s = seq.duration
    x = 0.5 * rf.detuning(seq.tau) * t_s
    sinc = np.sinc(x / math.pi)
    if abs(x) < 1e-4:
        dsinc = -x / 3.0
    else:
        dsinc = (x * math.cos(x) - math.sin(x)) / (x * x)
    arg = x + phases
    pref = rf.k_s * t_s / math.pi
    return pref * (dsinc * 0.5 * t_s * np.cos(arg) - sinc * np.sin(arg) * (0.5 * t_s + t_n))


def fisher_factor(phi_amp, eps: float = 1e-9, on_singular: str = "raise"):
    """``|dP/dPhi|^2 / (P (1 - P))`` for ``P = sin^2(Phi - pi/4)``.

    The ratio is a removable 0/0 where ``P`` hits 0 or 1; ``on_singular``
    chooses between raising and substituting the limit value.
    """
    phi_amp = np.asarray(phi_amp, dtype=float)
    p = np.sin(phi_amp - math.pi / 4) ** 2
    dp = -np.cos(2 * phi_amp)
    var = p * (1 - p)
    singular = var < eps
    if np.any(singular) and on_singular == "raise":
        raise SingularPointError("population at 0 or 1; Fisher factor undefined")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(singular, 4.0, dp * dp / np.where(singular, 1.0, var))
    return ratio, singular


def qfi_terms(rf, seq, cfg: ChainConfig, phi: float, omega: float, on_singular="limit", eps=1e-9):
    """Per-run Fisher information, exact and small-detuning approximation."""
    n = cfg.n_runs
    t_n = np.arange(n) * cfg.t_L
    phases = clock_phases(omega, cfg.t_L, n, phi)
    amp = analytic_phi_amplitude(rf, seq, phases)
    factor, singular = fisher_factor(amp, eps, on_singular)
    exact = factor * _dphi_domega(rf, seq, phases, t_n) ** 2
    t_s = seq.duration
    approx = 4 * rf.k_s**2 * t_s**2 * (t_n + 0.5 * t_s) ** 2 * np.sin(phases) ** 2 / math.pi**2
    return exact, approx, singular


def qfi_single(n: int, rf, seq, cfg: ChainConfig, phi: float, omega: float, eps: float = 1e-9):
    """Fisher information of run ``n`` (1-based); returns ``(exact, approx)``."""
    if not 1 <= n <= cfg.n_runs:
        raise IndexError(f"run index {n} outside 1..{cfg.n_runs}")
    one = replace(cfg, n_runs=n)
    exact, approx, _ = qfi_terms(rf, seq, one, phi, omega, on_singular="limit", eps=eps)
    amp = analytic_phi_amplitude(rf, seq, clock_phases(omega, cfg.t_L, n, phi)[-1])
    fisher_factor(amp, eps, "raise")
    return float(exact[-1]), float(approx[-1])


def closed_form_qfi(k_s: float, t_s: float, t_L: float, n: int) -> float:
    return 2 * k_s**2 * t_s**2 * t_L**2 * n**3 / (3 * math.pi**2)


def qfi_chain(rf, seq, cfg: ChainConfig, phi: float, omega: float, eps: float = 1e-9) -> FisherReport:
    """Total Fisher information of the chain and its Cramer-Rao bound.

    Runs that sit exactly on a singular population use the limit value of the
    Fisher factor instead of aborting the sum.
    """
    exact, approx, singular = qfi_terms(rf, seq, cfg, phi, omega, on_singular="limit", eps=eps)
    total = float(exact.sum())
    return FisherReport(
        per_run=exact,
        total=total,
        crb=1.0 / math.sqrt(total) if total > 0 else math.inf,
        closed_form_total=closed_form_qfi(rf.k_s, seq.duration, cfg.t_L, cfg.n_runs),
        approx_total=float(approx.sum()),
        small_n=cfg.n_runs < SMALL_N,
        singular_runs=int(singular.sum()),
    )


# --------------------------------------------------------------------------
# Empirical precision versus chain length


@dataclass
class PrecisionPoint:
    n_runs: int
    sigma_empirical: float
    crb: float
    ratio: float
    mean_error: float
    failures: int


@dataclass
class PrecisionResult:
    points: list = field(default_factory=list)
    slope_n: float = math.nan
    slope_t: float = math.nan

    def to_dict(self):
        return {"points": [asdict(p) for p in self.points], "slope_n": self.slope_n, "slope_t": self.slope_t}


def _n_jobs():
    try:
        return max(1, int(os.environ.get("QDYNE_THREADS", "1")))
    except ValueError:
        return 1


def estimate_omega(trace, omega_prior, guard_bins=3, half_window=10):
    spec = power_spectrum(trace)
    peak = peak_search(spec, guard_bins)
    fit = fit_peak(spec, peak.k, half_window)
    return reconstruct_frequency(fit, spec.f_L, spec.n, omega_prior).omega_hat


def _one_chain(cfg, rf, field_, seq, model, omega_prior, guard_bins, half_window):
    trace = run_chain(cfg, rf, field_, seq, None, model)
    return estimate_omega(trace, omega_prior, guard_bins, half_window)


def crb_scaling_experiment(
    cfg: ChainConfig,
    rf: RotatingFrameParams,
    field_: SignalField,
    seq: PulseSequence,
    model: ReadoutModel,
    n_values,
    realizations: int,
    seed: int = 0,
    omega_prior: float | None = None,
    guard_bins: int = 3,
    half_window: int = 10,
    n_jobs: int | None = None,
) -> PrecisionResult:
    """Spread of the fitted frequency over independent chains, per chain length.

    Chains use the analytic fast path; each (N, realization) pair gets its own
    random substream so results do not depend on ``n_jobs``.
    """
    if realizations < 2:
        raise ValueError("need at least two realizations")
    omega_prior = field_.omega if omega_prior is None else omega_prior
    n_jobs = _n_jobs() if n_jobs is None else n_jobs
    result = PrecisionResult()
    for n in n_values:
        n = int(n)
        jobs = [
            replace(cfg, n_runs=n, mode="analytic",
                    seed=int(rngmod.substream(seed, "ensemble", n, r).integers(2**63)))
            for r in range(realizations)
        ]
        args = (rf, field_, seq, model, omega_prior, guard_bins, half_window)
        if n_jobs > 1:
            from joblib import Parallel, delayed

            out = Parallel(n_jobs=n_jobs)(delayed(_safe_chain)(c, *args) for c in jobs)
        else:
            out = [_safe_chain(c, *args) for c in jobs]
        est = np.array([o for o in out if o is not None])
        failures = len(out) - est.size
        if est.size < 2:
            raise RuntimeError(f"fewer than two successful fits at N={n}")
        sigma = float(est.std(ddof=1))
        fisher = qfi_chain(rf, seq, replace(cfg, n_runs=n), rf.phi, field_.omega)
        result.points.append(
            PrecisionPoint(n, sigma, fisher.crb, sigma / fisher.crb, float(est.mean() - field_.omega), failures)
        )
    ns = np.array([p.n_runs for p in result.points], float)
    sig = np.array([p.sigma_empirical for p in result.points])
    if ns.size >= 2:
        result.slope_n = float(np.polyfit(np.log(ns), np.log(sig), 1)[0])
        result.slope_t = float(np.polyfit(np.log(ns * cfg.t_L), np.log(sig), 1)[0])
    return result


def _safe_chain(cfg, *args):
    try:
        return _one_chain(cfg, *args)
    except Exception:
        return None
