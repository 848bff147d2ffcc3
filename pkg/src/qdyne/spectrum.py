"""Power spectrum of a count trace, peak fitting and frequency reconstruction.

Convention: ``z~_k = sum_{n=1}^{N} z_n exp(i 2 pi n k / N)``, ``F_k = |z~_k|^2``,
and bin ``k`` corresponds to the frequency ``k f_L / N``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import AmbiguousAliasError, ConvergenceError, EmptySearchRangeError
from .readout import ReadoutModel, sample_photons


@dataclass
class PowerSpectrum:
    f_k: np.ndarray
    f_L: float = 1.0

    @property
    def n(self) -> int:
        return self.f_k.size

    @property
    def bin_width(self) -> float:
        return self.f_L / self.n

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.n) * self.bin_width

    def to_csv(self, path, k_max: int | None = None) -> None:
        k_max = self.n if k_max is None else min(self.n, k_max)
        df = self.bin_width
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "f_k_hz", "F_k"])
            for k in range(k_max):
                w.writerow([k, repr(k * df), repr(float(self.f_k[k]))])


def _counts_of(trace):
    z = getattr(trace, "counts", trace)
    return np.asarray(z, dtype=float)


def power_spectrum(trace, f_L: float | None = None) -> PowerSpectrum:
    """Full DFT power spectrum of a trace (any length >= 2).

    ``trace`` is a :class:`~qdyne.chain.TimeTrace` or a 1-D array of counts.
    """
    z = _counts_of(trace)
    if z.ndim != 1 or z.size < 2:
        raise ValueError("need a 1-D trace with at least two samples")
    f_L = getattr(trace, "f_L", None) if f_L is None else f_L
    return PowerSpectrum(power_rows(z), 1.0 if f_L is None else float(f_L))


def power_rows(z):
    """``|DFT|^2`` along the last axis, mirrored so ``F_k == F_{N-k}`` bit for bit."""
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    # |sum_{n=1..N} z_n e^{+i2pi nk/N}| equals |fft(z)_k| for real z.
    half = np.abs(np.fft.rfft(z, axis=-1)) ** 2
    out = np.empty(z.shape, dtype=float)
    out[..., : half.shape[-1]] = half
    out[..., half.shape[-1] :] = half[..., 1 : n - half.shape[-1] + 1][..., ::-1]
    return out


def spectrum_at(z, k):
    """Direct-summation ``F`` at (possibly non-integer) bins ``k``.

    ``z`` may be 2-D (traces along the last axis); the result then has shape
    ``z.shape[:-1] + k.shape``.
    """
    z = np.asarray(z, dtype=float)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    n_samples = z.shape[-1]
    n = np.arange(1, n_samples + 1)
    kern = np.exp(2j * math.pi * np.outer(n, k) / n_samples)
    out = np.abs(z @ kern) ** 2
    return out


def theory_mean_spectrum(means, variances):
    """Expected power spectrum of independent counts with given means/variances."""
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if means.shape != variances.shape:
        raise ValueError("means and variances must have the same length")
    return power_rows(means) + variances.sum()


# --------------------------------------------------------------------------
# Scaling of the spectral peak with chain length


@dataclass(frozen=True)
class ToneProcess:
    """``P_n = a + b cos(2 pi nu (n-1))`` read out through ``model``.

    ``nu`` (cycles per sample) is chosen per chain length so that the tone
    sits ``bin_offset`` bins below the integer bin ``round(bin_fraction N)``.
    """

    a: float = 0.5
    b: float = 0.3
    bin_fraction: float = 0.15
    bin_offset: float = 0.0
    model: ReadoutModel = field(default_factory=lambda: ReadoutModel("poisson", 0.1, 1.1))

    def peak_bin(self, n: int) -> int:
        return int(round(self.bin_fraction * n))

    def populations(self, n: int) -> np.ndarray:
        nu = (self.peak_bin(n) - self.bin_offset) / n
        return self.a + self.b * np.cos(2 * math.pi * nu * np.arange(n))


@dataclass
class ScalingResult:
    n_values: list
    mean_peak: list
    var_peak: list
    c2: float
    c3: float
    slope_mean: float
    slope_var: float
    snr: list
    slope_snr: float

    def to_dict(self):
        return asdict(self)


def _loglog_slope(x, y):
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


def scaling_statistics(process: ToneProcess, n_values, realizations: int, rng: np.random.Generator,
                       batch: int = 100) -> ScalingResult:
    """Ensemble mean and variance of ``F_{k_p}`` versus chain length.

    Fits ``<F> = c2 N^2`` and ``Var F = c3 N^3`` with the exponent held fixed
    (geometric mean of ``y / N^p``), plus free log-log slopes.
    """
    n_values = [int(n) for n in n_values]
    if len(n_values) < 2:
        raise ValueError("need at least two chain lengths to fit a power law")
    if realizations < 2:
        raise ValueError("need at least two realizations")
    means, variances = [], []
    for n in n_values:
        p = process.populations(n)
        k_p = process.peak_bin(n)
        vals = []
        for lo in range(0, realizations, batch):
            m = min(batch, realizations - lo)
            z = sample_photons(np.broadcast_to(p, (m, n)), process.model, rng)
            vals.append(spectrum_at(z, k_p)[:, 0])
        vals = np.concatenate(vals)
        means.append(float(vals.mean()))
        variances.append(float(vals.var(ddof=1)))
    ns = np.asarray(n_values, float)
    means_a, vars_a = np.asarray(means), np.asarray(variances)
    if np.any(means_a <= 0) or np.any(vars_a <= 0):
        raise ValueError("ill-conditioned power-law fit: non-positive statistics")
    c2 = float(np.exp(np.mean(np.log(means_a / ns**2))))
    c3 = float(np.exp(np.mean(np.log(vars_a / ns**3))))
    snr = means_a / np.sqrt(vars_a)
    return ScalingResult(
        n_values=n_values,
        mean_peak=means,
        var_peak=variances,
        c2=c2,
        c3=c3,
        slope_mean=_loglog_slope(ns, means_a),
        slope_var=_loglog_slope(ns, vars_a),
        snr=snr.tolist(),
        slope_snr=_loglog_slope(ns, snr),
    )


# --------------------------------------------------------------------------
# Peak search and fit


@dataclass(frozen=True)
class Peak:
    k: int
    ratio: float          # peak height over the spectrum median
    confident: bool


def peak_search(spec: PowerSpectrum, guard_bins: int = 3, min_ratio: float = 20.0) -> Peak:
    """Largest bin in ``[guard_bins, N/2]``, skipping the DC pedestal."""
    if guard_bins < 1:
        raise ValueError("guard_bins must be >= 1")
    hi = spec.n // 2
    if guard_bins > hi:
        raise EmptySearchRangeError(f"no bins in [{guard_bins}, {hi}]")
    window = spec.f_k[guard_bins : hi + 1]
    k = guard_bins + int(np.argmax(window))
    floor = float(np.median(spec.f_k[1:]))
    ratio = float(spec.f_k[k] / floor) if floor > 0 else math.inf
    return Peak(k, ratio, bool(ratio >= min_ratio))


def peak_kernel(k, gamma_bar, delta_bar):
    """``(cosh g - cos 2 pi x) / (g^2 + 4 pi^2 x^2)`` with ``x = k - delta_bar``.

    Returns the kernel and its derivatives with respect to ``gamma_bar`` and
    ``delta_bar``.
    """
    x = np.asarray(k, dtype=float) - delta_bar
    u = 2 * math.pi * x
    g = gamma_bar
    den = g * g + u * u
    small = den < 1e-4
    safe = np.where(small, 1.0, den)
    num = np.cosh(g) - np.cos(u)
    val = num / safe
    d_g = (np.sinh(g) * safe - num * 2 * g) / safe**2
    d_x = (2 * math.pi * np.sin(u) * safe - num * 2 * u * 2 * math.pi) / safe**2
    # Series about the removable singularity at g = u = 0.
    val = np.where(small, 0.5 + (g * g - u * u) / 24.0, val)
    d_g = np.where(small, g / 12.0, d_g)
    d_x = np.where(small, -2 * math.pi * u / 12.0, d_x)
    return val, d_g, -d_x


def peak_model(k, a, b, gamma_bar, delta_bar):
    return a * peak_kernel(k, gamma_bar, delta_bar)[0] + b


@dataclass
class PeakFit:
    a: float
    b_floor: float
    gamma_bar: float
    delta_bar_L: float
    covariance: np.ndarray
    residual_norm: float
    k_window: tuple
    iterations: int = 0
    gamma_at_bound: bool = False
    delta_profile_sigma: float = math.nan

    @property
    def params(self):
        return np.array([self.a, self.b_floor, self.gamma_bar, self.delta_bar_L])

    @property
    def stderr(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    @property
    def delta_sigma(self) -> float:
        """1-sigma width of ``delta_bar_L``.

        The profile-likelihood width is preferred: the Jacobian estimate
        degenerates when the tone sits exactly on a bin, because the model is
        then stationary in ``delta_bar_L``.
        """
        prof = self.delta_profile_sigma
        return prof if math.isfinite(prof) and prof > 0 else float(self.stderr[3])

    def to_dict(self):
        return {
            "A": self.a,
            "B": self.b_floor,
            "gamma_bar": self.gamma_bar,
            "delta_bar_L": self.delta_bar_L,
            "stderr": dict(zip(["A", "B", "gamma_bar", "delta_bar_L"], self.stderr.tolist())),
            "covariance": np.asarray(self.covariance).tolist(),
            "residual_norm": self.residual_norm,
            "k_window": list(self.k_window),
            "iterations": self.iterations,
            "gamma_at_bound": self.gamma_at_bound,
            "delta_profile_sigma": self.delta_profile_sigma,
        }


def _quadratic_vertex(y_m, y_0, y_p):
    den = y_m - 2 * y_0 + y_p
    if den == 0:
        return 0.0
    return float(np.clip(0.5 * (y_m - y_p) / den, -0.5, 0.5))


def _profile_sigma(k, y, gamma_bar, delta_bar, cost_min, s2, reach):
    """Half-width of the delta_bar interval where the profiled cost rises by ``s2``.

    At each trial offset the width is re-minimised and ``A`` and ``B`` are
    re-solved, so correlations with the offset are accounted for. Unlike the
    Jacobian estimate this stays finite when the cost is only quadratic in the
    offset, as for a tone sitting exactly on a bin.
    """
    from scipy.optimize import brentq, minimize_scalar

    ones = np.ones_like(k)

    def cost_at(s, d):
        design = np.column_stack([peak_kernel(k, math.sqrt(s), d)[0], ones])
        coef = np.linalg.lstsq(design, y, rcond=None)[0]
        r = y - design @ coef
        return float(r @ r)

    s_hi = max(4.0 * gamma_bar**2, gamma_bar**2 + 25.0)

    def excess(d):
        best = minimize_scalar(lambda s: cost_at(s, d), bounds=(0.0, s_hi), method="bounded",
                               options={"xatol": 1e-10})
        c = min(best.fun, cost_at(0.0, d), cost_at(gamma_bar**2, d))
        return c - cost_min - s2

    widths = []
    for side in (1.0, -1.0):
        lo, hi = 0.0, 1e-6
        while excess(delta_bar + side * hi) < 0:
            lo, hi = hi, hi * 2
            if hi > reach:
                return math.inf
        widths.append(brentq(lambda h: excess(delta_bar + side * h), lo, hi, xtol=1e-12))
    return 0.5 * sum(widths)


def _kernel_s(k, s, delta_bar):
    """Kernel as a function of ``s = gamma_bar**2``, with ``d/ds`` and ``d/d delta``.

    The lineshape is even in ``gamma_bar``, so its gamma derivative vanishes at
    zero and a fit in gamma cannot leave that point. In ``s`` it is analytic and
    the lower bound is an ordinary one.
    """
    g = math.sqrt(s)
    val, _, d_d = peak_kernel(k, g, delta_bar)
    u = 2 * math.pi * (np.asarray(k, dtype=float) - delta_bar)
    den = s + u * u
    small = den < 1e-4
    safe = np.where(small, 1.0, den)
    half_sinhc = 0.5 + s / 12.0 + s * s / 240.0 if s < 1e-3 else math.sinh(g) / (2 * g)
    d_s = (half_sinhc * safe - (np.cosh(g) - np.cos(u))) / safe**2
    d_s = np.where(small, 1.0 / 24.0, d_s)
    return val, d_s, d_d


def fit_peak(
    spec: PowerSpectrum,
    k_center: int,
    half_window: int = 10,
    max_iter: int = 500,
    tol: float = 1e-12,
    gamma_init: float = 0.1,
    edm_tol: float = 1e-8,
) -> PeakFit:
    """Levenberg-Marquardt fit of the peak lineshape over ``k_center +- half_window``.

    Amplitude and floor enter linearly and are eliminated by variable
    projection; the iteration runs over ``(gamma_bar**2, delta_bar)``.
    """
    if half_window < 4:
        raise ValueError("half_window must be >= 4")
    lo, hi = k_center - half_window, k_center + half_window
    if lo < 0 or hi >= spec.n:
        raise ValueError("fit window must lie inside the spectrum")
    k = np.arange(lo, hi + 1, dtype=float)
    y_raw = spec.f_k[lo : hi + 1]
    scale = float(np.max(np.abs(y_raw))) or 1.0
    y = y_raw / scale

    d0 = k_center + _quadratic_vertex(*spec.f_k[k_center - 1 : k_center + 2])

    ones = np.ones_like(k)

    def project(q):
        """Solve the linear amplitude/offset exactly; return residual, Jacobian in q."""
        val, d_s, d_d = _kernel_s(k, q[0], q[1])
        design = np.column_stack([val, ones])
        lin, *_ = np.linalg.lstsq(design, y, rcond=None)
        r = y - design @ lin
        # Kaufman's variable-projection Jacobian: -(I - P) dX/dq . lin
        dxq = lin[0] * np.column_stack([d_s, d_d])
        proj = design @ np.linalg.lstsq(design, dxq, rcond=None)[0]
        return r, dxq - proj, lin

    q = np.array([gamma_init**2, d0])
    r, jac, lin = project(q)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    c4 = (2 * math.pi) ** 2
    for it in range(1, max_iter + 1):
        # Near a bin the tails pin w = gamma^2 + (2 pi (delta - k_center))^2,
        # so the valley in (gamma^2, delta) is a parabola. Steps are taken in
        # (w, delta) and mapped back exactly.
        e = q[1] - k_center
        jw = jac @ np.array([[1.0, -2 * c4 * e], [0.0, 1.0]])
        jtj = jw.T @ jw
        grad = jw.T @ r
        step_ok = False
        while lam < 1e16:
            lhs = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-30))
            try:
                dw, dd = np.linalg.solve(lhs, grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = np.array([q[0] + dw - c4 * (2 * e * dd + dd * dd), q[1] + dd])
            if trial[0] < 1e-12:
                if q[0] == 0.0:
                    # Pinned at the bound: move delta alone.
                    col = jac[:, 1]
                    trial = np.array([0.0, q[1] + (col @ r) / ((1 + lam) * (col @ col) + 1e-300)])
                else:
                    trial[0] = 0.0
            r_t, jac_t, lin_t = project(trial)
            cost_t = float(r_t @ r_t)
            if cost_t < cost:
                step_ok = True
                break
            lam *= 10
        if not step_ok:
            converged = True  # no descent direction left
            break
        rel = (cost - cost_t) / max(cost, 1e-300)
        small_step = np.all(np.abs(trial - q) <= 1e-12 * (np.abs(q) + 1.0))
        # Expected chi^2 drop still available. On a bin the valley in
        # (gamma^2, delta) is curved and relative-cost tests alone crawl.
        g_t = jac_t.T @ r_t
        s2 = cost_t / max(k.size - 4, 1)
        edm = float(g_t @ np.linalg.pinv(jac_t.T @ jac_t) @ g_t) / max(s2, 1e-300)
        q, r, jac, lin, cost = trial, r_t, jac_t, lin_t, cost_t
        lam = max(lam / 10, 1e-12)
        if rel < tol or small_step or edm < edm_tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"peak fit did not converge in {max_iter} iterations")
    q = np.array([math.sqrt(q[0]), q[1]])

    p = np.array([lin[0], lin[1], q[0], q[1]])
    val, d_g, d_d = peak_kernel(k, p[2], p[3])
    jac = np.column_stack([val, ones, p[0] * d_g, p[0] * d_d])
    gamma_at_bound = p[2] <= 1e-8
    dof = max(1, k.size - 4)
    s2 = cost / dof
    free = [0, 1, 3] if gamma_at_bound else [0, 1, 2, 3]
    jf = jac[:, free]
    cov_free = s2 * np.linalg.pinv(jf.T @ jf)
    cov = np.zeros((4, 4))
    cov[np.ix_(free, free)] = cov_free
    units = np.array([scale, scale, 1.0, 1.0])
    cov = cov * np.outer(units, units)
    prof = _profile_sigma(k, y, p[2], p[3], cost, s2, reach=half_window)
    return PeakFit(
        a=float(p[0] * scale),
        b_floor=float(p[1] * scale),
        gamma_bar=float(p[2]),
        delta_bar_L=float(p[3]),
        covariance=cov,
        residual_norm=float(math.sqrt(cost) * scale),
        k_window=(int(lo), int(hi)),
        iterations=it,
        gamma_at_bound=bool(gamma_at_bound),
        delta_profile_sigma=float(prof),
    )


# --------------------------------------------------------------------------
# Frequency reconstruction


@dataclass
class FrequencyEstimate:
    omega_hat: float
    sigma_omega: float
    delta_L: float
    n_L: int
    sign: int
    candidates: list

    def to_dict(self):
        return asdict(self)


def reconstruct_frequency(
    fit: PeakFit,
    f_L: float,
    n: int,
    omega_prior: float,
    prior_sigma: float | None = None,
) -> FrequencyEstimate:
    """Map the fitted reduced frequency back to an absolute angular frequency.

    A real trace cannot distinguish ``+delta_L`` from ``-delta_L``, so the
    candidates ``2 pi M f_L +- delta_L`` around the prior are all listed and
    the one closest to ``omega_prior`` is returned.  An
    :class:`AmbiguousAliasError` is raised when a second candidate lies within
    ``3 * prior_sigma`` of the prior, or, without a prior width, when the two
    nearest candidates are equidistant from the prior within ``3 * sigma_omega``.
    """
    bin_rad = 2 * math.pi * f_L / n
    delta_L = fit.delta_bar_L * bin_rad
    sigma = float(fit.delta_sigma * bin_rad)
    if not sigma > 0:
        sigma = float(np.finfo(float).eps * max(abs(omega_prior), 1.0))
    m0 = int(round(omega_prior / (2 * math.pi * f_L)))
    cands = []
    for m in range(m0 - 1, m0 + 2):
        for sign in (1, -1):
            if sign == -1 and delta_L == 0:
                continue
            cands.append((2 * math.pi * m * f_L + sign * delta_L, m, sign))
    cands.sort(key=lambda c: abs(c[0] - omega_prior))
    if len(cands) > 1:
        d0, d1 = (abs(c[0] - omega_prior) for c in cands[:2])
        if prior_sigma is not None:
            ambiguous = d1 <= 3 * prior_sigma
        else:
            ambiguous = d1 - d0 <= 3 * sigma
        if ambiguous:
            raise AmbiguousAliasError(
                f"candidates {cands[0][0]:.9g} and {cands[1][0]:.9g} rad/s are both compatible with the prior"
            )
    best = cands[0]
    return FrequencyEstimate(
        omega_hat=float(best[0]),
        sigma_omega=sigma,
        delta_L=float(delta_L),
        n_L=best[1],
        sign=best[2],
        candidates=[float(c[0]) for c in cands],
    )


def write_fit_report(path, fit: PeakFit, estimate: FrequencyEstimate | None = None, extra=None) -> None:
    report = {"fit": fit.to_dict()}
    if estimate is not None:
        report["frequency"] = estimate.to_dict()
    if extra:
        report.update(extra)
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
