"""scikit-learn style front-ends for spectral analysis of count traces."""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .spectrum import fit_peak, peak_search, power_rows, power_spectrum, reconstruct_frequency


def _as_trace(X):
    """Accept a TimeTrace, a 1-D count vector or a single-row 2-D array."""
    counts = getattr(X, "counts", X)
    arr = check_array(np.atleast_2d(np.asarray(counts, dtype=float)), ensure_min_features=2)
    if arr.shape[0] != 1:
        raise ValueError(f"expected a single trace, got {arr.shape[0]} rows")
    return arr[0]


class PowerSpectrumTransformer(TransformerMixin, BaseEstimator):
    """Rows of count traces to rows of DFT power ``|z~_k|^2``.

    Parameters
    ----------
    one_sided : bool
        Keep only bins ``0..N//2`` (the spectrum of a real trace is symmetric).
    """

    def __init__(self, one_sided: bool = False):
        self.one_sided = one_sided

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=2)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, ensure_min_features=2)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} samples per trace, expected {self.n_features_in_}")
        f_k = power_rows(X)
        if self.one_sided:
            f_k = f_k[:, : X.shape[1] // 2 + 1]
        return f_k


class QdyneFrequencyEstimator(BaseEstimator):
    """Estimate the absolute field frequency from one count trace.

    ``fit`` runs peak search, the lineshape fit and alias reconstruction;
    the result is exposed as ``omega_`` (rad/s) and ``sigma_omega_``.

    Parameters
    ----------
    f_L : float
        Sampling frequency of the chain (Hz).
    omega_prior : float
        Prior angular frequency used to pick the alias (rad/s).
    guard_bins, half_window : int
        Peak-search exclusion around DC and fit half-width in bins.
    prior_sigma : float or None
        Width of the prior; enables the ambiguity check against it.
    """

    def __init__(self, f_L: float = 1.0, omega_prior: float = 0.0, guard_bins: int = 3,
                 half_window: int = 10, prior_sigma: float | None = None):
        self.f_L = f_L
        self.omega_prior = omega_prior
        self.guard_bins = guard_bins
        self.half_window = half_window
        self.prior_sigma = prior_sigma

    def fit(self, X, y=None):
        if not self.f_L > 0:
            raise ValueError("f_L must be positive")
        z = _as_trace(X)
        self.n_features_in_ = z.size
        self.spectrum_ = power_spectrum(z, self.f_L)
        self.peak_ = peak_search(self.spectrum_, self.guard_bins)
        self.peak_fit_ = fit_peak(self.spectrum_, self.peak_.k, self.half_window)
        self.frequency_ = reconstruct_frequency(
            self.peak_fit_, self.f_L, z.size, self.omega_prior, self.prior_sigma
        )
        self.omega_ = self.frequency_.omega_hat
        self.sigma_omega_ = self.frequency_.sigma_omega
        self.delta_L_hz_ = self.frequency_.delta_L / (2 * math.pi)
        return self
