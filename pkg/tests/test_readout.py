import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from qdyne.readout import ReadoutModel, count_mean, count_variance, sample_photons
from qdyne.rng import substream

FIG4 = ReadoutModel("poisson", 0.7, 1.0)
FIG3 = ReadoutModel("poisson", 0.1, 1.1)


def test_model_validation():
    with pytest.raises(ValueError):
        ReadoutModel("poisson", 1.0, 0.5)
    with pytest.raises(ValueError):
        ReadoutModel("poisson", -0.1, 0.5)
    with pytest.raises(ValueError):
        ReadoutModel("gaussian")
    assert ReadoutModel("Bernoulli").variant == "bernoulli"


def test_bernoulli_extremes():
    g = substream(0, "readout")
    m = ReadoutModel.bernoulli()
    assert np.all(sample_photons(np.ones(1000), m, g) == 1)
    assert np.all(sample_photons(np.zeros(1000), m, g) == 0)
    assert isinstance(sample_photons(0.3, m, g), int)


def test_rejects_invalid_probability():
    g = substream(0)
    for bad in (-0.1, 1.1, math.nan):
        with pytest.raises(ValueError):
            sample_photons(bad, FIG4, g)


def test_closed_form_moments():
    assert count_mean(0.0, FIG4) == pytest.approx(0.7)
    assert count_mean(1.0, FIG4) == pytest.approx(1.0)
    assert count_mean(0.5, FIG3) == pytest.approx(0.6)
    assert count_variance(0.5, ReadoutModel.bernoulli()) == pytest.approx(0.25)
    assert count_variance(0.0, FIG4) == pytest.approx(0.7)


@given(st.floats(0.01, 0.99), st.floats(0, 3), st.floats(0.01, 3))
def test_variance_at_least_shot_noise(p, mu0, gap):
    m = ReadoutModel("poisson", mu0, mu0 + gap)
    assert count_variance(p, m) >= count_mean(p, m)


@pytest.mark.parametrize("model,p", [(FIG4, 0.3), (FIG3, 0.8), (ReadoutModel.bernoulli(), 0.37)])
def test_monte_carlo_mean_and_variance(model, p):
    z = sample_photons(np.full(1_000_000, p), model, substream(1, "readout"))
    mean, var = count_mean(p, model), count_variance(p, model)
    n = z.size
    assert abs(z.mean() - mean) < 3 * math.sqrt(var / n)
    # standard error of the sample variance from the fourth central moment
    m4 = np.mean((z - z.mean()) ** 4)
    assert abs(z.var(ddof=1) - var) < 3 * math.sqrt((m4 - var**2) / n)


def test_mixture_distribution_identity():
    p = 0.35
    z = sample_photons(np.full(200_000, p), FIG3, substream(2, "readout"))
    kmax = 6
    observed = np.bincount(np.minimum(z, kmax), minlength=kmax + 1)
    ks = np.arange(kmax)
    pmf = p * stats.poisson.pmf(ks, FIG3.mu1) + (1 - p) * stats.poisson.pmf(ks, FIG3.mu0)
    pmf = np.append(pmf, 1 - pmf.sum())
    assert stats.chisquare(observed, pmf * z.size).pvalue > 1e-3
