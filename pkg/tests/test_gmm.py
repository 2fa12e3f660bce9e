import numpy as np
import pytest

from drmdp.bench.gmm import GaussianMixture1D, central_interval, component_interval, em_fit, estimate


def test_em_recovers_separated_mixture():
    rng = np.random.default_rng(0)
    truth = GaussianMixture1D([0.8, 0.2], [100.0, 140.0], [10.0, 2.0])
    x = truth.sample(20_000, rng)
    fit, trace = em_fit(x, 2, return_trace=True)
    assert np.allclose(fit.weights, truth.weights, atol=0.01)
    assert np.allclose(fit.means, truth.means, atol=0.2)
    assert np.allclose(fit.variances, truth.variances, rtol=0.1)
    assert np.all(np.diff(trace) >= -1e-10)


def test_single_component_estimate_is_sample_moments():
    x = np.array([1.0, 2.0, 4.0])
    g = estimate(x, 1)
    assert g.mean() == pytest.approx(x.mean())
    assert g.variances[0] == pytest.approx(x.var(ddof=1))


def test_intervals_have_requested_mass():
    g = GaussianMixture1D([0.8, 0.2], [100.0, 140.0], [10.0, 2.0])
    lo, hi = central_interval(g, 0.99)
    assert g.mass(lo, hi) == pytest.approx(0.99, abs=1e-9)
    assert (lo + hi) / 2 == pytest.approx(g.mean())
    lo, hi = component_interval(g, 1, 0.95)
    assert (lo + hi) / 2 == pytest.approx(140.0)
    assert hi - lo == pytest.approx(2 * 1.959963984540054 * np.sqrt(2.0), rel=1e-8)


def test_validation():
    with pytest.raises(ValueError):
        GaussianMixture1D([0.5, 0.6], [0, 1], [1, 1])
    with pytest.raises(ValueError):
        GaussianMixture1D([1.0], [0], [0.0])
    with pytest.raises(ValueError):
        em_fit([1.0, 1.0, 1.0], 2)
    with pytest.raises(ValueError):
        central_interval(GaussianMixture1D.normal(0, 1), 1.0)


def test_moments():
    g = GaussianMixture1D([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0])
    assert g.mean() == pytest.approx(0.0)
    assert g.var() == pytest.approx(2.0)
