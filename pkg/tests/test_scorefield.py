import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddplab import (GaussianMixture, MixtureScoreField, mixture_eps, eps_to_score,
                    score_to_eps, guided_eps, ConfigurationError)


def finite_difference_score(mixture, x, alpha_bar, h=1e-5, label=None):
    """Central-difference gradient of log p_t; the independent oracle."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        up = mixture.time_marginal_logpdf(x + e, alpha_bar, label)
        dn = mixture.time_marginal_logpdf(x - e, alpha_bar, label)
        grad[i] = (up - dn) / (2 * h)
    return grad


def test_standard_normal_eps_closed_form(gauss_field, schedule):
    # single N(0, I) component: the time marginal stays N(0, I), so
    # eps(x, t) = sqrt(1 - alpha_bar_t) * x
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 2))
    for t in (1, 300, 1000):
        expected = np.sqrt(1 - schedule.alpha_bar(t)) * x
        assert np.allclose(gauss_field.evaluate(x, t), expected, atol=1e-12)


def test_eps_vanishes_at_scaled_component_mean(schedule):
    mix = GaussianMixture(weights=[1.0], means=[[1.0, -2.0]], covariances=[np.eye(2)])
    t = 400
    x = np.sqrt(schedule.alpha_bar(t)) * np.array([1.0, -2.0])
    assert np.allclose(mixture_eps(mix, schedule, x, t), 0.0, atol=1e-12)


def test_score_matches_finite_differences(mixture2d, mixture_field, schedule):
    rng = np.random.default_rng(1)
    t = 300
    abar = schedule.alpha_bar(t)
    for _ in range(5):
        x = rng.normal(0, 2, 2)
        s = mixture_field.score(x, t)
        fd = finite_difference_score(mixture2d, x, abar)
        assert np.allclose(s, fd, rtol=1e-5, atol=1e-7)


def test_eps_to_score_roundtrip_and_edges(mixture2d, schedule):
    rng = np.random.default_rng(2)
    x = rng.normal(0, 2, (3, 2))
    t = 250
    eps = mixture_eps(mixture2d, schedule, x, t)
    s = eps_to_score(eps, t, schedule)
    fd = np.stack([finite_difference_score(mixture2d, xi, schedule.alpha_bar(t)) for xi in x])
    assert np.allclose(s, fd, rtol=1e-5, atol=1e-7)
    assert np.allclose(eps_to_score(np.zeros(2), 100, schedule), 0.0)
    with pytest.raises(ValueError):
        eps_to_score(np.ones(2), 0, schedule)
    # near T the conversion scale is essentially 1
    assert np.sqrt(1 - schedule.alpha_bar(1000)) == pytest.approx(1.0, abs=3e-5)
    assert np.allclose(score_to_eps(eps_to_score(eps, t, schedule), t, schedule), eps)


def test_mixture_eps_domain(mixture2d, schedule):
    x = np.zeros(2)
    assert np.allclose(mixture_eps(mixture2d, schedule, x, 0), 0.0)  # exact zero limit
    with pytest.raises(IndexError):
        mixture_eps(mixture2d, schedule, x, 1001)
    with pytest.raises(ValueError):
        mixture_eps(mixture2d, schedule, x, 300, condition=7)


def test_guidance_collapses_at_0_and_1(mixture_field):
    rng = np.random.default_rng(3)
    x = rng.normal(0, 2, (4, 2))
    t = 300
    e_uncond = mixture_field.evaluate(x, t, None)
    e_cond = mixture_field.evaluate(x, t, 1)
    assert np.allclose(guided_eps(mixture_field, x, t, 1, 0.0), e_uncond, atol=1e-10)
    assert np.allclose(guided_eps(mixture_field, x, t, 1, 1.0), e_cond, atol=1e-10)


def test_guidance_extrapolates_along_the_line(mixture_field):
    x = np.array([0.7, -0.3])
    t = 500
    e0 = guided_eps(mixture_field, x, t, 0, 0.0)
    e1 = guided_eps(mixture_field, x, t, 0, 1.0)
    e3 = guided_eps(mixture_field, x, t, 0, 3.0)
    assert np.allclose(e3, e0 + 3.0 * (e1 - e0), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(omega=st.floats(-5, 5), seed=st.integers(0, 10 ** 6))
def test_guidance_affinity_property(omega, seed):
    # affine in omega: any evaluation sits on the (uncond, cond) line
    import ddplab
    schedule = ddplab.build_linear_schedule(100)
    field = MixtureScoreField(ddplab.canonical_mixture(), schedule)
    x = np.random.default_rng(seed).normal(0, 2, 2)
    t = 40
    e0 = field.evaluate(x, t, None)
    e1 = field.evaluate(x, t, 1)
    got = guided_eps(field, x, t, 1, omega)
    assert np.allclose(got, e0 + omega * (e1 - e0), atol=1e-10)


def test_conditional_restriction_equals_submixture(schedule):
    mix = GaussianMixture(
        weights=[0.2, 0.3, 0.5],
        means=[[-2.0, 0.0], [2.0, 0.0], [0.0, 3.0]],
        covariances=[np.eye(2), np.eye(2), 0.5 * np.eye(2)],
        labels=[0, 1, 0],
    )
    sub = mix.restricted(0)
    field = MixtureScoreField(mix, schedule)
    sub_field = MixtureScoreField(sub, schedule)
    rng = np.random.default_rng(4)
    x = rng.normal(0, 2, (6, 2))
    assert np.allclose(field.evaluate(x, 200, condition=0),
                       sub_field.evaluate(x, 200, None), atol=1e-12)


def test_mixture_validation():
    with pytest.raises(ConfigurationError):
        GaussianMixture(weights=[0.5, 0.6], means=[[0], [1]], covariances=[np.eye(1), np.eye(1)])
    with pytest.raises(ConfigurationError):
        GaussianMixture(weights=[1.0], means=[[0, 0]], covariances=[-np.eye(2)])
    with pytest.raises(ConfigurationError):
        GaussianMixture(weights=[1.0], means=[[0, 0]],
                        covariances=[np.array([[1.0, 0.5], [0.4, 1.0]])])


def test_mixture_sampling_reproducible(mixture2d):
    a, ca = mixture2d.sample(100, np.random.default_rng(9))
    b, cb = mixture2d.sample(100, np.random.default_rng(9))
    assert np.array_equal(a, b) and np.array_equal(ca, cb)
