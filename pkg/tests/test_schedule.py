import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddplab import (build_linear_schedule, build_time_grid, posterior_mean_coefficients,
                    default_beta_range, ConfigurationError)


def test_default_schedule_endpoint_is_near_pure_noise(schedule):
    # independent recomputation of the cumulative product in 64-bit
    betas = np.linspace(1e-4, 0.02, 1000)
    abar_direct = np.cumprod(1.0 - betas)[-1]
    assert schedule.alpha_bar(1000) == pytest.approx(abar_direct, rel=1e-12)
    assert schedule.alpha_bar(1000) < 1e-4


def test_single_step_schedule():
    s = build_linear_schedule(1, 0.5, 0.5)
    assert s.alpha_bar(1) == pytest.approx(0.5)


def test_two_step_schedule_products():
    s = build_linear_schedule(2, 0.1, 0.2)
    assert s.alpha_bars == pytest.approx([0.9, 0.72])


def test_invalid_beta_ranges_rejected():
    with pytest.raises(ConfigurationError):
        build_linear_schedule(10, 0.0, 0.1)
    with pytest.raises(ConfigurationError):
        build_linear_schedule(10, 0.2, 0.1)
    with pytest.raises(ConfigurationError):
        build_linear_schedule(10, 0.1, 1.0)
    with pytest.raises(ConfigurationError):
        build_linear_schedule(0, 0.1, 0.2)


def test_default_beta_range_keeps_endpoint_noisy():
    for T in (50, 100, 250, 1000):
        s = build_linear_schedule(T)
        assert s.alpha_bar(T) < 1e-4, f"T={T}"


@settings(max_examples=30, deadline=None)
@given(T=st.integers(1, 200),
       b0=st.floats(1e-6, 0.3),
       spread=st.floats(1.0, 3.0))
def test_schedule_invariants(T, b0, spread):
    s = build_linear_schedule(T, b0, min(b0 * spread, 0.95))
    assert np.all(s.betas > 0) and np.all(s.betas < 1)
    abar_with_origin = np.concatenate([[1.0], s.alpha_bars])
    assert np.all(np.diff(abar_with_origin) < 0)  # strictly decreasing from alpha_bar_0 = 1
    # recomputing the product matches stored values to 1e-12 relative
    assert np.allclose(np.cumprod(1.0 - s.betas), s.alpha_bars, rtol=1e-12, atol=0)
    # posterior variance never exceeds the forward variance
    assert np.all(s.posterior_variances <= s.betas + 1e-15)
    assert np.all(s.posterior_variances >= 0)


def test_posterior_mean_coefficients_t1_drops_xt(schedule):
    coef_x0, coef_xt = posterior_mean_coefficients(schedule, 1)
    assert coef_xt == 0.0
    assert coef_x0 == pytest.approx(schedule.beta(1) / (1 - schedule.alpha_bar(1)))


def test_posterior_mean_coefficients_hand_substitution():
    s = build_linear_schedule(2, 0.1, 0.2)
    coef_x0, coef_xt = posterior_mean_coefficients(s, 2)
    # direct substitution: sqrt(0.9)*0.2/0.28 and sqrt(0.8)*0.1/0.28
    assert coef_x0 == pytest.approx(np.sqrt(0.9) * 0.2 / 0.28, rel=1e-14)
    assert coef_xt == pytest.approx(np.sqrt(0.8) * 0.1 / 0.28, rel=1e-14)


def test_posterior_mean_identity_all_t(schedule):
    # with x_t replaced by its noiseless mean sqrt(alpha_bar_t) x_0, the
    # posterior mean collapses to sqrt(alpha_bar_{t-1}) x_0
    for t in range(1, schedule.max_step + 1, 37):
        coef_x0, coef_xt = posterior_mean_coefficients(schedule, t)
        lhs = coef_x0 + coef_xt * np.sqrt(schedule.alpha_bar(t))
        assert lhs == pytest.approx(np.sqrt(schedule.alpha_bar(t - 1)), rel=1e-10)


def test_posterior_coefficients_out_of_range(schedule):
    with pytest.raises(IndexError):
        posterior_mean_coefficients(schedule, 0)
    with pytest.raises(IndexError):
        posterior_mean_coefficients(schedule, 1001)


def test_time_grid_examples():
    g = build_time_grid(1000, 0, 50)
    assert g.step_size == 20
    assert g.timesteps[0] == 1000 and g.timesteps[-1] == 20
    assert len(g.timesteps) == 50
    assert build_time_grid(300, 0, 10).step_size == 30
    with pytest.raises(ConfigurationError):
        build_time_grid(1000, 0, 7)


def test_time_grid_reverse_is_involution():
    g = build_time_grid(1000, 0, 50)
    assert g.reverse().reverse() == g
    rev = g.reverse()
    assert rev.timesteps[0] == 0 and rev.timesteps[-1] == 980
    assert rev.span == g.span


def test_alpha_bar_interpolation(schedule):
    # exact at integers, monotone decreasing between them
    assert schedule.alpha_bar(300) == schedule.alpha_bars[299]
    ts = np.linspace(0, 1000, 4001)
    vals = schedule.alpha_bar(ts)
    assert np.all(np.diff(vals) < 0)
    assert schedule.alpha_bar(0) == 1.0


def test_beta_continuous_matches_nodes(schedule):
    for t in (1, 17, 500, 1000):
        assert schedule.beta_continuous(t) == pytest.approx(schedule.beta(t), rel=1e-14)
    # linear schedule: interior interpolation stays on the same line
    assert schedule.beta_continuous(10.5) == pytest.approx(
        0.5 * (schedule.beta(10) + schedule.beta(11)), rel=1e-12)


def test_schedule_hash_distinguishes():
    a = build_linear_schedule(100)
    b = build_linear_schedule(100, 1e-3, 2e-1)
    assert a.schedule_hash() != b.schedule_hash()
    assert a.schedule_hash() == build_linear_schedule(100).schedule_hash()


def test_schedule_arrays_immutable(schedule):
    with pytest.raises(ValueError):
        schedule.betas[0] = 0.5
