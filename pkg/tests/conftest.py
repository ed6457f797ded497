import numpy as np
import pytest

from ddplab import (build_linear_schedule, GaussianMixture, MixtureScoreField,
                    canonical_mixture)


@pytest.fixture(scope="session")
def schedule():
    """Default linear schedule, T = 1000."""
    return build_linear_schedule(1000)


@pytest.fixture(scope="session")
def mixture2d():
    return canonical_mixture()


@pytest.fixture(scope="session")
def mixture_field(mixture2d, schedule):
    return MixtureScoreField(mixture2d, schedule)


@pytest.fixture(scope="session")
def gauss_field(schedule):
    """Single standard normal component: eps(x, t) = sqrt(1 - alpha_bar_t) x."""
    mix = GaussianMixture(weights=[1.0], means=[[0.0, 0.0]],
                          covariances=[np.eye(2)], labels=[0])
    return MixtureScoreField(mix, schedule)


@pytest.fixture(scope="session")
def shifted_gauss_field(schedule):
    """Single non-standard Gaussian; gives the probability-flow ODE a real drift."""
    mix = GaussianMixture(weights=[1.0], means=[[1.5, -0.5]],
                          covariances=[0.49 * np.eye(2)], labels=[0])
    return MixtureScoreField(mix, schedule)
