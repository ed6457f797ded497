"""Noise-prediction fields and their score-function counterparts.

A :class:`ScoreField` answers ``evaluate(x, t, condition)`` with the
predicted noise for a sample at diffusion time ``t``.  The equivalent
score (gradient of the log marginal density) is ``-eps / sqrt(1 -
alpha_bar_t)``; the conversion, the classifier-free guidance combiner, and
an exact field for Gaussian mixtures all live here.

The Gaussian-mixture field is the workhorse oracle: for a mixture with
components ``(w_k, mu_k, Sigma_k)``, the time-t marginal is again a
mixture with components ``N(sqrt(alpha_bar_t) mu_k, alpha_bar_t Sigma_k +
(1 - alpha_bar_t) I)``, so both the density and the score are available in
closed form and every integrator can be checked against them.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError
from .schedule import NoiseSchedule


def eps_to_score(eps, t, schedule: NoiseSchedule):
    """Convert predicted noise to the score: ``s = -eps / sqrt(1 - alpha_bar_t)``.

    Rejected at t = 0 where the scale factor vanishes.
    """
    if np.all(np.asarray(t) == 0):
        raise ValueError("score conversion undefined at t = 0 (alpha_bar_0 = 1)")
    abar = schedule.alpha_bar(t)
    return -np.asarray(eps) / np.sqrt(1.0 - abar)


def score_to_eps(score, t, schedule: NoiseSchedule):
    """Inverse of :func:`eps_to_score`; well defined at every t in [0, T]."""
    abar = schedule.alpha_bar(t)
    return -np.sqrt(1.0 - abar) * np.asarray(score)


class ScoreField(abc.ABC):
    """Deterministic noise-prediction interface ``evaluate(x, t, condition)``.

    Implementations are immutable after construction and safe for
    concurrent evaluation.  Subclasses override at least one of
    :meth:`evaluate` / :meth:`score`; the other falls back to the exact
    conversion through the schedule.
    """

    schedule: NoiseSchedule

    def evaluate(self, x, t, condition=None):
        """Predicted noise; same shape as ``x``."""
        return score_to_eps(self.score(x, t, condition), t, self.schedule)

    def score(self, x, t, condition=None):
        """Gradient of the log time-marginal density; same shape as ``x``."""
        return eps_to_score(self.evaluate(x, t, condition), t, self.schedule)

    @property
    def supports_conditioning(self) -> bool:
        return False


def guided_eps(field: ScoreField, x, t, condition, omega: float):
    """Classifier-free guidance: ``eps_uncond + omega * (eps_cond - eps_uncond)``.

    ``omega = 0`` collapses to the unconditional prediction and
    ``omega = 1`` to the conditional one; other weights extrapolate along
    the same line.
    """
    eps_uncond = field.evaluate(x, t, None)
    eps_cond = field.evaluate(x, t, condition)
    return eps_uncond + omega * (eps_cond - eps_uncond)


def guided_score(field: ScoreField, x, t, condition, omega: float):
    """Guidance applied to scores; identical blend since the eps/score map is linear in the field."""
    s_uncond = field.score(x, t, None)
    s_cond = field.score(x, t, condition)
    return s_uncond + omega * (s_cond - s_uncond)


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted multivariate normal mixture with optional component labels."""

    weights: np.ndarray
    means: np.ndarray  # (K, d)
    covariances: np.ndarray  # (K, d, d)
    labels: np.ndarray | None = None  # (K,) ints, for class conditioning

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        cov = np.asarray(self.covariances, dtype=np.float64)
        if cov.ndim == 2:
            cov = cov[None]
        K, d = mu.shape
        if w.shape != (K,) or cov.shape != (K, d, d):
            raise ConfigurationError("weights/means/covariances shapes disagree")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigurationError("weights must be positive and sum to 1 within 1e-12")
        chols = np.empty_like(cov)
        for k in range(K):
            if not np.allclose(cov[k], cov[k].T):
                raise ConfigurationError(f"covariance {k} is not symmetric")
            try:
                chols[k] = np.linalg.cholesky(cov[k])
            except np.linalg.LinAlgError as exc:
                raise ConfigurationError(f"covariance {k} is not positive definite") from exc
        lab = None if self.labels is None else np.asarray(self.labels, dtype=np.int64)
        if lab is not None and lab.shape != (K,):
            raise ConfigurationError("labels must be one int per component")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        object.__setattr__(self, "labels", lab)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def num_components(self) -> int:
        return len(self.weights)

    def component_indices(self, label=None) -> np.ndarray:
        if label is None:
            return np.arange(self.num_components)
        if self.labels is None:
            raise ValueError("mixture has no component labels to condition on")
        idx = np.where(self.labels == label)[0]
        if len(idx) == 0:
            raise ValueError(f"no component carries label {label!r}")
        return idx

    def restricted(self, label) -> "GaussianMixture":
        """The renormalized sub-mixture carrying one label."""
        idx = self.component_indices(label)
        w = self.weights[idx]
        return GaussianMixture(
            weights=w / w.sum(),
            means=self.means[idx],
            covariances=self.covariances[idx],
            labels=self.labels[idx],
        )

    def _marginal_params(self, alpha_bar: float, idx):
        m = np.sqrt(alpha_bar) * self.means[idx]
        C = alpha_bar * self.covariances[idx] + (1.0 - alpha_bar) * np.eye(self.dim)
        return m, C

    def _component_logpdfs(self, x, alpha_bar: float, idx):
        """Per-component log densities of the time marginal; also returns C^{-1}(x - m)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        m, C = self._marginal_params(alpha_bar, idx)
        w = self.weights[idx]
        n, d = x.shape
        logps = np.empty((n, len(idx)))
        solved = np.empty((n, len(idx), d))
        for j in range(len(idx)):
            L = np.linalg.cholesky(C[j])
            diff = x - m[j]
            sol = np.linalg.solve(C[j], diff.T).T
            logdet = 2.0 * np.log(np.diag(L)).sum()
            maha = np.einsum("nd,nd->n", diff, sol)
            logps[:, j] = np.log(w[j] / w.sum()) - 0.5 * (maha + logdet + d * np.log(2.0 * np.pi))
            solved[:, j] = sol
        return logps, solved

    def time_marginal_logpdf(self, x, alpha_bar: float, label=None):
        """log p_t(x) of the diffused mixture at noise level ``alpha_bar``."""
        squeeze = np.asarray(x).ndim == 1
        idx = self.component_indices(label)
        logps, _ = self._component_logpdfs(x, alpha_bar, idx)
        out = logsumexp(logps, axis=1)
        return float(out[0]) if squeeze else out

    def time_marginal_score(self, x, alpha_bar: float, label=None):
        """grad_x log p_t(x), exactly."""
        squeeze = np.asarray(x).ndim == 1
        idx = self.component_indices(label)
        logps, solved = self._component_logpdfs(x, alpha_bar, idx)
        post = np.exp(logps - logsumexp(logps, axis=1, keepdims=True))
        out = -np.einsum("nk,nkd->nd", post, solved)
        return out[0] if squeeze else out

    def sample(self, n: int, rng: np.random.Generator):
        """Draw n points; returns (x, component_index)."""
        comp = rng.choice(self.num_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        x = np.empty((n, self.dim))
        for k in range(self.num_components):
            mask = comp == k
            if mask.any():
                L = np.linalg.cholesky(self.covariances[k])
                x[mask] = self.means[k] + z[mask] @ L.T
        return x, comp


class MixtureScoreField(ScoreField):
    """Exact noise-prediction field of a Gaussian mixture under the schedule.

    Conditioning on a label restricts the mixture to that label's
    components with renormalized weights.  ``score`` is native (finite even
    at t = 0), ``evaluate`` is derived, so the probability-flow integrator
    can be driven all the way to t = 0.
    """

    def __init__(self, mixture: GaussianMixture, schedule: NoiseSchedule):
        self.mixture = mixture
        self.schedule = schedule

    def score(self, x, t, condition=None):
        abar = float(self.schedule.alpha_bar(t))
        return self.mixture.time_marginal_score(x, abar, condition)

    @property
    def supports_conditioning(self) -> bool:
        return self.mixture.labels is not None


def mixture_eps(mixture: GaussianMixture, schedule: NoiseSchedule, x, t, condition=None):
    """Exact noise prediction ``-sqrt(1 - alpha_bar_t) * grad log p_t(x)``.

    Defined on the closed interval [0, T]; at t = 0 the scale factor is
    zero and the prediction is exactly zero, which is the correct limit and
    is what inversion runs starting at t = 0 consume.
    """
    t_arr = np.asarray(t)
    if np.any(t_arr < 0) or np.any(t_arr > schedule.max_step):
        raise IndexError(f"t outside [0, {schedule.max_step}]")
    abar = float(schedule.alpha_bar(t))
    score = mixture.time_marginal_score(x, abar, condition)
    return -np.sqrt(1.0 - abar) * score


@dataclass(frozen=True)
class StackedField(ScoreField):
    """A field with the condition and guidance weight baked in (internal helper)."""

    base: ScoreField
    condition: object
    omega: float
    schedule: NoiseSchedule = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "schedule", self.base.schedule)

    def evaluate(self, x, t, condition=None):
        if self.condition is None:
            return self.base.evaluate(x, t, None)
        return guided_eps(self.base, x, t, self.condition, self.omega)

    def score(self, x, t, condition=None):
        if self.condition is None:
            return self.base.score(x, t, None)
        return guided_score(self.base, x, t, self.condition, self.omega)
