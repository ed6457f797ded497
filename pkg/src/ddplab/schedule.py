"""Diffusion time discretization and schedule-derived coefficients.

A :class:`NoiseSchedule` owns the per-step noise rates ``beta_t`` for
``t = 1..T`` and everything derived from them:

* ``alpha_t = 1 - beta_t``
* ``alpha_bar_t = prod_{i<=t} alpha_i`` with the convention ``alpha_bar_0 = 1``
  (t = 0 means "no noise"),
* the posterior variance ``beta_post_t = (1 - alpha_bar_{t-1}) /
  (1 - alpha_bar_t) * beta_t``.

All arithmetic is 64-bit: downstream invertibility measurements resolve
errors near 1e-6 and would be polluted by single precision.

``alpha_bar`` is also exposed at non-integer times (log-linear
interpolation between the stored integer values, exact at integers) because
Runge-Kutta stages and multistep warmup land between grid points.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


def default_beta_range(max_step: int) -> tuple[float, float]:
    """Linear-schedule endpoints for a given T.

    The (1e-4, 0.02) defaults are scaled by 1000/T so the total amount of
    injected noise is preserved and ``alpha_bar_T`` stays below 1e-4, which
    keeps x_T indistinguishable from pure noise for any T.  The upper
    endpoint is capped below 1.
    """
    scale = DEFAULT_T / max_step
    return DEFAULT_BETA_START * scale, min(DEFAULT_BETA_END * scale, 0.999)


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable container for all schedule coefficients up to ``max_step``."""

    max_step: int
    betas: np.ndarray  # shape (T,), betas[i] = beta_{i+1}
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)  # shape (T,), t = 1..T
    posterior_variances: np.ndarray = field(init=False)  # shape (T,), t = 1..T

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) != self.max_step or self.max_step < 1:
            raise ConfigurationError("betas must be a length-T sequence with T >= 1")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ConfigurationError("every beta_t must lie strictly in (0, 1)")
        alphas = 1.0 - betas
        abar = np.cumprod(alphas)
        abar_prev = np.concatenate([[1.0], abar[:-1]])
        post = (1.0 - abar_prev) / (1.0 - abar) * betas
        object.__setattr__(self, "betas", _frozen(betas))
        object.__setattr__(self, "alphas", _frozen(alphas))
        object.__setattr__(self, "alpha_bars", _frozen(abar))
        object.__setattr__(self, "posterior_variances", _frozen(post))
        # cached padded log alpha_bar over t = 0..T for interpolation
        log_abar = np.concatenate([[0.0], np.log(abar)])
        object.__setattr__(self, "_log_alpha_bar", _frozen(log_abar))
        object.__setattr__(self, "_t_nodes", _frozen(np.arange(self.max_step + 1, dtype=np.float64)))

    # -- scalar accessors (t is a 1-based step index) --------------------

    def beta(self, t: int) -> float:
        self._check_step(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check_step(t)
        return float(self.alphas[t - 1])

    def posterior_variance(self, t: int) -> float:
        self._check_step(t)
        return float(self.posterior_variances[t - 1])

    def alpha_bar(self, t):
        """``alpha_bar`` at integer or fractional t in [0, T].

        Fractional times interpolate log(alpha_bar) linearly between the
        neighbouring integers; integer times return the stored values
        exactly.  Accepts scalars or arrays.
        """
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr < 0.0) or np.any(t_arr > self.max_step):
            raise IndexError(f"t must lie in [0, {self.max_step}]")
        out = np.exp(np.interp(t_arr, self._t_nodes, self._log_alpha_bar))
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def beta_continuous(self, t) -> float:
        """Noise rate as a function of continuous time, for ODE stage values.

        Linear interpolation of the discrete sequence at t = 1..T, extended
        linearly onto [0, 1] with the boundary slope.
        """
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr < 0.0) or np.any(t_arr > self.max_step):
            raise IndexError(f"t must lie in [0, {self.max_step}]")
        if self.max_step == 1:
            return float(self.betas[0]) if t_arr.ndim == 0 else np.full(t_arr.shape, self.betas[0])
        slope0 = self.betas[1] - self.betas[0]
        nodes = np.arange(1, self.max_step + 1, dtype=np.float64)
        out = np.where(
            t_arr < 1.0,
            self.betas[0] - (1.0 - t_arr) * slope0,
            np.interp(t_arr, nodes, self.betas),
        )
        return float(out) if t_arr.ndim == 0 else out

    def schedule_hash(self) -> str:
        """Hex digest identifying (T, betas); embedded in serialized models."""
        h = hashlib.sha256()
        h.update(str(self.max_step).encode())
        h.update(np.ascontiguousarray(self.betas).tobytes())
        return h.hexdigest()

    def _check_step(self, t):
        if not 1 <= t <= self.max_step:
            raise IndexError(f"step index {t} outside [1, {self.max_step}]")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def build_linear_schedule(max_step: int, beta_start: float = None, beta_end: float = None) -> NoiseSchedule:
    """Linearly spaced betas from ``beta_start`` to ``beta_end`` over T steps.

    Omitted endpoints fall back to :func:`default_beta_range`.
    """
    if beta_start is None and beta_end is None:
        beta_start, beta_end = default_beta_range(max_step)
    if beta_start is None or beta_end is None:
        raise ConfigurationError("give both beta endpoints or neither")
    if max_step < 1:
        raise ConfigurationError("max_step must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigurationError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, max_step)
    return NoiseSchedule(max_step=max_step, betas=betas)


def posterior_mean_coefficients(schedule: NoiseSchedule, t: int) -> tuple[float, float]:
    """Coefficients (on x_0 and on x_t) of the single-step posterior mean.

    ``mean = coef_x0 * x_0 + coef_xt * x_t`` for the reverse transition at
    step t; at t = 1 the x_t term vanishes because ``alpha_bar_0 = 1``.
    """
    schedule._check_step(t)
    abar_t = schedule.alpha_bar(t)
    abar_prev = schedule.alpha_bar(t - 1)
    beta_t = schedule.beta(t)
    alpha_t = schedule.alpha(t)
    denom = 1.0 - abar_t
    coef_x0 = np.sqrt(abar_prev) * beta_t / denom
    coef_xt = np.sqrt(alpha_t) * (1.0 - abar_prev) / denom
    return float(coef_x0), float(coef_xt)


@dataclass(frozen=True)
class TimeGrid:
    """Evenly strided integer stepping times for one integration run.

    ``timesteps`` lists the time at which the field is evaluated for each
    step, so a grid built over [t_end, t_start] holds
    ``t_start, t_start - delta, ..., t_end + delta`` and the final step
    lands on ``t_end``.
    """

    timesteps: np.ndarray
    step_size: int
    t_end: int

    def __post_init__(self):
        ts = np.asarray(self.timesteps, dtype=np.int64)
        if self.step_size < 1:
            raise ConfigurationError("step_size must be a positive integer")
        if len(ts) < 1:
            raise ConfigurationError("grid needs at least one step")
        diffs = np.diff(ts)
        if len(diffs) and not (np.all(diffs == -self.step_size) or np.all(diffs == self.step_size)):
            raise ConfigurationError("consecutive grid entries must differ by exactly step_size")
        if np.any(ts < 0):
            raise ConfigurationError("grid entries must be non-negative")
        object.__setattr__(self, "timesteps", _frozen(ts))

    @property
    def t_start(self) -> int:
        return int(self.timesteps[0]) if len(self.timesteps) else self.t_end

    @property
    def num_steps(self) -> int:
        return len(self.timesteps)

    @property
    def span(self) -> tuple[int, int]:
        """(low, high) endpoints of the interval the grid covers."""
        a, b = int(self.timesteps[0]), self.t_end
        return (min(a, b), max(a, b))

    def reverse(self) -> "TimeGrid":
        """The same interval strided in the opposite direction.

        A grid stepping down toward ``t_end`` reverses into the grid whose
        evaluation times walk up from ``t_end``; reversing twice restores
        the original exactly.
        """
        start = int(self.timesteps[0])
        if self.t_end < start:  # descending -> ascending mirror
            rev = np.arange(self.t_end, start, self.step_size, dtype=np.int64)
        else:
            rev = np.arange(self.t_end, start, -self.step_size, dtype=np.int64)
        return TimeGrid(timesteps=rev, step_size=self.step_size, t_end=start)

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return (
            self.step_size == other.step_size
            and self.t_end == other.t_end
            and np.array_equal(self.timesteps, other.timesteps)
        )


def build_time_grid(t_start: int, t_end: int, num_steps: int) -> TimeGrid:
    """Decreasing grid from ``t_start`` toward ``t_end`` in ``num_steps`` strides.

    The span must divide evenly: integrators here require a fixed integer
    step size, so a non-divisible span is a configuration error rather than
    something to round away.
    """
    if not (t_start > t_end >= 0):
        raise ConfigurationError(f"need t_start > t_end >= 0, got ({t_start}, {t_end})")
    if num_steps < 1:
        raise ConfigurationError("num_steps must be >= 1")
    span = t_start - t_end
    if span % num_steps != 0:
        raise ConfigurationError(
            f"span {span} is not divisible into {num_steps} equal integer steps"
        )
    delta = span // num_steps
    timesteps = np.arange(t_start, t_end, -delta, dtype=np.int64)
    return TimeGrid(timesteps=timesteps, step_size=delta, t_end=t_end)
