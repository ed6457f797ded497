"""Forward diffusion and the reverse-process integrators.

Four methods share one stepping loop:

* ``DDPM``   - stochastic ancestral sampling (needs an rng; one direction only),
* ``DDIM``   - first-order deterministic update,
* ``PNDM``   - deterministic linear-multistep update over the last four
  noise evaluations, with single-history warmup,
* ``PF``     - classical fourth-order Runge-Kutta on the probability-flow
  ODE ``dx/dt = (sqrt(1 - beta(t)) - 1) x - beta(t)/2 * score(x, t)``.

Deterministic methods run in either direction: integrating "forward"
(toward larger t) inverts a sample into its noise, and because every
update is an algebraic function of the endpoints' ``alpha_bar`` values the
same code serves both directions with a negated stride.  Round trips
``x -> noise -> x`` measure invertibility.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IntegrationError
from .schedule import NoiseSchedule, TimeGrid, build_time_grid
from .scorefield import ScoreField, StackedField

PNDM_WARMUP_MODES = ("ddim", "rk4")


class IntegratorMethod(enum.Enum):
    DDPM = "ddpm"
    DDIM = "ddim"
    PNDM = "pndm"
    PF = "pf"

    @property
    def deterministic(self) -> bool:
        return self is not IntegratorMethod.DDPM

    @classmethod
    def parse(cls, name) -> "IntegratorMethod":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ConfigurationError(f"unknown integrator method {name!r}") from None


def forward_diffuse(x0, t, noise, schedule: NoiseSchedule):
    """One-shot noising: ``sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise``.

    The noise is passed in (drawn externally from N(0, I)) so callers stay
    in charge of determinism.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs noise {noise.shape}")
    abar = schedule.alpha_bar(t)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * noise


def transfer_function(x, eps, t_from, t_to, schedule: NoiseSchedule):
    """Deterministic jump between noise levels given a noise estimate.

    Algebraically equal to the sigma = 0 reverse update, written in the
    difference-quotient form that stays well-conditioned for any pair of
    times in [0, T], in either order.  ``t_from == t_to`` is the identity.
    """
    if t_from == t_to:
        return np.asarray(x, dtype=np.float64).copy()
    a_from = schedule.alpha_bar(t_from)
    a_to = schedule.alpha_bar(t_to)
    coef_x = np.sqrt(a_to / a_from)
    denom = np.sqrt(a_from) * (np.sqrt((1.0 - a_to) * a_from) + np.sqrt((1.0 - a_from) * a_to))
    coef_eps = (a_to - a_from) / denom
    return coef_x * np.asarray(x) - coef_eps * np.asarray(eps)


def reverse_step(x_t, eps, t, delta, sigma_t, noise, schedule: NoiseSchedule):
    """One reverse update from t to t - delta.

    ``sigma_t = 0`` is the deterministic (DDIM) update; positive values add
    fresh noise and require ``sigma_t**2 <= 1 - alpha_bar_{t-delta}``.
    With the exact forward noise as ``eps``, ``delta = t`` and sigma = 0,
    the update inverts the forward map and returns x0 exactly.
    """
    if delta <= 0 or t - delta < 0:
        raise ValueError(f"need 0 < delta <= t, got t={t}, delta={delta}")
    a_t = schedule.alpha_bar(t)
    a_prev = schedule.alpha_bar(t - delta)
    if sigma_t ** 2 > 1.0 - a_prev + 1e-15:
        raise ValueError(f"sigma_t^2 = {sigma_t**2:.3g} exceeds 1 - alpha_bar_(t-delta) = {1-a_prev:.3g}")
    if sigma_t > 0 and noise is None:
        raise ValueError("stochastic step (sigma_t > 0) requires a noise draw")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    x0_pred = (x_t - np.sqrt(1.0 - a_t) * eps) / np.sqrt(a_t)
    out = np.sqrt(a_prev) * x0_pred + np.sqrt(max(1.0 - a_prev - sigma_t ** 2, 0.0)) * eps
    if sigma_t > 0:
        out = out + sigma_t * np.asarray(noise)
    return out


def ddpm_sigma(schedule: NoiseSchedule, t, t_next) -> float:
    """Default stochastic step size: the posterior standard deviation.

    For stride 1 this is ``sqrt(posterior_variance_t)``; for larger strides
    the same construction over the strided transition.  Always satisfies
    the reverse-step variance constraint.
    """
    a_t = schedule.alpha_bar(t)
    a_next = schedule.alpha_bar(t_next)
    if t_next == 0:
        return 0.0
    return float(np.sqrt((1.0 - a_next) / (1.0 - a_t) * (1.0 - a_t / a_next)))


def pndm_step(x_t, eps_history, t, delta, schedule: NoiseSchedule):
    """Linear-multistep update using the last four noise evaluations.

    ``eps_history`` is newest first: the evaluation at the current time,
    then the three previous ones at stride ``delta`` behind it in the
    direction of travel.  The combined estimate
    ``(55 e0 - 59 e1 + 37 e2 - 9 e3) / 24`` feeds the deterministic
    transfer to ``t - delta``; a negative ``delta`` steps toward larger t
    (inversion direction).
    """
    if len(eps_history) < 4:
        raise ValueError("multistep update needs 4 history entries; use warmup steps first")
    e0, e1, e2, e3 = (np.asarray(e, dtype=np.float64) for e in eps_history[:4])
    eps_prime = (55.0 * e0 - 59.0 * e1 + 37.0 * e2 - 9.0 * e3) / 24.0
    return transfer_function(x_t, eps_prime, t, t - delta, schedule)


def pf_rk4_step(x, t, delta, field: ScoreField, schedule: NoiseSchedule):
    """One classical RK4 step of the probability-flow ODE from t to t - delta.

    ``delta`` may be negative to integrate toward larger t.  beta is
    interpolated from the discrete schedule at stage times; the score comes
    from the field (conversion from the noise prediction where the field
    does not provide it natively).
    """
    h = -float(delta)

    def drift(state, time):
        b = schedule.beta_continuous(time)
        s = field.score(state, time, None)
        return (np.sqrt(1.0 - b) - 1.0) * state - 0.5 * b * s

    x = np.asarray(x, dtype=np.float64)
    k1 = drift(x, t)
    k2 = drift(x + 0.5 * h * k1, t + 0.5 * h)
    k3 = drift(x + 0.5 * h * k2, t + 0.5 * h)
    k4 = drift(x + h * k3, t + h)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite state in RK4 step at t={t}")
    return out


@dataclass(frozen=True)
class Trajectory:
    """States recorded along one integration run, initial point included."""

    method: IntegratorMethod
    times: tuple  # visited times, len = steps + 1
    states: np.ndarray  # (steps + 1, ...) stacked states
    grid: TimeGrid

    @property
    def final(self):
        return self.states[-1]

    def __post_init__(self):
        if not np.all(np.isfinite(self.states)):
            raise IntegrationError("trajectory contains non-finite states")


def trajectory_to_csv_rows(traj: Trajectory):
    """Rows (sample_id, t, x_0, ..., x_{d-1}) for CSV export."""
    states = traj.states
    if states.ndim == 2:  # single sample: (steps+1, d)
        states = states[:, None, :]
    rows = []
    for si in range(states.shape[1]):
        for ti, t in enumerate(traj.times):
            rows.append((si, t, *states[ti, si]))
    return rows


def _prk4_warmup_step(x, t, t_next, eval_eps, schedule):
    """Runge-Kutta-style warmup: combines four staged noise evaluations."""
    t_mid = 0.5 * (t + t_next)
    e1 = eval_eps(x, t)
    x1 = transfer_function(x, e1, t, t_mid, schedule)
    e2 = eval_eps(x1, t_mid)
    x2 = transfer_function(x, e2, t, t_mid, schedule)
    e3 = eval_eps(x2, t_mid)
    x3 = transfer_function(x, e3, t, t_next, schedule)
    e4 = eval_eps(x3, t_next)
    eps_prime = (e1 + 2.0 * e2 + 2.0 * e3 + e4) / 6.0
    return transfer_function(x, eps_prime, t, t_next, schedule)


def run_ddp(field: ScoreField, x, t_from: int, t_to: int, grid: TimeGrid,
            method, condition=None, omega: float = 1.0, rng=None,
            sigma_override=None, pndm_warmup: str = "ddim") -> Trajectory:
    """Integrate the denoising (t_from > t_to) or inversion (t_from < t_to) process.

    The grid must cover exactly [min, max] of the endpoints.  Conditioning
    applies classifier-free guidance with weight ``omega`` at every
    evaluation.  DDPM requires ``rng`` and only runs in the denoising
    direction; deterministic methods run the same update with a negated
    stride when inverting.
    """
    method = IntegratorMethod.parse(method)
    if pndm_warmup not in PNDM_WARMUP_MODES:
        raise ConfigurationError(f"pndm_warmup must be one of {PNDM_WARMUP_MODES}")
    x = np.asarray(x, dtype=np.float64).copy()
    if t_from == t_to:
        return Trajectory(method=method, times=(t_from,), states=x[None], grid=grid)

    lo, hi = min(t_from, t_to), max(t_from, t_to)
    if grid.span != (lo, hi):
        raise ConfigurationError(f"grid covers {grid.span}, run needs ({lo}, {hi})")
    delta = grid.step_size
    inverting = t_from < t_to
    if inverting and method is IntegratorMethod.DDPM:
        raise ConfigurationError("stochastic steps are not invertible; DDPM cannot run toward larger t")
    if method is IntegratorMethod.DDPM and rng is None:
        raise ConfigurationError("DDPM requires an rng")

    sign = 1 if inverting else -1
    eval_times = range(t_from, t_to, sign * delta)
    wrapped = StackedField(base=field, condition=condition, omega=omega)

    times = [t_from]
    states = [x.copy()]
    eps_history = []
    for t in eval_times:
        t_next = t + sign * delta
        if method is IntegratorMethod.DDIM:
            x = transfer_function(x, wrapped.evaluate(x, t), t, t_next, schedule=field.schedule)
        elif method is IntegratorMethod.DDPM:
            sigma = ddpm_sigma(field.schedule, t, t_next) if sigma_override is None else sigma_override
            noise = rng.standard_normal(x.shape) if sigma > 0 else None
            x = reverse_step(x, wrapped.evaluate(x, t), t, delta, sigma, noise, field.schedule)
        elif method is IntegratorMethod.PNDM:
            eps_history.insert(0, wrapped.evaluate(x, t))
            del eps_history[4:]
            if len(eps_history) >= 4:
                x = pndm_step(x, eps_history, t, -(t_next - t), field.schedule)
            elif pndm_warmup == "rk4":
                x = _prk4_warmup_step(x, t, t_next, wrapped.evaluate, field.schedule)
            else:  # single-history warmup: plain deterministic transfer
                x = transfer_function(x, eps_history[0], t, t_next, field.schedule)
        elif method is IntegratorMethod.PF:
            x = pf_rk4_step(x, t, -(t_next - t), wrapped, field.schedule)
        times.append(t_next)
        states.append(x.copy())
    return Trajectory(method=method, times=tuple(times), states=np.stack(states), grid=grid)


def ddp(field: ScoreField, x, t_from: int, t_to: int, step_size: int,
        method, condition=None, omega: float = 1.0, rng=None,
        pndm_warmup: str = "ddim"):
    """Endpoint of the diffusion-denoising process between two times.

    Convenience wrapper that builds the fixed-stride grid and returns only
    the final state.
    """
    if t_from == t_to:
        return np.asarray(x, dtype=np.float64).copy()
    lo, hi = min(t_from, t_to), max(t_from, t_to)
    span = hi - lo
    if span % step_size != 0:
        raise ConfigurationError(f"span {span} not divisible by step_size {step_size}")
    grid = build_time_grid(hi, lo, span // step_size)
    traj = run_ddp(field, x, t_from, t_to, grid, method, condition=condition,
                   omega=omega, rng=rng, pndm_warmup=pndm_warmup)
    return traj.final


def reconstruction_error(field: ScoreField, x0, t_max: int, grid: TimeGrid,
                         method, pndm_warmup: str = "ddim") -> float:
    """Mean absolute round-trip error ``|x0 - denoise(invert(x0))|``.

    Inverts x0 from 0 up to ``t_max`` and integrates back down on the same
    grid; only defined for deterministic methods.
    """
    method = IntegratorMethod.parse(method)
    if not method.deterministic:
        raise ConfigurationError("round-trip error requires a deterministic method")
    if t_max == 0:
        return 0.0
    x0 = np.asarray(x0, dtype=np.float64)
    up = run_ddp(field, x0, 0, t_max, grid, method, pndm_warmup=pndm_warmup)
    down = run_ddp(field, up.final, t_max, 0, grid, method, pndm_warmup=pndm_warmup)
    return float(np.mean(np.abs(down.final - x0)))
