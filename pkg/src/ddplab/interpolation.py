"""Symmetric and asymmetric interpolation on top of the invertible process.

Symmetric interpolation inverts both inputs to their noises, blends the
noises by spherical linear interpolation, and denoises the blend.
Asymmetric interpolation keeps the first input in sample space: it mixes
``x1`` with the *inverted noise* of ``x2`` at depth t and denoises from
there, so t = 0 returns ``x1`` exactly and t = T reduces to the pure round
trip of ``x2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .integrator import IntegratorMethod, ddp
from .schedule import NoiseSchedule
from .scorefield import ScoreField

SLERP_ANGLE_FLOOR = 1e-6


def slerp(a, b, sigma: float):
    """Spherical linear interpolation between two vectors.

    Falls back to straight linear interpolation when the angle between the
    inputs is below ``SLERP_ANGLE_FLOOR``, where the sine division is
    ill-conditioned.  Zero-norm inputs have no defined angle and are
    rejected.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not 0.0 <= sigma <= 1.0:
        raise ValueError(f"sigma must lie in [0, 1], got {sigma}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("slerp needs nonzero vectors")
    if sigma == 0.0:
        return a.copy()
    if sigma == 1.0:
        return b.copy()
    cos = np.clip(np.dot(a.ravel(), b.ravel()) / (na * nb), -1.0, 1.0)
    theta = np.arccos(cos)
    if theta < SLERP_ANGLE_FLOOR:
        return (1.0 - sigma) * a + sigma * b
    s = np.sin(theta)
    return np.sin((1.0 - sigma) * theta) / s * a + np.sin(sigma * theta) / s * b


@dataclass(frozen=True)
class InterpolationRequest:
    """One interpolation job between two same-dimension inputs."""

    x1: np.ndarray
    x2: np.ndarray
    mode: str  # "symmetric" | "asymmetric"
    parameter: float  # sigma in [0, 1] for symmetric, integer t in [0, T] for asymmetric
    method: IntegratorMethod = IntegratorMethod.PNDM
    step_size: int = 20

    def __post_init__(self):
        x1 = np.asarray(self.x1, dtype=np.float64)
        x2 = np.asarray(self.x2, dtype=np.float64)
        if x1.shape != x2.shape:
            raise ConfigurationError("interpolation inputs must share a shape")
        if self.mode not in ("symmetric", "asymmetric"):
            raise ConfigurationError(f"unknown interpolation mode {self.mode!r}")
        method = IntegratorMethod.parse(self.method)
        if not method.deterministic:
            raise ConfigurationError("interpolation requires a deterministic method")
        if self.mode == "symmetric" and not 0.0 <= self.parameter <= 1.0:
            raise ConfigurationError("symmetric parameter sigma must lie in [0, 1]")
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)
        object.__setattr__(self, "method", method)


def symmetric_interpolate(req: InterpolationRequest, field: ScoreField) -> np.ndarray:
    """Invert both inputs to noise, slerp with sigma, denoise the blend."""
    if req.mode != "symmetric":
        raise ConfigurationError("request is not symmetric")
    T = field.schedule.max_step
    noise1 = ddp(field, req.x1, 0, T, req.step_size, req.method)
    noise2 = ddp(field, req.x2, 0, T, req.step_size, req.method)
    blend = slerp(noise1, noise2, float(req.parameter))
    return ddp(field, blend, T, 0, req.step_size, req.method)


def asymmetric_interpolate(req: InterpolationRequest, field: ScoreField) -> np.ndarray:
    """Mix x1 with the inverted noise of x2 at depth t, then denoise.

    ``t`` must sit on the fixed-stride grid.  At t = 0 no noise is added
    and x1 is returned bitwise without integrating.  At t = T the clean
    term carries zero weight by construction (the mix is exactly the
    inverted noise), so the output is the round-trip reconstruction of x2.
    """
    if req.mode != "asymmetric":
        raise ConfigurationError("request is not asymmetric")
    schedule: NoiseSchedule = field.schedule
    T = schedule.max_step
    t = int(req.parameter)
    if t != req.parameter or not 0 <= t <= T:
        raise ConfigurationError(f"asymmetric timestep must be an integer in [0, {T}]")
    if t % req.step_size != 0:
        raise ConfigurationError(f"t = {t} is off the stride-{req.step_size} grid")
    if t == 0:
        return np.asarray(req.x1, dtype=np.float64).copy()
    noise2 = ddp(field, req.x2, 0, T, req.step_size, req.method)
    if t == T:
        mixed = noise2  # the clean-image coefficient sqrt(alpha_bar_T) is dropped at the endpoint
    else:
        abar = schedule.alpha_bar(t)
        mixed = np.sqrt(abar) * req.x1 + np.sqrt(1.0 - abar) * noise2
    return ddp(field, mixed, t, 0, req.step_size, req.method)


def interpolation_sweep(field: ScoreField, x1, x2, mode: str, values,
                        method=IntegratorMethod.PNDM, step_size: int = 20):
    """Evaluate one interpolation per parameter value; rows for CSV export."""
    rows = []
    for v in values:
        req = InterpolationRequest(x1=x1, x2=x2, mode=mode, parameter=v,
                                   method=method, step_size=step_size)
        out = symmetric_interpolate(req, field) if mode == "symmetric" else asymmetric_interpolate(req, field)
        rows.append((v, *np.asarray(out).ravel()))
    return rows
