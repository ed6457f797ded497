"""Synthetic in-distribution and OOD datasets for the desk-scale benchmark.

The canonical benchmark is fixed here: in-distribution data is a
two-component unit-covariance mixture at (-2, 0) and (2, 0); the OOD suite
is {the same mixture translated by (0, 4), uniform noise on [-6, 6]^2, a
ring of radius 5, and an adversarial set}.  The adversarial set contains
points far from every component whose maximum logit nevertheless matches
high-confidence in-distribution values - the overconfidence stress case a
max-logit detector cannot separate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .classifier import Classifier
from .errors import ConfigurationError
from .scorefield import GaussianMixture

KINDS = ("mixture", "translated-mixture", "isotropic-uniform", "ring",
         "feature-coincidence-adversarial")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    dim: int
    size: int
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown dataset kind {self.kind!r}")
        if self.size < 1:
            raise ConfigurationError("size must be >= 1")


@dataclass(frozen=True)
class LabeledSamples:
    x: np.ndarray
    labels: np.ndarray | None = None

    def __len__(self):
        return len(self.x)


def _mixture_from_params(params, dim) -> GaussianMixture:
    means = np.asarray(params["means"], dtype=np.float64)
    K = len(means)
    weights = np.asarray(params.get("weights", np.full(K, 1.0 / K)), dtype=np.float64)
    covs = params.get("covariances")
    covs = np.asarray(covs, dtype=np.float64) if covs is not None else np.tile(np.eye(dim), (K, 1, 1))
    labels = np.asarray(params.get("labels", np.arange(K)), dtype=np.int64)
    return GaussianMixture(weights=weights, means=means, covariances=covs, labels=labels)


def sample_dataset(spec: DatasetSpec, classifier: Classifier | None = None,
                   ind_data: np.ndarray | None = None) -> LabeledSamples:
    """Draw one dataset, bit-reproducibly from (spec, seed).

    Mixture kinds carry component labels.  The adversarial kind needs the
    trained classifier and the in-distribution reference sample.
    """
    rng = np.random.default_rng(spec.seed)
    p = spec.params
    if spec.kind in ("mixture", "translated-mixture"):
        mix = _mixture_from_params(p, spec.dim)
        x, comp = mix.sample(spec.size, rng)
        if spec.kind == "translated-mixture":
            x = x + np.asarray(p.get("shift", np.zeros(spec.dim)), dtype=np.float64)
        return LabeledSamples(x=x, labels=mix.labels[comp])
    if spec.kind == "isotropic-uniform":
        lo, hi = p.get("low", -6.0), p.get("high", 6.0)
        return LabeledSamples(x=rng.uniform(lo, hi, (spec.size, spec.dim)))
    if spec.kind == "ring":
        if spec.dim != 2:
            raise ConfigurationError("ring datasets are 2-D")
        radius = p.get("radius", 5.0)
        radial_std = p.get("radial_std", 0.25)
        ang = rng.uniform(0.0, 2.0 * np.pi, spec.size)
        rad = radius + radial_std * rng.standard_normal(spec.size)
        return LabeledSamples(x=np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1))
    # feature-coincidence-adversarial
    if classifier is None or ind_data is None:
        raise ConfigurationError("adversarial datasets need the classifier and the InD sample")
    x = make_adversarial_ood(classifier, ind_data, budget=p.get("budget", 20000),
                             n_points=spec.size, rng=rng,
                             component_means=np.asarray(p["means"], dtype=np.float64),
                             min_distance=p.get("min_distance", 4.0))
    return LabeledSamples(x=x)


def make_adversarial_ood(classifier: Classifier, ind_data, budget: int,
                         n_points: int = None, rng=None, component_means=None,
                         min_distance: float = 4.0):
    """Far-away points whose max logit matches confident in-distribution values.

    Projected random search: propose points in an annulus outside
    ``min_distance`` of every component mean, then hill-climb the max logit
    along randomly chosen frozen feature directions while keeping the
    distance constraint.  A point is accepted once its max logit reaches
    the in-distribution median max logit.  Exhausting the budget returns
    the partial set with a warning.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    ind_data = np.atleast_2d(np.asarray(ind_data, dtype=np.float64))
    if component_means is None:
        raise ConfigurationError("adversarial search needs the component means")
    means = np.atleast_2d(np.asarray(component_means, dtype=np.float64))
    if n_points is None:
        n_points = len(ind_data)
    logit_floor = float(np.median(np.max(classifier.logits(ind_data), axis=1)))
    dim = ind_data.shape[1]
    W = classifier.frequencies

    def far_enough(pt):
        return np.min(np.linalg.norm(pt - means, axis=1)) >= min_distance

    def max_logit(pt):
        return float(np.max(classifier.logits(pt[None])[0]))

    accepted = []
    proposals = 0
    while len(accepted) < n_points and proposals < budget:
        proposals += 1
        direction = rng.standard_normal(dim)
        direction /= np.linalg.norm(direction)
        radius = rng.uniform(min_distance + 2.0, min_distance + 6.0)
        pt = radius * direction
        for _ in range(40):
            current = max_logit(pt)
            if current >= logit_floor:
                break
            row = W[rng.integers(0, len(W))]
            step = 0.25 * rng.standard_normal() * row / np.linalg.norm(row)
            cand = pt + step
            if far_enough(cand) and max_logit(cand) > current:
                pt = cand
        if far_enough(pt) and max_logit(pt) >= logit_floor:
            accepted.append(pt)
    if len(accepted) < n_points:
        warnings.warn(
            f"adversarial search found {len(accepted)}/{n_points} points within budget {budget}",
            stacklevel=2,
        )
    return np.asarray(accepted, dtype=np.float64).reshape(len(accepted), dim)


# -- the canonical 2-D benchmark --------------------------------------------

CANONICAL_MEANS = [[-2.0, 0.0], [2.0, 0.0]]


def canonical_ind_spec(size: int, seed: int) -> DatasetSpec:
    return DatasetSpec(kind="mixture", dim=2, size=size, seed=seed,
                       params={"means": CANONICAL_MEANS})


def canonical_ood_specs(size: int, seed: int) -> dict:
    """The four fixed OOD sets keyed by name (adversarial sampled separately)."""
    return {
        "translate": DatasetSpec(kind="translated-mixture", dim=2, size=size, seed=seed + 1,
                                 params={"means": CANONICAL_MEANS, "shift": [0.0, 4.0]}),
        "uniform": DatasetSpec(kind="isotropic-uniform", dim=2, size=size, seed=seed + 2,
                               params={"low": -6.0, "high": 6.0}),
        "ring": DatasetSpec(kind="ring", dim=2, size=size, seed=seed + 3,
                            params={"radius": 5.0, "radial_std": 0.25}),
        "adversarial": DatasetSpec(kind="feature-coincidence-adversarial", dim=2, size=size,
                                   seed=seed + 4,
                                   params={"means": CANONICAL_MEANS, "min_distance": 4.0,
                                           "budget": 40000}),
    }


def canonical_mixture() -> GaussianMixture:
    return GaussianMixture(weights=[0.5, 0.5], means=CANONICAL_MEANS,
                           covariances=[np.eye(2), np.eye(2)], labels=[0, 1])
