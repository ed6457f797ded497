"""Conditional-reconstruction OOD scoring and the baseline scores.

The detector noises an input to depth t, denoises it back conditioned on
the classifier's pseudo-label (classifier-free guidance with weight
omega), and scores the input by the L1 change of its classifier
representation.  In-distribution inputs reconstruct near themselves, so
their features barely move; OOD inputs are pulled toward the
in-distribution high-density region and their features change sharply.
Resampling the injected noise R times and averaging removes most of the
stochastic error.

Baselines: max-logit (MLS), the energy score (EBO), and k-th nearest
neighbour distance in feature space (KNN).  All scores are oriented so
larger means more likely OOD.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import logsumexp

from .classifier import Classifier, ClipRule, extract_features, predict
from .errors import ConfigurationError
from .integrator import IntegratorMethod, ddp, forward_diffuse
from .schedule import NoiseSchedule
from .scorefield import ScoreField

BASELINES = ("mls", "ebo", "knn")


@dataclass(frozen=True)
class DetectorConfig:
    """Knobs of the reconstruction detector; every field is overridable."""

    timestep: int = 300          # noising depth t
    omega: float = 3.0           # guidance weight
    repeat: int = 4              # resampling count R
    detect_space: str = "logit"  # "input" | "feature" | "logit"
    clip: ClipRule | None = None
    method: IntegratorMethod = IntegratorMethod.PNDM
    step_size: int = 20
    score_norm: str = "l1"       # "l1" per the method; "l2" for ablation
    delta_score: float = 0.0     # decision threshold
    pndm_warmup: str = "ddim"

    def __post_init__(self):
        if self.timestep <= 0:
            raise ConfigurationError("timestep must be positive")
        if self.repeat < 1:
            raise ConfigurationError("repeat must be >= 1")
        if not np.isfinite(self.delta_score):
            raise ConfigurationError("delta_score must be finite")
        if self.detect_space not in ("input", "feature", "logit"):
            raise ConfigurationError(f"unknown detect_space {self.detect_space!r}")
        if self.score_norm not in ("l1", "l2"):
            raise ConfigurationError("score_norm must be 'l1' or 'l2'")
        if self.timestep % self.step_size != 0:
            raise ConfigurationError("timestep must sit on the fixed-stride grid")
        object.__setattr__(self, "method", IntegratorMethod.parse(self.method))
        if not self.method.deterministic:
            raise ConfigurationError("the detector requires a deterministic method")

    def snapshot(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        d["clip"] = None if self.clip is None else np.asarray(self.clip.threshold).tolist()
        return d


def conditional_reconstruct(x, t: int, field: ScoreField, classifier: Classifier,
                            schedule: NoiseSchedule, omega: float, rng,
                            method=IntegratorMethod.PNDM, step_size: int = 20,
                            pndm_warmup: str = "ddim"):
    """Noise the input to depth t and denoise it conditioned on its pseudo-label.

    The pseudo-label is predicted once from the clean input.  Batched
    inputs are grouped by pseudo-label and integrated together; the single
    noise draw for the whole call comes from ``rng``.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    xb = np.atleast_2d(x)
    labels = np.atleast_1d(predict(classifier, xb))
    noise = rng.standard_normal(xb.shape)
    x_noise = forward_diffuse(xb, t, noise, schedule)
    x_recon = np.empty_like(xb)
    for label in np.unique(labels):
        mask = labels == label
        x_recon[mask] = ddp(field, x_noise[mask], t, 0, step_size, method,
                            condition=int(label), omega=omega, pndm_warmup=pndm_warmup)
    return (x_recon[0], int(labels[0])) if squeeze else (x_recon, labels)


def ddp_score_repeats(x, cfg: DetectorConfig, field: ScoreField, classifier: Classifier,
                      schedule: NoiseSchedule, rng) -> np.ndarray:
    """Per-repeat feature-change scores, shape (R, n).

    Each sample owns a dedicated substream (spawned from ``rng``, or taken
    from a sequence of per-sample generators), and its repeats spawn from
    that substream, so scores are reproducible and independent of batch
    composition.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = len(x)
    if isinstance(rng, np.random.Generator):
        sample_rngs = rng.spawn(n) if n > 1 else [rng]
    else:
        sample_rngs = list(rng)
        if len(sample_rngs) != n:
            raise ConfigurationError("need one rng per sample")
    repeat_rngs = [r.spawn(cfg.repeat) for r in sample_rngs]

    labels = np.atleast_1d(predict(classifier, x))
    feats0 = extract_features(classifier, x, cfg.detect_space, cfg.clip)
    if feats0.ndim == 1:
        feats0 = feats0[:, None]
    scores = np.empty((cfg.repeat, n))
    for r in range(cfg.repeat):
        noise = np.stack([repeat_rngs[i][r].standard_normal(x.shape[1]) for i in range(n)])
        x_noise = forward_diffuse(x, cfg.timestep, noise, schedule)
        x_recon = np.empty_like(x)
        for label in np.unique(labels):
            mask = labels == label
            x_recon[mask] = ddp(field, x_noise[mask], cfg.timestep, 0, cfg.step_size,
                                cfg.method, condition=int(label), omega=cfg.omega,
                                pndm_warmup=cfg.pndm_warmup)
        feats1 = extract_features(classifier, x_recon, cfg.detect_space, cfg.clip)
        if feats1.ndim == 1:
            feats1 = feats1[:, None]
        diff = feats0 - feats1
        if cfg.score_norm == "l1":
            scores[r] = np.abs(diff).sum(axis=1)
        else:
            scores[r] = np.sqrt((diff ** 2).sum(axis=1))
    return scores


def ddp_score(x, cfg: DetectorConfig, field: ScoreField, classifier: Classifier,
              schedule: NoiseSchedule, rng):
    """Mean feature-change score over R resamples; scalar for a single input."""
    single = np.asarray(x).ndim == 1
    repeats = ddp_score_repeats(x, cfg, field, classifier, schedule, rng)
    out = repeats.mean(axis=0)
    return float(out[0]) if single else out


def baseline_score(method: str, x, classifier: Classifier,
                   reference_features=None, knn_k: int = None):
    """One of the reference scores, oriented so larger = more OOD.

    * ``mls``: negative max logit,
    * ``ebo``: negative log-sum-exp of the logits (energy),
    * ``knn``: distance to the k-th nearest reference feature (level 1);
      needs ``reference_features`` and ``knn_k``.
    """
    if method not in BASELINES:
        raise ConfigurationError(f"unknown baseline {method!r}")
    single = np.asarray(x).ndim == 1
    xb = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if method == "mls":
        out = -np.max(classifier.logits(xb), axis=1)
    elif method == "ebo":
        out = -logsumexp(classifier.logits(xb), axis=1)
    else:
        if reference_features is None:
            raise ConfigurationError("knn needs reference features from training data")
        k = 1 if knn_k is None else int(knn_k)
        if k < 1:
            raise ConfigurationError("knn_k must be >= 1")
        ref = np.asarray(reference_features, dtype=np.float64)
        if k > len(ref):
            raise ConfigurationError(f"knn_k = {k} exceeds the reference set size {len(ref)}")
        feats = classifier.features(xb)
        d2 = ((feats[:, None, :] - ref[None, :, :]) ** 2).sum(axis=2)
        out = np.sqrt(np.partition(d2, k - 1, axis=1)[:, k - 1])
    return float(out[0]) if single else out


def decide(score, delta: float):
    """OOD iff score strictly exceeds the threshold."""
    out = np.asarray(score) > delta
    return bool(out) if np.ndim(score) == 0 else out


@dataclass
class DetectionReport:
    """Per-sample scores plus per-pair summary metrics for one detector run."""

    config: dict
    per_sample: dict = field(default_factory=dict)  # set name -> record dict
    metrics: list = field(default_factory=list)     # rows: {method, ood_set, auroc, fpr95}

    def add_set(self, name: str, scores: np.ndarray, repeats: np.ndarray,
                pseudo_labels: np.ndarray, delta: float):
        repeats = np.asarray(repeats)
        scores = np.asarray(scores)
        if not np.allclose(repeats.mean(axis=0), scores):
            raise ValueError("per-repeat scores must average to the raw score")
        self.per_sample[name] = {
            "score": scores.tolist(),
            "per_repeat": repeats.T.tolist(),
            "pseudo_label": np.asarray(pseudo_labels).tolist(),
            "decision": decide(scores, delta).tolist(),
        }

    def add_metric_row(self, method: str, ood_set: str, auroc: float, fpr95: float):
        self.metrics.append({"method": method, "ood_set": ood_set,
                             "auroc": float(auroc), "fpr95": float(fpr95)})

    def to_json(self) -> str:
        return json.dumps({"config": self.config, "per_sample": self.per_sample,
                           "metrics": self.metrics}, sort_keys=True, indent=2)
