"""Random-Fourier-feature classifier standing in for a deep discriminator.

The feature map is frozen at construction (Gaussian frequencies and
uniform phases from a seed); only the linear softmax head trains.  That
frozen map is the point: it attends to a fixed subspace of the input,
which is exactly the bias the detection experiments probe.

Three representation levels are exposed:

* level 0 - the raw input,
* level 1 - standardized random-Fourier features (standardization
  statistics come from the training set),
* level 2 - logits of the trained head.

An optional :class:`ClipRule` caps level-1 features elementwise, in the
style of rectified-activation detectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigurationError, TrainingError

LEVEL_NAMES = {"input": 0, "feature": 1, "logit": 2}


@dataclass(frozen=True)
class ClassifierConfig:
    num_features: int = 256
    lengthscale: float = 2.0
    learning_rate: float = 0.5
    epochs: int = 300
    seed: int = 0


@dataclass(frozen=True)
class ClipRule:
    """Elementwise cap ``min(v, threshold)`` on level-1 features.

    ``threshold`` is either a positive scalar on standardized features or a
    per-coordinate positive vector (e.g. built from a training quantile).
    """

    threshold: np.ndarray

    def __post_init__(self):
        thr = np.asarray(self.threshold, dtype=np.float64)
        if np.any(thr <= 0.0):
            raise ConfigurationError("clip threshold must be positive")
        object.__setattr__(self, "threshold", thr)

    def apply(self, values):
        return np.minimum(np.asarray(values, dtype=np.float64), self.threshold)

    @classmethod
    def from_quantile(cls, reference_features, q: float) -> "ClipRule":
        """Per-coordinate cap at the q-th quantile of reference features."""
        thr = np.quantile(np.asarray(reference_features), q, axis=0)
        return cls(threshold=thr)


class Classifier:
    """Frozen feature map + trained linear softmax head."""

    def __init__(self, frequencies, phases, feat_mean, feat_std, head_weight,
                 head_bias, num_classes, config: ClassifierConfig, train_accuracy=None):
        self.frequencies = np.asarray(frequencies, dtype=np.float64)
        self.phases = np.asarray(phases, dtype=np.float64)
        self.feat_mean = np.asarray(feat_mean, dtype=np.float64)
        self.feat_std = np.asarray(feat_std, dtype=np.float64)
        self.head_weight = np.asarray(head_weight, dtype=np.float64)
        self.head_bias = np.asarray(head_bias, dtype=np.float64)
        self.num_classes = num_classes
        self.config = config
        self.train_accuracy = train_accuracy

    @property
    def input_dim(self) -> int:
        return self.frequencies.shape[1]

    def raw_features(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        m = self.frequencies.shape[0]
        return np.sqrt(2.0 / m) * np.cos(x @ self.frequencies.T + self.phases)

    def features(self, x):
        """Standardized level-1 representation."""
        return (self.raw_features(x) - self.feat_mean) / self.feat_std

    def logits(self, x):
        return self.features(x) @ self.head_weight + self.head_bias


def _make_feature_map(dim, config: ClassifierConfig):
    rng = np.random.default_rng(config.seed)
    freqs = rng.standard_normal((config.num_features, dim)) / config.lengthscale
    phases = rng.uniform(0.0, 2.0 * np.pi, config.num_features)
    return freqs, phases


def train_classifier(x, y, config: ClassifierConfig) -> Classifier:
    """Softmax cross-entropy training of the head by full-batch gradient descent.

    The head starts at zero, which makes training equivariant under label
    permutation.  Deterministic given the seed.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    classes = np.unique(y)
    if len(classes) < 2:
        raise TrainingError("classifier training needs at least 2 classes")
    n_classes = int(y.max()) + 1

    freqs, phases = _make_feature_map(x.shape[1], config)
    m = config.num_features
    raw = np.sqrt(2.0 / m) * np.cos(x @ freqs.T + phases)
    mu = raw.mean(axis=0)
    sd = raw.std(axis=0) + 1e-12
    z = (raw - mu) / sd

    V = np.zeros((m, n_classes))
    c = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y]
    for _ in range(config.epochs):
        logits = z @ V + c
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / len(x)
        V -= config.learning_rate * (z.T @ g)
        c -= config.learning_rate * g.sum(axis=0)

    acc = float((np.argmax(z @ V + c, axis=1) == y).mean())
    return Classifier(freqs, phases, mu, sd, V, c, n_classes, config, train_accuracy=acc)


def extract_features(classifier: Classifier, x, level, clip: ClipRule | None = None):
    """The requested representation of ``x``; clipping applies at level 1 only."""
    if isinstance(level, str):
        try:
            level = LEVEL_NAMES[level]
        except KeyError:
            raise ValueError(f"unknown feature level {level!r}") from None
    if level not in (0, 1, 2):
        raise ValueError(f"feature level must be 0, 1 or 2, got {level}")
    if clip is not None and level != 1:
        raise ValueError("clipping is only defined for level-1 features")
    if level == 0:
        return np.asarray(x, dtype=np.float64).copy()
    if level == 1:
        feats = classifier.features(x)
        return clip.apply(feats) if clip is not None else feats
    return classifier.logits(x)


def predict(classifier: Classifier, x):
    """Argmax class labels; exact ties resolve to the lowest class index."""
    logits = classifier.logits(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    labels = np.argmax(logits, axis=1)
    return int(labels[0]) if np.asarray(x).ndim == 1 else labels


def save_classifier(clf: Classifier, path):
    meta = {"num_classes": clf.num_classes, "config": asdict(clf.config),
            "train_accuracy": clf.train_accuracy}
    with open(path, "wb") as fh:
        np.savez(fh,
                 meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
                 frequencies=clf.frequencies, phases=clf.phases,
                 feat_mean=clf.feat_mean, feat_std=clf.feat_std,
                 head_weight=clf.head_weight, head_bias=clf.head_bias)


def load_classifier(path) -> Classifier:
    with np.load(path) as blob:
        meta = json.loads(bytes(blob["meta"]).decode())
        return Classifier(blob["frequencies"], blob["phases"], blob["feat_mean"],
                          blob["feat_std"], blob["head_weight"], blob["head_bias"],
                          meta["num_classes"], ClassifierConfig(**meta["config"]),
                          train_accuracy=meta["train_accuracy"])
