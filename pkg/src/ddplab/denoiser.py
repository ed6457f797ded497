"""A small fully-connected denoiser trained to predict injected noise.

The network maps ``concat(x, time_embedding(t), class_embedding(c))``
through tanh hidden layers to a noise estimate of the same dimension as
``x``.  Gradients are computed by hand (no autodiff dependency) and are
unit-tested against finite differences; optimization is plain Adam.

Classifier-free guidance support comes from training-time condition
dropout: with probability ``condition_dropout`` the class index is
replaced by a dedicated null token, so the trained network answers both
conditional and unconditional queries.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigurationError, TrainingError
from .schedule import NoiseSchedule
from .scorefield import ScoreField

SERIAL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DenoiserTrainingConfig:
    hidden_sizes: tuple = (128, 128)
    time_embedding_width: int = 16
    class_embedding_width: int = 8
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 128
    seed: int = 0
    loss_weighting: str = "uniform"  # "uniform" or "snr" (beta_t^2 / (alpha_t (1 - alpha_bar_t)))
    condition_dropout: float = 0.1
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if self.loss_weighting not in ("uniform", "snr"):
            raise ConfigurationError("loss_weighting must be 'uniform' or 'snr'")
        if not 0.0 <= self.condition_dropout <= 1.0:
            raise ConfigurationError("condition_dropout must lie in [0, 1]")
        if self.time_embedding_width % 2:
            raise ConfigurationError("time embedding width must be even")


def sinusoidal_time_embedding(t, width: int):
    """Transformer-style sin/cos features of the raw step index."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = width // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


class TrainedDenoiser(ScoreField):
    """Frozen MLP noise predictor; a pure function of its inputs and weights."""

    def __init__(self, dim, num_classes, config: DenoiserTrainingConfig,
                 weights, biases, class_embedding, schedule: NoiseSchedule,
                 loss_curve=None, holdout_losses=None):
        self.dim = dim
        self.num_classes = num_classes
        self.config = config
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.class_embedding = np.asarray(class_embedding, dtype=np.float64)
        self.schedule = schedule
        self.loss_curve = list(loss_curve or [])
        self.holdout_losses = dict(holdout_losses or {})

    @property
    def null_token(self) -> int:
        return self.num_classes

    @property
    def supports_conditioning(self) -> bool:
        return self.num_classes > 0

    def _inputs(self, x, t, condition):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        temb = sinusoidal_time_embedding(t, self.config.time_embedding_width)
        if temb.shape[0] == 1 and x.shape[0] > 1:
            temb = np.repeat(temb, x.shape[0], axis=0)
        if condition is None:
            idx = np.full(x.shape[0], self.null_token, dtype=np.int64)
        else:
            idx = np.full(x.shape[0], int(condition), dtype=np.int64)
            if np.any(idx < 0) or np.any(idx > self.num_classes):
                raise ValueError(f"condition {condition!r} outside known classes")
        return np.concatenate([x, temb, self.class_embedding[idx]], axis=1), idx

    def _forward(self, h, keep=False):
        layers = [h]
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < len(self.weights) - 1:
                h = np.tanh(h)
            layers.append(h)
        return (h, layers) if keep else h

    def evaluate(self, x, t, condition=None):
        squeeze = np.asarray(x).ndim == 1
        h, _ = self._inputs(x, t, condition)
        out = self._forward(h)
        return out[0] if squeeze else out


def _loss_and_grads(net: TrainedDenoiser, x_t, t, target_eps, cond_idx, sample_weights):
    """Weighted MSE on the noise prediction, with gradients for every parameter."""
    temb = sinusoidal_time_embedding(t, net.config.time_embedding_width)
    h0 = np.concatenate([x_t, temb, net.class_embedding[cond_idx]], axis=1)
    out, layers = net._forward(h0, keep=True)
    resid = out - target_eps
    n = len(x_t)
    loss = float((sample_weights * (resid ** 2).sum(axis=1)).mean())
    g = (2.0 / n) * sample_weights[:, None] * resid
    grads_W, grads_b = [], []
    for i in range(len(net.weights) - 1, -1, -1):
        grads_W.append(layers[i].T @ g)
        grads_b.append(g.sum(axis=0))
        if i > 0:
            g = (g @ net.weights[i].T) * (1.0 - layers[i] ** 2)  # layers[i] is tanh output
    g_input = g @ net.weights[0].T
    emb_grad = np.zeros_like(net.class_embedding)
    emb_cols = net.dim + net.config.time_embedding_width
    np.add.at(emb_grad, cond_idx, g_input[:, emb_cols:])
    return loss, grads_W[::-1], grads_b[::-1], emb_grad


def _init_network(dim, num_classes, config, rng):
    d_in = dim + config.time_embedding_width + config.class_embedding_width
    sizes = [d_in, *config.hidden_sizes, dim]
    weights = [rng.normal(0.0, np.sqrt(1.0 / sizes[i]), (sizes[i], sizes[i + 1]))
               for i in range(len(sizes) - 1)]
    biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
    class_embedding = rng.normal(0.0, 0.1, (num_classes + 1, config.class_embedding_width))
    return weights, biases, class_embedding


def _loss_weights(schedule: NoiseSchedule, t, mode: str):
    if mode == "uniform":
        return np.ones(len(t))
    betas = schedule.betas[t.astype(int) - 1]
    alphas = schedule.alphas[t.astype(int) - 1]
    abars = schedule.alpha_bars[t.astype(int) - 1]
    return betas ** 2 / (alphas * (1.0 - abars))


def train_denoiser(data, schedule: NoiseSchedule, config: DenoiserTrainingConfig,
                   labels=None) -> TrainedDenoiser:
    """Fit the noise predictor on clean samples.

    ``data`` is an (n, d) array; ``labels`` (optional ints) enable class
    conditioning.  Deterministic given the config seed.  Raises
    :class:`TrainingError` with the offending epoch if the loss diverges.
    """
    x0 = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if len(x0) == 0:
        raise TrainingError("training data is empty")
    n, dim = x0.shape
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        num_classes = int(labels.max()) + 1
    else:
        labels = np.zeros(n, dtype=np.int64)
        num_classes = 1

    rng = np.random.default_rng(config.seed)
    weights, biases, class_embedding = _init_network(dim, num_classes, config, rng)
    net = TrainedDenoiser(dim, num_classes, config, weights, biases, class_embedding, schedule)

    n_hold = max(1, int(round(n * config.holdout_fraction))) if n > 1 else 0
    perm = rng.permutation(n)
    hold, train = perm[:n_hold], perm[n_hold:]
    if len(train) == 0:
        train, hold = perm, perm[:0]

    def holdout_loss(r):
        if len(hold) == 0:
            return float("nan")
        t = r.integers(1, schedule.max_step + 1, len(hold)).astype(np.float64)
        eps = r.standard_normal((len(hold), dim))
        abar = schedule.alpha_bar(t)[:, None]
        x_t = np.sqrt(abar) * x0[hold] + np.sqrt(1.0 - abar) * eps
        w = _loss_weights(schedule, t, config.loss_weighting)
        loss, *_ = _loss_and_grads(net, x_t, t, eps, labels[hold], w)
        return loss

    net.holdout_losses["initial"] = holdout_loss(np.random.default_rng(config.seed + 1))

    params = net.weights + net.biases + [net.class_embedding]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, adam_eps = 0.9, 0.999, 1e-8
    step = 0

    for epoch in range(config.epochs):
        order = rng.permutation(train)
        epoch_losses = []
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            t = rng.integers(1, schedule.max_step + 1, len(idx)).astype(np.float64)
            eps = rng.standard_normal((len(idx), dim))
            cond = labels[idx].copy()
            dropped = rng.random(len(idx)) < config.condition_dropout
            cond[dropped] = net.null_token
            abar = schedule.alpha_bar(t)[:, None]
            x_t = np.sqrt(abar) * x0[idx] + np.sqrt(1.0 - abar) * eps
            w = _loss_weights(schedule, t, config.loss_weighting)
            loss, gW, gb, gE = _loss_and_grads(net, x_t, t, eps, cond, w)
            if not np.isfinite(loss):
                raise TrainingError("loss diverged to a non-finite value", epoch=epoch)
            epoch_losses.append(loss)
            step += 1
            for j, grad in enumerate(gW + gb + [gE]):
                m[j] = b1 * m[j] + (1 - b1) * grad
                v[j] = b2 * v[j] + (1 - b2) * grad * grad
                mhat = m[j] / (1 - b1 ** step)
                vhat = v[j] / (1 - b2 ** step)
                params[j] -= config.learning_rate * mhat / (np.sqrt(vhat) + adam_eps)
        if epoch_losses:
            net.loss_curve.append(float(np.mean(epoch_losses)))

    net.holdout_losses["final"] = holdout_loss(np.random.default_rng(config.seed + 1))
    return net


def save_denoiser(net: TrainedDenoiser, path):
    """Versioned binary serialization with an embedded schedule hash."""
    meta = {
        "format_version": SERIAL_FORMAT_VERSION,
        "dim": net.dim,
        "num_classes": net.num_classes,
        "schedule_hash": net.schedule.schedule_hash(),
        "config": asdict(net.config),
        "holdout_losses": net.holdout_losses,
    }
    arrays = {"class_embedding": net.class_embedding, "loss_curve": np.asarray(net.loss_curve)}
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{i}"] = W
        arrays[f"b{i}"] = b
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
                 **arrays)


def load_denoiser(path, schedule: NoiseSchedule) -> TrainedDenoiser:
    """Load weights; rejects files written against a different schedule."""
    with np.load(path) as blob:
        meta = json.loads(bytes(blob["meta"]).decode())
        if meta["format_version"] != SERIAL_FORMAT_VERSION:
            raise ConfigurationError(f"unsupported denoiser file version {meta['format_version']}")
        if meta["schedule_hash"] != schedule.schedule_hash():
            raise ConfigurationError("denoiser was trained against a different noise schedule")
        cfg_raw = dict(meta["config"])
        cfg_raw["hidden_sizes"] = tuple(cfg_raw["hidden_sizes"])
        config = DenoiserTrainingConfig(**cfg_raw)
        n_layers = len(config.hidden_sizes) + 1
        weights = [blob[f"W{i}"] for i in range(n_layers)]
        biases = [blob[f"b{i}"] for i in range(n_layers)]
        net = TrainedDenoiser(meta["dim"], meta["num_classes"], config, weights, biases,
                              blob["class_embedding"], schedule,
                              loss_curve=blob["loss_curve"].tolist(),
                              holdout_losses=meta["holdout_losses"])
    return net
