"""Threshold-free detection metrics: AUROC and FPR at a TPR target.

AUROC follows the rank (Mann-Whitney) formulation: the probability that a
random OOD score exceeds a random in-distribution score, with ties
counted half.  FPR@TPR places the threshold at the largest value that
still admits the target fraction of OOD scores (ties on the OOD side
count as detected) and reports the fraction of in-distribution scores at
or above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class ScorePair:
    """Scores of one (in-distribution, OOD) dataset pair; higher = more OOD."""

    ind_scores: np.ndarray
    ood_scores: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.ind_scores, dtype=np.float64)
        ood = np.asarray(self.ood_scores, dtype=np.float64)
        if ind.size == 0 or ood.size == 0:
            raise ValueError("both score sets must be nonempty")
        if not (np.all(np.isfinite(ind)) and np.all(np.isfinite(ood))):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "ind_scores", ind.ravel())
        object.__setattr__(self, "ood_scores", ood.ravel())


def auroc(pair: ScorePair) -> float:
    """P(ood > ind) + 0.5 P(ood == ind) via average ranks."""
    ind, ood = pair.ind_scores, pair.ood_scores
    n_i, n_o = len(ind), len(ood)
    ranks = rankdata(np.concatenate([ind, ood]), method="average")
    u = ranks[n_i:].sum() - n_o * (n_o + 1) / 2.0
    return u / (n_i * n_o)


def fpr_at_tpr(pair: ScorePair, tpr_target: float = 0.95) -> float:
    """False-positive rate at the loosest threshold reaching the TPR target."""
    if not 0.0 < tpr_target <= 1.0:
        raise ValueError("tpr_target must lie in (0, 1]")
    ind, ood = pair.ind_scores, pair.ood_scores
    k = math.ceil(tpr_target * len(ood))
    threshold = np.partition(ood, len(ood) - k)[len(ood) - k]  # k-th largest OOD score
    return float(np.mean(ind >= threshold))


def summarize(values) -> tuple[float, float]:
    """Mean and population standard deviation across OOD-set results."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("nothing to summarize")
    return float(v.mean()), float(v.std(ddof=0))
