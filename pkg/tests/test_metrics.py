import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddplab import ScorePair, auroc, fpr_at_tpr, summarize


def brute_force_auroc(ind, ood):
    """Exhaustive pairwise comparison; the oracle for the rank formulation."""
    ind = np.asarray(ind)[None, :]
    ood = np.asarray(ood)[:, None]
    wins = (ood > ind).sum() + 0.5 * (ood == ind).sum()
    return wins / (ind.size * ood.size)


def brute_force_fpr(ind, ood, target):
    """Exhaustive threshold sweep; ties on the OOD side count as detected."""
    ind, ood = np.asarray(ind), np.asarray(ood)
    candidates = np.unique(np.concatenate([ind, ood]))
    feasible = [tau for tau in candidates if np.mean(ood >= tau) >= target]
    tau = max(feasible)
    return np.mean(ind >= tau)


def test_auroc_perfect_separation():
    assert auroc(ScorePair([1.0, 2.0], [3.0, 4.0])) == 1.0


def test_auroc_identical_distributions():
    s = [1.0, 2.0, 3.0]
    assert auroc(ScorePair(s, s)) == 0.5


def test_auroc_hand_example():
    # pairs: 1.5>1 wins, 1.5<2 loses, 3>1 wins, 3>2 wins -> 3/4
    assert auroc(ScorePair([1.0, 2.0], [1.5, 3.0])) == 0.75


def test_auroc_equals_brute_force_exactly():
    rng = np.random.default_rng(0)
    for trial in range(50):
        n_i = int(rng.integers(1, 201))
        n_o = int(rng.integers(1, 201))
        # quantize some trials to force ties
        q = rng.choice([None, 1, 10])
        ind = rng.normal(0, 1, n_i)
        ood = rng.normal(0.5, 1, n_o)
        if q is not None:
            ind, ood = np.round(ind * q) / q, np.round(ood * q) / q
        pair = ScorePair(ind, ood)
        assert auroc(pair) == brute_force_auroc(ind, ood), f"trial {trial}"


def test_fpr_perfect_separation():
    assert fpr_at_tpr(ScorePair([0.0, 1.0], [5.0, 6.0])) == 0.0


def test_fpr_identical_multisets_hits_target():
    s = np.arange(20, dtype=float)
    assert fpr_at_tpr(ScorePair(s, s), 0.95) == pytest.approx(0.95)


def test_fpr_threshold_admits_19_of_20():
    rng = np.random.default_rng(1)
    ood = rng.normal(1, 1, 20)
    ind = rng.normal(0, 1, 30)
    got = fpr_at_tpr(ScorePair(ind, ood), 0.95)
    # independent sweep oracle
    assert got == pytest.approx(brute_force_fpr(ind, ood, 0.95))
    k_largest = np.sort(ood)[1]  # 19th largest of 20
    assert np.mean(ood >= k_largest) >= 0.95


def test_fpr_equals_brute_force_exactly():
    rng = np.random.default_rng(2)
    for trial in range(50):
        n_i = int(rng.integers(2, 201))
        n_o = int(rng.integers(2, 201))
        target = float(rng.choice([0.5, 0.8, 0.95, 1.0]))
        ind = np.round(rng.normal(0, 1, n_i), 2)
        ood = np.round(rng.normal(0.3, 1, n_o), 2)
        assert fpr_at_tpr(ScorePair(ind, ood), target) == brute_force_fpr(ind, ood, target), \
            f"trial {trial}"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=40),
       st.lists(st.floats(-100, 100), min_size=1, max_size=40))
def test_auroc_orientation_flip(ind, ood):
    pair = ScorePair(np.array(ind), np.array(ood))
    flipped = ScorePair(-np.array(ind), -np.array(ood))
    assert auroc(flipped) == pytest.approx(1.0 - auroc(pair), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=40),
       st.lists(st.floats(-50, 50), min_size=1, max_size=40),
       st.floats(0.1, 3.0), st.floats(-5, 5))
def test_auroc_monotone_transform_invariance(ind, ood, scale, shift):
    pair = ScorePair(np.array(ind), np.array(ood))
    transformed = ScorePair(scale * np.array(ind) + shift, scale * np.array(ood) + shift)
    assert auroc(transformed) == pytest.approx(auroc(pair), abs=1e-12)


def test_invalid_pairs_rejected():
    with pytest.raises(ValueError):
        ScorePair([], [1.0])
    with pytest.raises(ValueError):
        ScorePair([np.nan], [1.0])
    with pytest.raises(ValueError):
        fpr_at_tpr(ScorePair([1.0], [1.0]), 0.0)


def test_summarize_single_row():
    assert summarize([42.0]) == (42.0, 0.0)


def test_summarize_two_point():
    mean, std = summarize([80.0, 90.0])
    assert (mean, std) == (85.0, 5.0)


def test_summarize_reported_mean_cross_check():
    # five per-set results whose printed summary is 93.0
    mean, _ = summarize([90.53, 92.85, 95.09, 93.66, 92.65])
    assert mean == pytest.approx(92.956)
    assert abs(mean - 93.0) < 0.05
