import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphreg.metrics.recognition import ScoreError, cmc, mate_ranks, roc_curve, verification_metrics


def wilcoxon_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for p, n in itertools.product(pos, neg):
        total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def test_perfect_separation():
    m = verification_metrics([0.9, 0.8, 0.7, 0.2, 0.1], [1, 1, 1, 0, 0])
    assert m == {"accuracy": 1.0, "eer": 0.0, "auc": 1.0, "tar_at_far_10": 1.0, "tar_at_far_1": 1.0}


def test_hand_case_pair_count():
    scores, labels = [0.9, 0.8, 0.85, 0.1], [True, True, False, False]
    # 0.9 beats both impostors, 0.8 beats only 0.1: 3 of 4 pairs
    assert wilcoxon_auc(scores, labels) == 0.75
    assert verification_metrics(scores, labels)["auc"] == 0.75


def test_string_labels():
    m = verification_metrics([0.9, 0.1], ["same", "diff"])
    assert m["auc"] == 1.0
    with pytest.raises(ScoreError):
        verification_metrics([0.9, 0.1], ["same", "other"])


def test_single_class_rejected():
    with pytest.raises(ScoreError):
        verification_metrics([0.1, 0.2], [1, 1])


def test_random_labels_auc_half():
    rng = np.random.default_rng(0)
    n = 20_000
    scores, labels = rng.standard_normal(n), rng.random(n) < 0.5
    auc = verification_metrics(scores, labels)["auc"]
    # permutation oracle for the spread of AUC under independence
    null = [wilcoxon_free_auc(scores, rng.permutation(labels)) for _ in range(30)]
    se = np.std(null)
    assert abs(auc - 0.5) < 3 * max(se, np.sqrt((n + 1) / (12 * (n / 2) ** 2)))


def wilcoxon_free_auc(scores, labels):
    # rank-sum form, independent of the ROC code
    ranks = np.argsort(np.argsort(scores)) + 1.0
    n_pos, n_neg = labels.sum(), (~labels).sum()
    return (ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def test_eer_symmetric_case():
    # FAR and FRR cross exactly at 0.5 between two operating points
    m = verification_metrics([1.0, 2.0, 3.0, 4.0], [0, 1, 0, 1])
    fpr, tpr, _ = roc_curve([1.0, 2.0, 3.0, 4.0], [0, 1, 0, 1])
    np.testing.assert_array_equal(fpr, [0, 0, 0.5, 0.5, 1])
    np.testing.assert_array_equal(tpr, [0, 0.5, 0.5, 1, 1])
    assert m["eer"] == 0.5
    assert m["accuracy"] == 0.75
    # both ROC points bracketing FAR 0.1 have TPR 0.5
    assert m["tar_at_far_10"] == 0.5
    assert m["auc"] == 0.75


def test_roc_ties_share_point():
    fpr, tpr, thr = roc_curve([0.5, 0.5, 0.2], [1, 0, 0])
    np.testing.assert_array_equal(fpr, [0, 0.5, 1])
    np.testing.assert_array_equal(tpr, [0, 1, 1])
    assert thr[0] == np.inf


def test_cmc_top_rank():
    s = np.array([[0.9, 0.1, 0.2], [0.1, 0.8, 0.3]])
    np.testing.assert_array_equal(cmc(s, ["a", "b"], ["a", "b", "c"]), [1.0, 1.0, 1.0])


def test_cmc_third_of_five():
    s = np.array([[0.9, 0.8, 0.5, 0.3, 0.1]])
    rates = cmc(s, ["g2"], ["g0", "g1", "g2", "g3", "g4"])
    np.testing.assert_array_equal(rates, [0, 0, 1, 1, 1])


def test_cmc_tie_break_by_gallery_id():
    s = np.array([[0.5, 0.5, 0.5]])
    assert mate_ranks(s, ["b"], ["a", "b", "c"])[0] == 2
    assert mate_ranks(s, ["a"], ["c", "b", "a"])[0] == 1


def test_cmc_errors():
    with pytest.raises(ScoreError):
        cmc(np.zeros((1, 2)), ["z"], ["a", "b"])
    with pytest.raises(ScoreError):
        cmc(np.zeros((1, 2)), ["a"], ["a", "a"])
    with pytest.raises(ScoreError):
        cmc(np.zeros((2, 2)), ["a"], ["a", "b"])


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 20).map(float), st.booleans()), min_size=2, max_size=30).filter(
        lambda xs: any(l for _, l in xs) and not all(l for _, l in xs)
    )
)
def test_auc_equals_pair_count_and_monotone_invariance(data):
    scores = np.array([s for s, _ in data])
    labels = np.array([l for _, l in data])
    m = verification_metrics(scores, labels)
    assert m["auc"] == pytest.approx(wilcoxon_auc(scores, labels), abs=1e-10)
    assert 0 <= m["eer"] <= 1 and 0.5 <= m["accuracy"] <= 1 or m["accuracy"] >= max(labels.mean(), 1 - labels.mean())
    assert verification_metrics(np.exp(scores / 3.0) - 7.0, labels) == m
