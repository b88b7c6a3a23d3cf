"""Verification (ROC, EER, AUC, TAR@FAR) and identification (CMC) metrics."""
from __future__ import annotations

import numpy as np


class ScoreError(ValueError):
    pass


def _scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if labels.dtype.kind in "US":
        if not np.all(np.isin(labels, ["same", "diff"])):
            raise ScoreError("labels must be 'same' or 'diff'")
        labels = labels == "same"
    labels = labels.astype(bool)
    if scores.size != labels.size:
        raise ScoreError(f"{scores.size} scores for {labels.size} labels")
    if not np.all(np.isfinite(scores)):
        raise ScoreError("non-finite score")
    if labels.all() or not labels.any():
        raise ScoreError("need at least one genuine and one impostor score")
    return scores, labels


def roc_curve(scores, labels):
    """ROC over distinct thresholds, accepting ``score >= threshold``.

    Returns ``(fpr, tpr, thresholds)`` starting at (0, 0) for threshold +inf;
    ties share a single operating point.
    """
    scores, labels = _scores_labels(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last_of_group]
    fp = np.cumsum(~y)[last_of_group]
    n_pos, n_neg = y.sum(), (~y).sum()
    fpr = np.r_[0.0, fp / n_neg]
    tpr = np.r_[0.0, tp / n_pos]
    return fpr, tpr, np.r_[np.inf, s[last_of_group]]


def _tar_at_far(fpr, tpr, far):
    i = np.searchsorted(fpr, far, side="right") - 1
    if fpr[i] == far or i == len(fpr) - 1:
        return float(tpr[i])
    u = (far - fpr[i]) / (fpr[i + 1] - fpr[i])
    return float(tpr[i] + u * (tpr[i + 1] - tpr[i]))


def _eer(fpr, tpr):
    frr = 1.0 - tpr
    gap = fpr - frr
    i = int(np.argmax(gap >= 0))  # gap ends at +1, so some point qualifies
    if i == 0:
        return float(fpr[0])
    a, b = gap[i - 1], gap[i]
    u = -a / (b - a)
    return float(fpr[i - 1] + u * (fpr[i] - fpr[i - 1]))


def verification_metrics(scores, labels) -> dict:
    """Accuracy (best threshold), EER, AUC and TAR at FAR 10% / 1%.

    ``labels`` are booleans (True = same identity) or 'same'/'diff' strings.
    """
    scores, labels = _scores_labels(scores, labels)
    fpr, tpr, _ = roc_curve(scores, labels)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    correct = tpr * n_pos + (1.0 - fpr) * n_neg
    return {
        "accuracy": float(correct.max() / labels.size),
        "eer": _eer(fpr, tpr),
        "auc": float(np.trapezoid(tpr, fpr) if hasattr(np, "trapezoid") else np.trapz(tpr, fpr)),
        "tar_at_far_10": _tar_at_far(fpr, tpr, 0.10),
        "tar_at_far_1": _tar_at_far(fpr, tpr, 0.01),
    }


def mate_ranks(score_matrix, probe_ids, gallery_ids) -> np.ndarray:
    """1-based rank of each probe's mate in its row of ``score_matrix`` (probes x gallery).

    Higher scores rank first; equal scores are ordered by gallery id.
    """
    scores = np.asarray(score_matrix, dtype=np.float64)
    gallery = np.asarray(gallery_ids)
    probes = np.asarray(probe_ids)
    if scores.shape != (probes.size, gallery.size):
        raise ScoreError(f"score matrix {scores.shape} does not match {probes.size} probes x {gallery.size} gallery")
    if len(np.unique(gallery)) != gallery.size:
        raise ScoreError("gallery identities must be unique")
    ranks = np.empty(probes.size, dtype=np.int64)
    for i, pid in enumerate(probes):
        mate = np.flatnonzero(gallery == pid)
        if mate.size != 1:
            raise ScoreError(f"probe {i} ({pid!r}) has no mate in the gallery")
        m = mate[0]
        row = scores[i]
        ahead = (row > row[m]) | ((row == row[m]) & (gallery < gallery[m]))
        ranks[i] = 1 + int(ahead.sum())
    return ranks


def cmc(score_matrix, probe_ids, gallery_ids, max_rank: int | None = None) -> np.ndarray:
    """Cumulative match rates; element ``k - 1`` is the rank-k recognition rate."""
    ranks = mate_ranks(score_matrix, probe_ids, gallery_ids)
    g = len(gallery_ids) if max_rank is None else int(max_rank)
    return np.array([np.mean(ranks <= k) for k in range(1, g + 1)])
