"""Parameter vectors as face descriptors: PCA adaptation, signed square root, cosine scoring."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pooling import ItemKind, TemplateItem, WeightedEstimate, pool_arrays, pool_template


class MatchingError(ValueError):
    pass


@dataclass(frozen=True)
class PcaTransform:
    mean: np.ndarray
    components: np.ndarray  # (D, M), orthonormal columns
    explained_variance: np.ndarray

    @property
    def dim(self) -> int:
        return self.components.shape[0]

    @property
    def n_components(self) -> int:
        return self.components.shape[1]

    def project(self, gamma) -> np.ndarray:
        gamma = np.asarray(gamma, dtype=np.float64)
        if gamma.shape[-1] != self.dim:
            raise MatchingError(f"expected {self.dim}-dimensional vectors, got {gamma.shape[-1]}")
        return (gamma - self.mean) @ self.components


def fit_pca(training, n_components: int | None = None, rtol: float = 1e-10) -> PcaTransform:
    """PCA on training-split vectors only.

    Components come in descending eigenvalue order; each is signed so its
    largest-magnitude entry is positive.  By default every component with a
    non-negligible eigenvalue is kept, at most ``min(D, N - 1)``.
    """
    x = np.asarray(training, dtype=np.float64)
    if x.ndim != 2:
        raise MatchingError("training vectors must form an (N, D) array")
    n, d = x.shape
    if n_components is not None:
        if n_components < 1:
            raise MatchingError("need at least one component")
        if n_components > d:
            raise MatchingError(f"{n_components} components requested for {d}-dimensional data")
        if n <= n_components:
            raise MatchingError(f"need more than {n_components} training vectors, got {n}")
    elif n < 2:
        raise MatchingError("need at least two training vectors")

    mean = x.mean(axis=0)
    centred = x - mean
    cov = centred.T @ centred / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if n_components is None:
        keep = evals > rtol * max(evals[0], np.finfo(float).tiny)
        n_components = max(1, min(int(keep.sum()), d, n - 1))
    evals, evecs = evals[:n_components], evecs[:, :n_components]
    pivot = np.argmax(np.abs(evecs), axis=0)
    evecs = evecs * np.sign(evecs[pivot, np.arange(n_components)])
    return PcaTransform(mean=mean, components=evecs, explained_variance=np.clip(evals, 0.0, None))


def signed_sqrt(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.sqrt(np.abs(x))


def embed(gamma, pca: PcaTransform) -> np.ndarray:
    """Descriptor: PCA projection followed by element-wise signed square root."""
    return signed_sqrt(pca.project(gamma))


def similarity(d1, d2) -> float:
    """Cosine similarity; zero-norm descriptors are an error."""
    d1 = np.asarray(d1, dtype=np.float64).ravel()
    d2 = np.asarray(d2, dtype=np.float64).ravel()
    if d1.size != d2.size:
        raise MatchingError(f"descriptor sizes differ: {d1.size} vs {d2.size}")
    n1, n2 = np.linalg.norm(d1), np.linalg.norm(d2)
    if n1 == 0 or n2 == 0:
        raise MatchingError("zero-norm descriptor")
    if d1 is d2 or np.array_equal(d1, d2):
        return 1.0
    return float(np.clip(np.dot(d1 / n1, d2 / n2), -1.0, 1.0))


@dataclass
class Pair:
    id_a: str
    id_b: str
    label: str  # "same" | "diff"

    def __post_init__(self):
        if self.label not in ("same", "diff"):
            raise MatchingError(f"pair label must be 'same' or 'diff', got {self.label!r}")


def score_pairs(pairs, descriptors: dict) -> list[tuple[str, str, str, float]]:
    """Score each protocol pair; output order follows the protocol."""
    out = []
    for i, pair in enumerate(pairs):
        for key in (pair.id_a, pair.id_b):
            if key not in descriptors:
                raise MatchingError(f"pair {i}: unknown id {key!r}")
        out.append((pair.id_a, pair.id_b, pair.label, similarity(descriptors[pair.id_a], descriptors[pair.id_b])))
    return out


def resolve_gammas(frames: dict, templates: dict | None = None) -> dict:
    """Pool raw parameter vectors per id.

    ``frames`` maps an item id to its (n, D) rows (several rows = video
    frames, pooled with equal weights).  ``templates`` maps a template id to
    ``[(item_id, kind), ...]`` and is pooled with :func:`pool_template`.
    Template ids shadow item ids.
    """
    out = {key: pool_arrays(np.atleast_2d(rows)) for key, rows in frames.items()}
    for tid, members in (templates or {}).items():
        items = []
        for item_id, kind in members:
            if item_id not in frames:
                raise MatchingError(f"template {tid!r}: unknown item {item_id!r}")
            rows = np.atleast_2d(frames[item_id])
            kind = ItemKind(kind)
            if kind is ItemKind.STILL and len(rows) != 1:
                raise MatchingError(f"template {tid!r}: still image {item_id!r} has {len(rows)} rows")
            items.append(TemplateItem(kind, [WeightedEstimate(r) for r in rows]))
        out[tid] = pool_template(items)
    return out


def describe(gammas: dict, pca: PcaTransform) -> dict:
    return {key: embed(g, pca) for key, g in gammas.items()}
