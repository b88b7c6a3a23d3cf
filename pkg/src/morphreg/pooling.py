"""Confidence-weighted pooling of per-image parameter estimates."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class PoolingError(ValueError):
    pass


@dataclass(frozen=True)
class WeightedEstimate:
    gamma: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=np.float64).ravel())
        w = float(self.weight)
        if not np.isfinite(w) or w < 0:
            raise PoolingError(f"weight must be finite and non-negative, got {self.weight!r}")
        object.__setattr__(self, "weight", w)


class ItemKind(str, Enum):
    STILL = "still_image"
    VIDEO = "video"


@dataclass
class TemplateItem:
    kind: ItemKind
    estimates: list = field(default_factory=list)

    def __post_init__(self):
        self.kind = ItemKind(self.kind)
        if not self.estimates:
            raise PoolingError("template item has no estimates")
        if self.kind is ItemKind.STILL and len(self.estimates) != 1:
            raise PoolingError(f"still image item carries {len(self.estimates)} estimates")


def pool_arrays(gammas, weights=None) -> np.ndarray:
    """Weighted mean of the rows of ``gammas``; weights are normalised here."""
    gammas = np.asarray(gammas, dtype=np.float64)
    if gammas.ndim != 2 or gammas.shape[0] == 0:
        raise PoolingError("nothing to pool")
    if weights is None:
        weights = np.ones(gammas.shape[0])
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if weights.size != gammas.shape[0]:
        raise PoolingError(f"{weights.size} weights for {gammas.shape[0]} estimates")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise PoolingError("weights must be finite and non-negative")
    total = weights.sum()
    if total <= 0:
        raise PoolingError("all pooling weights are zero")
    w = weights / total
    out = w @ gammas
    # keep the result inside the per-coordinate hull despite rounding
    return np.clip(out, gammas.min(axis=0), gammas.max(axis=0))


def pool(estimates) -> np.ndarray:
    """Pool a list of :class:`WeightedEstimate` into one parameter vector."""
    estimates = list(estimates)
    if not estimates:
        raise PoolingError("cannot pool an empty list of estimates")
    dims = {e.gamma.size for e in estimates}
    if len(dims) != 1:
        raise PoolingError(f"estimates have differing dimensions {sorted(dims)}")
    return pool_arrays(np.stack([e.gamma for e in estimates]), [e.weight for e in estimates])


def pool_template(items) -> np.ndarray:
    """Two-stage template pooling.

    Video frames are averaged with equal weights into one vector per video;
    the per-item vectors are then averaged with equal weights.  Still image
    weights are therefore irrelevant here.
    """
    items = list(items)
    if not items:
        raise PoolingError("cannot pool an empty template")
    per_item = []
    for item in items:
        if item.kind is ItemKind.VIDEO:
            per_item.append(pool_arrays(np.stack([e.gamma for e in item.estimates])))
        else:
            per_item.append(item.estimates[0].gamma)
    dims = {g.size for g in per_item}
    if len(dims) != 1:
        raise PoolingError(f"template items have differing dimensions {sorted(dims)}")
    return pool_arrays(np.stack(per_item))
