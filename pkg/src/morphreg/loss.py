"""Asymmetric Euclidean loss on parameter vectors and its gradient.

Per coordinate, with ``s = sign(target)`` (``sign(0) = +1``)::

    t+ = |target|,  p+ = s * pred,  m = max(t+, p+)
    loss = lam_over * sum (t+ - m)^2 + lam_under * sum (p+ - m)^2

An estimate further from the origin than its target is an over-estimate;
one closer to the origin (or on the other side) is an under-estimate.
With both weights equal to 1 this is the squared Euclidean distance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class LossConfig:
    lambda_over: float = 1.0
    lambda_under: float = 3.0

    def __post_init__(self):
        for name in ("lambda_over", "lambda_under"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
            object.__setattr__(self, name, v)
        if self.lambda_over == 0 and self.lambda_under == 0:
            raise ValueError("lambda_over and lambda_under cannot both be zero")


EUCLIDEAN = LossConfig(1.0, 1.0)


def _prepare(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(target))):
        raise ValueError("non-finite values in loss input")
    shape = pred.shape
    if pred.ndim == 0:
        pred, target = pred.reshape(1, 1), target.reshape(1, 1)
    elif pred.ndim == 1:
        pred, target = pred[None, :], target[None, :]
    elif pred.ndim != 2:
        raise ValueError("loss inputs must be scalars, vectors or (n, d) batches")
    return pred, target, shape


def loss_and_grad(pred, target, cfg: LossConfig = LossConfig(), backend=None):
    """Loss (summed over the last axis) and gradient with respect to ``pred``.

    Scalars and vectors give a scalar loss; an (n, d) batch gives n losses.
    """
    p, t, shape = _prepare(pred, target)
    losses, grad = kernels.asym_loss_grad(p, t, cfg.lambda_over, cfg.lambda_under, backend=backend)
    if len(shape) < 2:
        return float(losses[0]), grad.reshape(shape)
    return losses, grad


def asymmetric_loss(pred, target, cfg: LossConfig = LossConfig(), backend=None):
    return loss_and_grad(pred, target, cfg, backend)[0]


def asymmetric_loss_grad(pred, target, cfg: LossConfig = LossConfig(), backend=None):
    return loss_and_grad(pred, target, cfg, backend)[1]


def euclidean_loss(pred, target):
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return np.sum(d * d, axis=-1)


def numerical_grad(f, x, h=1e-5):
    """Central finite differences of a scalar function, coordinate by coordinate."""
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return g


def gradcheck(seed=0, dim=198, n_points=1000, cfg: LossConfig = LossConfig(), h=1e-5, margin=None, chunk=256):
    """Maximum relative error between the analytic and finite-difference gradients.

    Points are Gaussian (pred, target) pairs; coordinates within ``margin``
    (default ``10 * h``) of the kink ``|pred| == |target|`` are resampled, so
    the difference stencil never straddles it.  The error for each point is
    ``||g - g_fd|| / max(||g||, ||g_fd||)``.
    """
    margin = 10.0 * h if margin is None else margin
    rng = np.random.default_rng(seed)
    target = rng.standard_normal((n_points, dim))
    pred = rng.standard_normal((n_points, dim))
    while True:
        bad = np.abs(np.where(target >= 0, 1.0, -1.0) * pred - np.abs(target)) < margin
        if not bad.any():
            break
        pred[bad] = rng.standard_normal(int(bad.sum()))

    analytic = asymmetric_loss_grad(pred, target, cfg)
    numeric = np.empty_like(pred)
    # cache-sized chunks; coordinate j of every point in a chunk is nudged in
    # place and restored exactly, so each evaluation is a full-vector loss
    for lo in range(0, n_points, chunk):
        p = pred[lo:lo + chunk].copy()
        t = target[lo:lo + chunk]
        for j in range(dim):
            saved = p[:, j].copy()
            p[:, j] = saved + h
            up = asymmetric_loss(p, t, cfg)
            p[:, j] = saved - h
            down = asymmetric_loss(p, t, cfg)
            p[:, j] = saved
            numeric[lo:lo + chunk, j] = (up - down) / (2.0 * h)
    num = np.linalg.norm(analytic - numeric, axis=1)
    den = np.maximum(np.maximum(np.linalg.norm(analytic, axis=1), np.linalg.norm(numeric, axis=1)), 1e-300)
    rel = np.where(num == 0.0, 0.0, num / den)
    return float(rel.max())
