"""Affine regression head from feature vectors to parameter vectors, trained by SGD."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .loss import LossConfig, loss_and_grad
from .model import ParamVector, decaying_sigmas

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, what="loss"):
        super().__init__(f"non-finite {what} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class LinearRegressor:
    """``predict(x) = x @ weights + bias``; weights are (D_feat, D_out)."""

    weights: np.ndarray
    bias: np.ndarray
    n_shape: int | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).ravel()
        if self.weights.ndim != 2 or self.weights.shape[1] != self.bias.size:
            raise ValueError(f"weights {self.weights.shape} do not match bias ({self.bias.size},)")
        if self.n_shape is None:
            self.n_shape = self.d_out // 2
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("regressor has non-finite entries")

    @classmethod
    def zeros(cls, d_feat: int, d_out: int = 198, n_shape: int | None = None):
        return cls(np.zeros((d_feat, d_out)), np.zeros(d_out), n_shape)

    @property
    def d_feat(self) -> int:
        return self.weights.shape[0]

    @property
    def d_out(self) -> int:
        return self.weights.shape[1]

    def forward(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.d_feat:
            raise ValueError(f"expected {self.d_feat} features, got {features.shape[-1]}")
        return features @ self.weights + self.bias

    def backward(self, features: np.ndarray, grad_out: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients for ``grad_out`` = d(objective)/d(output), in :meth:`param_groups` order."""
        return [features.T @ grad_out, grad_out.sum(axis=0)]

    def param_groups(self) -> list[dict]:
        """Trainable arrays with per-group learning-rate multiplier and decay flag."""
        return [
            {"name": "weights", "param": self.weights, "lr_mult": 1.0, "decay": True},
            {"name": "bias", "param": self.bias, "lr_mult": 1.0, "decay": False},
        ]

    def copy(self) -> "LinearRegressor":
        return LinearRegressor(self.weights.copy(), self.bias.copy(), self.n_shape)


def predict(reg: LinearRegressor, features) -> ParamVector:
    """Regress one feature vector to a :class:`ParamVector`."""
    features = np.asarray(features, dtype=np.float64).ravel()
    return ParamVector.from_gamma(reg.forward(features), reg.n_shape)


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    subject_ids: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.subject_ids = np.asarray(self.subject_ids)
        n = len(self.features)
        if len(self.targets) != n or len(self.subject_ids) != n:
            raise ValueError("features, targets and subject ids must have the same row count")

    def __len__(self):
        return len(self.features)

    def check_subject_targets(self):
        """Every sample of a subject must carry the same target vector."""
        for sid in np.unique(self.subject_ids):
            rows = self.targets[self.subject_ids == sid]
            if not np.all(rows == rows[0]):
                raise ValueError(f"subject {sid!r} has inconsistent targets")


@dataclass
class TrainConfig:
    batch_size: int = 144
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lr_head: float = 0.01
    lr_decay_factor: float = 0.1
    patience: int = 3
    min_lr_ratio: float = 1e-4
    max_epochs: int = 200
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.lr_head <= 0:
            raise ValueError("lr_head must be positive")
        if not 0 < self.lr_decay_factor < 1:
            raise ValueError("lr_decay_factor must be in (0, 1)")
        if self.patience < 1 or self.max_epochs < 0:
            raise ValueError("patience must be >= 1 and max_epochs >= 0")
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)  # rows of (epoch, lr, train_loss, val_loss)
    best_epoch: int = 0

    def add(self, epoch, lr, train_loss, val_loss):
        self.epochs.append((epoch, lr, train_loss, val_loss))

    @property
    def val_losses(self):
        return [row[3] for row in self.epochs]

    @property
    def train_losses(self):
        return [row[2] for row in self.epochs]


def mean_loss(reg, data: Dataset, cfg: LossConfig) -> float:
    losses, _ = loss_and_grad(reg.forward(data.features), data.targets, cfg)
    return float(np.mean(losses))


def objective_and_grads(reg, features, targets, loss_cfg: LossConfig, weight_decay: float = 0.0):
    """Mean per-sample loss plus ``weight_decay / 2 * ||W||^2`` over decayed groups."""
    losses, g_out = loss_and_grad(reg.forward(features), targets, loss_cfg)
    n = len(features)
    grads = reg.backward(features, g_out / n)
    value = float(np.mean(losses))
    for group, g in zip(reg.param_groups(), grads):
        if group["decay"] and weight_decay:
            value += 0.5 * weight_decay * float(np.sum(group["param"] ** 2))
            g += weight_decay * group["param"]
    return value, grads


def sgd_step(reg, grads, velocity, lr, momentum, weight_decay):
    """One momentum SGD update with weight decay applied outside the momentum buffer.

    ``grads`` are loss-only gradients.  A decayed parameter with zero loss
    gradient and zero velocity is scaled by exactly ``1 - lr * weight_decay``.
    """
    for group, g, v in zip(reg.param_groups(), grads, velocity):
        p, step = group["param"], lr * group["lr_mult"]
        v *= momentum
        v += g
        if group["decay"] and weight_decay:
            p *= 1.0 - step * weight_decay
        p -= step * v


def train(data: Dataset, val: Dataset, cfg: TrainConfig = TrainConfig(), init=None):
    """Mini-batch SGD on the asymmetric loss.

    The learning rate drops by ``lr_decay_factor`` after ``patience`` epochs
    without a new best validation loss; training stops once it would fall
    below ``lr_head * min_lr_ratio`` or after ``max_epochs``.  Returns the
    regressor at the best validation epoch and the per-epoch log (epoch 0 is
    the initial state).
    """
    if len(data) == 0 or len(val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if data.features.shape[1] != val.features.shape[1] or data.targets.shape[1] != val.targets.shape[1]:
        raise ValueError("training and validation dimensions differ")

    reg = init.copy() if init is not None else LinearRegressor.zeros(data.features.shape[1], data.targets.shape[1])
    rng = np.random.default_rng(cfg.seed)
    velocity = [np.zeros_like(g["param"]) for g in reg.param_groups()]
    lr, lr_floor = cfg.lr_head, cfg.lr_head * cfg.min_lr_ratio

    trace = TrainLog()
    best_val = mean_loss(reg, val, cfg.loss)
    trace.add(0, lr, mean_loss(reg, data, cfg.loss), best_val)
    if not np.isfinite(best_val):
        raise TrainingDiverged(0)
    best, since_best = reg.copy(), 0

    n = len(data)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x, y = data.features[idx], data.targets[idx]
            with np.errstate(over="ignore", invalid="ignore"):
                pred = reg.forward(x)
            if not np.all(np.isfinite(pred)):
                raise TrainingDiverged(epoch, "prediction")
            with np.errstate(over="ignore", invalid="ignore"):
                losses, g_out = loss_and_grad(pred, y, cfg.loss)
            if not np.all(np.isfinite(losses)):
                raise TrainingDiverged(epoch, "loss")
            total += float(losses.sum())
            sgd_step(reg, reg.backward(x, g_out / len(idx)), velocity, lr, cfg.momentum, cfg.weight_decay)
        train_loss = total / n
        with np.errstate(over="ignore", invalid="ignore"):
            val_pred = reg.forward(val.features)
        if not np.all(np.isfinite(val_pred)):
            raise TrainingDiverged(epoch, "validation prediction")
        with np.errstate(over="ignore", invalid="ignore"):
            val_loss = float(np.mean(loss_and_grad(val_pred, val.targets, cfg.loss)[0]))
        trace.add(epoch, lr, train_loss, val_loss)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDiverged(epoch)
        log.debug("epoch %d lr %.3g train %.6g val %.6g", epoch, lr, train_loss, val_loss)

        if val_loss < best_val:
            best_val, best, since_best = val_loss, reg.copy(), 0
            trace.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= cfg.patience:
                lr *= cfg.lr_decay_factor
                since_best = 0
                if lr < lr_floor * (1 - 1e-12):
                    break
    return best, trace


def make_synthetic_task(
    seed: int = 0,
    n_subjects: int = 400,
    images_per_subject: int = 5,
    d_feat: int = 64,
    noise_sigma: float = 0.0,
    sigmas=None,
    val_fraction: float = 0.2,
):
    """Synthetic regression task standing in for face images and pooled targets.

    Each subject gets a parameter vector drawn from N(0, diag(sigmas^2));
    each image of that subject has features ``B @ gamma + noise``.  The
    subject target is the equal-weight pool of its per-image (noiseless)
    vectors, which is the subject vector itself.  Returns ``(train, val, B)``.
    """
    if min(n_subjects, images_per_subject, d_feat) < 1:
        raise ValueError("sizes must be positive")
    if n_subjects < 2:
        raise ValueError("need at least two subjects to split train/validation")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    sigmas = np.concatenate([decaying_sigmas(99), decaying_sigmas(99)]) if sigmas is None else np.asarray(sigmas, float)
    d_out = sigmas.size
    rng = np.random.default_rng(seed)

    gammas = rng.standard_normal((n_subjects, d_out)) * sigmas
    # unit-variance features under the prior
    mixing = rng.standard_normal((d_feat, d_out)) / np.sqrt(np.sum(sigmas ** 2))
    subject_ids = np.repeat(np.arange(n_subjects), images_per_subject)
    targets = gammas[subject_ids]
    features = targets @ mixing.T
    if noise_sigma > 0:
        features = features + noise_sigma * rng.standard_normal(features.shape)

    n_val = min(max(1, int(round(val_fraction * n_subjects))), n_subjects - 1)
    val_subjects = np.sort(rng.permutation(n_subjects)[:n_val])
    is_val = np.isin(subject_ids, val_subjects)
    train_set = Dataset(features[~is_val], targets[~is_val], subject_ids[~is_val])
    val_set = Dataset(features[is_val], targets[is_val], subject_ids[is_val])
    return train_set, val_set, mixing


def least_squares_fit(data: Dataset) -> LinearRegressor:
    """Closed-form affine least-squares fit (reference optimum for the Euclidean loss)."""
    x = np.column_stack([data.features, np.ones(len(data))])
    coef, *_ = np.linalg.lstsq(x, data.targets, rcond=None)
    return LinearRegressor(coef[:-1], coef[-1])


def undershoot_bias(pred, target) -> float:
    """Mean of ``sign(target) * (pred - target)``; negative means shrinkage toward the origin."""
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    return float(np.mean(np.where(target >= 0, 1.0, -1.0) * (pred - target)))
