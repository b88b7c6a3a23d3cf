"""Morphable-model parameter toolkit.

Linear shape/texture synthesis, confidence-weighted pooling of estimates,
the asymmetric Euclidean loss with an SGD-trained regression head,
parameter-vector face matching, and shape/recognition evaluation.
"""
from .kernels import BACKEND
from .loss import LossConfig, asymmetric_loss, asymmetric_loss_grad
from .matching import PcaTransform, embed, fit_pca, score_pairs, similarity
from .model import (
    Mesh,
    MorphableModel,
    ParamVector,
    generate_synthetic_model,
    project,
    synthesize,
)
from .pooling import TemplateItem, WeightedEstimate, pool, pool_template
from .regressor import Dataset, LinearRegressor, TrainConfig, make_synthetic_task, predict, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dataset",
    "LinearRegressor",
    "LossConfig",
    "Mesh",
    "MorphableModel",
    "ParamVector",
    "PcaTransform",
    "TemplateItem",
    "TrainConfig",
    "WeightedEstimate",
    "asymmetric_loss",
    "asymmetric_loss_grad",
    "embed",
    "fit_pca",
    "generate_synthetic_model",
    "make_synthetic_task",
    "pool",
    "pool_template",
    "predict",
    "project",
    "score_pairs",
    "similarity",
    "synthesize",
    "train",
]
