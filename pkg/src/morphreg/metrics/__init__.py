"""Shape accuracy and recognition metrics."""
from .geometry import (
    DepthMap,
    GeometryError,
    RigidTransform,
    correspond,
    crop_radius,
    evaluate_meshes,
    icp_align,
    kabsch,
    render_depth,
    shape_errors,
)
from .recognition import cmc, roc_curve, verification_metrics

__all__ = [
    "DepthMap",
    "GeometryError",
    "RigidTransform",
    "cmc",
    "correspond",
    "crop_radius",
    "evaluate_meshes",
    "icp_align",
    "kabsch",
    "render_depth",
    "roc_curve",
    "shape_errors",
    "verification_metrics",
]
