"""Rigid alignment, cropping, frontal depth rendering and shape error measures."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .. import kernels
from ..model import Mesh


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def compose(self, first: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying ``first`` and then ``self``."""
        return RigidTransform(self.rotation @ first.rotation, self.rotation @ first.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)


def rotation_angle(rotation) -> float:
    """Angle in radians of a rotation matrix."""
    c = (np.trace(rotation) - 1.0) / 2.0
    # arccos is ill-conditioned near 0; use the skew part as well
    s = np.linalg.norm([rotation[2, 1] - rotation[1, 2], rotation[0, 2] - rotation[2, 0], rotation[1, 0] - rotation[0, 1]]) / 2.0
    return float(np.arctan2(s, c))


def _points(x) -> np.ndarray:
    return x.positions if isinstance(x, Mesh) else np.asarray(x, dtype=np.float64).reshape(-1, 3)


def kabsch(source, target) -> RigidTransform:
    """Least-squares rigid transform mapping ``source`` rows onto ``target`` rows.

    A reflection in the SVD solution is flipped into a proper rotation.
    """
    src, dst = _points(source), _points(target)
    if len(src) != len(dst) or len(src) < 3:
        raise GeometryError("need at least 3 corresponding point pairs")
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - cs, dst - cd
    if np.linalg.matrix_rank(a) < 2 or np.linalg.matrix_rank(b) < 2:
        raise GeometryError("degenerate correspondence set (points are collinear)")
    u, _, vt = np.linalg.svd(a.T @ b)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    d = 1.0 if d == 0 else d
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, cd - rot @ cs)


class IcpResult(NamedTuple):
    transform: RigidTransform
    aligned: np.ndarray
    residuals: list  # RMS correspondence distance after each accepted iterate


def _principal_axes(points):
    centred = points - points.mean(axis=0)
    _, vecs = np.linalg.eigh(centred.T @ centred)
    return vecs[:, ::-1]


def initial_guesses(source, target) -> list[RigidTransform]:
    """Centroid match followed by the four proper principal-axis alignments."""
    src, dst = _points(source), _points(target)
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    guesses = [RigidTransform(np.eye(3), cd - cs)]
    if len(src) >= 3:
        es, ed = _principal_axes(src), _principal_axes(dst)
        for signs in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)):
            rot = ed @ np.diag(signs) @ es.T
            if np.linalg.det(rot) < 0:
                rot = ed @ np.diag(np.negative(signs)) @ es.T
            guesses.append(RigidTransform(rot, cd - rot @ cs))
    return guesses


def _icp_run(src, dst, tree, current, max_iter, tol):
    moved = current.apply(src)
    dist, idx = tree.query(moved)
    residual = float(np.sqrt(np.mean(dist ** 2)))
    history = [residual]
    for _ in range(max_iter):
        if residual == 0.0:
            break
        step = kabsch(moved, dst[idx])
        candidate = step.compose(current)
        cand_moved = candidate.apply(src)
        cand_dist, cand_idx = tree.query(cand_moved)
        cand_res = float(np.sqrt(np.mean(cand_dist ** 2)))
        if cand_res > residual:
            break
        improvement = residual - cand_res
        current, moved, idx, residual = candidate, cand_moved, cand_idx, cand_res
        history.append(residual)
        if improvement < tol:
            break
    return IcpResult(current, moved, history)


def icp_align(
    source,
    target,
    max_iter: int = 100,
    tol: float = 1e-10,
    init: str | RigidTransform | None = "multistart",
) -> IcpResult:
    """Rigid ICP with k-d tree nearest neighbours and closed-form SVD updates.

    ``init`` selects the starting pose: ``"centroid"`` (translate centroids
    together), ``"multistart"`` (run from the centroid match and from each
    principal-axis alignment, keep the lowest final residual), an explicit
    :class:`RigidTransform`, or ``None`` for the identity.

    Iteration stops when the RMS correspondence distance improves by less
    than ``tol`` (mm), reaches zero, or after ``max_iter`` updates.  Updates
    that would increase the residual are rejected, so ``residuals`` is
    non-increasing.
    """
    src, dst = _points(source), _points(target)
    if len(src) == 0 or len(dst) == 0:
        raise GeometryError("empty point set")
    if len(dst) < 3 or np.linalg.matrix_rank(dst - dst.mean(axis=0)) < 2:
        raise GeometryError("target needs at least 3 non-collinear points")

    if isinstance(init, RigidTransform):
        starts = [init]
    elif init == "multistart":
        starts = initial_guesses(src, dst)
    elif init == "centroid":
        starts = initial_guesses(src, dst)[:1]
    elif init is None:
        starts = [RigidTransform.identity()]
    else:
        raise ValueError(f"unknown ICP initialisation {init!r}")

    tree = cKDTree(dst)
    best = None
    for start in starts:
        run = _icp_run(src, dst, tree, start, max_iter, tol)
        if best is None or run.residuals[-1] < best.residuals[-1]:
            best = run
        if best.residuals[-1] == 0.0:
            break
    return best


def crop_radius(mesh: Mesh, center_index: int, radius_mm: float = 95.0, require_triangles: bool = False) -> Mesh:
    """Keep vertices within ``radius_mm`` of vertex ``center_index``; drop cut triangles."""
    if not 0 <= center_index < mesh.n_vertices:
        raise GeometryError(f"centre index {center_index} out of range")
    if radius_mm <= 0:
        raise GeometryError("radius must be positive")
    d2 = np.sum((mesh.positions - mesh.positions[center_index]) ** 2, axis=1)
    keep = d2 <= radius_mm * radius_mm
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    tris = mesh.triangles
    tris = remap[tris[np.all(keep[tris], axis=1)]] if len(tris) else tris
    if require_triangles and len(tris) == 0:
        raise GeometryError(f"no triangles left within {radius_mm} mm")
    colors = mesh.colors[keep] if mesh.colors is not None else None
    return Mesh(mesh.positions[keep], tris, colors)


@dataclass
class DepthMap:
    """Frontal depth image; NaN marks pixels no triangle covers.

    Pixel (row, col) centre sits at
    ``x = cx + (col - (W - 1) / 2) * scale``, ``y = cy + ((H - 1) / 2 - row) * scale``.
    """

    depth: np.ndarray
    pixel_scale: float
    center: tuple = (0.0, 0.0)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.depth)


def render_depth(mesh: Mesh, resolution=128, pixel_scale: float = 1.6, center=None, backend=None) -> DepthMap:
    """Orthographic z-buffer render looking down -Z; the larger z is kept.

    ``center`` (x, y) defaults to the vertex centroid.
    """
    if len(mesh.triangles) == 0:
        raise GeometryError("mesh has no triangles")
    width, height = (resolution, resolution) if np.isscalar(resolution) else resolution
    if width < 1 or height < 1 or pixel_scale <= 0:
        raise GeometryError("resolution and pixel scale must be positive")
    if center is None:
        center = mesh.positions[:, :2].mean(axis=0)
    cx, cy = float(center[0]), float(center[1])
    p = mesh.positions
    px = (p[:, 0] - cx) / pixel_scale + (width - 1) / 2.0
    py = (cy - p[:, 1]) / pixel_scale + (height - 1) / 2.0
    depth = kernels.rasterize_depth(px, py, p[:, 2], mesh.triangles, width, height, backend=backend)
    if not np.any(np.isfinite(depth)):
        raise GeometryError("no triangle covers any pixel")
    return DepthMap(depth, float(pixel_scale), (cx, cy))


def correspond(estimate, truth) -> np.ndarray:
    """Ground-truth point nearest to each estimate vertex, row-aligned with ``estimate``."""
    est, gt = _points(estimate), _points(truth)
    _, idx = cKDTree(gt).query(est)
    return gt[idx]


def rmse_3d(x, x_star, literal: bool = False) -> float:
    """Root mean squared vertex distance (mm).

    ``literal=True`` gives ``sqrt(sum of squared distances) / N`` instead.
    """
    x, x_star = _points(x), _points(x_star)
    if x.shape != x_star.shape or len(x) == 0:
        raise GeometryError("vertex sets must be non-empty and in correspondence")
    sq = np.sum((x - x_star) ** 2)
    if literal:
        return float(np.sqrt(sq) / len(x))
    return float(np.sqrt(sq / len(x)))


def shape_errors(x, x_star, depth: DepthMap, depth_star: DepthMap, literal_3drmse: bool = False) -> dict:
    """3D RMSE on corresponded vertices plus RMSE, log10 and relative error on depth.

    Depth terms use pixels valid in both maps; log10 and rel need positive depth there.
    """
    if depth.depth.shape != depth_star.depth.shape:
        raise GeometryError("depth maps differ in resolution")
    both = depth.valid & depth_star.valid
    if not both.any():
        raise GeometryError("no pixel is valid in both depth maps")
    d, ds = depth.depth[both], depth_star.depth[both]
    if np.any(d <= 0) or np.any(ds <= 0):
        raise GeometryError("log10 / rel need positive depth values")
    return {
        "rmse3d": rmse_3d(x, x_star, literal_3drmse),
        "rmse": float(np.sqrt(np.mean((d - ds) ** 2))),
        "log10": float(np.mean(np.abs(np.log10(d) - np.log10(ds)))),
        "rel": float(np.mean(np.abs(d - ds) / np.abs(ds))),
    }


def nose_tip_index(mesh: Mesh) -> int:
    """Front-most vertex (largest z), the default crop centre."""
    return int(np.argmax(mesh.positions[:, 2]))


def evaluate_meshes(
    estimate: Mesh,
    truth: Mesh,
    radius_mm: float = 95.0,
    resolution=128,
    pixel_scale: float = 1.6,
    camera_distance: float = 500.0,
    estimate_nose: int | None = None,
    truth_nose: int | None = None,
    icp: bool = True,
    literal_3drmse: bool = False,
    max_iter: int = 100,
    backend=None,
) -> dict:
    """Full accuracy protocol for an estimated mesh against a ground-truth mesh.

    Both are cropped around their nose tips, the estimate is rigidly aligned
    to the truth, vertices are paired by nearest neighbour, and both are
    rendered on the same frontal grid (centred on the cropped truth).  Depth
    is measured from a camera plane ``camera_distance`` mm in front of the
    truth's nose tip.
    """
    est_c = crop_radius(estimate, nose_tip_index(estimate) if estimate_nose is None else estimate_nose, radius_mm, True)
    gt_c = crop_radius(truth, nose_tip_index(truth) if truth_nose is None else truth_nose, radius_mm, True)
    if icp:
        aligned = icp_align(est_c.positions, gt_c.positions, max_iter=max_iter).aligned
    else:
        aligned = est_c.positions
    est_aligned = Mesh(aligned, est_c.triangles)
    x_star = correspond(aligned, gt_c.positions)

    center = gt_c.positions[:, :2].mean(axis=0)
    d_est = render_depth(est_aligned, resolution, pixel_scale, center, backend)
    d_gt = render_depth(gt_c, resolution, pixel_scale, center, backend)
    camera_z = gt_c.positions[:, 2].max() + camera_distance
    to_depth = lambda dm: DepthMap(camera_z - dm.depth, dm.pixel_scale, dm.center)  # noqa: E731
    return shape_errors(aligned, x_star, to_depth(d_est), to_depth(d_gt), literal_3drmse)
