"""Linear shape/texture morphable model: synthesis, projection and a synthetic generator."""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Raised when array dimensions do not agree with the model."""


@dataclass(frozen=True)
class ParamVector:
    """Shape (``alpha``) and texture (``beta``) coefficients of one face."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=np.float64).ravel())
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=np.float64).ravel())
        if not (np.all(np.isfinite(self.alpha)) and np.all(np.isfinite(self.beta))):
            raise ValueError("parameter vector has non-finite entries")

    @property
    def gamma(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta])

    def __len__(self):
        return self.alpha.size + self.beta.size

    @classmethod
    def from_gamma(cls, gamma, n_shape: int) -> "ParamVector":
        gamma = np.asarray(gamma, dtype=np.float64).ravel()
        if not 0 <= n_shape <= gamma.size:
            raise DimensionError(f"cannot split {gamma.size} coefficients at {n_shape}")
        return cls(gamma[:n_shape], gamma[n_shape:])

    @classmethod
    def zeros(cls, n_shape: int, n_texture: int) -> "ParamVector":
        return cls(np.zeros(n_shape), np.zeros(n_texture))


@dataclass
class Mesh:
    """Vertices (V, 3) in millimetres, optional RGB colours (V, 3), triangles (F, 3)."""

    positions: np.ndarray
    triangles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != len(self.positions):
                raise DimensionError(
                    f"{len(self.colors)} colours for {len(self.positions)} vertices"
                )
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.positions)
        ):
            raise ValueError("triangle index out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.positions)


@dataclass(frozen=True, eq=False)
class MorphableModel:
    """Mean shape/texture plus principal-component bases.

    Vectors are concatenated per vertex (x0, y0, z0, x1, ...), so the row
    count of every basis is ``3 * n_vertices``.  Coefficients are raw, i.e.
    ``shape = mean_shape + shape_basis @ alpha``.
    """

    mean_shape: np.ndarray
    mean_texture: np.ndarray
    shape_basis: np.ndarray
    texture_basis: np.ndarray
    shape_sigmas: np.ndarray
    texture_sigmas: np.ndarray
    triangles: np.ndarray
    landmarks: dict = field(default_factory=dict)

    def __post_init__(self):
        conv = {
            "mean_shape": np.asarray(self.mean_shape, dtype=np.float64).ravel(),
            "mean_texture": np.asarray(self.mean_texture, dtype=np.float64).ravel(),
            "shape_basis": np.asarray(self.shape_basis, dtype=np.float64),
            "texture_basis": np.asarray(self.texture_basis, dtype=np.float64),
            "shape_sigmas": np.asarray(self.shape_sigmas, dtype=np.float64).ravel(),
            "texture_sigmas": np.asarray(self.texture_sigmas, dtype=np.float64).ravel(),
            "triangles": np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3),
            "landmarks": {str(k): int(v) for k, v in dict(self.landmarks).items()},
        }
        for name, value in conv.items():
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, name, value)

        rows = self.mean_shape.size
        if rows % 3:
            raise DimensionError("mean shape length must be a multiple of 3")
        if self.mean_texture.size != rows:
            raise DimensionError(f"mean texture has {self.mean_texture.size} entries, expected {rows}")
        for name in ("shape_basis", "texture_basis"):
            basis = getattr(self, name)
            if basis.ndim != 2 or basis.shape[0] != rows:
                raise DimensionError(f"{name} has shape {basis.shape}, expected ({rows}, K)")
        if self.shape_sigmas.size != self.n_shape:
            raise DimensionError(f"{self.shape_sigmas.size} shape sigmas for K_s={self.n_shape}")
        if self.texture_sigmas.size != self.n_texture:
            raise DimensionError(f"{self.texture_sigmas.size} texture sigmas for K_t={self.n_texture}")
        if np.any(self.shape_sigmas <= 0) or np.any(self.texture_sigmas <= 0):
            raise ValueError("sigmas must be strictly positive")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= self.n_vertices
        ):
            raise ValueError("triangle index out of range")
        for name, idx in self.landmarks.items():
            if not 0 <= idx < self.n_vertices:
                raise ValueError(f"landmark {name!r} index {idx} out of range")

    @property
    def n_vertices(self) -> int:
        return self.mean_shape.size // 3

    @property
    def n_shape(self) -> int:
        return self.shape_basis.shape[1]

    @property
    def n_texture(self) -> int:
        return self.texture_basis.shape[1]

    @property
    def n_params(self) -> int:
        return self.n_shape + self.n_texture

    @property
    def sigmas(self) -> np.ndarray:
        return np.concatenate([self.shape_sigmas, self.texture_sigmas])

    @functools.cached_property
    def _shape_pinv(self):
        return np.linalg.pinv(self.shape_basis)

    @functools.cached_property
    def _texture_pinv(self):
        return np.linalg.pinv(self.texture_basis)

    def mean_mesh(self) -> Mesh:
        return synthesize(self, ParamVector.zeros(self.n_shape, self.n_texture))


def _as_params(model: MorphableModel, params) -> ParamVector:
    if not isinstance(params, ParamVector):
        gamma = np.asarray(params, dtype=np.float64).ravel()
        if gamma.size != model.n_params:
            raise DimensionError(
                f"expected {model.n_params} coefficients (K_s={model.n_shape}, "
                f"K_t={model.n_texture}), got {gamma.size}"
            )
        params = ParamVector.from_gamma(gamma, model.n_shape)
    if params.alpha.size != model.n_shape:
        raise DimensionError(f"expected K_s={model.n_shape} shape coefficients, got {params.alpha.size}")
    if params.beta.size != model.n_texture:
        raise DimensionError(f"expected K_t={model.n_texture} texture coefficients, got {params.beta.size}")
    return params


def whiten(model: MorphableModel, params) -> ParamVector:
    """Raw coefficients to multiples of each component's standard deviation."""
    p = _as_params(model, params)
    return ParamVector(p.alpha / model.shape_sigmas, p.beta / model.texture_sigmas)


def unwhiten(model: MorphableModel, params) -> ParamVector:
    p = _as_params(model, params)
    return ParamVector(p.alpha * model.shape_sigmas, p.beta * model.texture_sigmas)


def synthesize(model: MorphableModel, params, whitened: bool = False) -> Mesh:
    """Build the mesh for ``params`` (a ParamVector or a flat gamma vector).

    Colours are clamped to [0, 255] on output only.
    """
    p = unwhiten(model, params) if whitened else _as_params(model, params)
    shape = model.mean_shape + model.shape_basis @ p.alpha
    texture = model.mean_texture + model.texture_basis @ p.beta
    return Mesh(
        positions=shape.reshape(-1, 3),
        triangles=model.triangles.copy(),
        colors=np.clip(texture, 0.0, 255.0).reshape(-1, 3),
    )


def project(model: MorphableModel, mesh: Mesh) -> ParamVector:
    """Least-squares coefficients reproducing ``mesh`` (inverse of :func:`synthesize`).

    Texture coefficients are zero when the mesh carries no colours.
    """
    if mesh.n_vertices != model.n_vertices:
        raise DimensionError(f"mesh has {mesh.n_vertices} vertices, model has {model.n_vertices}")
    alpha = model._shape_pinv @ (mesh.positions.ravel() - model.mean_shape)
    if mesh.colors is None:
        beta = np.zeros(model.n_texture)
    else:
        beta = model._texture_pinv @ (mesh.colors.ravel() - model.mean_texture)
    return ParamVector(alpha, beta)


def sample_params(model: MorphableModel, rng: np.random.Generator) -> ParamVector:
    """Draw raw coefficients from the zero-mean Gaussian prior."""
    return ParamVector(
        rng.standard_normal(model.n_shape) * model.shape_sigmas,
        rng.standard_normal(model.n_texture) * model.texture_sigmas,
    )


def grid_triangles(n_rows: int, n_cols: int, n_vertices: int) -> np.ndarray:
    """Two triangles per full grid cell, counter-clockwise seen from +Z."""
    tris = []
    for r in range(n_rows - 1):
        for c in range(n_cols - 1):
            i00 = r * n_cols + c
            i01, i10, i11 = i00 + 1, i00 + n_cols, i00 + n_cols + 1
            if i11 >= n_vertices:
                continue
            # row index grows downward (-Y), so this winding is CCW from +Z
            tris.append((i00, i10, i01))
            tris.append((i01, i10, i11))
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def decaying_sigmas(k: int, scale: float = 1.0) -> np.ndarray:
    """Strictly decreasing standard deviations ``scale / sqrt(1..k)``."""
    return scale / np.sqrt(np.arange(1, k + 1, dtype=np.float64))


def generate_synthetic_model(
    seed: int = 0,
    n_vertices: int = 400,
    n_shape: int = 99,
    n_texture: int = 99,
    width_mm: float = 160.0,
    height_mm: float = 200.0,
    depth_mm: float = 60.0,
) -> MorphableModel:
    """Deterministic face-like stand-in for a licensed morphable model.

    The mean shape is a grid bent over an ellipsoidal dome with a small
    nose bump; the bases are seeded Gaussian matrices orthonormalised by QR.
    """
    if n_vertices < 16:
        raise ValueError(f"need at least 16 vertices, got {n_vertices}")
    if n_shape < 1 or n_texture < 1:
        raise ValueError("K_s and K_t must be at least 1")
    if n_shape > 3 * n_vertices or n_texture > 3 * n_vertices:
        raise ValueError(f"K_s, K_t must not exceed 3*V = {3 * n_vertices}")

    rng = np.random.default_rng(seed)
    n_cols = int(np.ceil(np.sqrt(n_vertices)))
    n_rows = int(np.ceil(n_vertices / n_cols))
    idx = np.arange(n_vertices)
    col, row = idx % n_cols, idx // n_cols
    x = (col / (n_cols - 1) - 0.5) * width_mm
    y = (0.5 - row / max(n_rows - 1, 1)) * height_mm
    a, b = 0.5 * width_mm, 0.5 * height_mm
    dome = np.sqrt(np.clip(1.0 - (x / a) ** 2 - (y / b) ** 2, 0.0, None))
    nose = np.exp(-((x / (0.08 * width_mm)) ** 2 + ((y + 0.03 * height_mm) / (0.12 * height_mm)) ** 2))
    z = depth_mm * (0.8 * dome + 0.2 * nose)
    mean_shape = np.column_stack([x, y, z]).ravel()

    shade = 0.85 + 0.15 * dome
    mean_texture = np.column_stack([205.0 * shade, 160.0 * shade, 140.0 * shade]).ravel()

    def orthonormal(k):
        q, r = np.linalg.qr(rng.standard_normal((3 * n_vertices, k)))
        return q * np.where(np.diag(r) < 0, -1.0, 1.0)

    shape_basis = orthonormal(n_shape)
    texture_basis = orthonormal(n_texture)
    # unit-norm columns spread over V vertices: ~3 mm RMS per vertex at 1 sigma
    root_v = np.sqrt(n_vertices)
    # texture prior: every colour channel stays >= 8 std away from 0 and 255, so
    # prior samples are (practically) never clamped and synthesis stays invertible
    unit = decaying_sigmas(n_texture)
    channel_std = np.sqrt((texture_basis ** 2) @ unit ** 2)
    headroom = np.minimum(mean_texture, 255.0 - mean_texture)
    texture_scale = float(np.min(headroom / channel_std)) / 8.0
    return MorphableModel(
        mean_shape=mean_shape,
        mean_texture=mean_texture,
        shape_basis=shape_basis,
        texture_basis=texture_basis,
        shape_sigmas=decaying_sigmas(n_shape, 3.0 * root_v),
        texture_sigmas=decaying_sigmas(n_texture, texture_scale),
        triangles=grid_triangles(n_rows, n_cols, n_vertices),
        landmarks={"nose_tip": int(np.argmax(z))},
    )
