"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback.  ``MORPHREG_PURE_PYTHON=1`` forces the fallback.
"""
import os

import numpy as np

from . import _pykernels

_compiled = None
if not os.environ.get("MORPHREG_PURE_PYTHON"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _pykernels


def available_backends():
    return ["python"] + (["compiled"] if _compiled is not None else [])


def get_backend(name=None):
    """Module implementing the kernels for ``name`` (default: the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def asym_loss_grad(pred, target, lam_over, lam_under, backend=None):
    pred = np.ascontiguousarray(pred, dtype=np.float64)
    target = np.ascontiguousarray(target, dtype=np.float64)
    return get_backend(backend).asym_loss_grad(pred, target, float(lam_over), float(lam_under))


def rasterize_depth(px, py, z, triangles, width, height, backend=None):
    return get_backend(backend).rasterize_depth(
        np.ascontiguousarray(px, dtype=np.float64),
        np.ascontiguousarray(py, dtype=np.float64),
        np.ascontiguousarray(z, dtype=np.float64),
        np.ascontiguousarray(triangles, dtype=np.int_),
        int(width),
        int(height),
    )
