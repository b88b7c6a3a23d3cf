"""Pure numpy versions of the hot kernels.

These are the reference and fallback implementations.  ``_ckernels.pyx``
must produce identical results (same arithmetic, same order).
"""
import numpy as np


def asym_loss_grad(pred, target, lam_over, lam_under):
    """Per-row asymmetric loss and its gradient with respect to ``pred``.

    Both inputs are C-contiguous float64 arrays of shape (n, d).
    Returns ``(losses, grad)`` with shapes (n,) and (n, d).
    """
    sign = np.where(target >= 0.0, 1.0, -1.0)
    t_pos = sign * target
    p_pos = sign * pred
    peak = np.maximum(t_pos, p_pos)
    over = t_pos - peak
    under = p_pos - peak
    losses = lam_over * np.sum(over * over, axis=1) + lam_under * np.sum(under * under, axis=1)

    diff = p_pos - t_pos
    scale = np.where(diff > 0.0, 2.0 * lam_over, np.where(diff < 0.0, 2.0 * lam_under, 0.0))
    grad = scale * diff * sign
    return losses, grad


def rasterize_depth(px, py, z, triangles, width, height):
    """Z-buffer triangles given in pixel coordinates; larger z wins.

    ``px`` is the column coordinate and ``py`` the row coordinate of each
    vertex; pixel centres sit at integer coordinates.  Uncovered pixels are NaN.
    """
    depth = np.full((height, width), np.nan)
    eps = 1e-9
    for a, b, c in triangles:
        x0, y0, z0 = px[a], py[a], z[a]
        x1, y1, z1 = px[b], py[b], z[b]
        x2, y2, z2 = px[c], py[c], z[c]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        c_lo = max(int(np.ceil(min(x0, x1, x2) - eps)), 0)
        c_hi = min(int(np.floor(max(x0, x1, x2) + eps)), width - 1)
        r_lo = max(int(np.ceil(min(y0, y1, y2) - eps)), 0)
        r_hi = min(int(np.floor(max(y0, y1, y2) + eps)), height - 1)
        if c_lo > c_hi or r_lo > r_hi:
            continue
        cols = np.arange(c_lo, c_hi + 1, dtype=np.float64)[None, :]
        rows = np.arange(r_lo, r_hi + 1, dtype=np.float64)[:, None]
        w0 = ((x1 - cols) * (y2 - rows) - (x2 - cols) * (y1 - rows)) / area
        w1 = ((x2 - cols) * (y0 - rows) - (x0 - cols) * (y2 - rows)) / area
        w2 = ((x0 - cols) * (y1 - rows) - (x1 - cols) * (y0 - rows)) / area
        inside = (w0 >= -eps) & (w1 >= -eps) & (w2 >= -eps)
        zz = w0 * z0 + w1 * z1 + w2 * z2
        tile = depth[r_lo:r_hi + 1, c_lo:c_hi + 1]
        hit = inside & ~(zz <= tile)  # NaN-aware: empty pixels always take the hit
        tile[hit] = zz[hit]
    return depth
