"""Separable bilinear resampling with half-pixel centers, plus its adjoint.

Used to fit stored masks to the image raster, to downscale preview
renders, and to upsample the low-resolution free-mask grids during
fitting.  The map is linear in the input, so the adjoint (scatter-add of
the same weights) backpropagates gradients exactly.
"""

from __future__ import annotations

import numpy as np


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source index pair and blend weight per output sample along one axis."""
    if n_in < 1 or n_out < 1:
        raise ValueError(f"resample sizes must be >= 1, got {n_in} -> {n_out}")
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1.0)
    i0 = np.floor(pos).astype(np.intp)
    frac = pos - i0
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, frac


def _resize_axis(arr: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = arr.shape[axis]
    if n_in == n_out:
        return arr
    i0, i1, frac = _axis_weights(n_in, n_out)
    shape = [1] * arr.ndim
    shape[axis] = n_out
    f = frac.reshape(shape)
    return np.take(arr, i0, axis=axis) * (1.0 - f) + np.take(arr, i1, axis=axis) * f


def _resize_axis_adjoint(grad: np.ndarray, n_in: int, axis: int) -> np.ndarray:
    n_out = grad.shape[axis]
    if n_in == n_out:
        return grad
    i0, i1, frac = _axis_weights(n_in, n_out)
    shape = [1] * grad.ndim
    shape[axis] = n_out
    f = frac.reshape(shape)
    out_shape = list(grad.shape)
    out_shape[axis] = n_in
    out = np.zeros(out_shape, dtype=np.float64)
    moved = np.moveaxis(out, axis, 0)
    g = np.moveaxis(grad, axis, 0)
    fr = frac.reshape((n_out,) + (1,) * (grad.ndim - 1))
    np.add.at(moved, i0, g * (1.0 - fr))
    np.add.at(moved, i1, g * fr)
    return out


def bilinear_resize(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize the leading two axes of a 2-D or 3-D array bilinearly."""
    if arr.ndim not in (2, 3):
        raise ValueError(f"expected 2-D or 3-D array, got shape {arr.shape}")
    return _resize_axis(_resize_axis(np.asarray(arr, dtype=np.float64), height, 0), width, 1)


def bilinear_resize_adjoint(grad: np.ndarray, height: int, width: int) -> np.ndarray:
    """Adjoint of bilinear_resize: maps cotangents back to (height, width)."""
    if grad.ndim not in (2, 3):
        raise ValueError(f"expected 2-D or 3-D array, got shape {grad.shape}")
    g = np.asarray(grad, dtype=np.float64)
    return _resize_axis_adjoint(_resize_axis_adjoint(g, width, 1), height, 0)


def preview_scale(height: int, width: int, long_edge_cap: int) -> tuple[int, int]:
    """Downscale dimensions so the long edge fits the cap; never upscales."""
    long_edge = max(height, width)
    if long_edge <= long_edge_cap:
        return height, width
    scale = long_edge_cap / long_edge
    return max(1, round(height * scale)), max(1, round(width * scale))
