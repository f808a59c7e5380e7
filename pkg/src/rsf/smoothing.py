"""Adaptive Gaussian mask smoothing with an analytic sigma derivative.

The kernel window is fixed (default 51 x 51, sized for ~256 px inputs)
while its standard deviation stays free, so sigma can be optimized like
any other recipe parameter.  Weights are renormalized after truncation;
borders use replicate padding to avoid darkening mask edges.

The 2-D kernel is separable, so both the smoothing and its adjoint (the
transpose map needed to backpropagate through a fixed-sigma smooth) run
as two 1-D passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

DEFAULT_KERNEL_SIZE = 51


@dataclass(frozen=True)
class SmoothKernel:
    """Truncated, normalized Gaussian window with learnable sigma."""

    max_size: int = DEFAULT_KERNEL_SIZE
    sigma: float = 2.0

    def __post_init__(self) -> None:
        if self.max_size < 1 or self.max_size % 2 == 0:
            raise ValueError(f"kernel max_size must be odd and >= 1, got {self.max_size}")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"kernel sigma must be > 0, got {self.sigma}")

    def weights(self) -> np.ndarray:
        """Normalized 1-D weights; the 2-D kernel is their outer product."""
        d = np.arange(self.max_size, dtype=np.float64) - self.max_size // 2
        g = np.exp(-(d * d) / (2.0 * self.sigma * self.sigma))
        return g / g.sum()

    def weights_dsigma(self) -> np.ndarray:
        """d(normalized weights)/d(sigma).

        For w_i = g_i / sum(g): dw_i = (w_i / sigma^3) (d_i^2 - sum_j w_j d_j^2).
        """
        d = np.arange(self.max_size, dtype=np.float64) - self.max_size // 2
        w = self.weights()
        d2 = d * d
        return w * (d2 - np.dot(w, d2)) / self.sigma**3


def _require_mask(mask: np.ndarray) -> np.ndarray:
    arr = np.asarray(mask, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("mask contains non-finite values")
    return arr


def conv1d_replicate(arr: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    """1-D correlation with replicate (edge-clamp) padding."""
    return correlate1d(arr, weights, axis=axis, mode="nearest")


def conv1d_replicate_adjoint(grad: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    """Transpose of conv1d_replicate as a linear map.

    Replicate padding transposes to folding: out-of-range correlation
    mass accumulates onto the border samples.
    """
    radius = len(weights) // 2
    n = grad.shape[axis]
    pad = [(0, 0)] * grad.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(grad, pad, mode="constant")
    # full convolution; kernel symmetry is not assumed, so flip explicitly
    z = correlate1d(padded, weights[::-1], axis=axis, mode="constant")
    sl_core = [slice(None)] * grad.ndim
    sl_core[axis] = slice(radius, radius + n)
    out = z[tuple(sl_core)].copy()
    sl_lo = [slice(None)] * grad.ndim
    sl_lo[axis] = slice(0, radius)
    sl_hi = [slice(None)] * grad.ndim
    sl_hi[axis] = slice(radius + n, 2 * radius + n)
    first = [slice(None)] * grad.ndim
    first[axis] = 0
    last = [slice(None)] * grad.ndim
    last[axis] = n - 1
    out[tuple(first)] += z[tuple(sl_lo)].sum(axis=axis)
    out[tuple(last)] += z[tuple(sl_hi)].sum(axis=axis)
    return out


def smooth_mask(mask: np.ndarray, kernel: SmoothKernel) -> np.ndarray:
    """Gaussian-smooth a mask; values stay in [0, 1] (unit-sum kernel)."""
    arr = _require_mask(mask)
    w = kernel.weights()
    out = conv1d_replicate(conv1d_replicate(arr, w, axis=0), w, axis=1)
    return np.clip(out, 0.0, 1.0)


def smooth_mask_adjoint(grad: np.ndarray, kernel: SmoothKernel) -> np.ndarray:
    """Backpropagate a cotangent through smooth_mask at fixed sigma."""
    w = kernel.weights()
    return conv1d_replicate_adjoint(conv1d_replicate_adjoint(grad, w, axis=1), w, axis=0)


def smooth_mask_dsigma(mask: np.ndarray, kernel: SmoothKernel) -> np.ndarray:
    """Analytic d(smooth_mask)/d(sigma), per pixel.

    Product rule over the separable kernel: conv(dw, w) + conv(w, dw).
    """
    arr = _require_mask(mask)
    w = kernel.weights()
    dw = kernel.weights_dsigma()
    rows_w = conv1d_replicate(arr, w, axis=0)
    rows_dw = conv1d_replicate(arr, dw, axis=0)
    return conv1d_replicate(rows_dw, w, axis=1) + conv1d_replicate(rows_w, dw, axis=1)
