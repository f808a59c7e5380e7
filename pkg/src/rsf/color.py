"""sRGB <-> CIELAB conversion, luminance maps, and the mean Lab distance.

Images are float64 arrays of shape (H, W, 3) holding sRGB-encoded values
with nominal range [0, 1].  All filters in this package act on the stored
(display-referred) values; conversion to CIELAB happens only where a
luminance channel or a perceptual distance is needed.

Conversion chain: sRGB electro-optical decode -> linear RGB -> XYZ (D65,
2 degree observer) -> L*a*b*.  Matrix and white point follow
http://www.brucelindbloom.com/index.html?Eqn_RGB_XYZ_Matrix.html
"""

from __future__ import annotations

import numpy as np

# sRGB (D65) primaries -> XYZ
_M_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])

# D65 reference white, taken from the matrix row sums so that RGB (1,1,1)
# maps to exactly L=100, a=b=0
_WHITE = _M_RGB_TO_XYZ.sum(axis=1)

# CIE L*a*b* constants
_EPSILON = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0

# sRGB decode breakpoint
_SRGB_LINEAR_CUTOFF = 0.04045


class ShapeError(ValueError):
    """Raised when an image or mask buffer has the wrong shape."""


def require_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate an (H, W, 3) float image buffer and return it as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"{name}: expected (H, W, 3) array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name}: empty image {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite pixel values")
    return arr


def require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")


def _srgb_to_linear(v: np.ndarray) -> np.ndarray:
    lo = v / 12.92
    hi = ((v + 0.055) / 1.055) ** 2.4
    return np.where(v <= _SRGB_LINEAR_CUTOFF, lo, hi)


def _srgb_to_linear_grad(v: np.ndarray) -> np.ndarray:
    """d(linear)/d(encoded) for the sRGB decode."""
    lo = np.full_like(v, 1.0 / 12.92)
    hi = (2.4 / 1.055) * ((v + 0.055) / 1.055) ** 1.4
    return np.where(v <= _SRGB_LINEAR_CUTOFF, lo, hi)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _EPSILON, np.cbrt(t), (_KAPPA * t + 16.0) / 116.0)


def _lab_f_grad(t: np.ndarray) -> np.ndarray:
    # d cbrt(t)/dt = 1/(3 t^(2/3)); linear branch slope kappa/116
    safe = np.maximum(t, _EPSILON)
    return np.where(t > _EPSILON, 1.0 / (3.0 * np.cbrt(safe) ** 2), _KAPPA / 116.0)


def srgb_to_lab(img: np.ndarray) -> np.ndarray:
    """Convert an sRGB-encoded image to CIELAB.

    Input values are clamped to [0, 1] before conversion.  Returns an
    (H, W, 3) array with channels (L, a, b); L is in [0, 100] for valid
    inputs.
    """
    arr = np.clip(require_image(img), 0.0, 1.0)
    xyz = _srgb_to_linear(arr) @ _M_RGB_TO_XYZ.T
    f = _lab_f(xyz / _WHITE)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    lab = np.empty_like(arr)
    lab[..., 0] = 116.0 * fy - 16.0
    lab[..., 1] = 500.0 * (fx - fy)
    lab[..., 2] = 200.0 * (fy - fz)
    return lab


def luminance_map(img: np.ndarray) -> np.ndarray:
    """Per-pixel CIELAB L divided by 100, as an (H, W) buffer in [0, 1].

    This is the luminance channel the saturation filter subtracts; the
    /100 normalization keeps it commensurate with [0, 1] pixel values.
    """
    return srgb_to_lab(img)[..., 0] / 100.0


def luminance_grad(img: np.ndarray) -> np.ndarray:
    """d(luminance_map)/d(pixel) as an (H, W, 3) buffer.

    Analytic chain through sRGB decode, the XYZ matrix and the Lab cube
    root; used when gradients must flow through a running image (the
    sequential compositor).  Branch kinks at the decode cutoff and the
    Lab epsilon use their right-sided slopes.
    """
    arr = np.clip(require_image(img), 0.0, 1.0)
    lin_grad = _srgb_to_linear_grad(arr)
    y = _srgb_to_linear(arr) @ _M_RGB_TO_XYZ[1]
    # L = 116 f(Y) - 16 with Yn = 1; dL/dc = 116 f'(Y) * M[1,c] * lin'(c)
    dl = 116.0 * _lab_f_grad(y)[..., None] * _M_RGB_TO_XYZ[1] * lin_grad
    return dl / 100.0


def delta_e_ab(a: np.ndarray, b: np.ndarray) -> float:
    """Mean CIE76 color difference: Euclidean distance in Lab, averaged
    over pixels."""
    a = require_image(a, "a")
    b = require_image(b, "b")
    require_same_shape(a, b)
    diff = srgb_to_lab(a) - srgb_to_lab(b)
    return float(np.mean(np.sqrt(np.sum(diff * diff, axis=-1))))
