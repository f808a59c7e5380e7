"""Fidelity metrics: PSNR, single-scale SSIM, mean Lab distance, soft Dice.

SSIM follows the classic single-scale recipe: 11x11 Gaussian window with
sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1.0, statistics taken over
valid windows only, computed per channel and averaged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .color import delta_e_ab, require_image, require_same_shape

PSNR_CAP_DB = 99.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    delta_e: float

    def to_json_line(self) -> str:
        return json.dumps(
            {"psnr": round(self.psnr, 6), "ssim": round(self.ssim, 6),
             "delta_e": round(self.delta_e, 6)}
        )


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB against peak 1.0, capped at 99."""
    a = require_image(a, "a")
    b = require_image(b, "b")
    require_same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def _ssim_blur(arr: np.ndarray, weights: np.ndarray) -> np.ndarray:
    r = len(weights) // 2
    out = correlate1d(correlate1d(arr, weights, axis=0, mode="constant"),
                      weights, axis=1, mode="constant")
    return out[r:arr.shape[0] - r, r:arr.shape[1] - r]


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Single-scale SSIM over valid windows, averaged across channels."""
    a = require_image(a, "a")
    b = require_image(b, "b")
    require_same_shape(a, b)
    h, w = a.shape[:2]
    if min(h, w) < _SSIM_WINDOW:
        raise ValueError(
            f"image too small for SSIM: need min dimension >= {_SSIM_WINDOW}, got {(h, w)}"
        )
    d = np.arange(_SSIM_WINDOW, dtype=np.float64) - _SSIM_WINDOW // 2
    g = np.exp(-(d * d) / (2.0 * _SSIM_SIGMA**2))
    g /= g.sum()
    c1 = (_SSIM_K1 * 1.0) ** 2
    c2 = (_SSIM_K2 * 1.0) ** 2
    scores = []
    for c in range(3):
        x, y = a[..., c], b[..., c]
        mu_x = _ssim_blur(x, g)
        mu_y = _ssim_blur(y, g)
        var_x = _ssim_blur(x * x, g) - mu_x * mu_x
        var_y = _ssim_blur(y * y, g) - mu_y * mu_y
        cov = _ssim_blur(x * y, g) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Soft Dice score 2<a,b> / (|a|^2 + |b|^2); two empty masks score 1."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"mask dimension mismatch: {a.shape} vs {b.shape}")
    denom = float(np.sum(a * a) + np.sum(b * b))
    if denom == 0.0:
        return 1.0
    return float(2.0 * np.sum(a * b) / denom)


def metric_report(a: np.ndarray, b: np.ndarray) -> MetricReport:
    return MetricReport(psnr=psnr(a, b), ssim=ssim(a, b), delta_e=delta_e_ab(a, b))
