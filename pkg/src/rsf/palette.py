"""Palette-based region masks: dominant colors and soft assignments.

Dominant colors come from seeded K-means over pixel Lab values
(k-means++ style seeding driven by the RNG, so a fixed seed reproduces
the palette exactly).  Soft region weights are a Gaussian softmax over
the Lab distance maps to each center, normalized to a partition of
unity, then blurred so region edges do not ring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .color import require_image, srgb_to_lab
from .smoothing import SmoothKernel, smooth_mask

MAX_KMEANS_ITERS = 100
CONVERGENCE_TOL = 1e-4
DEFAULT_TEMPERATURE = 10.0  # Lab units
DEFAULT_MASK_SIGMA = 2.0


@dataclass
class Palette:
    """Dominant Lab colors of an image.

    ``shortfall`` is set when the image had fewer distinct colors than
    requested, in which case ``colors`` holds every distinct color.
    """

    colors: np.ndarray  # (K, 3) Lab triples
    shortfall: bool = False
    requested: int = field(default=0)

    def __post_init__(self) -> None:
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        if len(self.colors) < 1:
            raise ValueError("palette must contain at least one color")

    def __len__(self) -> int:
        return len(self.colors)

    def to_json(self) -> dict:
        return {
            "space": "lab",
            "colors": [[float(v) for v in c] for c in self.colors],
            "shortfall": self.shortfall,
            "requested": int(self.requested or len(self.colors)),
        }


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: next center sampled proportional to squared
    distance from the chosen set."""
    n = len(points)
    centers = np.empty((k, 3), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:  # all remaining points coincide with a center
            centers[i] = points[rng.integers(n)]
            continue
        probs = d2 / total
        centers[i] = points[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, np.sum((points - centers[i]) ** 2, axis=1))
    return centers


def extract_palette(img: np.ndarray, k: int, seed: int = 0) -> Palette:
    """K-means over pixel Lab values; deterministic for a fixed seed.

    If the image has fewer than k distinct colors the distinct colors are
    returned with the shortfall flag set.
    """
    if k < 1:
        raise ValueError(f"palette size must be >= 1, got {k}")
    lab = srgb_to_lab(require_image(img)).reshape(-1, 3)
    distinct = np.unique(lab, axis=0)
    if len(distinct) <= k:
        return Palette(colors=distinct, shortfall=len(distinct) < k, requested=k)

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(lab, k, rng)
    for _ in range(MAX_KMEANS_ITERS):
        d2 = np.sum((lab[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for i in range(k):
            members = lab[labels == i]
            if len(members):
                new_centers[i] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its center
                new_centers[i] = lab[np.argmax(np.min(d2, axis=1))]
        movement = np.sqrt(np.sum((new_centers - centers) ** 2, axis=1)).max()
        centers = new_centers
        if movement < CONVERGENCE_TOL:
            break
    # merge numerically coincident centers so palette colors stay distinct
    keep: list[int] = []
    for i in range(k):
        if all(np.linalg.norm(centers[i] - centers[j]) > 1e-6 for j in keep):
            keep.append(i)
    centers = centers[keep]
    return Palette(colors=centers, shortfall=len(centers) < k, requested=k)


def palette_weights(
    img: np.ndarray, palette: Palette, temperature: float = DEFAULT_TEMPERATURE
) -> np.ndarray:
    """Pre-smoothing soft assignments, shape (K, H, W); sums to 1 per pixel.

    w_i proportional to exp(-d_i^2 / temperature^2) over Lab distances to
    each palette color, computed with the max-shifted stable softmax.
    """
    if not (temperature > 0 and np.isfinite(temperature)):
        raise ValueError(f"temperature must be > 0, got {temperature}")
    lab = srgb_to_lab(require_image(img))
    diff = lab[None, ...] - palette.colors[:, None, None, :]
    d2 = np.sum(diff * diff, axis=-1)  # (K, H, W)
    logits = -d2 / (temperature * temperature)
    logits -= logits.max(axis=0, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=0, keepdims=True)


def palette_to_masks(
    img: np.ndarray,
    palette: Palette,
    temperature: float = DEFAULT_TEMPERATURE,
    sigma: float = DEFAULT_MASK_SIGMA,
) -> list[np.ndarray]:
    """Soft region masks, one per palette color, Gaussian-smoothed."""
    weights = palette_weights(img, palette, temperature)
    if sigma > 0:
        kernel = SmoothKernel(sigma=sigma)
        return [smooth_mask(w, kernel) for w in weights]
    return [w for w in weights]
