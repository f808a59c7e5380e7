"""Compositing: parallel (sum of masked increments) and sequential (cascade).

The parallel path is the product's rendering model: every filter reads
the ORIGINAL image, increments are weighted by their layer's smoothed
mask and summed, and a single [0, 1] clamp finishes the output.
Intermediate sums stay unclamped so the model remains linear in the
filter arguments.

The sequential path exists for comparison experiments: each stage reads
the running image and clamps, so filter order matters.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .color import require_image
from .filters import FilterConstants, filter_increment, image_stats
from .recipe import Layer, Recipe, RecipeError
from .resample import bilinear_resize
from .smoothing import DEFAULT_KERNEL_SIZE, SmoothKernel, smooth_mask


def prepare_layer_mask(
    layer: Layer,
    height: int,
    width: int,
    kernel_size: int = DEFAULT_KERNEL_SIZE,
) -> np.ndarray | None:
    """Resize a layer's mask to the image raster and apply its smoothing.

    Returns None for global layers (mask identically 1).
    """
    if layer.mask is None:
        return None
    mask = layer.mask
    if mask.shape != (height, width):
        mask = np.clip(bilinear_resize(mask, height, width), 0.0, 1.0)
    if layer.sigma > 0:
        mask = smooth_mask(mask, SmoothKernel(kernel_size, layer.sigma))
    return mask


def _sorted_args(layer: Layer):
    return sorted(layer.args, key=lambda a: (a.kind.order, a.theta))


def _layer_sort_key(layer: Layer) -> tuple:
    """Content-derived key so summation order survives list permutation."""
    args_key = tuple((a.kind.order, a.theta) for a in _sorted_args(layer))
    if layer.mask is None:
        digest = b"global"
    else:
        digest = hashlib.sha1(np.ascontiguousarray(layer.mask).tobytes()).digest()
    return (layer.mask is None, args_key, layer.sigma, digest)


def _layer_contribution(
    layer: Layer,
    prepared_mask: np.ndarray | None,
    img: np.ndarray,
    constants: FilterConstants,
    mean: float,
    lum: np.ndarray,
) -> np.ndarray:
    inc = np.zeros_like(img)
    for arg in _sorted_args(layer):
        inc += filter_increment(arg.kind, arg.theta, img, constants, mean, lum)
    if prepared_mask is not None:
        inc *= prepared_mask[..., None]
    return inc


def render(img: np.ndarray, recipe: Recipe) -> np.ndarray:
    """Apply a recipe: clamp(X + sum of masked increments from X).

    Layer contributions are summed in a canonical content-sorted order,
    so any permutation of recipe.layers renders bit-identically.
    """
    x = np.clip(require_image(img), 0.0, 1.0)
    height, width = x.shape[:2]
    recipe.validate_for(height, width)
    if not recipe.layers:
        return x
    mean, lum = image_stats(x)
    order = sorted(range(len(recipe.layers)), key=lambda i: _layer_sort_key(recipe.layers[i]))
    total = np.zeros_like(x)
    for i in order:
        layer = recipe.layers[i]
        prepared = prepare_layer_mask(layer, height, width)
        total += _layer_contribution(layer, prepared, x, recipe.constants, mean, lum)
    return np.clip(x + total, 0.0, 1.0)


def render_sequential(
    img: np.ndarray,
    ordered_layers: list[Layer],
    constants: FilterConstants | None = None,
) -> np.ndarray:
    """Cascade layers in the given order, re-reading the running image.

    Y_0 = clamp(X); Y_{k+1} = clamp(Y_k + dF(theta_k, Y_k) (*) M_k).
    The image mean and luminance are recomputed at every stage.
    """
    constants = constants or FilterConstants()
    y = np.clip(require_image(img), 0.0, 1.0)
    height, width = y.shape[:2]
    for layer in ordered_layers:
        prepared = prepare_layer_mask(layer, height, width)
        mean, lum = image_stats(y)
        inc = _layer_contribution(layer, prepared, y, constants, mean, lum)
        y = np.clip(y + inc, 0.0, 1.0)
    return y


def check_recipe_renderable(recipe: Recipe, height: int, width: int) -> None:
    """Raise RecipeError if the recipe cannot be applied to this raster."""
    recipe.validate_for(height, width)
    for i, layer in enumerate(recipe.layers):
        if layer.mask is not None and (
            layer.mask.shape[0] < 1 or layer.mask.shape[1] < 1
        ):
            raise RecipeError(f"recipe.layers[{i}].mask: empty mask")
