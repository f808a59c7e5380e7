"""The editable edit: layers of (mask, filter args, smoothing sigma).

A recipe is the whole white-box state of an edit.  On disk it is a JSON
document next to its 8-bit grayscale mask PNGs:

    {
      "version": 1,
      "constants": {"hue_gain": 1.0, "temp_gains": [1, 1, 0.5, 1, 1]},
      "layers": [
        {"mask": "mask_00.png", "sigma": 2.0,
         "filters": [{"kind": "highlights", "theta": 0.2}]},
        {"mask": "global", "sigma": 0.0,
         "filters": [{"kind": "shift_r", "theta": 0.05}]}
      ]
    }

Field names are fixed; unknown fields are rejected so that typos fail
loudly instead of silently dropping an adjustment.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imageio
from .filters import FilterArg, FilterConstants, FilterKind

GLOBAL_MASK = "global"

RECIPE_VERSION = 1


class RecipeError(ValueError):
    """Malformed recipe document or invalid layer state."""


def quantize_mask(mask: np.ndarray) -> np.ndarray:
    """Snap a mask to the 8-bit grid so PNG round-trips are lossless."""
    arr = np.clip(np.asarray(mask, dtype=np.float64), 0.0, 1.0)
    return np.round(arr * 255.0) / 255.0


@dataclass
class Layer:
    """One region: a soft mask (or the whole image) plus its filter knobs."""

    args: list[FilterArg]
    mask: np.ndarray | None = None  # None means global (all-ones, shift only)
    sigma: float = 0.0
    name: str | None = None  # mask file stem used when saving

    def __post_init__(self) -> None:
        if not self.args:
            raise RecipeError("layer must carry at least one filter argument")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise RecipeError(f"layer sigma must be finite and >= 0, got {self.sigma}")
        if self.mask is None:
            bad = [a.kind.value for a in self.args if not a.kind.is_shift]
            if bad:
                raise RecipeError(
                    f"global layers carry only shift filters, got {bad[0]!r}"
                )
        else:
            m = np.asarray(self.mask, dtype=np.float64)
            if m.ndim != 2:
                raise RecipeError(f"mask must be 2-D, got shape {m.shape}")
            if not np.all(np.isfinite(m)):
                raise RecipeError("mask contains non-finite values")
            if m.min() < -1e-9 or m.max() > 1 + 1e-9:
                raise RecipeError("mask values must lie in [0, 1]")
            self.mask = np.clip(m, 0.0, 1.0)

    @property
    def is_global(self) -> bool:
        return self.mask is None


@dataclass
class Recipe:
    """Layers + filter constants; the complete serializable edit."""

    layers: list[Layer] = field(default_factory=list)
    constants: FilterConstants = field(default_factory=FilterConstants)
    canvas: tuple[int, int] | None = None  # (height, width) lock; None = any

    @classmethod
    def identity(cls) -> "Recipe":
        return cls(layers=[])

    def validate_for(self, height: int, width: int) -> None:
        if self.canvas is not None and self.canvas != (height, width):
            raise RecipeError(
                f"recipe canvas {self.canvas} does not match image {(height, width)}"
            )

    def theta_vector(self) -> np.ndarray:
        """All thetas in layer order; the parameter layout the fitter uses."""
        return np.array(
            [arg.theta for layer in self.layers for arg in layer.args], dtype=np.float64
        )


def _expect_fields(obj: dict, allowed: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise RecipeError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise RecipeError(f"{where}.{sorted(unknown)[0]}: unknown field")


def recipe_to_json(recipe: Recipe) -> dict:
    """Serializable document; non-global masks become per-layer file names."""
    layers = []
    for i, layer in enumerate(recipe.layers):
        if layer.is_global:
            mask_ref = GLOBAL_MASK
        else:
            mask_ref = f"{layer.name or f'mask_{i:02d}'}.png"
        layers.append(
            {
                "mask": mask_ref,
                "sigma": float(layer.sigma),
                "filters": [
                    {"kind": a.kind.value, "theta": float(a.theta)} for a in layer.args
                ],
            }
        )
    return {
        "version": RECIPE_VERSION,
        "constants": recipe.constants.to_json(),
        "layers": layers,
    }


def recipe_from_json(
    doc: dict,
    mask_loader=None,
    theta_bound: float = 1.0,
) -> Recipe:
    """Parse a recipe document.

    ``mask_loader`` maps a mask reference (e.g. "mask_00.png") to an
    (H, W) array; defaults to rejecting any non-global reference, which
    suits in-memory documents with no backing files.
    """
    _expect_fields(doc, {"version", "constants", "layers"}, "recipe")
    version = doc.get("version")
    if version != RECIPE_VERSION:
        raise RecipeError(f"recipe.version: expected {RECIPE_VERSION}, got {version!r}")
    try:
        constants = FilterConstants.from_json(doc.get("constants", {}))
    except ValueError as exc:
        raise RecipeError(f"recipe.{exc}") from exc
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list):
        raise RecipeError("recipe.layers: expected a list")
    layers = []
    for i, raw in enumerate(raw_layers):
        where = f"recipe.layers[{i}]"
        _expect_fields(raw, {"mask", "sigma", "filters"}, where)
        mask_ref = raw.get("mask")
        if not isinstance(mask_ref, str):
            raise RecipeError(f"{where}.mask: expected a file name or 'global'")
        sigma = raw.get("sigma", 0.0)
        if not isinstance(sigma, (int, float)) or not np.isfinite(sigma) or sigma < 0:
            raise RecipeError(f"{where}.sigma: must be a finite number >= 0")
        raw_filters = raw.get("filters")
        if not isinstance(raw_filters, list) or not raw_filters:
            raise RecipeError(f"{where}.filters: expected a non-empty list")
        args = []
        for j, f in enumerate(raw_filters):
            fwhere = f"{where}.filters[{j}]"
            _expect_fields(f, {"kind", "theta"}, fwhere)
            try:
                kind = FilterKind(f.get("kind"))
            except ValueError:
                raise RecipeError(f"{fwhere}.kind: unknown filter kind {f.get('kind')!r}")
            theta = f.get("theta")
            if not isinstance(theta, (int, float)) or not np.isfinite(theta):
                raise RecipeError(f"{fwhere}.theta: must be a finite number")
            try:
                args.append(FilterArg(kind, float(theta), bound=theta_bound))
            except ValueError as exc:
                raise RecipeError(f"{fwhere}.theta: {exc}") from exc
        if mask_ref == GLOBAL_MASK:
            mask = None
            name = None
        else:
            if mask_loader is None:
                raise RecipeError(f"{where}.mask: no mask files available for {mask_ref!r}")
            try:
                mask = mask_loader(mask_ref)
            except FileNotFoundError:
                raise RecipeError(f"{where}.mask: mask file not found: {mask_ref!r}")
            name = Path(mask_ref).stem
        try:
            layers.append(Layer(args=args, mask=mask, sigma=float(sigma), name=name))
        except RecipeError as exc:
            raise RecipeError(f"{where}: {exc}") from exc
    return Recipe(layers=layers, constants=constants)


def save_recipe(recipe: Recipe, path: str | os.PathLike) -> None:
    """Write recipe.json plus one grayscale PNG per non-global layer mask."""
    path = Path(path)
    doc = recipe_to_json(recipe)
    for layer, raw in zip(recipe.layers, doc["layers"]):
        if layer.mask is not None:
            imageio.save_mask(quantize_mask(layer.mask), path.parent / raw["mask"])
    imageio.write_text_atomic(json.dumps(doc, indent=2) + "\n", path)


def load_recipe(path: str | os.PathLike, theta_bound: float = 1.0) -> Recipe:
    """Read a recipe document; mask references resolve next to the file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise RecipeError(f"{path}: not valid JSON ({exc})") from exc
    return recipe_from_json(
        doc,
        mask_loader=lambda ref: imageio.load_mask(path.parent / ref),
        theta_bound=theta_bound,
    )
