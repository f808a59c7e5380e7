"""Region-specific color filters: white-box retouching as editable recipes.

An edit is a set of soft region masks, one scalar argument per named
filter per region, and a smoothing sigma per mask.  Rendering adds the
masked filter increments of the ORIGINAL image in parallel and clamps
once, which keeps the model linear in its arguments; that linearity is
what makes the fitter and the closed-form oracle exact.
"""

from .color import delta_e_ab, luminance_map, srgb_to_lab
from .filters import FilterArg, FilterConstants, FilterKind, SHIFT_KINDS, TIED_KINDS
from .fit import FitConfig, FitMode, FitReport, closed_form_l2, fit
from .lut import Lut3D, apply_lut, bake, read_cube, write_cube
from .metrics import MetricReport, dice, metric_report, psnr, ssim
from .palette import Palette, extract_palette, palette_to_masks
from .recipe import Layer, Recipe, RecipeError, load_recipe, save_recipe
from .render import render, render_sequential
from .smoothing import SmoothKernel, smooth_mask, smooth_mask_dsigma

__version__ = "0.1.0"

__all__ = [
    "FilterArg",
    "FilterConstants",
    "FilterKind",
    "FitConfig",
    "FitMode",
    "FitReport",
    "Layer",
    "Lut3D",
    "MetricReport",
    "Palette",
    "Recipe",
    "RecipeError",
    "SHIFT_KINDS",
    "SmoothKernel",
    "TIED_KINDS",
    "apply_lut",
    "bake",
    "closed_form_l2",
    "delta_e_ab",
    "dice",
    "extract_palette",
    "fit",
    "load_recipe",
    "luminance_map",
    "metric_report",
    "palette_to_masks",
    "psnr",
    "read_cube",
    "render",
    "render_sequential",
    "save_recipe",
    "smooth_mask",
    "smooth_mask_dsigma",
    "srgb_to_lab",
    "ssim",
    "write_cube",
]
