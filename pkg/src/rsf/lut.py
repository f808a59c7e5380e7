"""3-D lookup lattice: bake global filters, apply by trilinear interpolation.

A LUT is pointwise, so only image-independent filters bake exactly.  The
contrast pivot (the image mean) must be frozen to a caller-supplied
reference value; the saturation filter's luminance is computed from each
lattice color itself, which is exact.

Interchange format is the .cube text file: R fastest-varying, domain
[0,1]^3, six fraction digits.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .color import luminance_map, require_image
from .filters import FilterArg, FilterConstants, filter_increment
from .imageio import write_text_atomic
from .recipe import Recipe

DEFAULT_LUT_SIZE = 33


class LutError(ValueError):
    """Invalid lattice, malformed .cube file, or non-global bake input."""


@dataclass
class Lut3D:
    """RGB -> RGB lattice over [0,1]^3; table[r_i, g_i, b_i] holds a triple."""

    size: int
    table: np.ndarray  # (S, S, S, 3)

    def __post_init__(self) -> None:
        if self.size < 2:
            raise LutError(f"lattice side must be >= 2, got {self.size}")
        self.table = np.asarray(self.table, dtype=np.float64)
        expected = (self.size, self.size, self.size, 3)
        if self.table.shape != expected:
            raise LutError(f"table shape {self.table.shape} != {expected}")
        if not np.all(np.isfinite(self.table)):
            raise LutError("table contains non-finite entries")
        if self.table.min() < 0 or self.table.max() > 1:
            raise LutError("table entries must lie in [0, 1]")

    @classmethod
    def identity(cls, size: int = DEFAULT_LUT_SIZE) -> "Lut3D":
        axis = np.linspace(0.0, 1.0, size)
        r, g, b = np.meshgrid(axis, axis, axis, indexing="ij")
        return cls(size=size, table=np.stack([r, g, b], axis=-1))


def _lattice_colors(size: int) -> np.ndarray:
    axis = np.linspace(0.0, 1.0, size)
    r, g, b = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([r, g, b], axis=-1)


def bake(
    filter_args: list[FilterArg],
    constants: FilterConstants | None = None,
    size: int = DEFAULT_LUT_SIZE,
    ref_mean: float = 0.5,
    lum_mode: str = "lab",
) -> Lut3D:
    """Evaluate clamp(X + sum of increments) at every lattice color.

    ``ref_mean`` stands in for the image mean the contrast filter would
    normally see.  ``lum_mode`` picks the luminance for saturation:
    "lab" uses each lattice color's own CIELAB L (exact), "luma" a
    Rec.709-weighted sum of the stored values (cheap approximation).
    """
    constants = constants or FilterConstants()
    if not (0.0 <= ref_mean <= 1.0):
        raise LutError(f"ref_mean must lie in [0, 1], got {ref_mean}")
    colors = _lattice_colors(size).reshape(-1, 1, 3)
    if lum_mode == "lab":
        lum = luminance_map(colors)
    elif lum_mode == "luma":
        lum = colors @ np.array([0.2126, 0.7152, 0.0722])
    else:
        raise LutError(f"unknown lum_mode {lum_mode!r}")
    total = np.zeros_like(colors)
    for arg in filter_args:
        total += filter_increment(arg.kind, arg.theta, colors, constants, ref_mean, lum)
    table = np.clip(colors + total, 0.0, 1.0).reshape(size, size, size, 3)
    return Lut3D(size=size, table=table)


def global_filter_args(recipe: Recipe) -> list[FilterArg]:
    """Collect the bakeable (mask-independent) filter args of a recipe.

    Global layers qualify, as do layers whose mask is constant 1 (their
    smoothing is a no-op on an all-ones mask).  Any layer with a real
    region mask is rejected: a pointwise LUT cannot represent it.
    """
    args: list[FilterArg] = []
    for i, layer in enumerate(recipe.layers):
        if layer.mask is not None and not np.all(layer.mask == 1.0):
            raise LutError(
                f"recipe.layers[{i}]: mask-bound layer cannot be baked into a LUT"
            )
        args.extend(layer.args)
    return args


def apply_lut(lut: Lut3D, img: np.ndarray) -> np.ndarray:
    """Map an image through the lattice with trilinear interpolation."""
    x = np.clip(require_image(img), 0.0, 1.0)
    s = lut.size
    pos = x * (s - 1)
    i0 = np.minimum(pos.astype(np.intp), s - 2)
    f = pos - i0
    r0, g0, b0 = i0[..., 0], i0[..., 1], i0[..., 2]
    fr = f[..., 0:1]
    fg = f[..., 1:2]
    fb = f[..., 2:3]
    t = lut.table

    def corner(dr: int, dg: int, db: int) -> np.ndarray:
        return t[r0 + dr, g0 + dg, b0 + db]

    # nested lerps keep lattice-aligned inputs exact (f == 0 picks c0 bitwise)
    def lerp(c0: np.ndarray, c1: np.ndarray, w: np.ndarray) -> np.ndarray:
        return c0 * (1.0 - w) + c1 * w

    c00 = lerp(corner(0, 0, 0), corner(1, 0, 0), fr)
    c10 = lerp(corner(0, 1, 0), corner(1, 1, 0), fr)
    c01 = lerp(corner(0, 0, 1), corner(1, 0, 1), fr)
    c11 = lerp(corner(0, 1, 1), corner(1, 1, 1), fr)
    c0 = lerp(c00, c10, fg)
    c1 = lerp(c01, c11, fg)
    return lerp(c0, c1, fb)


def write_cube(lut: Lut3D, path: str | os.PathLike, title: str = "rsf bake") -> None:
    """Write the .cube text form: header then S^3 lines, R fastest-varying."""
    lines = [
        f'TITLE "{title}"',
        f"LUT_3D_SIZE {lut.size}",
        "DOMAIN_MIN 0.0 0.0 0.0",
        "DOMAIN_MAX 1.0 1.0 1.0",
    ]
    s = lut.size
    for bi in range(s):
        for gi in range(s):
            for ri in range(s):
                r, g, b = lut.table[ri, gi, bi]
                lines.append(f"{r:.6f} {g:.6f} {b:.6f}")
    write_text_atomic("\n".join(lines) + "\n", path)


def read_cube(path: str | os.PathLike) -> Lut3D:
    """Parse a 3-D .cube file written by write_cube (or compatible)."""
    path = Path(path)
    size = None
    rows: list[tuple[float, float, float]] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        upper = line.upper()
        if upper.startswith("TITLE"):
            continue
        if upper.startswith("LUT_3D_SIZE"):
            try:
                size = int(line.split()[1])
            except (IndexError, ValueError):
                raise LutError(f"{path}:{lineno}: malformed LUT_3D_SIZE")
            continue
        if upper.startswith(("DOMAIN_MIN", "DOMAIN_MAX", "LUT_1D_SIZE")):
            if upper.startswith("LUT_1D_SIZE"):
                raise LutError(f"{path}:{lineno}: 1-D LUTs are not supported")
            continue
        parts = line.split()
        if len(parts) != 3:
            raise LutError(f"{path}:{lineno}: expected three values, got {line!r}")
        try:
            rows.append((float(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError:
            raise LutError(f"{path}:{lineno}: non-numeric entry {line!r}")
    if size is None:
        raise LutError(f"{path}: missing LUT_3D_SIZE")
    if len(rows) != size**3:
        raise LutError(f"{path}: expected {size**3} entries, got {len(rows)}")
    table = np.empty((size, size, size, 3))
    idx = 0
    for bi in range(size):
        for gi in range(size):
            for ri in range(size):
                table[ri, gi, bi] = rows[idx]
                idx += 1
    return Lut3D(size=size, table=table)
