"""Command-line front door: apply, fit, palette-masks, bake, metrics,
harness, serve.

Exit codes: 0 success, 2 usage errors (unknown flags, missing options),
1 processing errors (bad files, malformed recipes, size mismatches).
Every processing error prints one line naming what was wrong.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import sys
from pathlib import Path

import click

from . import imageio
from .color import ShapeError
from .filters import TIED_KINDS
from .fit import FitConfig, FitError, FitMode, fit
from .imageio import ImageFormatError
from .lut import LutError, bake, global_filter_args, write_cube
from .metrics import metric_report
from .palette import extract_palette, palette_to_masks
from .recipe import RecipeError, load_recipe, quantize_mask, save_recipe
from .render import render

PROCESSING_ERRORS = (
    RecipeError,
    ImageFormatError,
    FitError,
    LutError,
    ShapeError,
    FileNotFoundError,
    ValueError,
)


def _processing_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PROCESSING_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main() -> None:
    """White-box retouching: region-specific color filters."""


@main.command("apply")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--recipe", "recipe_path", required=True, type=click.Path(exists=True))
@click.option("--output", "output_path", required=True, type=click.Path())
@_processing_errors
def apply_cmd(input_path: str, recipe_path: str, output_path: str) -> None:
    """Render an image through a recipe."""
    img = imageio.load_image(input_path)
    recipe = load_recipe(recipe_path)
    imageio.save_image(render(img, recipe), output_path)


@main.command("fit")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--target", "target_path", required=True, type=click.Path(exists=True))
@click.option("--masks", "masks_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--free-masks", "free_masks", type=int, default=None,
              help="Fit K free region masks instead of reading mask files.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--loss", type=click.Choice(["l1", "l2"]), default="l1")
@click.option("--iters", type=int, default=2000)
@click.option("--lr", type=float, default=2e-4)
@click.option("--seed", type=int, default=0)
@click.option("--palette-k", type=int, default=None,
              help="Generate K palette masks from the input when no mask dir is given.")
@click.option("--kinds", type=click.Choice(["auto", "full"]), default="auto",
              help="auto: one tied kind per region (identifiable knobs); "
                   "full: every tied kind on every region (best reconstruction).")
@_processing_errors
def fit_cmd(input_path, target_path, masks_dir, free_masks, out_dir, loss, iters,
            lr, seed, palette_k, kinds) -> None:
    """Recover an editable recipe for an (input, target) pair."""
    if masks_dir and free_masks:
        raise FitError("--masks and --free-masks are mutually exclusive")
    img = imageio.load_image(input_path)
    target = imageio.load_image(target_path)
    masks = None
    mode = FitMode.FIXED_MASKS
    if free_masks:
        mode = FitMode.FREE_MASKS
    elif masks_dir:
        paths = sorted(Path(masks_dir).glob("*.png"))
        if not paths:
            raise FitError(f"--masks {masks_dir}: no .png mask files found")
        masks = [imageio.load_mask(p) for p in paths]
    else:
        k = palette_k or 3
        palette = extract_palette(img, k, seed=seed)
        masks = [quantize_mask(m) for m in palette_to_masks(img, palette)]
    n_layers = free_masks if free_masks else len(masks)
    layer_kinds = [list(TIED_KINDS)] * n_layers if kinds == "full" else None
    cfg = FitConfig(
        lr=lr, iterations=iters, loss=loss, seed=seed, mode=mode,
        free_mask_count=free_masks or 3, learn_sigma=(mode is FitMode.FREE_MASKS),
        layer_kinds=layer_kinds,
    )
    report = fit(img, target, masks, cfg)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_recipe(report.recipe, out / "recipe.json")
    imageio.save_image(render(img, report.recipe), out / "output.png")
    imageio.write_text_atomic(
        json.dumps(report.to_json(), indent=2) + "\n", out / "report.json"
    )
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["iteration", "loss"])
    for i, v in enumerate(report.loss_history):
        writer.writerow([i, f"{v:.10g}"])
    imageio.write_text_atomic(buf.getvalue(), out / "loss_history.csv")
    from .figures import save_loss_curve

    save_loss_curve(report.loss_history, out / "loss_curve.png")
    click.echo(
        f"fit: final_loss={report.final_loss:.6g} psnr={report.psnr:.2f} dB "
        f"-> {out / 'recipe.json'}"
    )


@main.command("palette-masks")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--k", required=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0)
@_processing_errors
def palette_masks_cmd(input_path, k, out_dir, seed) -> None:
    """Extract dominant colors and write one soft mask per color."""
    img = imageio.load_image(input_path)
    palette = extract_palette(img, k, seed=seed)
    masks = palette_to_masks(img, palette)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, mask in enumerate(masks):
        imageio.save_mask(mask, out / f"mask_{i:02d}.png")
    imageio.write_text_atomic(
        json.dumps(palette.to_json(), indent=2) + "\n", out / "palette.json"
    )
    if palette.shortfall:
        click.echo(
            f"warning: only {len(palette)} distinct colors available "
            f"(requested {palette.requested})",
            err=True,
        )
    click.echo(f"palette-masks: wrote {len(masks)} masks to {out}")


@main.command("bake")
@click.option("--recipe", "recipe_path", required=True, type=click.Path(exists=True))
@click.option("--size", type=int, default=33)
@click.option("--ref-mean", type=float, default=0.5)
@click.option("--out", "out_path", required=True, type=click.Path())
@_processing_errors
def bake_cmd(recipe_path, size, ref_mean, out_path) -> None:
    """Compile the global part of a recipe into a .cube 3D-LUT."""
    recipe = load_recipe(recipe_path)
    args = global_filter_args(recipe)
    lut = bake(args, recipe.constants, size=size, ref_mean=ref_mean)
    write_cube(lut, out_path)
    click.echo(f"bake: {len(args)} filters -> {out_path} (size {size})")


@main.command("metrics")
@click.option("--a", "a_path", required=True, type=click.Path(exists=True))
@click.option("--b", "b_path", required=True, type=click.Path(exists=True))
@_processing_errors
def metrics_cmd(a_path, b_path) -> None:
    """Print PSNR / SSIM / mean Lab distance as one JSON line."""
    a = imageio.load_image(a_path)
    b = imageio.load_image(b_path)
    click.echo(metric_report(a, b).to_json_line())


@main.command("harness")
@click.option("--pairs", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--orders", type=int, default=5)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--iters", type=int, default=600)
@click.option("--lr", type=float, default=0.05)
@_processing_errors
def harness_cmd(manifest_path, orders, seed, out_dir, iters, lr) -> None:
    """Compare parallel compositing against random sequential orders."""
    from .harness import run_seq_vs_parallel_harness

    try:
        manifest = json.loads(Path(manifest_path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{manifest_path}: not valid JSON ({exc})")
    if not isinstance(manifest, list) or not manifest:
        raise ValueError(f"{manifest_path}: expected a non-empty list of pairs")
    pairs = []
    for i, entry in enumerate(manifest):
        if not isinstance(entry, dict) or set(entry) != {"input", "target"}:
            raise ValueError(
                f"{manifest_path}[{i}]: expected an object with 'input' and 'target'"
            )
        pairs.append(
            (imageio.load_image(entry["input"]), imageio.load_image(entry["target"]))
        )
    cfg = FitConfig(lr=lr, iterations=iters, seed=seed)
    result = run_seq_vs_parallel_harness(pairs, cfg, n_orders=orders, seed=seed)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["pair", "approach", "run", "psnr", "ssim"])
    writer.writeheader()
    for row in result.to_csv_rows():
        writer.writerow(row)
    imageio.write_text_atomic(buf.getvalue(), out / "harness.csv")
    summary = result.summary()
    imageio.write_text_atomic(
        json.dumps(summary, indent=2) + "\n", out / "summary.json"
    )
    from .figures import save_harness_figure

    save_harness_figure(result, out / "harness.png")
    click.echo(json.dumps(summary))


@main.command("serve")
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option("--root", "root_dir", type=click.Path(file_okay=False), default=None)
@_processing_errors
def serve_cmd(port, host, root_dir) -> None:
    """Run the HTTP preview/editing service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(root=root_dir), host=host, port=port)


if __name__ == "__main__":
    main()
