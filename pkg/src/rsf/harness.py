"""Order-sensitivity experiment: parallel compositing vs sequential cascades.

For each (input, target) pair the harness fits the same filter set two
ways: once with the parallel model (repeated across seeds, which only
perturb the tiny random initialization) and once per random stage order
with the sequential model.  Reporting mean/std PSNR and SSIM per approach
makes the order-dependence of cascades directly measurable.

Structure per pair: palette masks (one region per dominant color), one
tied filter kind per mask assigned round-robin, plus the three global
shift channels.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .filters import SHIFT_KINDS, FilterArg, FilterKind, round_robin_kinds
from .fit import FitConfig, fit, fit_sequential
from .metrics import psnr, ssim
from .palette import extract_palette, palette_to_masks
from .recipe import Layer, quantize_mask
from .render import prepare_layer_mask, render, render_sequential


def worker_count(n_tasks: int) -> int:
    """Worker pool size, capped by the RSF_THREADS environment variable."""
    cap = os.environ.get("RSF_THREADS")
    workers = min(n_tasks, os.cpu_count() or 1)
    if cap is not None:
        try:
            workers = max(1, min(workers, int(cap)))
        except ValueError:
            pass
    return max(1, workers)


def harness_kinds(n_masks: int) -> list[FilterKind]:
    """Round-robin tied-kind assignment: mask i gets the i-th tied kind."""
    return [ks[0] for ks in round_robin_kinds(n_masks)]


def pair_structure(
    input_img: np.ndarray, k_masks: int = 3, palette_seed: int = 0
) -> tuple[list[np.ndarray], list[FilterKind]]:
    """The per-pair model structure: palette region masks plus their kinds.

    Regions are derived from the image alone (fixed palette seed), so the
    harness seed only randomizes stage orders and initializations.
    """
    palette = extract_palette(input_img, k_masks, seed=palette_seed)
    masks = [quantize_mask(m) for m in palette_to_masks(input_img, palette)]
    return masks, harness_kinds(len(masks))


@dataclass
class PairOutcome:
    index: int
    parallel_psnr: list[float]
    parallel_ssim: list[float]
    sequential_psnr: list[float]  # one entry per order
    sequential_ssim: list[float]


@dataclass
class HarnessResult:
    pairs: list[PairOutcome]
    n_orders: int
    n_seeds: int
    orders: list[list[int]] = field(default_factory=list)

    def parallel_psnr_matrix(self) -> np.ndarray:
        return np.array([p.parallel_psnr for p in self.pairs])  # (pairs, seeds)

    def sequential_psnr_matrix(self) -> np.ndarray:
        return np.array([p.sequential_psnr for p in self.pairs])  # (pairs, orders)

    def summary(self) -> dict:
        par_psnr = self.parallel_psnr_matrix()
        seq_psnr = self.sequential_psnr_matrix()
        par_ssim = np.array([p.parallel_ssim for p in self.pairs])
        seq_ssim = np.array([p.sequential_ssim for p in self.pairs])
        # per-run means over pairs, then spread across runs (seeds vs orders)
        par_means = par_psnr.mean(axis=0)
        seq_means = seq_psnr.mean(axis=0)
        return {
            "parallel": {
                "psnr_mean": float(par_psnr.mean()),
                "psnr_std_across_seeds": float(par_means.std()),
                "ssim_mean": float(par_ssim.mean()),
                "ssim_std_across_seeds": float(par_ssim.mean(axis=0).std()),
            },
            "sequential": {
                "psnr_mean": float(seq_psnr.mean()),
                "psnr_mean_per_order": [float(v) for v in seq_means],
                "psnr_std_across_orders": float(seq_means.std()),
                "ssim_mean": float(seq_ssim.mean()),
                "ssim_std_across_orders": float(seq_ssim.mean(axis=0).std()),
            },
        }

    def to_csv_rows(self) -> list[dict]:
        rows = []
        for p in self.pairs:
            for j, (v, s) in enumerate(zip(p.parallel_psnr, p.parallel_ssim)):
                rows.append(
                    {"pair": p.index, "approach": "parallel", "run": j,
                     "psnr": v, "ssim": s}
                )
            for j, (v, s) in enumerate(zip(p.sequential_psnr, p.sequential_ssim)):
                rows.append(
                    {"pair": p.index, "approach": "sequential", "run": j,
                     "psnr": v, "ssim": s}
                )
        return rows


def _fit_one_pair(
    index: int,
    input_img: np.ndarray,
    target_img: np.ndarray,
    cfg: FitConfig,
    orders: list[list[int]],
    n_seeds: int,
    k_masks: int,
    seed: int,
) -> PairOutcome:
    masks, kinds = pair_structure(input_img, k_masks)
    height, width = input_img.shape[:2]

    par_psnr, par_ssim = [], []
    base_cfg = FitConfig(
        lr=cfg.lr, iterations=cfg.iterations, beta1=cfg.beta1, beta2=cfg.beta2,
        eps=cfg.eps, cosine_period=cfg.cosine_period, theta_bound=cfg.theta_bound,
        loss=cfg.loss, layer_kinds=[[k] for k in kinds], global_shift=True,
        layer_sigmas=[0.0] * len(masks), kernel_size=cfg.kernel_size,
        theta_init_scale=max(cfg.theta_init_scale, 0.01), constants=cfg.constants,
    )
    for j in range(n_seeds):
        run_cfg = replace(base_cfg, seed=seed + 101 * j)
        report = fit(input_img, target_img, masks, run_cfg)
        out = render(input_img, report.recipe)
        par_psnr.append(psnr(out, target_img))
        par_ssim.append(ssim(out, target_img))

    # sequential stages: one per mask plus the three shift channels
    stage_layers = [
        Layer(args=[FilterArg(k, 0.0)], mask=m, sigma=0.0)
        for k, m in zip(kinds, masks)
    ] + [Layer(args=[FilterArg(k, 0.0)], mask=None) for k in SHIFT_KINDS]
    prepared = [
        (layer.args[0].kind, prepare_layer_mask(layer, height, width))
        for layer in stage_layers
    ]
    seq_psnr, seq_ssim = [], []
    for j, order in enumerate(orders):
        stages = [prepared[i] for i in order]
        run_cfg = replace(base_cfg, seed=seed + 7 * j)
        theta, _ = fit_sequential(input_img, target_img, stages, run_cfg)
        out = _render_stage_order(input_img, stages, theta, run_cfg)
        seq_psnr.append(psnr(out, target_img))
        seq_ssim.append(ssim(out, target_img))
    return PairOutcome(index, par_psnr, par_ssim, seq_psnr, seq_ssim)


def _render_stage_order(
    input_img: np.ndarray,
    stages: list[tuple[FilterKind, np.ndarray | None]],
    theta: np.ndarray,
    cfg: FitConfig,
) -> np.ndarray:
    layers = []
    for (kind, mask), th in zip(stages, theta):
        layers.append(
            Layer(args=[FilterArg(kind, float(th), bound=cfg.theta_bound)],
                  mask=mask, sigma=0.0)
        )
    return render_sequential(input_img, layers, cfg.constants)


def run_seq_vs_parallel_harness(
    pairs: list[tuple[np.ndarray, np.ndarray]],
    cfg: FitConfig | None = None,
    n_orders: int = 5,
    seed: int = 0,
    n_seeds: int | None = None,
    k_masks: int = 3,
) -> HarnessResult:
    """Fit every pair both ways and collect PSNR/SSIM per run.

    ``n_orders`` random stage permutations are shared by all pairs;
    ``n_seeds`` (default n_orders) parallel refits vary only the seeded
    initialization.
    """
    if not pairs:
        raise ValueError("harness needs at least one (input, target) pair")
    cfg = cfg or FitConfig()
    n_seeds = n_seeds if n_seeds is not None else n_orders
    n_stages = k_masks + len(SHIFT_KINDS)
    rng = np.random.default_rng(seed)
    orders = [list(rng.permutation(n_stages)) for _ in range(n_orders)]

    def job(i: int) -> PairOutcome:
        inp, tgt = pairs[i]
        return _fit_one_pair(i, inp, tgt, cfg, orders, n_seeds, k_masks, seed + 1000 * i)

    workers = worker_count(len(pairs))
    if workers == 1:
        outcomes = [job(i) for i in range(len(pairs))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(job, range(len(pairs))))
    return HarnessResult(pairs=outcomes, n_orders=n_orders, n_seeds=n_seeds, orders=orders)
