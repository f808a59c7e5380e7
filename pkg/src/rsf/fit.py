"""Recover a recipe for an (input, target) pair by direct optimization.

The parallel rendering model is linear in every filter argument (per
temperature sign branch), so gradients are exact inner products against
cached unit-increment buffers; free-region masks and smoothing sigmas
backpropagate through the logistic grid, bilinear upsampling, and the
Gaussian kernel's analytic sigma derivative.  The clamp uses a
straight-through rule: gradients pass where the output is interior and
are zeroed where the clamp pins a pixel.

Also here: a closed-form least-squares solver for the L2 loss (the
parallel model is Y = X + sum_i theta_i B_i, so the normal equations
solve it exactly) and a fitter for the sequential compositor used by the
order-comparison harness.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .color import luminance_grad, require_image, require_same_shape
from .filters import (
    SHIFT_KINDS,
    FilterArg,
    FilterConstants,
    FilterKind,
    filter_unit_increment,
    filter_vjp_image,
    image_stats,
    round_robin_kinds,
)
from .metrics import delta_e_ab, psnr, ssim
from .optim import Adam
from .recipe import Layer, Recipe
from .render import render
from .resample import bilinear_resize, bilinear_resize_adjoint
from .smoothing import (
    DEFAULT_KERNEL_SIZE,
    SmoothKernel,
    smooth_mask,
    smooth_mask_adjoint,
    smooth_mask_dsigma,
)

SIGMA_MIN = 0.1
SIGMA_MAX = 25.0


class FitError(RuntimeError):
    """Invalid fit setup or a diverged optimization."""


class FitMode(enum.Enum):
    FIXED_MASKS = "fixed"
    FREE_MASKS = "free"


@dataclass
class FitConfig:
    lr: float = 2e-4
    iterations: int = 2000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    cosine_period: int | None = None  # None: one decay cycle over all iterations
    theta_bound: float = 1.0
    mode: FitMode = FitMode.FIXED_MASKS
    loss: str = "l1"  # "l1" | "l2"
    free_mask_grid: int = 32
    free_mask_count: int = 3
    layer_kinds: list[list[FilterKind]] | None = None  # None: one tied kind per mask
    global_shift: bool = True
    layer_sigmas: list[float] | None = None
    learn_sigma: bool = False
    sigma_init: float = 2.0
    kernel_size: int = DEFAULT_KERNEL_SIZE
    theta_init_scale: float = 0.0
    seed: int = 0
    constants: FilterConstants = field(default_factory=FilterConstants)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise FitError(f"lr must be > 0, got {self.lr}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise FitError("adam betas must lie in (0, 1)")
        if self.iterations < 1:
            raise FitError("iterations must be >= 1")
        if self.free_mask_grid < 2:
            raise FitError("free-mask grid must be >= 2")
        if self.loss not in ("l1", "l2"):
            raise FitError(f"loss must be 'l1' or 'l2', got {self.loss!r}")


@dataclass
class FitReport:
    recipe: Recipe
    loss_history: list[float]
    initial_loss: float
    final_loss: float
    psnr: float
    ssim: float | None
    delta_e: float
    iterations_run: int

    def to_json(self) -> dict:
        return {
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "psnr": self.psnr,
            "ssim": self.ssim,
            "delta_e": self.delta_e,
            "iterations_run": self.iterations_run,
            "loss_history": [float(v) for v in self.loss_history],
        }


# ---------------------------------------------------------------------------
# model structure shared by fit / closed form / sequential fitting


@dataclass
class _LayerSpec:
    kinds: list[FilterKind]
    base_mask: np.ndarray | None  # resized to image raster; None for free masks
    sigma: float


class _Model:
    """Parallel model with cached unit increments per (kind, temp branch)."""

    def __init__(self, x: np.ndarray, specs: list[_LayerSpec], cfg: FitConfig):
        self.x = x
        self.specs = specs
        self.cfg = cfg
        self.mean, self.lum = image_stats(x)
        self._units: dict[tuple[FilterKind, bool], np.ndarray] = {}
        self.global_shift = cfg.global_shift
        self.n_theta = sum(len(s.kinds) for s in specs) + (3 if self.global_shift else 0)

    def unit(self, kind: FilterKind, positive: bool) -> np.ndarray:
        key = (kind, positive if kind is FilterKind.TEMPERATURE else True)
        buf = self._units.get(key)
        if buf is None:
            buf = filter_unit_increment(
                kind, self.x, self.cfg.constants, self.mean, self.lum, key[1]
            )
            self._units[key] = buf
        return buf

    def theta_slices(self) -> list[slice]:
        out, start = [], 0
        for spec in self.specs:
            out.append(slice(start, start + len(spec.kinds)))
            start += len(spec.kinds)
        return out

    def layer_increment(self, spec: _LayerSpec, thetas: np.ndarray) -> np.ndarray:
        inc = np.zeros_like(self.x)
        for kind, theta in zip(spec.kinds, thetas):
            if theta != 0.0:
                inc += theta * self.unit(kind, theta >= 0.0)
        return inc

    def forward(self, theta: np.ndarray, masks: list[np.ndarray | None]) -> tuple:
        total = np.zeros_like(self.x)
        incs = []
        for spec, sl, mask in zip(self.specs, self.theta_slices(), masks):
            inc = self.layer_increment(spec, theta[sl])
            incs.append(inc)
            total += inc if mask is None else inc * mask[..., None]
        if self.global_shift:
            total += theta[-3:]
        pre = self.x + total
        return np.clip(pre, 0.0, 1.0), pre, incs


def _loss_and_residual_grad(y: np.ndarray, target: np.ndarray, loss: str):
    r = y - target
    if loss == "l1":
        return float(np.mean(np.abs(r))), np.sign(r) / r.size
    return float(np.mean(r * r)), 2.0 * r / r.size


def _clamp_gate(pre: np.ndarray) -> np.ndarray:
    return ((pre >= 0.0) & (pre <= 1.0)).astype(np.float64)


def _build_specs(
    masks: list[np.ndarray] | None, cfg: FitConfig, height: int, width: int
) -> list[_LayerSpec]:
    if cfg.mode is FitMode.FREE_MASKS:
        count = cfg.free_mask_count
        base = [None] * count
    else:
        if not masks:
            raise FitError("fixed-mask fitting requires at least one mask")
        count = len(masks)
        base = []
        for m in masks:
            m = np.asarray(m, dtype=np.float64)
            if m.shape != (height, width):
                m = np.clip(bilinear_resize(m, height, width), 0.0, 1.0)
            base.append(m)
    if cfg.layer_kinds is not None:
        if len(cfg.layer_kinds) != count:
            raise FitError(
                f"layer_kinds has {len(cfg.layer_kinds)} entries for {count} layers"
            )
        kinds = [list(ks) for ks in cfg.layer_kinds]
    else:
        kinds = round_robin_kinds(count)
    if cfg.layer_sigmas is not None:
        if len(cfg.layer_sigmas) != count:
            raise FitError(
                f"layer_sigmas has {len(cfg.layer_sigmas)} entries for {count} layers"
            )
        sigmas = list(cfg.layer_sigmas)
    else:
        sigmas = [cfg.sigma_init if cfg.learn_sigma else 0.0] * count
    return [_LayerSpec(k, b, s) for k, b, s in zip(kinds, base, sigmas)]


def _recipe_from_params(
    model: _Model,
    theta: np.ndarray,
    grids: list[np.ndarray] | None,
    sigmas: np.ndarray | None,
    cfg: FitConfig,
) -> Recipe:
    bound = cfg.theta_bound
    layers = []
    for i, (spec, sl) in enumerate(zip(model.specs, model.theta_slices())):
        args = [
            FilterArg(kind, float(np.clip(t, -bound, bound)), bound=bound)
            for kind, t in zip(spec.kinds, theta[sl])
        ]
        mask = expit(grids[i]) if grids is not None else spec.base_mask
        sigma = float(sigmas[i]) if sigmas is not None else spec.sigma
        layers.append(Layer(args=args, mask=mask, sigma=sigma, name=f"mask_{i:02d}"))
    if model.global_shift:
        shift_args = [
            FilterArg(kind, float(np.clip(t, -bound, bound)), bound=bound)
            for kind, t in zip(SHIFT_KINDS, theta[-3:])
        ]
        layers.append(Layer(args=shift_args, mask=None, sigma=0.0))
    return Recipe(layers=layers, constants=cfg.constants)


# ---------------------------------------------------------------------------
# the objective: loss and exact gradients for one parameter state


class ParallelObjective:
    """Loss and analytic gradients of the parallel model for a pair.

    Parameters are a dict: "theta" (always), "grid_i" logit grids in
    free-mask mode, "sigma" when smoothing is learnable.  Exposed so the
    fit loop and the finite-difference checks share one code path.
    """

    def __init__(
        self,
        input_img: np.ndarray,
        target_img: np.ndarray,
        masks: list[np.ndarray] | None,
        cfg: FitConfig,
    ):
        self.cfg = cfg
        self.x = np.clip(require_image(input_img, "input"), 0.0, 1.0)
        self.target = np.clip(require_image(target_img, "target"), 0.0, 1.0)
        require_same_shape(self.x, self.target)
        if cfg.mode is FitMode.FREE_MASKS and masks:
            raise FitError("free-mask fitting conflicts with provided masks")
        self.height, self.width = self.x.shape[:2]
        self.specs = _build_specs(masks, cfg, self.height, self.width)
        self.model = _Model(self.x, self.specs, cfg)
        self.free = cfg.mode is FitMode.FREE_MASKS

    def init_params(self) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(self.cfg.seed)
        params: dict[str, np.ndarray] = {
            "theta": rng.uniform(-1.0, 1.0, self.model.n_theta)
            * self.cfg.theta_init_scale
        }
        if self.free:
            for i in range(len(self.specs)):
                params[f"grid_{i}"] = np.zeros(
                    (self.cfg.free_mask_grid, self.cfg.free_mask_grid)
                )
        if self.cfg.learn_sigma:
            params["sigma"] = np.clip(
                np.array([s.sigma for s in self.specs]), SIGMA_MIN, SIGMA_MAX
            )
        return params

    def project(self, params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        params["theta"] = np.clip(
            params["theta"], -self.cfg.theta_bound, self.cfg.theta_bound
        )
        if "sigma" in params:
            params["sigma"] = np.clip(params["sigma"], SIGMA_MIN, SIGMA_MAX)
        return params

    def _prepared_masks(self, p: dict[str, np.ndarray]):
        sigmas = p.get("sigma")
        pre_masks: list[np.ndarray | None] = []
        ups: list[np.ndarray | None] = []
        for i, spec in enumerate(self.specs):
            if self.free:
                base = bilinear_resize(expit(p[f"grid_{i}"]), self.height, self.width)
            else:
                base = spec.base_mask
            ups.append(base)
            sigma = float(sigmas[i]) if sigmas is not None else spec.sigma
            if sigma > 0:
                base = smooth_mask(base, SmoothKernel(self.cfg.kernel_size, sigma))
            pre_masks.append(base)
        return pre_masks, ups, sigmas

    def loss(self, p: dict[str, np.ndarray]) -> float:
        pre_masks, _, _ = self._prepared_masks(p)
        y, _, _ = self.model.forward(p["theta"], pre_masks)
        return _loss_and_residual_grad(y, self.target, self.cfg.loss)[0]

    def loss_and_grad(
        self, p: dict[str, np.ndarray]
    ) -> tuple[float, dict[str, np.ndarray]]:
        cfg = self.cfg
        pre_masks, ups, sigmas = self._prepared_masks(p)
        y, pre, incs = self.model.forward(p["theta"], pre_masks)
        loss, dy = _loss_and_residual_grad(y, self.target, cfg.loss)
        dy = dy * _clamp_gate(pre)

        grads: dict[str, np.ndarray] = {}
        gtheta = np.zeros_like(p["theta"])
        for spec, sl, mask in zip(self.specs, self.model.theta_slices(), pre_masks):
            weighted = dy if mask is None else dy * mask[..., None]
            for j, kind in enumerate(spec.kinds):
                theta_j = p["theta"][sl][j]
                gtheta[sl.start + j] = float(
                    np.sum(weighted * self.model.unit(kind, theta_j >= 0.0))
                )
        if self.model.global_shift:
            gtheta[-3:] = dy.sum(axis=(0, 1))
        grads["theta"] = gtheta

        if self.free or sigmas is not None:
            if sigmas is not None:
                grads["sigma"] = np.zeros_like(sigmas)
            for i, spec in enumerate(self.specs):
                dmask = np.sum(dy * incs[i], axis=-1)  # dL/d(smoothed mask)
                sigma = float(sigmas[i]) if sigmas is not None else spec.sigma
                kern = SmoothKernel(cfg.kernel_size, sigma) if sigma > 0 else None
                if sigmas is not None and kern is not None:
                    dsig = smooth_mask_dsigma(ups[i], kern)
                    grads["sigma"][i] = float(np.sum(dmask * dsig))
                if self.free:
                    dup = (
                        smooth_mask_adjoint(dmask, kern) if kern is not None else dmask
                    )
                    dgrid = bilinear_resize_adjoint(
                        dup, cfg.free_mask_grid, cfg.free_mask_grid
                    )
                    prob = expit(p[f"grid_{i}"])
                    grads[f"grid_{i}"] = dgrid * prob * (1.0 - prob)
        return loss, grads

    def recipe(self, p: dict[str, np.ndarray]) -> Recipe:
        grids = (
            [p[f"grid_{i}"] for i in range(len(self.specs))] if self.free else None
        )
        return _recipe_from_params(self.model, p["theta"], grids, p.get("sigma"), self.cfg)


# ---------------------------------------------------------------------------
# the main fit loop


def fit(
    input_img: np.ndarray,
    target_img: np.ndarray,
    masks: list[np.ndarray] | None,
    cfg: FitConfig | None = None,
) -> FitReport:
    """Optimize filter arguments (and optionally masks and sigmas) so the
    rendered input matches the target.

    Returns the best-loss parameters seen, so the report's final loss
    never exceeds its initial loss.
    """
    cfg = cfg or FitConfig()
    objective = ParallelObjective(input_img, target_img, masks, cfg)
    params = objective.init_params()

    period = cfg.cosine_period if cfg.cosine_period is not None else cfg.iterations
    opt = Adam(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
               schedule_period=period)

    history: list[float] = []
    best_loss = np.inf
    best = {k: v.copy() for k, v in params.items()}
    for _ in range(cfg.iterations):
        loss, grads = objective.loss_and_grad(params)
        history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best = {k: v.copy() for k, v in params.items()}
        try:
            params = opt.step(params, grads)
        except FloatingPointError as exc:
            raise FitError(f"aborting fit: {exc}") from exc
        params = objective.project(params)

    final_loss = objective.loss(params)
    if final_loss < best_loss:
        best_loss = final_loss
        best = params
    history.append(final_loss)

    recipe = objective.recipe(best)
    out = render(objective.x, recipe)
    can_ssim = min(objective.height, objective.width) >= 11
    return FitReport(
        recipe=recipe,
        loss_history=history,
        initial_loss=history[0],
        final_loss=best_loss,
        psnr=psnr(out, objective.target),
        ssim=ssim(out, objective.target) if can_ssim else None,
        delta_e=delta_e_ab(out, objective.target),
        iterations_run=cfg.iterations,
    )


# ---------------------------------------------------------------------------
# closed-form least squares (L2) on the basis of masked unit increments


def build_basis(
    input_img: np.ndarray,
    masks: list[np.ndarray] | None,
    cfg: FitConfig,
    temp_positive: bool = True,
    split_temperature: bool = False,
) -> tuple[np.ndarray, list[tuple[int, FilterKind]]]:
    """Stack basis vectors B_i = unit increment (*) smoothed mask, flattened.

    Returns (basis matrix of shape (n_params, H*W*3), labels) where each
    label is (layer index, kind); the global shift layer uses index -1.
    With ``split_temperature`` each temperature knob contributes two
    columns, one per sign branch.
    """
    x = np.clip(require_image(input_img, "input"), 0.0, 1.0)
    height, width = x.shape[:2]
    specs = _build_specs(masks, cfg, height, width)
    if any(s.base_mask is None for s in specs):
        raise FitError("closed-form solve requires fixed masks")
    model = _Model(x, specs, cfg)
    rows: list[np.ndarray] = []
    labels: list[tuple[int, FilterKind]] = []
    for i, spec in enumerate(specs):
        mask = spec.base_mask
        if spec.sigma > 0:
            mask = smooth_mask(mask, SmoothKernel(cfg.kernel_size, spec.sigma))
        for kind in spec.kinds:
            branches = (
                [True, False]
                if (kind is FilterKind.TEMPERATURE and split_temperature)
                else [temp_positive if kind is FilterKind.TEMPERATURE else True]
            )
            for b in branches:
                rows.append((model.unit(kind, b) * mask[..., None]).ravel())
                labels.append((i, kind))
    if cfg.global_shift:
        for kind in SHIFT_KINDS:
            rows.append(model.unit(kind, True).ravel())
            labels.append((-1, kind))
    return np.stack(rows), labels


def closed_form_l2(
    input_img: np.ndarray,
    target_img: np.ndarray,
    masks: list[np.ndarray] | None,
    cfg: FitConfig | None = None,
    temp_positive: bool = True,
    ridge: float = 1e-8,
) -> np.ndarray:
    """Solve the L2 problem exactly via ridge-stabilized normal equations.

    The parallel model is linear: clamp-free, Y - X = sum_i theta_i B_i.
    The temperature branch is fixed by ``temp_positive`` (split-sign
    columns are available through build_basis for diagnostics).
    """
    cfg = cfg or FitConfig(loss="l2")
    x = np.clip(require_image(input_img, "input"), 0.0, 1.0)
    t = np.clip(require_image(target_img, "target"), 0.0, 1.0)
    require_same_shape(x, t)
    basis, _ = build_basis(input_img, masks, cfg, temp_positive=temp_positive)
    gram = basis @ basis.T
    gram[np.diag_indices_from(gram)] += ridge
    rhs = basis @ (t - x).ravel()
    try:
        theta = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"degenerate basis: normal equations are singular ({exc})") from exc
    if not np.all(np.isfinite(theta)):
        raise FitError("degenerate basis: non-finite least-squares solution")
    return theta


# ---------------------------------------------------------------------------
# sequential-chain fitting (order-comparison harness)


def sequential_loss_and_grad(
    x: np.ndarray,
    target: np.ndarray,
    stages: list[tuple[FilterKind, np.ndarray | None]],
    theta: np.ndarray,
    constants: FilterConstants,
    loss: str,
) -> tuple[float, np.ndarray]:
    """Loss and d(loss)/d(theta) for a cascade of single-filter stages.

    Each stage re-reads the running image, so the backward pass chains
    the filters' image Jacobians (including the mean and luminance
    couplings) through every later stage.
    """
    ys = [x]
    pres = []
    stats = []
    for (kind, mask), th in zip(stages, theta):
        y = ys[-1]
        mean, lum = image_stats(y)
        stats.append((mean, lum))
        unit = filter_unit_increment(kind, y, constants, mean, lum, th >= 0.0)
        inc = th * unit
        if mask is not None:
            inc = inc * mask[..., None]
        pre = y + inc
        pres.append(pre)
        ys.append(np.clip(pre, 0.0, 1.0))
    loss_val, dy = _loss_and_residual_grad(ys[-1], target, loss)
    gtheta = np.zeros_like(theta)
    for k in range(len(stages) - 1, -1, -1):
        kind, mask = stages[k]
        th = theta[k]
        y = ys[k]
        mean, lum = stats[k]
        dz = dy * _clamp_gate(pres[k])
        masked = dz if mask is None else dz * mask[..., None]
        unit = filter_unit_increment(kind, y, constants, mean, lum, th >= 0.0)
        gtheta[k] = float(np.sum(masked * unit))
        lum_grad = luminance_grad(y) if kind is FilterKind.SATURATION else None
        dy = dz + filter_vjp_image(kind, th, y, constants, masked, lum_grad)
    return loss_val, gtheta


def fit_sequential(
    input_img: np.ndarray,
    target_img: np.ndarray,
    stages: list[tuple[FilterKind, np.ndarray | None]],
    cfg: FitConfig | None = None,
) -> tuple[np.ndarray, list[float]]:
    """Adam-fit the thetas of an ordered single-filter cascade.

    ``stages`` pairs each filter kind with its prepared (image-sized,
    smoothed) mask or None for global.  Returns (best thetas, history).
    """
    cfg = cfg or FitConfig()
    x = np.clip(require_image(input_img, "input"), 0.0, 1.0)
    t = np.clip(require_image(target_img, "target"), 0.0, 1.0)
    require_same_shape(x, t)
    rng = np.random.default_rng(cfg.seed)
    theta = rng.uniform(-1.0, 1.0, len(stages)) * cfg.theta_init_scale
    period = cfg.cosine_period if cfg.cosine_period is not None else cfg.iterations
    opt = Adam(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
               schedule_period=period)
    history: list[float] = []
    best = theta.copy()
    best_loss = np.inf
    for _ in range(cfg.iterations):
        loss, grad = sequential_loss_and_grad(x, t, stages, theta, cfg.constants, cfg.loss)
        history.append(loss)
        if loss < best_loss:
            best_loss, best = loss, theta.copy()
        try:
            theta = opt.step({"theta": theta}, {"theta": grad})["theta"]
        except FloatingPointError as exc:
            raise FitError(f"aborting sequential fit: {exc}") from exc
        theta = np.clip(theta, -cfg.theta_bound, cfg.theta_bound)
    loss, _ = sequential_loss_and_grad(x, t, stages, theta, cfg.constants, cfg.loss)
    history.append(loss)
    if loss < best_loss:
        best_loss, best = loss, theta
    return best, history
