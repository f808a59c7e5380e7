import numpy as np
import pytest

from conftest import rand_image, smooth_image
from oracles import scripted_lstsq
from rsf.filters import FilterArg, FilterKind, SHIFT_KINDS
from rsf.fit import (
    FitConfig,
    FitError,
    FitMode,
    ParallelObjective,
    build_basis,
    closed_form_l2,
    fit,
    fit_sequential,
    sequential_loss_and_grad,
)
from rsf.metrics import psnr
from rsf.recipe import Layer, Recipe, quantize_mask
from rsf.render import render

RECOVERY_CFG = dict(lr=0.05, iterations=1500)


def make_masks(h, w, n, seed):
    rng = np.random.default_rng(seed)
    return [quantize_mask(rng.random((h, w))) for _ in range(n)]


def synthetic_pair(seed, h=16, w=16, kinds=(FilterKind.HIGHLIGHTS,), thetas=(0.3,),
                   shift=(0.05, -0.04, 0.02), sigmas=None, masks=None, margin=0.02):
    """Input plus a target rendered from a known recipe over random masks.

    All thetas share one common rescale (the model is jointly linear in
    them) chosen so the pre-clamp render stays interior: least-squares
    oracles then see the full linear model.
    """
    img = rand_image(h, w, seed=seed, lo=0.2, hi=0.8)
    if masks is None:
        masks = make_masks(h, w, len(kinds), seed + 1)
    sigmas = sigmas or [0.0] * len(kinds)

    def build(scale):
        layers = [
            Layer(args=[FilterArg(k, t * scale)], mask=m, sigma=s)
            for k, t, m, s in zip(kinds, thetas, masks, sigmas)
        ]
        layers.append(
            Layer(
                args=[FilterArg(k, v * scale) for k, v in zip(SHIFT_KINDS, shift)],
                mask=None,
            )
        )
        return Recipe(layers=layers)

    # pre-clamp delta at unit scale; headroom picks the common factor
    delta = render(img, build(1e-3)) - img  # tiny scale: clamp provably inactive
    delta /= 1e-3
    with np.errstate(divide="ignore"):
        up = np.where(delta > 0, (1.0 - margin - img) / delta, np.inf)
        dn = np.where(delta < 0, (margin - img) / delta, np.inf)
    scale = min(1.0, 0.95 * float(np.minimum(up, dn).min()))
    recipe = build(scale)
    target = render(img, recipe)
    assert 0.0 < target.min() and target.max() < 1.0, "fixture hit the clamp"
    truth = np.array(list(thetas) + list(shift)) * scale
    return img, target, masks, recipe, truth, sigmas


def blob_mask(h, w, cy, cx, radius):
    yy, xx = np.mgrid[0:h, 0:w]
    d2 = (yy - cy) ** 2 + (xx - cx) ** 2
    return quantize_mask(np.exp(-d2 / (2.0 * radius**2)))


class TestFitBasics:
    def test_identity_pair_stays_at_zero(self):
        img = rand_image(12, 12, seed=0)
        masks = make_masks(12, 12, 1, 1)
        cfg = FitConfig(lr=0.05, iterations=200, layer_kinds=[[FilterKind.HIGHLIGHTS]])
        report = fit(img, img, masks, cfg)
        assert np.abs(report.recipe.theta_vector()).max() <= 1e-3
        assert report.final_loss <= 1e-4

    def test_single_filter_round_trip(self):
        img, target, masks, _, truth, _ = synthetic_pair(seed=2)
        cfg = FitConfig(layer_kinds=[[FilterKind.HIGHLIGHTS]], layer_sigmas=[0.0],
                        **RECOVERY_CFG)
        report = fit(img, target, masks, cfg)
        assert np.abs(report.recipe.theta_vector() - truth).max() <= 1e-3
        assert psnr(render(img, report.recipe), target) >= 50.0

    def test_negative_temperature_round_trip(self):
        img, target, masks, _, truth, _ = synthetic_pair(
            seed=3, kinds=(FilterKind.TEMPERATURE,), thetas=(-0.35,)
        )
        cfg = FitConfig(layer_kinds=[[FilterKind.TEMPERATURE]], layer_sigmas=[0.0],
                        **RECOVERY_CFG)
        report = fit(img, target, masks, cfg)
        assert np.abs(report.recipe.theta_vector() - truth).max() <= 1e-3

    def test_final_loss_never_exceeds_initial(self):
        img = rand_image(10, 10, seed=4)
        target = rand_image(10, 10, seed=5)
        masks = make_masks(10, 10, 2, 6)
        report = fit(img, target, masks, FitConfig(lr=0.3, iterations=40))
        assert report.final_loss <= report.initial_loss

    def test_deterministic_given_seed(self):
        img, target, masks, _, _, _ = synthetic_pair(seed=7)
        cfg = FitConfig(lr=0.05, iterations=60, seed=11, theta_init_scale=0.01,
                        layer_kinds=[[FilterKind.HIGHLIGHTS]])
        a = fit(img, target, masks, cfg)
        b = fit(img, target, masks, cfg)
        assert a.loss_history == b.loss_history
        assert np.array_equal(a.recipe.theta_vector(), b.recipe.theta_vector())

    def test_free_masks_with_masks_conflict(self):
        img = rand_image(8, 8, seed=8)
        with pytest.raises(FitError, match="conflict"):
            fit(img, img, make_masks(8, 8, 1, 9), FitConfig(mode=FitMode.FREE_MASKS))

    def test_fixed_masks_requires_masks(self):
        img = rand_image(8, 8, seed=10)
        with pytest.raises(FitError, match="mask"):
            fit(img, img, None, FitConfig())

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError):
            fit(rand_image(8, 8), rand_image(8, 9), make_masks(8, 8, 1, 0), FitConfig())

    def test_l2_loss_mode_converges(self):
        img, target, masks, _, truth, _ = synthetic_pair(seed=12)
        cfg = FitConfig(loss="l2", layer_kinds=[[FilterKind.HIGHLIGHTS]],
                        layer_sigmas=[0.0], **RECOVERY_CFG)
        report = fit(img, target, masks, cfg)
        assert np.abs(report.recipe.theta_vector() - truth).max() <= 1e-3

    def test_free_mask_fit_improves_loss(self):
        # smooth region: a low-res logit grid can represent it
        mask = blob_mask(24, 24, 12, 12, 6.0)
        img, target, _, _, _, _ = synthetic_pair(
            seed=13, h=24, w=24, thetas=(0.35,), masks=[mask]
        )
        cfg = FitConfig(
            lr=0.05, iterations=300, mode=FitMode.FREE_MASKS, free_mask_count=1,
            free_mask_grid=8, layer_kinds=[[FilterKind.HIGHLIGHTS]],
            learn_sigma=False, kernel_size=21,
        )
        report = fit(img, target, None, cfg)
        assert report.final_loss < report.initial_loss * 0.2

    def test_report_metrics_present(self):
        img, target, masks, _, _, _ = synthetic_pair(seed=14)
        report = fit(img, target, masks, FitConfig(
            lr=0.05, iterations=100, layer_kinds=[[FilterKind.HIGHLIGHTS]]))
        assert report.psnr > 0
        assert report.ssim is not None
        assert report.delta_e >= 0
        assert len(report.loss_history) == report.iterations_run + 1


class TestGradients:
    def _fd_check(self, objective, params, keys, h=1e-5, rel=1e-4, samples=6):
        _, grads = objective.loss_and_grad(params)
        rng = np.random.default_rng(0)
        for key in keys:
            flat = params[key].ravel()
            n = flat.size
            idxs = range(n) if n <= samples else rng.choice(n, samples, replace=False)
            for i in idxs:
                up = {k: v.copy() for k, v in params.items()}
                up[key].ravel()[i] += h
                dn = {k: v.copy() for k, v in params.items()}
                dn[key].ravel()[i] -= h
                fd = (objective.loss(up) - objective.loss(dn)) / (2 * h)
                got = grads[key].ravel()[i]
                assert got == pytest.approx(fd, rel=rel, abs=1e-7), (key, i)

    def test_theta_gradients_l1(self):
        img = rand_image(8, 8, seed=20, lo=0.3, hi=0.7)
        target = rand_image(8, 8, seed=21, lo=0.3, hi=0.7)
        masks = make_masks(8, 8, 2, 22)
        cfg = FitConfig(loss="l1", layer_sigmas=[0.0, 1.5])
        objective = ParallelObjective(img, target, masks, cfg)
        params = objective.init_params()
        params["theta"] = np.random.default_rng(23).uniform(-0.3, 0.3, params["theta"].size)
        self._fd_check(objective, params, ["theta"], samples=params["theta"].size)

    def test_theta_gradients_l2(self):
        img = rand_image(8, 8, seed=24, lo=0.3, hi=0.7)
        target = rand_image(8, 8, seed=25, lo=0.3, hi=0.7)
        masks = make_masks(8, 8, 1, 26)
        cfg = FitConfig(loss="l2")
        objective = ParallelObjective(img, target, masks, cfg)
        params = objective.init_params()
        params["theta"] = np.random.default_rng(27).uniform(-0.3, 0.3, params["theta"].size)
        self._fd_check(objective, params, ["theta"], samples=params["theta"].size)

    def test_grid_and_sigma_gradients(self):
        img = rand_image(8, 8, seed=28, lo=0.3, hi=0.7)
        target = rand_image(8, 8, seed=29, lo=0.3, hi=0.7)
        cfg = FitConfig(
            loss="l2", mode=FitMode.FREE_MASKS, free_mask_count=1, free_mask_grid=4,
            learn_sigma=True, sigma_init=1.5, kernel_size=11,
            layer_kinds=[[FilterKind.HIGHLIGHTS, FilterKind.CONTRAST]],
        )
        objective = ParallelObjective(img, target, None, cfg)
        params = objective.init_params()
        rng = np.random.default_rng(30)
        params["theta"] = rng.uniform(-0.3, 0.3, params["theta"].size)
        params["grid_0"] = rng.uniform(-1.0, 1.0, (4, 4))
        self._fd_check(objective, params, ["theta", "grid_0", "sigma"], samples=8)

    def test_sigma_gradient_fixed_masks(self):
        img = rand_image(8, 8, seed=31, lo=0.3, hi=0.7)
        target = rand_image(8, 8, seed=32, lo=0.3, hi=0.7)
        masks = make_masks(8, 8, 1, 33)
        cfg = FitConfig(loss="l1", learn_sigma=True, sigma_init=2.0, kernel_size=11,
                        layer_kinds=[[FilterKind.SHADOWS]])
        objective = ParallelObjective(img, target, masks, cfg)
        params = objective.init_params()
        params["theta"] = np.full(params["theta"].size, 0.2)
        self._fd_check(objective, params, ["sigma"])

    def test_clamp_gate_zeroes_saturated_pixels(self):
        img = np.full((4, 4, 3), 0.9)
        target = np.full((4, 4, 3), 0.2)
        masks = [np.ones((4, 4))]
        cfg = FitConfig(layer_kinds=[[FilterKind.SHIFT_R]], global_shift=False)
        objective = ParallelObjective(img, target, masks, cfg)
        params = {"theta": np.array([0.5])}  # pre-clamp 1.4: fully clamped on R
        _, grads = objective.loss_and_grad(params)
        assert grads["theta"][0] == 0.0


class TestClosedForm:
    def test_identity_target_gives_zero(self):
        img = rand_image(8, 8, seed=40)
        masks = make_masks(8, 8, 2, 41)
        theta = closed_form_l2(img, img, masks, FitConfig(loss="l2"))
        assert np.abs(theta).max() < 1e-9

    def test_single_highlights_exact(self):
        img = rand_image(8, 8, seed=42, lo=0.2, hi=0.7)
        target = np.clip(img + 0.1 * img, 0.0, 1.0)
        cfg = FitConfig(loss="l2", layer_kinds=[[FilterKind.HIGHLIGHTS]],
                        global_shift=False)
        theta = closed_form_l2(img, target, [np.ones((8, 8))], cfg)
        assert theta[0] == pytest.approx(0.1, abs=1e-8)

    def test_three_filter_recipe_matches_scripted_lstsq(self):
        img = rand_image(8, 8, seed=43, lo=0.25, hi=0.75)
        masks = make_masks(8, 8, 3, 44)
        kinds = [[FilterKind.CONTRAST], [FilterKind.SATURATION], [FilterKind.MIDTONES]]
        cfg = FitConfig(loss="l2", layer_kinds=kinds, layer_sigmas=[0.0, 0.0, 0.0])
        target = rand_image(8, 8, seed=45, lo=0.25, hi=0.75)
        theta = closed_form_l2(img, target, masks, cfg, ridge=1e-12)
        basis, _ = build_basis(img, masks, cfg)
        want = scripted_lstsq(basis, (target - img).ravel())
        assert np.abs(theta - want).max() < 1e-8

    def test_residual_orthogonal_to_basis(self):
        img, target, masks, _, _, _ = synthetic_pair(seed=46)
        cfg = FitConfig(loss="l2", layer_kinds=[[FilterKind.HIGHLIGHTS]],
                        layer_sigmas=[0.0])
        theta = closed_form_l2(img, target, masks, cfg)
        basis, _ = build_basis(img, masks, cfg)
        residual = (target - img).ravel() - basis.T @ theta
        assert np.abs(basis @ residual).max() <= 1e-6

    def test_l2_fit_matches_closed_form(self):
        img, target, masks, _, _, _ = synthetic_pair(
            seed=47, kinds=(FilterKind.TEMPERATURE,), thetas=(0.2,),
            shift=(0.01, -0.03, 0.01),
        )
        cfg = FitConfig(loss="l2", layer_kinds=[[FilterKind.TEMPERATURE]],
                        layer_sigmas=[0.0], **RECOVERY_CFG)
        report = fit(img, target, masks, cfg)
        want = closed_form_l2(img, target, masks, cfg, temp_positive=True)
        assert np.abs(report.recipe.theta_vector() - want).max() <= 1e-3

    def test_split_temperature_columns(self):
        img = rand_image(8, 8, seed=48)
        masks = make_masks(8, 8, 1, 49)
        cfg = FitConfig(loss="l2", layer_kinds=[[FilterKind.TEMPERATURE]])
        basis, labels = build_basis(img, masks, cfg, split_temperature=True)
        temp_rows = [i for i, (_, k) in enumerate(labels) if k is FilterKind.TEMPERATURE]
        assert len(temp_rows) == 2


class TestSequentialFit:
    def test_gradient_matches_finite_differences(self):
        img = rand_image(6, 6, seed=50, lo=0.3, hi=0.7)
        target = rand_image(6, 6, seed=51, lo=0.3, hi=0.7)
        rng = np.random.default_rng(52)
        masks = make_masks(6, 6, 2, 53)
        stages = [
            (FilterKind.CONTRAST, masks[0]),
            (FilterKind.SATURATION, masks[1]),
            (FilterKind.MIDTONES, None if False else masks[0]),
            (FilterKind.SHIFT_G, None),
        ]
        theta = rng.uniform(-0.3, 0.3, len(stages))
        from rsf.filters import FilterConstants

        consts = FilterConstants()
        _, grad = sequential_loss_and_grad(img, target, stages, theta, consts, "l2")
        h = 1e-6
        for i in range(len(stages)):
            up, dn = theta.copy(), theta.copy()
            up[i] += h
            dn[i] -= h
            lu, _ = sequential_loss_and_grad(img, target, stages, up, consts, "l2")
            ld, _ = sequential_loss_and_grad(img, target, stages, dn, consts, "l2")
            fd = (lu - ld) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-9)

    def test_single_stage_recovers_theta(self):
        img = rand_image(10, 10, seed=54, lo=0.25, hi=0.75)
        mask = quantize_mask(np.random.default_rng(55).random((10, 10)))
        gen = Layer(args=[FilterArg(FilterKind.HIGHLIGHTS, 0.3)], mask=mask)
        from rsf.render import render_sequential

        target = render_sequential(img, [gen])
        theta, history = fit_sequential(
            img, target, [(FilterKind.HIGHLIGHTS, mask)],
            FitConfig(lr=0.05, iterations=400),
        )
        assert theta[0] == pytest.approx(0.3, abs=1e-3)
        assert history[-1] <= history[0]
