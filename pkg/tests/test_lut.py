import numpy as np
import pytest

from conftest import rand_image
from rsf.color import delta_e_ab
from rsf.filters import FilterArg, FilterConstants, FilterKind
from rsf.lut import (
    Lut3D,
    LutError,
    apply_lut,
    bake,
    global_filter_args,
    read_cube,
    write_cube,
)
from rsf.recipe import Layer, Recipe
from rsf.render import render

GLOBAL_BAKEABLE = [
    FilterArg(FilterKind.HIGHLIGHTS, 0.2),
    FilterArg(FilterKind.SHIFT_R, 0.1),
    FilterArg(FilterKind.HUE, 0.15),
    FilterArg(FilterKind.TEMPERATURE, -0.2),
    FilterArg(FilterKind.SHADOWS, 0.1),
    FilterArg(FilterKind.MIDTONES, -0.25),
]


def recipe_for(args):
    """All-ones-mask recipe rendering the same global edit as a bake."""
    h = w = 8
    shift = [a for a in args if a.kind.is_shift]
    rest = [a for a in args if not a.kind.is_shift]
    layers = []
    if rest:
        layers.append(Layer(args=rest, mask=np.ones((h, w))))
    if shift:
        layers.append(Layer(args=shift, mask=None))
    return Recipe(layers=layers)


class TestBake:
    def test_empty_is_identity_lattice(self):
        lut = bake([], size=9)
        assert np.array_equal(lut.table, Lut3D.identity(9).table)

    def test_shift_r_moves_only_red(self):
        lut = bake([FilterArg(FilterKind.SHIFT_R, 0.1)], size=5)
        ident = Lut3D.identity(5)
        assert np.allclose(lut.table[..., 0], np.clip(ident.table[..., 0] + 0.1, 0, 1))
        assert np.array_equal(lut.table[..., 1:], ident.table[..., 1:])

    def test_contrast_uses_frozen_mean(self):
        lut = bake([FilterArg(FilterKind.CONTRAST, 0.5)], size=5, ref_mean=0.25)
        ident = Lut3D.identity(5).table
        want = np.clip(ident + 0.5 * (ident - 0.25), 0, 1)
        assert np.allclose(lut.table, want)

    def test_monotone_filters_give_monotone_lattice(self):
        lut = bake([FilterArg(FilterKind.HIGHLIGHTS, 0.3)], size=9)
        along_r = np.diff(lut.table[..., 0], axis=0)
        assert np.all(along_r >= -1e-12)

    def test_bad_ref_mean_rejected(self):
        with pytest.raises(LutError):
            bake([], ref_mean=1.5)

    def test_unknown_lum_mode_rejected(self):
        with pytest.raises(LutError):
            bake([], lum_mode="gamma")


class TestApply:
    def test_identity_lattice_is_identity(self):
        img = rand_image(8, 8, seed=0, lo=0.0, hi=1.0)
        out = apply_lut(Lut3D.identity(17), img)
        assert np.abs(out - img).max() < 1e-6

    def test_lattice_points_map_exactly(self):
        # with S=33 the spacing 1/32 is a dyadic rational: positions are exact
        lut = bake(GLOBAL_BAKEABLE, size=33)
        idx = np.array([0, 8, 16, 32])
        img = np.stack(np.meshgrid(idx, idx, idx, indexing="ij"), axis=-1)
        img = (img.reshape(-1, 4, 3) / 32.0).astype(np.float64)
        out = apply_lut(lut, img)
        flat_idx = (img * 32).astype(int)
        want = lut.table[flat_idx[..., 0], flat_idx[..., 1], flat_idx[..., 2]]
        assert np.array_equal(out, want)

    @pytest.mark.parametrize("seed", range(3))
    def test_agreement_with_direct_render(self, seed):
        img = rand_image(16, 16, seed=seed, lo=0.0, hi=1.0)
        lut = bake(GLOBAL_BAKEABLE, size=33)
        via_lut = apply_lut(lut, img)
        direct = render(img, recipe_for(GLOBAL_BAKEABLE))
        assert np.abs(via_lut[..., :] - direct).max() <= 0.01
        assert delta_e_ab(via_lut, direct) <= 1.0

    def test_saturation_bakes_via_own_luminance(self):
        args = [FilterArg(FilterKind.SATURATION, 0.4)]
        img = rand_image(8, 8, seed=5, lo=0.0, hi=1.0)
        via_lut = apply_lut(bake(args, size=33), img)
        direct = render(img, recipe_for(args))
        assert np.abs(via_lut - direct).max() <= 0.02  # Lab L is curved between nodes


class TestGlobalArgs:
    def test_accepts_global_and_all_ones_layers(self):
        recipe = recipe_for(GLOBAL_BAKEABLE)
        args = global_filter_args(recipe)
        assert {a.kind for a in args} == {a.kind for a in GLOBAL_BAKEABLE}

    def test_rejects_mask_bound_layer(self):
        mask = np.zeros((4, 4))
        mask[:2] = 1.0
        recipe = Recipe(
            layers=[Layer(args=[FilterArg(FilterKind.HUE, 0.1)], mask=mask)]
        )
        with pytest.raises(LutError, match="mask-bound"):
            global_filter_args(recipe)


class TestCubeFormat:
    def test_round_trip(self, tmp_path):
        lut = bake(GLOBAL_BAKEABLE, size=9)
        path = tmp_path / "test.cube"
        write_cube(lut, path)
        back = read_cube(path)
        assert back.size == 9
        assert np.abs(back.table - lut.table).max() <= 5e-7  # six decimals

    def test_header_layout(self, tmp_path):
        path = tmp_path / "id.cube"
        write_cube(Lut3D.identity(3), path, title="identity")
        lines = path.read_text().splitlines()
        assert lines[0] == 'TITLE "identity"'
        assert lines[1] == "LUT_3D_SIZE 3"
        assert lines[2] == "DOMAIN_MIN 0.0 0.0 0.0"
        assert lines[3] == "DOMAIN_MAX 1.0 1.0 1.0"
        assert len(lines) == 4 + 27

    def test_r_fastest_varying(self, tmp_path):
        path = tmp_path / "id.cube"
        write_cube(Lut3D.identity(3), path)
        rows = [l.split() for l in path.read_text().splitlines()[4:]]
        rs = [float(r[0]) for r in rows[:3]]
        assert rs == [0.0, 0.5, 1.0]  # R sweeps first
        assert float(rows[0][2]) == 0.0 and float(rows[-1][2]) == 1.0

    def test_entry_count_checked(self, tmp_path):
        path = tmp_path / "broken.cube"
        path.write_text("LUT_3D_SIZE 3\n0 0 0\n")
        with pytest.raises(LutError, match="entries"):
            read_cube(path)

    def test_missing_size_checked(self, tmp_path):
        path = tmp_path / "broken.cube"
        path.write_text("0 0 0\n")
        with pytest.raises(LutError, match="LUT_3D_SIZE"):
            read_cube(path)
