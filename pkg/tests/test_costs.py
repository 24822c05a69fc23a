import numpy as np
import pytest

from detlab import BlockSpec, conv_cost, count_cost, count_macs, forward_block, init_block_weights


class TestClosedForms:
    def test_std_downsample_matches_published_form(self):
        report = count_cost(BlockSpec("std_downsample", 64, 64, 32))
        assert report.macs == 18_874_368
        assert report.params == 18_432
        assert report.macs == report.formula_macs
        assert report.params == report.formula_params

    def test_scd_downsample_matches_published_form(self):
        report = count_cost(BlockSpec("scd_downsample", 64, 64, 32))
        assert report.macs == 8_978_432
        assert report.params == 2_624
        assert report.macs == report.formula_macs
        assert report.params == report.formula_params

    def test_forms_agree_over_a_dim_sweep(self):
        for h in (8, 10, 32, 126):
            for w in (8, 46, 128):
                for c in (8, 13, 64):
                    std = count_cost(BlockSpec("std_downsample", h, w, c))
                    assert std.macs == std.formula_macs == 9 * h * w * c * c // 2
                    assert std.params == std.formula_params == 18 * c * c
                    scd = count_cost(BlockSpec("scd_downsample", h, w, c))
                    assert scd.macs == scd.formula_macs == 2 * h * w * c * c + 9 * h * w * c // 2
                    assert scd.params == scd.formula_params == 2 * c * c + 18 * c

    def test_single_pixel_pointwise(self):
        macs, params = conv_cost(h_out=1, w_out=1, c_out=7, c_in_per_group=5, kernel=1)
        assert macs == 35
        assert params == 35

    def test_other_kinds_have_no_formula(self):
        report = count_cost(BlockSpec("cib", 8, 8, 8))
        assert report.formula_macs is None
        assert report.formula_params is None


class TestHeadCostRatio:
    def test_light_head_is_leaner_by_far(self):
        # single scale, 128 input channels, 80 classes
        standard = count_cost(BlockSpec("cls_head_standard", 16, 16, 128, num_classes=80))
        light = count_cost(BlockSpec("cls_head_light", 16, 16, 128, num_classes=80))
        assert standard.params / light.params > 2
        assert standard.macs > light.macs


ALL_KINDS = [
    ("std_downsample", {}, 8),
    ("scd_downsample", {}, 8),
    ("cls_head_standard", {"num_classes": 5}, 8),
    ("cls_head_light", {"num_classes": 5}, 8),
    ("irb", {}, 6),
    ("irb_dw", {}, 6),
    ("cib", {}, 6),
    ("lk_cib", {}, 6),
    ("psa", {}, 16),
    ("psa", {"n_psa": 2}, 16),
]


class TestInstrumentedSoundness:
    @pytest.mark.parametrize("kind,kw,c", ALL_KINDS)
    def test_symbolic_count_equals_executed_macs(self, rng, kind, kw, c):
        # the forward pass tallies MACs as it executes convs and matmuls;
        # the symbolic model must agree exactly, per sample
        spec = BlockSpec(kind, 8, 8, c, **kw)
        weights = init_block_weights(spec, rng)
        x = rng.standard_normal((1, c, 8, 8))
        with count_macs() as mc:
            forward_block(x, spec, weights)
        assert mc.total == count_cost(spec).macs

    def test_batch_scales_macs_linearly(self, rng):
        spec = BlockSpec("scd_downsample", 8, 8, 4)
        weights = init_block_weights(spec, rng)
        x = rng.standard_normal((3, 4, 8, 8))
        with count_macs() as mc:
            forward_block(x, spec, weights)
        assert mc.total == 3 * count_cost(spec).macs

    def test_param_count_matches_weight_inventory(self, rng):
        from detlab import block_weight_shapes

        for kind, kw, c in ALL_KINDS:
            spec = BlockSpec(kind, 8, 8, c, **kw)
            inventory = 0
            for name, shape in block_weight_shapes(spec).items():
                if name.endswith("_scale") or name.endswith("_shift"):
                    continue  # affine norm params are excluded by convention
                inventory += int(np.prod(shape))
            assert count_cost(spec).params == inventory
