import math

import numpy as np
import pytest

from gdq.metrics import (
    MetricsBundle,
    bitops,
    count_params,
    effective_params,
    fab,
    format_count,
    format_reduction,
    l1_loss,
    layer_bitops,
    psnr,
    ssim,
)
from gdq.plan import PatchPlan
from gdq.srnet import SrArch, seeded_model


def make_plans(bits):
    return [PatchPlan(patch_id=i, origin=(0, 0), entropy=None, gbc_bit=b, final_bit=b)
            for i, b in enumerate(bits)]


class TestPsnr:
    def test_identical_infinite(self):
        a = np.random.default_rng(0).random((1, 1, 8, 8))
        assert psnr(a, a) == math.inf

    def test_constant_error(self):
        a = np.zeros((4, 4))
        b = np.full((4, 4), 0.1)
        # oracle: 10 * log10(1 / 0.01) = 20
        assert psnr(a, b) == pytest.approx(10 * math.log10(1.0 / 0.01), abs=1e-12)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-12)

    def test_checker_vs_half(self):
        a = np.indices((8, 8)).sum(axis=0) % 2
        b = np.full((8, 8), 0.5)
        # MSE = 0.25 -> 10 * log10(4)
        assert psnr(a.astype(float), b) == pytest.approx(10 * math.log10(4.0), abs=1e-12)
        assert psnr(a.astype(float), b) == pytest.approx(6.0206, abs=1e-4)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((5, 5)), rng.random((5, 5))
        assert psnr(a, b) == psnr(b, a)

    def test_dims_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            psnr(np.zeros((2, 2)), np.zeros((3, 3)))

    def test_peak_scaling(self):
        a, b = np.zeros((4, 4)), np.full((4, 4), 25.5)
        assert psnr(a, b, peak=255.0) == pytest.approx(20.0, abs=1e-12)


class TestSsim:
    def test_identical(self):
        a = np.random.default_rng(2).random((1, 1, 32, 32))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_anticorrelated_binary(self):
        rng = np.random.default_rng(3)
        a = (rng.random((16, 16)) > 0.5).astype(np.float64)
        assert ssim(a, 1.0 - a) <= 0.0

    def test_constant_offset_luminance_only(self):
        # images smaller than the window: single global window; variances are
        # zero so only the luminance term deviates
        a = np.full((8, 8), 0.25)
        b = np.full((8, 8), 0.75)
        c1 = (0.01) ** 2
        expected = (2 * 0.25 * 0.75 + c1) / (0.25**2 + 0.75**2 + c1)
        assert ssim(a, b) == pytest.approx(expected, abs=1e-12)
        assert ssim(a, b) < 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((20, 20)), rng.random((20, 20))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_rgb_input_converted(self):
        rng = np.random.default_rng(5)
        a = rng.random((1, 3, 16, 16))
        from gdq.image_io import to_luma

        assert ssim(a, a.copy()) == pytest.approx(1.0)
        assert ssim(a, a * 0.5) == pytest.approx(ssim(to_luma(a), to_luma(a) * 0.5), abs=1e-12)

    def test_bounded_above_by_one(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            a, b = rng.random((16, 16)), rng.random((16, 16))
            assert ssim(a, b) <= 1.0


class TestL1:
    def test_zero_on_equal(self):
        a = np.random.default_rng(7).random((3, 3))
        assert l1_loss(a, a) == 0.0

    def test_constant_difference(self):
        assert l1_loss(np.zeros((5, 5)), np.full((5, 5), 0.2)) == pytest.approx(0.2, abs=1e-15)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(8)
        a, b = rng.random(40), rng.random(40)
        oracle = sum(abs(x - y) for x, y in zip(a, b)) / 40
        assert l1_loss(a, b) == pytest.approx(oracle, abs=1e-9)


class TestFab:
    def test_mixed_plan(self):
        assert fab(make_plans([4, 4, 8])) == pytest.approx(16 / 3, abs=1e-12)

    def test_all_four(self):
        assert fab(make_plans([4] * 10)) == 4.00

    def test_singleton(self):
        assert fab(make_plans([6])) == 6.0

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="empty"):
            fab([])

    def test_concatenation_weighted_mean(self):
        a, b = make_plans([4, 8]), make_plans([6, 6, 6])
        combined = fab(a + b)
        expected = (2 * fab(a) + 3 * fab(b)) / 5
        assert combined == pytest.approx(expected, abs=1e-12)


class TestBitops:
    MODEL = seeded_model(0, SrArch(scale=2), calib_patches=2, calib_hw=(16, 16))

    def test_all_32_ratio_one(self):
        res = bitops(self.MODEL, make_plans([32]), (16, 16))
        assert res.ratio == 1.0

    def test_single_conv_ratio_exact(self):
        macs = 16 * 16 * 8 * 8 * 9
        assert layer_bitops(macs, 8, 8) / layer_bitops(macs, 32, 32) == 1 / 16

    def test_matches_spreadsheet_oracle(self):
        # independent enumeration of the layer MACs from the architecture
        arch = self.MODEL.arch
        h = w = 16
        f, c, s = arch.features, arch.in_channels, arch.scale
        head = h * w * f * c * 9
        body = h * w * f * f * 9
        tail = h * w * (c * s * s) * f * 9
        plans = make_plans([4, 4, 8])
        expected = []
        for bit in [4, 4, 8]:
            expected.append(head * 32 * 32 + 2 * arch.blocks * body * bit * 8 + tail * 32 * 32)
        res = bitops(self.MODEL, plans, (16, 16))
        assert res.per_patch_mean == pytest.approx(np.mean(expected), rel=1e-12)
        assert res.total == pytest.approx(np.sum(expected), rel=1e-12)
        baseline = (head + 2 * arch.blocks * body + tail) * 32 * 32
        assert res.ratio == pytest.approx(np.mean(expected) / baseline, rel=1e-12)

    def test_monotone_in_bits(self):
        values = [bitops(self.MODEL, make_plans([b]), (16, 16)).per_patch_mean
                  for b in (4, 5, 6, 8)]
        assert values == sorted(values)

    def test_ratio_bounds(self):
        res = bitops(self.MODEL, make_plans([4, 5, 8]), (16, 16))
        assert res.ratio <= 1.0
        assert res.ratio >= (4 * 8) / (32 * 32) * 0.0  # strictly positive
        assert res.ratio > 0.0

    def test_empty_plans_raise(self):
        with pytest.raises(ValueError, match="empty"):
            bitops(self.MODEL, [], (16, 16))


class TestParams:
    MODEL = seeded_model(1, SrArch(scale=2), calib_patches=2, calib_hw=(16, 16))

    def test_count_matches_enumeration(self):
        expected = sum(w.size for w in self.MODEL.weights.values())
        assert count_params(self.MODEL) == expected

    def test_effective_below_count(self):
        eff = effective_params(self.MODEL)
        assert 0 < eff < count_params(self.MODEL)
        # body weights at 8/32, everything else full
        body = sum(
            self.MODEL.weights[f"block{i}.conv{j}.weight"].size
            for i in range(self.MODEL.arch.blocks) for j in (1, 2)
        )
        full = count_params(self.MODEL) - body
        assert eff == pytest.approx(full + body * 0.25, rel=1e-12)


class TestFormatting:
    def test_count_suffixes(self):
        assert format_count(527.0e12) == "527.0T"
        assert format_count(82.6e12) == "82.6T"
        assert format_count(1518e3) == "1.5M"
        assert format_count(486e3) == "486.0K"
        assert format_count(12.0) == "12.0"

    def test_reduction_formatting(self):
        assert format_reduction(527.0e12, 527.0e12) == "527.0T (0.0%)"
        out = format_reduction(73.6e12, 527.0e12)
        assert out == "73.6T (↓ 86.0%)"

    def test_bundle_report_dict_schema(self):
        bundle = MetricsBundle(fab=4.5, bitops=1e9, bitops_ratio=0.2,
                               params=1000, params_ratio=0.4, psnr_db=math.inf)
        d = bundle.to_report_dict(make_plans([4, 5]))
        assert set(d) == {"psnr_db", "ssim", "l1", "fab", "bitops", "bitops_ratio",
                          "params", "params_ratio", "per_patch"}
        assert d["psnr_db"] == "inf"
        assert len(d["per_patch"]) == 2
        assert set(d["per_patch"][0]) == {"id", "origin", "entropy", "gbc_bit",
                                          "final_bit", "p"}
