"""Reconstruction and efficiency metrics: PSNR, SSIM, L1, FAB, params, BitOPs.

FAB is the mean final bit-width over patches (with layer-invariant bits the
feature-level and patch-level averages coincide). BitOPs weight each conv
MAC by the product of its activation and weight bit-widths; full-precision
layers count 32*32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convops import conv2d
from .image_io import to_luma
from .plan import PatchPlan

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_same_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_dims(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def l1_loss(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute difference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_dims(a, b)
    return float(np.mean(np.abs(a - b)))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax * ax) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def _as_plane(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 4:
        x = to_luma(x)[0, 0]
    elif x.ndim == 3:
        x = x[0]
    return x


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Inputs are luma planes; RGB tensors are converted. Images smaller than
    the window fall back to a single global window.
    """
    pa, pb = _as_plane(a), _as_plane(b)
    _check_same_dims(pa, pb)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    if min(pa.shape) < SSIM_WINDOW:
        mu_a, mu_b = pa.mean(), pb.mean()
        var_a, var_b = pa.var(), pb.var()
        cov = float(np.mean((pa - mu_a) * (pb - mu_b)))
        return float(
            ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
            / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
        )
    win = _gaussian_window()[None, None]
    fa, fb = pa[None, None], pb[None, None]
    mu_a = conv2d(fa, win)
    mu_b = conv2d(fb, win)
    var_a = conv2d(fa * fa, win) - mu_a**2
    var_b = conv2d(fb * fb, win) - mu_b**2
    cov = conv2d(fa * fb, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def fab(plans: list[PatchPlan]) -> float:
    """Feature average bit-width: mean final bit over all patches."""
    if not plans:
        raise ValueError("cannot average bits over an empty plan list")
    return float(np.mean([p.final_bit for p in plans]))


def count_params(model) -> int:
    """Raw scalar count of all weights and biases."""
    return int(sum(w.size for w in model.weights.values()))


def effective_params(model) -> float:
    """Bit-weighted parameter count: quantized-layer weights at weight_bit/32."""
    quantized = {f"{name}.weight" for name, _, q in model.conv_specs((1, 1)) if q}
    total = 0.0
    for name, w in model.weights.items():
        factor = model.weight_bit / 32.0 if name in quantized else 1.0
        total += w.size * factor
    return total


def layer_bitops(macs: int, act_bit: int, weight_bit: int) -> float:
    """Bit-weighted operation count of one layer: MACs * b_act * b_w."""
    return float(macs) * act_bit * weight_bit


@dataclass(frozen=True)
class BitopsResult:
    per_patch_mean: float
    total: float
    baseline_per_patch: float
    ratio: float


def bitops(model, plans: list[PatchPlan], patch_hw: tuple[int, int]) -> BitopsResult:
    """Bit-weighted operation count over a plan list.

    Quantized convs cost MACs * final_bit * weight_bit per patch;
    full-precision convs cost MACs * 32 * 32. Bit 32 plans (bypass) cost the
    full-precision rate everywhere. Reported per patch (mean), in total, and
    as a ratio against the all-32-bit model.
    """
    if not plans:
        raise ValueError("cannot count BitOPs over an empty plan list")
    specs = model.conv_specs(patch_hw)
    baseline = sum(layer_bitops(macs, 32, 32) for _, macs, _ in specs)
    per_patch = []
    for plan in plans:
        act_bit = plan.final_bit
        w_bit = 32 if act_bit == 32 else model.weight_bit
        cost = sum(
            layer_bitops(macs, act_bit, w_bit) if quantized else layer_bitops(macs, 32, 32)
            for _, macs, quantized in specs
        )
        per_patch.append(cost)
    mean = float(np.mean(per_patch))
    return BitopsResult(
        per_patch_mean=mean,
        total=float(np.sum(per_patch)),
        baseline_per_patch=baseline,
        ratio=mean / baseline,
    )


_SUFFIXES = ((1e12, "T"), (1e9, "G"), (1e6, "M"), (1e3, "K"))


def format_count(x: float) -> str:
    """Human-scaled count: 527.0e12 -> '527.0T'."""
    for threshold, suffix in _SUFFIXES:
        if abs(x) >= threshold:
            return f"{x / threshold:.1f}{suffix}"
    return f"{x:.1f}"


def format_reduction(value: float, baseline: float) -> str:
    """Table-style count with reduction vs a baseline: '73.6T (↓ 86.0%)'."""
    if value == baseline:
        return f"{format_count(value)} (0.0%)"
    reduction = 100.0 * (1.0 - value / baseline)
    return f"{format_count(value)} (↓ {reduction:.1f}%)"


@dataclass
class MetricsBundle:
    """Aggregate metrics of one pipeline run.

    ``runtime_s`` and ``layer_bit_violations`` are in-memory diagnostics; the
    persisted report schema excludes them.
    """

    fab: float
    bitops: float
    bitops_ratio: float
    params: int
    params_ratio: float
    psnr_db: float | None = None
    ssim: float | None = None
    l1: float | None = None
    runtime_s: float | None = None
    layer_bit_violations: int = 0

    def to_report_dict(self, plans: list[PatchPlan]) -> dict:
        def _finite(v):
            if v is None:
                return None
            return v if math.isfinite(v) else "inf"

        return {
            "psnr_db": _finite(self.psnr_db),
            "ssim": self.ssim,
            "l1": self.l1,
            "fab": self.fab,
            "bitops": self.bitops,
            "bitops_ratio": self.bitops_ratio,
            "params": self.params,
            "params_ratio": self.params_ratio,
            "per_patch": [p.to_dict() for p in plans],
        }
