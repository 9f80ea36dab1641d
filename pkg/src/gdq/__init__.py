"""gdq: patch-wise, layer-invariant dynamic quantization for SR inference."""

from .e2b import (
    CalibratedThresholds,
    E2BConfig,
    assign_bit,
    atc_update,
    calibrate_thresholds,
    refine_plan,
    resolve_thresholds,
)
from .entropy import (
    EntropyConfig,
    EntropyStats,
    build_entropy_stats,
    patch_entropy,
    quantile_index,
)
from .gbc import GateDecision, GbcModel, allocate_bits, sample_gate, seeded_gbc
from .image_io import load_image, save_image, to_luma
from .metrics import MetricsBundle, bitops, fab, l1_loss, psnr, ssim
from .patches import PatchGrid, extract_patches, stitch_patches
from .plan import PatchPlan
from .quantizer import (
    QuantParams,
    calibrate_clip,
    quantize_activation,
    quantize_weights,
    ste_passthrough_jacobian,
)
from .srnet import (
    QuantModel,
    SrArch,
    forward_float,
    forward_quantized,
    load_model,
    run_pipeline,
    save_model,
    seeded_model,
)

__version__ = "0.1.0"
