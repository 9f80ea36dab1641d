"""Reference SR network with per-patch activation bit-widths and 8-bit weights.

A small EDSR-style body (head conv, residual blocks, tail conv + pixel
shuffle, bicubic global skip) stands in for the large backbones the same
quantization mechanics would wrap. Only the body convs are quantized; within
one patch every quantized layer shares a single activation bit-width, which
an instrumentation trace can assert. Bit 32 bypasses quantization entirely.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .container import load_container, save_container
from .convops import bicubic_upscale, conv2d, depth_to_space, relu
from .e2b import CalibratedThresholds, E2BConfig, refine_plan
from .entropy import EntropyConfig, patch_entropy
from .gbc import GbcModel, allocate_bits
from .parallel import parallel_map
from .patches import extract_patches, stitch_patches
from .plan import PatchPlan
from .quantizer import QuantParams, calibrate_clip, quantize_activation, quantize_weights

SUPPORTED_BITS = (2, 3, 4, 5, 6, 7, 8, 32)
BYPASS_BIT = 32


@dataclass(frozen=True)
class SrArch:
    """Architecture descriptor: channel widths, block count, upscale factor."""

    in_channels: int = 3
    features: int = 16
    blocks: int = 4
    scale: int = 2

    def __post_init__(self):
        if self.scale not in (1, 2, 4):
            raise ValueError(f"scale must be 1, 2 or 4, got {self.scale}")
        if self.blocks < 1 or self.features < 1:
            raise ValueError("need at least one block and one feature channel")

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "features": self.features,
            "blocks": self.blocks,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SrArch":
        return cls(
            in_channels=int(d["in_channels"]),
            features=int(d["features"]),
            blocks=int(d["blocks"]),
            scale=int(d["scale"]),
        )


def _layer_shapes(arch: SrArch) -> dict[str, tuple]:
    f, c, s = arch.features, arch.in_channels, arch.scale
    shapes = {"head.weight": (f, c, 3, 3), "head.bias": (f,)}
    for i in range(arch.blocks):
        shapes[f"block{i}.conv1.weight"] = (f, f, 3, 3)
        shapes[f"block{i}.conv1.bias"] = (f,)
        shapes[f"block{i}.conv2.weight"] = (f, f, 3, 3)
        shapes[f"block{i}.conv2.bias"] = (f,)
    shapes["tail.weight"] = (c * s * s, f, 3, 3)
    shapes["tail.bias"] = (c * s * s,)
    return shapes


@dataclass
class QuantModel:
    """SR network weights plus per-layer quantization parameters."""

    arch: SrArch
    weights: dict[str, np.ndarray]
    act_qps: dict[str, QuantParams] = field(default_factory=dict)
    weight_bit: int = 8
    _wq_cache: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def quantized_weight(self, name: str) -> np.ndarray:
        if name not in self._wq_cache:
            self._wq_cache[name], _ = quantize_weights(self.weights[name], self.weight_bit)
        return self._wq_cache[name]

    def quant_point_names(self) -> list[str]:
        """Activation quantization points, one per body conv, in forward order."""
        names = []
        for i in range(self.arch.blocks):
            names.append(f"block{i}.conv1")
            names.append(f"block{i}.conv2")
        return names

    def conv_specs(self, patch_hw: tuple[int, int]) -> list[tuple[str, int, bool]]:
        """(name, MACs, quantized?) per conv for a patch of the given spatial dims.

        All convs are stride-1 same-size, so MACs = H*W*C_out*C_in*k^2.
        """
        h, w = patch_hw
        f, c, s = self.arch.features, self.arch.in_channels, self.arch.scale
        specs = [("head", h * w * f * c * 9, False)]
        for i in range(self.arch.blocks):
            specs.append((f"block{i}.conv1", h * w * f * f * 9, True))
            specs.append((f"block{i}.conv2", h * w * f * f * 9, True))
        specs.append(("tail", h * w * (c * s * s) * f * 9, False))
        return specs


def forward_quantized(
    model: QuantModel,
    patch: np.ndarray,
    bit: int,
    trace: list | None = None,
    capture: dict | None = None,
) -> np.ndarray:
    """Run the network on a patch with every quantized layer at width ``bit``.

    ``trace``, when given, collects (layer_name, bit) for each quantized
    activation - the layer-invariance instrumentation hook. ``capture``
    collects the float tensors feeding each quantization point (used by clip
    calibration). Output is the upscaled patch clamped to [0, 1], float64.
    """
    if bit not in SUPPORTED_BITS:
        raise ValueError(f"unsupported bit width {bit}; expected one of {SUPPORTED_BITS}")
    x = np.asarray(patch, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != model.arch.in_channels:
        raise ValueError(
            f"patch shape {x.shape} does not match model input channels "
            f"{model.arch.in_channels}"
        )
    bypass = bit == BYPASS_BIT

    def q(name: str, tensor: np.ndarray) -> np.ndarray:
        if capture is not None:
            capture[name] = tensor
        if bypass:
            return tensor
        qp = model.act_qps.get(name)
        if qp is None:
            raise ValueError(f"no activation quantization parameters for layer {name!r}")
        if trace is not None:
            trace.append((name, bit))
        return quantize_activation(tensor, qp.with_bit(bit))

    def wq(name: str) -> np.ndarray:
        return model.weights[name] if bypass else model.quantized_weight(name)

    skip = bicubic_upscale(x, model.arch.scale)
    h = conv2d(x, model.weights["head.weight"], model.weights["head.bias"],
               pad=1, pad_mode="reflect")
    for i in range(model.arch.blocks):
        block_in = h
        y = conv2d(q(f"block{i}.conv1", block_in), wq(f"block{i}.conv1.weight"),
                   model.weights[f"block{i}.conv1.bias"], pad=1, pad_mode="reflect")
        y = relu(y)
        y = conv2d(q(f"block{i}.conv2", y), wq(f"block{i}.conv2.weight"),
                   model.weights[f"block{i}.conv2.bias"], pad=1, pad_mode="reflect")
        h = block_in + y
    tail = conv2d(h, model.weights["tail.weight"], model.weights["tail.bias"],
                  pad=1, pad_mode="reflect")
    out = depth_to_space(tail, model.arch.scale) + skip
    return np.clip(out, 0.0, 1.0)


def forward_float(model: QuantModel, patch: np.ndarray) -> np.ndarray:
    """Full-precision reference forward (quantization bypass)."""
    return forward_quantized(model, patch, BYPASS_BIT)


def calibrate_activations(model: QuantModel, patches: list[np.ndarray]) -> None:
    """Set every activation clip bound from a float pass over the given patches.

    Static max-abs calibration over the stacked batch: block inputs are
    signed, post-ReLU tensors unsigned.
    """
    batch = np.concatenate([np.asarray(p, dtype=np.float64) for p in patches], axis=0)
    capture: dict[str, np.ndarray] = {}
    forward_quantized(model, batch, BYPASS_BIT, capture=capture)
    for name in model.quant_point_names():
        signed = name.endswith("conv1")
        qp = model.act_qps.get(name, QuantParams(signed=signed))
        model.act_qps[name] = calibrate_clip(qp, capture[name])


RES_SCALE = 0.1


def seeded_model(
    seed: int = 0,
    arch: SrArch = SrArch(),
    calib_patches: int = 8,
    calib_hw: tuple[int, int] = (24, 24),
) -> QuantModel:
    """Randomly initialized, clip-calibrated reference model (no training here).

    Block outputs and the tail are damped so the network behaves like a
    trained SR model: a small learned correction on top of the bicubic skip
    rather than a saturating random field.
    """
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in _layer_shapes(arch).items():
        if name.endswith(".bias"):
            weights[name] = np.zeros(shape, dtype=np.float32)
            continue
        fan_in = int(np.prod(shape[1:]))
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
        if name.endswith("conv2.weight") or name == "tail.weight":
            w *= RES_SCALE
        weights[name] = w.astype(np.float32)
    model = QuantModel(arch=arch, weights=weights)
    calib = [rng.random((1, arch.in_channels, *calib_hw)) for _ in range(calib_patches)]
    calibrate_activations(model, calib)
    return model


def save_model(path, model: QuantModel) -> None:
    meta = {
        "arch": model.arch.to_dict(),
        "weight_bit": model.weight_bit,
        "act_quant": {name: qp.to_dict() for name, qp in model.act_qps.items()},
    }
    save_container(path, "srnet", meta, model.weights)


def load_model(path) -> QuantModel:
    """Load and shape-check a model container; errors name the offending tensor."""
    kind, meta, tensors = load_container(path)
    if kind != "srnet":
        raise ValueError(f"{path}: container holds {kind!r}, not an SR network")
    arch = SrArch.from_dict(meta["arch"])
    expected = _layer_shapes(arch)
    for name, shape in expected.items():
        if name not in tensors:
            raise ValueError(f"{path}: missing tensor {name!r}")
        if tensors[name].shape != shape:
            raise ValueError(
                f"{path}: tensor {name!r} has shape {tensors[name].shape}, expected {shape}"
            )
    act_qps = {
        name: QuantParams.from_dict(d) for name, d in meta.get("act_quant", {}).items()
    }
    return QuantModel(
        arch=arch,
        weights={name: tensors[name] for name in expected},
        act_qps=act_qps,
        weight_bit=int(meta.get("weight_bit", 8)),
    )


def _crop_to_multiple(patch: np.ndarray, multiple: int) -> np.ndarray:
    h, w = patch.shape[2], patch.shape[3]
    hc, wc = (h // multiple) * multiple, (w // multiple) * multiple
    if hc == 0 or wc == 0:
        raise ValueError(
            f"patch ({h}, {w}) too small for the controller (needs >= {multiple} per side)"
        )
    if (hc, wc) == (h, w):
        return patch
    return patch[:, :, :hc, :wc]


def run_pipeline(
    model: QuantModel,
    gbc_model: GbcModel | None,
    thresholds: CalibratedThresholds | None,
    image: np.ndarray,
    e2b_cfg: E2BConfig = E2BConfig(),
    entropy_cfg: EntropyConfig = EntropyConfig(),
    patch_size: int = 96,
    overlap: int = 0,
    deterministic: bool = True,
    seed: int = 0,
    force_bit: int | None = None,
) -> tuple[np.ndarray, list[PatchPlan], metrics.MetricsBundle]:
    """Tile, allocate bits, refine, run the quantized forwards, and stitch.

    With ``force_bit`` the controller and refinement are bypassed and every
    patch runs at the given uniform bit (the fixed-precision baseline).
    Returns the SR image (float32), the per-patch plans, and a metrics bundle.
    """
    start = time.perf_counter()
    grid, tiles = extract_patches(image, patch_size, overlap)
    origins = list(grid.origins)
    if force_bit is not None:
        plans = [
            PatchPlan(patch_id=i, origin=origins[i], entropy=None,
                      gbc_bit=force_bit, final_bit=force_bit)
            for i in range(len(tiles))
        ]
    else:
        if gbc_model is None or thresholds is None:
            raise ValueError("run_pipeline needs a controller and thresholds unless force_bit is set")
        ctrl_tiles = [_crop_to_multiple(t, gbc_model.spatial_multiple) for t in tiles]
        plans = allocate_bits(ctrl_tiles, gbc_model, deterministic=deterministic,
                              seed=seed, origins=origins)
        entropies = parallel_map(lambda t: patch_entropy(t, entropy_cfg), tiles)
        for plan, h in zip(plans, entropies):
            plan.entropy = h
        plans = refine_plan(plans, thresholds, e2b_cfg,
                            gbc_high_bit=max(gbc_model.candidate_bits))

    traces: list[list] = [[] for _ in tiles]

    def _forward(i: int) -> np.ndarray:
        return forward_quantized(model, tiles[i], plans[i].final_bit, trace=traces[i])

    sr_tiles = parallel_map(_forward, range(len(tiles)))
    sr = stitch_patches(grid, sr_tiles, model.arch.scale).astype(np.float32)

    violations = sum(1 for t in traces if len({bit for _, bit in t}) > 1)
    bo = metrics.bitops(model, plans, grid.patch_hw)
    n_params = metrics.count_params(model)
    bundle = metrics.MetricsBundle(
        fab=metrics.fab(plans),
        bitops=bo.per_patch_mean,
        bitops_ratio=bo.ratio,
        params=n_params,
        params_ratio=metrics.effective_params(model) / n_params,
        runtime_s=time.perf_counter() - start,
        layer_bit_violations=violations,
    )
    return sr, plans, bundle
