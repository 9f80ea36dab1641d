"""Granularity-aware bit controller: per-patch bit selection from multi-scale features.

A small encoder builds a pyramid of feature maps (finest at input resolution,
each level halving the previous), which are group-normalized, pooled to the
coarsest resolution, concatenated and squeezed into a channel statistics
vector. A linear gate maps that vector to one logit per candidate bit-width;
the chosen index comes from a plain argmax (deterministic) or a
Gumbel-perturbed argmax (stochastic), with the softmax score kept as metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import load_container, save_container
from .convops import avg_pool, conv2d, global_avg_pool, group_norm, relu
from .plan import PatchPlan

GUMBEL_U_CLIP = 1e-12


@dataclass
class GbcModel:
    """Controller weights and configuration.

    ``enc_w[k]`` / ``enc_b[k]`` are the 3x3 conv kernel and bias of pyramid
    level k; ``gn_scale`` / ``gn_shift`` the per-level group-norm affine
    parameters; ``gate_w`` the (channels * depth, N) gating matrix over N
    candidate bit-widths.
    """

    depth: int = 4
    channels: int = 16
    in_channels: int = 3
    groups: int = 4
    candidate_bits: tuple[int, ...] = (4, 6, 8)
    tau: float = 1.0
    enc_w: list[np.ndarray] = field(default_factory=list)
    enc_b: list[np.ndarray] = field(default_factory=list)
    gn_scale: list[np.ndarray] = field(default_factory=list)
    gn_shift: list[np.ndarray] = field(default_factory=list)
    gate_w: np.ndarray | None = None
    gate_b: np.ndarray | None = None

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError(f"need at least 2 granularity levels, got {self.depth}")
        if self.channels % self.groups:
            raise ValueError(
                f"channels {self.channels} not divisible by {self.groups} norm groups"
            )
        if len(self.candidate_bits) < 2:
            raise ValueError(f"need >= 2 candidate bits, got {self.candidate_bits}")
        if not self.tau > 0:
            raise ValueError(f"temperature must be > 0, got {self.tau}")
        if self.gate_w is not None:
            want = (self.channels * self.depth, len(self.candidate_bits))
            if self.gate_w.shape != want:
                raise ValueError(f"gate weight shape {self.gate_w.shape}, expected {want}")

    @property
    def n_codes(self) -> int:
        return len(self.candidate_bits)

    @property
    def spatial_multiple(self) -> int:
        """Patch dims must be divisible by this (one halving per extra level)."""
        return 1 << (self.depth - 1)

    def config_dict(self) -> dict:
        return {
            "D": self.depth,
            "C": self.channels,
            "in_channels": self.in_channels,
            "groups": self.groups,
            "N": self.n_codes,
            "bits": list(self.candidate_bits),
            "tau": self.tau,
        }


@dataclass
class GateDecision:
    """Outcome of one gate evaluation: logits, noise, chosen index/score/bit."""

    logits: np.ndarray
    noise: np.ndarray
    theta: int
    score: float
    bit: int


def seeded_gbc(
    seed: int = 0,
    depth: int = 4,
    channels: int = 16,
    in_channels: int = 3,
    groups: int = 4,
    candidate_bits: tuple[int, ...] = (4, 6, 8),
    tau: float = 1.0,
) -> GbcModel:
    """Randomly initialized controller for tests and demos (no training here)."""
    rng = np.random.default_rng(seed)
    model = GbcModel(
        depth=depth,
        channels=channels,
        in_channels=in_channels,
        groups=groups,
        candidate_bits=tuple(candidate_bits),
        tau=tau,
    )
    for level in range(depth):
        cin = in_channels if level == 0 else channels
        std = np.sqrt(2.0 / (cin * 9))
        model.enc_w.append(rng.normal(0.0, std, (channels, cin, 3, 3)).astype(np.float32))
        model.enc_b.append(np.zeros(channels, dtype=np.float32))
        model.gn_scale.append(np.ones(channels, dtype=np.float32))
        model.gn_shift.append(np.zeros(channels, dtype=np.float32))
    n = len(candidate_bits)
    model.gate_w = rng.normal(0.0, 1.0 / np.sqrt(channels * depth), (channels * depth, n)).astype(
        np.float32
    )
    return model


def encode_granularities(patch: np.ndarray, model: GbcModel) -> list[np.ndarray]:
    """Feature pyramid of the patch: level 0 at input resolution, each next level halved."""
    patch = np.asarray(patch, dtype=np.float64)
    h, w = patch.shape[2], patch.shape[3]
    m = model.spatial_multiple
    if h % m or w % m:
        raise ValueError(
            f"patch dims ({h}, {w}) must be divisible by {m} for {model.depth} levels"
        )
    features = []
    x = patch
    for level in range(model.depth):
        if level > 0:
            x = avg_pool(x, 2)
        x = relu(conv2d(x, model.enc_w[level], model.enc_b[level], pad=1, pad_mode="reflect"))
        features.append(x)
    return features


def pool_and_squeeze(features: list[np.ndarray], model: GbcModel) -> np.ndarray:
    """Normalize each level, pool all to the coarsest resolution, squeeze to a vector."""
    pooled = []
    coarsest = features[-1].shape[2:]
    for level, z in enumerate(features):
        z = group_norm(z, model.groups, model.gn_scale[level], model.gn_shift[level])
        factor = z.shape[2] // coarsest[0]
        pooled.append(avg_pool(z, factor))
    stacked = np.concatenate(pooled, axis=1)
    return global_avg_pool(stacked)[0]


def gate_logits(stats: np.ndarray, model: GbcModel) -> np.ndarray:
    """Linear gate: statistics vector (channels * depth,) -> one logit per bit code."""
    stats = np.asarray(stats, dtype=np.float64)
    if stats.shape != (model.channels * model.depth,):
        raise ValueError(
            f"statistics vector has shape {stats.shape}, "
            f"expected ({model.channels * model.depth},)"
        )
    logits = stats @ np.asarray(model.gate_w, dtype=np.float64)
    if model.gate_b is not None:
        logits = logits + np.asarray(model.gate_b, dtype=np.float64)
    return logits


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - np.max(z))
    return e / e.sum()


def sample_gate(
    logits: np.ndarray,
    model: GbcModel,
    rng=0,
    deterministic: bool = True,
) -> GateDecision:
    """Pick a bit code from gate logits.

    Deterministic mode is a plain argmax (zero noise, lowest index wins ties).
    Stochastic mode perturbs each logit with Gumbel(0, 1) noise drawn from the
    seeded generator before the argmax. The score is the temperature-scaled
    softmax of the (perturbed) logits at the chosen index.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (model.n_codes,):
        raise ValueError(f"expected {model.n_codes} logits, got shape {logits.shape}")
    if deterministic:
        noise = np.zeros_like(logits)
    else:
        gen = np.random.default_rng(rng)
        u = np.clip(gen.random(model.n_codes), GUMBEL_U_CLIP, 1.0 - GUMBEL_U_CLIP)
        noise = -np.log(-np.log(u))
    perturbed = logits + noise
    theta = int(np.argmax(perturbed))
    score = float(softmax(perturbed / model.tau)[theta])
    return GateDecision(
        logits=logits,
        noise=noise,
        theta=theta,
        score=score,
        bit=model.candidate_bits[theta],
    )


def controller_logits(patch: np.ndarray, model: GbcModel) -> np.ndarray:
    """encode -> pool -> gate for one patch."""
    return gate_logits(pool_and_squeeze(encode_granularities(patch, model), model), model)


def allocate_bits(
    patches: list[np.ndarray],
    model: GbcModel,
    deterministic: bool = True,
    seed: int = 0,
    origins: list[tuple[int, int]] | None = None,
) -> list[PatchPlan]:
    """Run the controller on every patch and record one plan per patch.

    Stochastic sampling derives an independent stream from (seed, patch index)
    so results never depend on processing order.
    """
    plans = []
    for i, patch in enumerate(patches):
        logits = controller_logits(patch, model)
        decision = sample_gate(
            logits, model, rng=np.random.default_rng([seed, i]), deterministic=deterministic
        )
        plans.append(
            PatchPlan(
                patch_id=i,
                origin=origins[i] if origins is not None else (0, 0),
                entropy=None,
                gbc_bit=decision.bit,
                final_bit=decision.bit,
                score=decision.score,
                theta=decision.theta,
            )
        )
    return plans


def save_gbc(path, model: GbcModel) -> None:
    tensors = {}
    for level in range(model.depth):
        tensors[f"enc{level}.weight"] = model.enc_w[level]
        tensors[f"enc{level}.bias"] = model.enc_b[level]
        tensors[f"gn{level}.scale"] = model.gn_scale[level]
        tensors[f"gn{level}.shift"] = model.gn_shift[level]
    tensors["gate.weight"] = model.gate_w
    if model.gate_b is not None:
        tensors["gate.bias"] = model.gate_b
    save_container(path, "gbc", model.config_dict(), tensors)


def load_gbc(path) -> GbcModel:
    kind, meta, tensors = load_container(path)
    if kind != "gbc":
        raise ValueError(f"{path}: container holds {kind!r}, not a bit controller")
    model = GbcModel(
        depth=int(meta["D"]),
        channels=int(meta["C"]),
        in_channels=int(meta.get("in_channels", 3)),
        groups=int(meta["groups"]),
        candidate_bits=tuple(int(b) for b in meta["bits"]),
        tau=float(meta["tau"]),
    )
    for level in range(model.depth):
        for key in (f"enc{level}.weight", f"enc{level}.bias",
                    f"gn{level}.scale", f"gn{level}.shift"):
            if key not in tensors:
                raise ValueError(f"{path}: missing tensor {key!r}")
        model.enc_w.append(tensors[f"enc{level}.weight"])
        model.enc_b.append(tensors[f"enc{level}.bias"])
        model.gn_scale.append(tensors[f"gn{level}.scale"])
        model.gn_shift.append(tensors[f"gn{level}.shift"])
    if "gate.weight" not in tensors:
        raise ValueError(f"{path}: missing tensor 'gate.weight'")
    model.gate_w = tensors["gate.weight"]
    model.gate_b = tensors.get("gate.bias")
    expected = (model.channels * model.depth, model.n_codes)
    if model.gate_w.shape != expected:
        raise ValueError(
            f"{path}: gate.weight shape {model.gate_w.shape}, expected {expected}"
        )
    return model
