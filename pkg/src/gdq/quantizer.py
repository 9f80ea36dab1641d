"""Symmetric uniform fake quantization of activations and weights.

Values are snapped to a uniform lattice k * step inside a clipped range, which
simulates low-bit integer arithmetic in floating point. Signed tensors clip to
[-a, a] with step a / (2^(b-1) - 1); non-negative (post-ReLU) tensors clip to
[0, a] with step a / (2^b - 1).

All arithmetic runs in float64 so lattice membership and worked-example checks
hold to 1e-9 regardless of the caller's storage dtype.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

MODES = ("static_max", "moving_average")


def round_half_away(z: np.ndarray) -> np.ndarray:
    """Round to the nearest integer with ties away from zero.

    np.round ties to even, which is asymmetric across implementations of the
    same contract; this pins one convention for all lattice snapping.
    """
    z = np.asarray(z, dtype=np.float64)
    return np.copysign(np.floor(np.abs(z) + 0.5), z)


@dataclass
class QuantParams:
    """Quantization parameters for one tensor: bit-width, clip bound, mode.

    ``clip`` is the upper clip bound ``a``; it is None until calibrated.
    ``ema_decay`` is only used in ``moving_average`` mode.
    """

    bit: int = 8
    clip: float | None = None
    signed: bool = True
    mode: str = "static_max"
    ema_decay: float = 0.9
    degenerate: bool = False

    def __post_init__(self):
        if not 2 <= self.bit <= 8 and self.bit != 32:
            raise ValueError(f"bit width must be in [2, 8] or 32, got {self.bit}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError(f"ema_decay must be in (0, 1), got {self.ema_decay}")
        if self.clip is not None and not (np.isfinite(self.clip) and self.clip > 0):
            raise ValueError(f"clip bound must be finite and > 0, got {self.clip}")

    @property
    def calibrated(self) -> bool:
        return self.clip is not None

    @property
    def levels(self) -> int:
        """Number of positive quantization levels."""
        return (1 << (self.bit - 1)) - 1 if self.signed else (1 << self.bit) - 1

    @property
    def step(self) -> float:
        """Lattice step r_b = a / levels."""
        if self.clip is None:
            raise ValueError("QuantParams not calibrated: clip bound is unset")
        return self.clip / self.levels

    def with_bit(self, bit: int) -> "QuantParams":
        return dataclasses.replace(self, bit=bit)

    def to_dict(self) -> dict:
        d = {"bit": self.bit, "a": self.clip, "signed": self.signed, "mode": self.mode}
        if self.mode == "moving_average":
            d["ema_decay"] = self.ema_decay
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QuantParams":
        return cls(
            bit=int(d["bit"]),
            clip=None if d.get("a") is None else float(d["a"]),
            signed=bool(d["signed"]),
            mode=str(d.get("mode", "static_max")),
            ema_decay=float(d.get("ema_decay", 0.9)),
        )


def quantize_activation(x: np.ndarray, qp: QuantParams) -> np.ndarray:
    """Fake-quantize an activation tensor onto the lattice defined by ``qp``.

    Every output element is k * step for an integer k, with
    |out - clip(in)| <= step / 2 elementwise. Shape is preserved; the result
    is float64.
    """
    if not qp.calibrated:
        raise ValueError("cannot quantize with uncalibrated QuantParams (clip bound unset)")
    a = float(qp.clip)
    step = qp.step
    x = np.asarray(x, dtype=np.float64)
    lo = -a if qp.signed else 0.0
    clipped = np.clip(x, lo, a)
    return round_half_away(clipped / step) * step


def quantize_weights(w: np.ndarray, bit: int = 8) -> tuple[np.ndarray, QuantParams]:
    """Quantize a weight tensor with a per-tensor static max-abs clip bound.

    Returns the fake-quantized weights and the QuantParams recording the
    derived bound. An all-zero tensor gets a = 1.0 and is flagged degenerate.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise ValueError("cannot quantize an empty weight tensor")
    a = float(np.max(np.abs(w)))
    degenerate = a == 0.0
    if degenerate:
        a = 1.0
    qp = QuantParams(bit=bit, clip=a, signed=True, degenerate=degenerate)
    return quantize_activation(w, qp), qp


def calibrate_clip(qp: QuantParams, x: np.ndarray) -> QuantParams:
    """Return a copy of ``qp`` with the clip bound updated from a batch.

    static_max sets a to the batch peak; moving_average blends it with
    decay * a + (1 - decay) * peak (first call bootstraps a to the peak).
    An empty or zero-magnitude batch leaves qp unchanged with a warning.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        warnings.warn("calibrate_clip called with an empty tensor; clip bound unchanged")
        return qp
    peak = float(np.max(np.abs(x))) if qp.signed else float(np.max(x))
    if peak <= 0.0:
        warnings.warn("calibration batch has no positive magnitude; clip bound unchanged")
        return qp
    if qp.mode == "static_max" or not qp.calibrated:
        a = peak
    else:
        a = qp.ema_decay * qp.clip + (1.0 - qp.ema_decay) * peak
    return dataclasses.replace(qp, clip=a)


def ste_passthrough_jacobian(x: np.ndarray, qp: QuantParams) -> np.ndarray:
    """Straight-through-estimator gradient mask: 1 inside the clip range.

    The boundary |x| = a is inclusive so the representable extremum still
    carries gradient.
    """
    if not qp.calibrated:
        raise ValueError("cannot evaluate STE mask with uncalibrated QuantParams")
    x = np.asarray(x, dtype=np.float64)
    return (np.abs(x) <= qp.clip).astype(np.float64)
