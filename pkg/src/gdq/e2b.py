"""Entropy-to-bit refinement: quantile thresholds mapping patch entropy to a bit code.

Threshold fractions (default 0.5 and 0.9) are resolved against a corpus
entropy distribution into entropy cutoffs; a patch whose controller bit is the
highest candidate gets its final bit from the interval its entropy falls in
(ties go to the lower interval). The fractions themselves can drift during a
one-epoch calibration pass via an exponential moving average keyed on the
normalized entropy of a calibration patch per mini-batch.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .entropy import EntropyStats, quantile_index
from .plan import PatchPlan

ATC_SELECT_MODES = ("per-patch-sequential", "batch-mean")


@dataclass(frozen=True)
class E2BConfig:
    """Threshold fractions, candidate bit codes, and EMA decay for calibration."""

    thresholds: tuple[float, ...] = (0.5, 0.9)
    bit_codes: tuple[int, ...] = (4, 5, 8)
    gamma: float = 0.9997

    def __post_init__(self):
        t = self.thresholds
        if not t or any(not 0.0 < f < 1.0 for f in t):
            raise ValueError(f"threshold fractions must lie in (0, 1), got {t}")
        if any(t[i] >= t[i + 1] for i in range(len(t) - 1)):
            raise ValueError(f"threshold fractions must be strictly increasing, got {t}")
        c = self.bit_codes
        if len(c) != len(t) + 1:
            raise ValueError(f"need {len(t) + 1} bit codes for {len(t)} thresholds, got {len(c)}")
        if any(c[i] > c[i + 1] for i in range(len(c) - 1)):
            raise ValueError(f"bit codes must be non-decreasing, got {c}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "bit_codes": list(self.bit_codes),
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "E2BConfig":
        return cls(
            thresholds=tuple(float(t) for t in d["thresholds"]),
            bit_codes=tuple(int(b) for b in d["bit_codes"]),
            gamma=float(d["gamma"]),
        )


@dataclass(frozen=True)
class CalibratedThresholds:
    """Entropy cutoffs (nats) resolved from threshold fractions against a corpus."""

    fractions: tuple[float, ...]
    cutoffs: tuple[float, ...]
    gamma: float
    iterations: int = 0
    stats_digest: str = ""

    def __post_init__(self):
        if len(self.fractions) != len(self.cutoffs):
            raise ValueError("fractions and cutoffs must have equal length")
        if any(self.cutoffs[i] > self.cutoffs[i + 1] for i in range(len(self.cutoffs) - 1)):
            raise ValueError(f"cutoffs must be non-decreasing, got {self.cutoffs}")

    def to_dict(self) -> dict:
        return {
            "fractions": list(self.fractions),
            "cutoffs": list(self.cutoffs),
            "gamma": self.gamma,
            "iterations": self.iterations,
            "stats_digest": self.stats_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibratedThresholds":
        return cls(
            fractions=tuple(float(f) for f in d["fractions"]),
            cutoffs=tuple(float(c) for c in d["cutoffs"]),
            gamma=float(d["gamma"]),
            iterations=int(d.get("iterations", 0)),
            stats_digest=str(d.get("stats_digest", "")),
        )


def stats_digest(stats: EntropyStats) -> str:
    """Stable digest of the corpus entropy values, for threshold provenance."""
    payload = json.dumps(list(stats.values)).encode("ascii")
    return hashlib.sha256(payload).hexdigest()[:16]


def resolve_thresholds(
    stats: EntropyStats,
    cfg: E2BConfig,
    fractions: tuple[float, ...] | None = None,
    iterations: int = 0,
) -> CalibratedThresholds:
    """Turn threshold fractions into entropy cutoffs read from the sorted corpus."""
    fractions = tuple(fractions if fractions is not None else cfg.thresholds)
    cutoffs = tuple(quantile_index(stats, f)[1] for f in fractions)
    return CalibratedThresholds(
        fractions=fractions,
        cutoffs=cutoffs,
        gamma=cfg.gamma,
        iterations=iterations,
        stats_digest=stats_digest(stats),
    )


def assign_bit(entropy: float, thr: CalibratedThresholds, cfg: E2BConfig) -> int:
    """Bit code for a patch entropy: first interval whose cutoff is >= entropy.

    Boundary values belong to the lower interval; entropies above the last
    cutoff map to the last code.
    """
    for cutoff, code in zip(thr.cutoffs, cfg.bit_codes):
        if entropy <= cutoff:
            return code
    return cfg.bit_codes[-1]


def atc_update(t: float, batch_entropies, calib_entropy: float, gamma: float) -> float:
    """One EMA step of a threshold fraction toward the batch-normalized entropy.

    The calibration entropy is normalized by the mini-batch min/max; a flat
    batch (max == min) normalizes to 0.5. The result stays in (0, 1).
    """
    batch = list(batch_entropies)
    if not batch:
        raise ValueError("atc_update needs a non-empty mini-batch of entropies")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    h_min, h_max = min(batch), max(batch)
    if h_max == h_min:
        norm = 0.5
    else:
        norm = (calib_entropy - h_min) / (h_max - h_min)
        norm = min(max(norm, 0.0), 1.0)
    t_new = t * gamma + norm * (1.0 - gamma)
    return min(max(t_new, 1e-12), 1.0 - 1e-12)


def calibrate_thresholds(
    stats: EntropyStats,
    cfg: E2BConfig,
    batch_size: int = 16,
    select: str = "per-patch-sequential",
    trace: list | None = None,
) -> CalibratedThresholds:
    """One calibration pass over the corpus entropies in mini-batches.

    Each mini-batch applies one EMA update (iteration) to every threshold
    fraction. The calibration entropy per iteration is the first patch of the
    batch ("per-patch-sequential", patches consumed in corpus order) or the
    batch mean ("batch-mean"). Drifted fractions are then resolved into
    entropy cutoffs against the full corpus.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if select not in ATC_SELECT_MODES:
        raise ValueError(f"select must be one of {ATC_SELECT_MODES}, got {select!r}")
    fractions = list(cfg.thresholds)
    values = list(stats.values)
    iterations = 0
    for start in range(0, len(values), batch_size):
        batch = values[start:start + batch_size]
        calib = batch[0] if select == "per-patch-sequential" else sum(batch) / len(batch)
        fractions = [atc_update(f, batch, calib, cfg.gamma) for f in fractions]
        iterations += 1
        if trace is not None:
            trace.append((iterations, tuple(fractions)))
    return resolve_thresholds(stats, cfg, fractions=tuple(fractions), iterations=iterations)


def refine_plan(
    plans: list[PatchPlan],
    thr: CalibratedThresholds,
    cfg: E2BConfig,
    gbc_high_bit: int = 8,
) -> list[PatchPlan]:
    """Re-map the final bit of patches the controller left at the highest bit.

    Other patches keep their controller bit; the controller bit is preserved
    on every entry for audit.
    """
    refined = []
    for plan in plans:
        if plan.gbc_bit == gbc_high_bit:
            if plan.entropy is None:
                raise ValueError(f"patch {plan.patch_id} has no entropy to refine with")
            final = assign_bit(plan.entropy, thr, cfg)
        else:
            final = plan.gbc_bit
        refined.append(dataclasses.replace(plan, final_bit=final))
    return refined


def save_thresholds(path, thr: CalibratedThresholds) -> None:
    Path(path).write_text(json.dumps(thr.to_dict(), sort_keys=True, indent=2) + "\n")


def load_thresholds(path) -> CalibratedThresholds:
    return CalibratedThresholds.from_dict(json.loads(Path(path).read_text()))
