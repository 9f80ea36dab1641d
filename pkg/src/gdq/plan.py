"""Per-patch allocation record: geometry, entropy, controller decision, final bit."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class PatchPlan:
    """One patch's bit-allocation audit trail.

    ``gbc_bit`` is the controller's choice; ``final_bit`` differs only when
    the entropy refinement stage re-maps a highest-bit patch.
    """

    patch_id: int
    origin: tuple[int, int]
    entropy: float | None
    gbc_bit: int
    final_bit: int
    score: float | None = None
    theta: int | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.patch_id,
            "origin": list(self.origin),
            "entropy": self.entropy,
            "gbc_bit": self.gbc_bit,
            "final_bit": self.final_bit,
            "p": self.score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatchPlan":
        return cls(
            patch_id=int(d["id"]),
            origin=(int(d["origin"][0]), int(d["origin"][1])),
            entropy=None if d.get("entropy") is None else float(d["entropy"]),
            gbc_bit=int(d["gbc_bit"]),
            final_bit=int(d["final_bit"]),
            score=None if d.get("p") is None else float(d["p"]),
        )
