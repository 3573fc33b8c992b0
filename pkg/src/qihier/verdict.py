from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class MembershipVerdict:
    """Outcome of a class-membership test.

    A negative verdict always carries a ``witness`` describing the first probe
    (in scan order) that failed and the offending quantity.
    """

    class_name: str
    member: bool
    witness: dict[str, Any] | None = None
    tolerance: float = 0.0
    details: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.member and self.witness is None:
            raise ValueError(f"non-member verdict for {self.class_name} needs a witness")

    def __bool__(self):
        return bool(self.member)

    def to_dict(self) -> dict[str, Any]:
        return {
            "class": self.class_name,
            "member": bool(self.member),
            "witness": self.witness,
            "tolerance": self.tolerance,
        }
