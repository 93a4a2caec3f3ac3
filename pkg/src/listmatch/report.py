"""Structured pass/fail records emitted by the verification suites."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum


class Status(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    FINDING = "finding"


@dataclass
class VerificationReport:
    claim_id: str
    scope: dict
    status: Status
    margin: float
    details: dict = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)

    @classmethod
    def from_margin(cls, claim_id: str, scope: dict, margin: float, **kw) -> "VerificationReport":
        status = Status.PASS if margin >= 0 else Status.FAIL
        return cls(claim_id, scope, status, float(margin), **kw)

    @property
    def ok(self) -> bool:
        return self.status is not Status.FAIL

    def to_dict(self) -> dict:
        out = asdict(self)
        out["status"] = self.status.value
        return out

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _clean(obj):
    # JSON has no tuples/numpy scalars; floats keep 10 significant digits
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float):
        return float(f"{obj:.10g}")
    return obj
