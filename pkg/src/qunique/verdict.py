"""Verdict labels, per-method evidence records and their reconciliation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional

import numpy as np


class Label(str, Enum):
    UNIQUE = "unique"
    NONUNIQUE = "non-unique"
    INCONCLUSIVE = "inconclusive"
    CONTRADICTORY = "contradictory"
    FAILED = "failed"
    NOT_APPLICABLE = "not-applicable"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class VerdictThresholds:
    """Decision thresholds shared by the resolvent and embedded-chain methods.

    ``positive``: a certified lower bound above this means a nonzero bounded
    solution exists. ``zero``: an upper bound below this at the largest cap
    counts as evidence for the zero solution. ``trend_slope``: when the upper
    bound is still above ``zero``, the log-log slope of its decay rate (per
    unit of ``log cap``) against ``log log cap`` must exceed this for the
    decay to be read as unbounded. Needs at least ``min_trend_caps`` caps.
    """

    positive: float = 1e-3
    zero: float = 1e-3
    trend_slope: float = -1.5
    min_trend_caps: int = 6

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MethodVerdict:
    method: str
    label: Label
    evidence: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    caps: list = field(default_factory=list)
    confidence: str = "normal"
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "label": self.label.value,
            "confidence": self.confidence,
            "caps": list(self.caps),
            "thresholds": _jsonable(self.thresholds),
            "evidence": _jsonable(self.evidence),
            "error": self.error,
        }


ANALYTIC_METHODS = frozenset({"lyapunov", "corollary", "nonuniqueness", "resolvent", "embedded",
                              "pure-birth-series"})


def reconcile(results) -> tuple:
    """Combine per-method labels into ``(overall, confidence)``.

    Any non-uniqueness evidence wins unless some other method claims
    uniqueness, which is reported as a contradiction. Uniqueness needs every
    applicable method to agree. A non-uniqueness call that rests on
    simulation alone is tagged low-confidence.
    """
    counted = [r for r in results if r.label is not Label.NOT_APPLICABLE]
    if not counted:
        return Label.INCONCLUSIVE, "none"
    unique = [r for r in counted if r.label is Label.UNIQUE]
    nonunique = [r for r in counted if r.label is Label.NONUNIQUE]
    if unique and nonunique:
        return Label.CONTRADICTORY, "none"
    if nonunique:
        analytic = any(r.method in ANALYTIC_METHODS for r in nonunique)
        return Label.NONUNIQUE, "normal" if analytic else "low"
    if len(unique) == len(counted):
        return Label.UNIQUE, "normal"
    return Label.INCONCLUSIVE, "none"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and (obj != obj or obj in (float("inf"), float("-inf"))):
        return str(obj)
    return obj
