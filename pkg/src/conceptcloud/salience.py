"""Participant-breadth aggregation, weight scaling, and condition diffs.

Breadth counts unique participants per concept: one transcript per
participant per condition means summing a column of the assignment table.
All functions here are pure over immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DataIntegrityError, StaleTableError, ValidationError
from .mapping import AssignmentTable

LINEAR = "linear"
LOG = "log"
SQRT = "sqrt"
SCALING_MODES = (LINEAR, LOG, SQRT)

A_DOMINANT = "a_dominant"
B_DOMINANT = "b_dominant"
WITHIN_MARGIN = "within_margin"


@dataclass(frozen=True)
class BreadthCounts:
    condition_id: str
    counts: dict[str, int]
    m_total: int
    forced: bool = False

    def __post_init__(self) -> None:
        bad = {k: v for k, v in self.counts.items() if v < 0 or v > self.m_total}
        if bad:
            raise ValidationError(f"breadth outside [0, m_total={self.m_total}]: {bad}")


@dataclass(frozen=True)
class ScaledWeights:
    condition_id: str
    mode: str
    weights: dict[str, float]


@dataclass(frozen=True)
class DiffResult:
    condition_a: str
    condition_b: str
    deltas: dict[str, int]
    margin: int

    def within_margin(self, key: str) -> bool:
        return abs(self.deltas[key]) <= self.margin

    def classify(self, key: str) -> str:
        delta = self.deltas[key]
        if abs(delta) <= self.margin:
            return WITHIN_MARGIN
        return A_DOMINANT if delta > 0 else B_DOMINANT


def compute_breadth(table: AssignmentTable, force: bool = False) -> BreadthCounts:
    """Column sums of the assignment table: unique participants per concept.

    Incomplete or stale tables are refused unless ``force`` is set, in which
    case the output carries a ``forced`` annotation.
    """
    if table.incomplete and not force:
        raise DataIntegrityError(
            f"table for '{table.condition_id}' has incomplete rows "
            f"{list(table.incomplete)}; re-map or pass force=True"
        )
    if table.stale and not force:
        raise StaleTableError(
            f"table for '{table.condition_id}' is stale against the current vocabulary; "
            "re-run mapping or pass force=True"
        )
    counts = {key: 0 for key in table.concept_keys}
    for row in table.rows.values():
        for key in table.concept_keys:
            counts[key] += row[key].value
    return BreadthCounts(
        condition_id=table.condition_id,
        counts=counts,
        m_total=len(table.rows),
        forced=bool(force and (table.incomplete or table.stale)),
    )


def contributors(table: AssignmentTable) -> dict[str, list[str]]:
    """Transcript ids judged positive, per concept, in id order."""
    out: dict[str, list[str]] = {key: [] for key in table.concept_keys}
    for tid in sorted(table.rows):
        row = table.rows[tid]
        for key in table.concept_keys:
            if row[key].value == 1:
                out[key].append(tid)
    return out


def scale_weights(breadth: BreadthCounts, mode: str = LINEAR) -> ScaledWeights:
    """Monotone visual weights: linear b, log ln(1+b), or sqrt; zero stays zero."""
    if mode not in SCALING_MODES:
        raise ValidationError(f"scaling mode must be one of {SCALING_MODES}, got '{mode}'")
    if mode == LINEAR:
        g = float
    elif mode == LOG:
        g = math.log1p
    else:
        g = math.sqrt
    return ScaledWeights(
        condition_id=breadth.condition_id,
        mode=mode,
        weights={key: g(b) for key, b in breadth.counts.items()},
    )


def diff_breadth(a: BreadthCounts, b: BreadthCounts, margin: int = 1) -> DiffResult:
    """Per-concept contrast over the key union; missing keys count as zero.

    Antisymmetric under argument swap. Diffing a condition against itself is
    rejected as an operator mistake.
    """
    if a.condition_id == b.condition_id:
        raise ValidationError(
            f"cannot diff condition '{a.condition_id}' against itself"
        )
    if margin < 0:
        raise ValidationError("margin must be >= 0")
    keys = sorted(set(a.counts) | set(b.counts))
    deltas = {key: a.counts.get(key, 0) - b.counts.get(key, 0) for key in keys}
    return DiffResult(
        condition_a=a.condition_id, condition_b=b.condition_id, deltas=deltas, margin=margin
    )


def breadth_to_json(breadth: BreadthCounts) -> dict:
    payload = {
        "condition_id": breadth.condition_id,
        "m_total": breadth.m_total,
        "counts": dict(sorted(breadth.counts.items())),
    }
    if breadth.forced:
        payload["forced"] = True
    return payload
