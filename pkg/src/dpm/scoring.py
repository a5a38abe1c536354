"""Rubric scoring of a memory surface and a decision against case ground truth.

FRP counts required anchors found verbatim (whitespace-normalized) anywhere in
the surface. RCS and CRR count rubric keys named inside one section: the
reasoning section for RCS, the compliance section for CRR. EDA is exact
label agreement. RCS here is a coverage proxy, not a coherence judgment, so
tabular outputs label it ``rcs_proxy``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from dpm.anchors import normalize_ws
from dpm.casegen import CaseGroundTruth
from dpm.errors import UndefinedScoreError
from dpm.view import split_sections

AXES = ("frp", "rcs", "eda", "crr")
AXIS_LABELS = {"frp": "frp", "rcs": "rcs_proxy", "eda": "eda", "crr": "crr"}


def _ratio(found: int, total: int, what: str) -> float:
    if total == 0:
        raise UndefinedScoreError(f"no {what} to score against")
    return found / total


def score_frp(surface: str, truth: CaseGroundTruth) -> float:
    flat = normalize_ws(surface)
    anchors = truth.required_anchors
    return _ratio(sum(normalize_ws(a) in flat for a in anchors), len(anchors), "required anchors")


def _section_hits(section_text: str, keys) -> int:
    haystack = normalize_ws(section_text).lower()
    return sum(normalize_ws(k).lower() in haystack for k in keys)


def score_rcs(surface: str, truth: CaseGroundTruth) -> float:
    keys = truth.required_reasoning_keys
    if not keys:
        raise UndefinedScoreError("no reasoning keys to score against")
    return _section_hits(split_sections(surface)["reasoning"], keys) / len(keys)


def score_crr(surface: str, truth: CaseGroundTruth) -> float:
    provs = truth.required_provisions
    if not provs:
        raise UndefinedScoreError("no provisions to score against")
    return _section_hits(split_sections(surface)["compliance"], provs) / len(provs)


def score_eda(decision_label: str, truth: CaseGroundTruth) -> int:
    return int(decision_label == truth.label)


@dataclass(frozen=True)
class ScoreVector:
    frp: float
    rcs: float
    eda: int
    crr: float

    def __post_init__(self):
        for axis in AXES:
            value = getattr(self, axis)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{axis}={value} outside [0, 1]")
        if self.eda not in (0, 1):
            raise ValueError("eda must be 0 or 1")

    def get(self, axis: str) -> float:
        return float(getattr(self, axis))


def score_all(surface: str, decision_label: str, truth: CaseGroundTruth) -> ScoreVector:
    return ScoreVector(
        frp=score_frp(surface, truth),
        rcs=score_rcs(surface, truth),
        eda=score_eda(decision_label, truth),
        crr=score_crr(surface, truth),
    )


@dataclass(frozen=True)
class ScoreRecord:
    case_id: str
    condition: str
    budget_label: str
    frp: float
    rcs: float
    eda: int
    crr: float
    calls: int
    wall_ms: float

    @classmethod
    def build(cls, case_id: str, condition: str, budget_label: str, scores: ScoreVector,
              calls: int, wall_ms: float) -> ScoreRecord:
        return cls(case_id, condition, budget_label, scores.frp, scores.rcs, scores.eda, scores.crr,
                   calls, wall_ms)

    @property
    def scores(self) -> ScoreVector:
        return ScoreVector(self.frp, self.rcs, self.eda, self.crr)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)

    @classmethod
    def from_json(cls, line: str) -> ScoreRecord:
        return cls(**json.loads(line))
