"""Architecture selection rule.

Enterprise properties are checked first. Only when none is required does the
compression ratio decide. The threshold is a parameter because the break-even
ratio is an empirical estimate, not a constant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

RHO_THRESHOLD = 10.0


class Choice(str, enum.Enum):
    DPM = "DPM"
    EITHER = "EITHER"


class Rule(str, enum.Enum):
    ENTERPRISE_PROPERTY = "enterprise_property"
    COMPRESSION_RATIO = "compression_ratio"
    DEFAULT = "default"


@dataclass(frozen=True)
class TamsInput:
    requires_replay: bool
    requires_audit: bool
    requires_isolation: bool
    compression_ratio: float

    def __post_init__(self):
        if not self.compression_ratio > 0:
            raise ValueError("compression_ratio must be positive")


@dataclass(frozen=True)
class TamsDecision:
    choice: Choice
    triggered_rule: Rule

    def __post_init__(self):
        if (self.choice is Choice.DPM) != (self.triggered_rule is not Rule.DEFAULT):
            raise ValueError("DPM must be chosen exactly when a non-default rule fires")


def tams_select(inp: TamsInput, threshold: float = RHO_THRESHOLD) -> TamsDecision:
    if inp.requires_replay or inp.requires_audit or inp.requires_isolation:
        return TamsDecision(Choice.DPM, Rule.ENTERPRISE_PROPERTY)
    if inp.compression_ratio > threshold:
        return TamsDecision(Choice.DPM, Rule.COMPRESSION_RATIO)
    return TamsDecision(Choice.EITHER, Rule.DEFAULT)
