"""Decision call shared verbatim by both memory conditions."""

from __future__ import annotations

from dataclasses import dataclass

from dpm import prompts
from dpm.backends import DECISION_CHAR_BUDGET, Backend, BackendRequest, Role
from dpm.errors import DecisionFormatError

LABELS = ("APPROVE", "DENY")


@dataclass(frozen=True)
class DecisionOutput:
    label: str
    rationale: str


def parse_decision_output(text: str) -> DecisionOutput:
    """Label from the first line (``DECISION: <label>``), rationale from the rest."""
    first, _, rest = text.partition("\n")
    head, sep, label = first.partition(":")
    label = label.strip()
    if head.strip() != "DECISION" or not sep or label not in LABELS:
        raise DecisionFormatError(f"cannot read a decision label from {first!r}", text)
    rationale = rest.strip()
    if rationale.startswith("RATIONALE:"):
        rationale = rationale[len("RATIONALE:"):].strip()
    return DecisionOutput(label, rationale)


def decide(surface: str, task, backend: Backend) -> DecisionOutput:
    if not surface:
        raise ValueError("decision needs a non-empty memory surface")
    prompt = prompts.render_decision(task.question, surface)
    req = BackendRequest(Role.DECISION, prompt, DECISION_CHAR_BUDGET, model_tag=backend.model_tag)
    return parse_decision_output(backend.complete(req).text)
