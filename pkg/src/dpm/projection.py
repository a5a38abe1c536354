"""The projection operator: one backend call from (log, task, budget) to a memory view."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from dpm import prompts
from dpm.backends import Backend, BackendRequest, Role
from dpm.errors import ProjectionFormatError, ViewFormatError
from dpm.event_log import EventLog
from dpm.view import MemoryView, parse_view, render, split_sections, trim_to_budget

__all__ = [
    "Budget",
    "BudgetLabel",
    "Domain",
    "MIN_BUDGET",
    "MemoryView",
    "TaskSpec",
    "parse_view",
    "project",
    "render",
    "split_sections",
]

MIN_BUDGET = 200
REPAIR_REMINDER = (
    "\nFORMAT REMINDER: your previous reply could not be parsed. Reply with exactly the "
    "three sections FACTS:, REASONING:, COMPLIANCE NOTES: in that order, one '- ' line per "
    "entry, citations as [k]."
)


class Domain(str, enum.Enum):
    LOAN = "loan_qualification"
    CLAIMS = "claims_adjudication"


class BudgetLabel(str, enum.Enum):
    TIGHT = "tight"
    MODERATE = "moderate"
    LOOSE = "loose"
    CUSTOM = "custom"


BUDGET_CHARS = {BudgetLabel.TIGHT: 1338, BudgetLabel.MODERATE: 5352, BudgetLabel.LOOSE: 13381}


@dataclass(frozen=True)
class Budget:
    chars: int
    label: BudgetLabel = BudgetLabel.CUSTOM

    def __post_init__(self):
        object.__setattr__(self, "label", BudgetLabel(self.label))
        if self.chars <= 0:
            raise ValueError("budget must be positive")
        expected = BUDGET_CHARS.get(self.label)
        if expected is not None and self.chars != expected:
            raise ValueError(f"{self.label.value} budget is {expected} chars, got {self.chars}")

    @classmethod
    def named(cls, label: str) -> Budget:
        label = BudgetLabel(label)
        return cls(BUDGET_CHARS[label], label)

    @classmethod
    def parse(cls, text: str) -> Budget:
        if text in BudgetLabel._value2member_map_ and text != "custom":
            return cls.named(text)
        return cls(int(text))

    @property
    def name(self) -> str:
        return self.label.value if self.label is not BudgetLabel.CUSTOM else str(self.chars)


TIGHT = Budget.named("tight")
MODERATE = Budget.named("moderate")
LOOSE = Budget.named("loose")
PAPER_BUDGETS = (TIGHT, MODERATE, LOOSE)


@dataclass(frozen=True)
class TaskSpec:
    domain: Domain
    question: str
    provisions_universe: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain(self.domain))
        object.__setattr__(self, "provisions_universe", tuple(self.provisions_universe))
        if not self.question.strip():
            raise ValueError("task question must be non-empty")
        if not self.provisions_universe:
            raise ValueError("provisions_universe must be non-empty")

    def to_dict(self) -> dict:
        return {"domain": self.domain.value, "question": self.question,
                "provisions_universe": list(self.provisions_universe)}

    @classmethod
    def from_dict(cls, d: dict) -> TaskSpec:
        return cls(d["domain"], d["question"], tuple(d["provisions_universe"]))


def projection_prompt(log: EventLog, task: TaskSpec, budget: Budget) -> str:
    return prompts.render_projection(
        task.question,
        task.domain.value,
        task.provisions_universe,
        ((e.seq, e.content) for e in log.events),
        budget.chars,
    )


def _accept(text: str, valid_seqs: set[int]) -> MemoryView:
    view = parse_view(text)
    bad = view.citations() - valid_seqs
    if bad:
        raise ViewFormatError(f"citations reference unknown events: {sorted(bad)}")
    return view


def project(log: EventLog, task: TaskSpec, budget: Budget, backend: Backend) -> MemoryView:
    """Project ``log`` into a budget-bounded memory view with one backend call.

    A malformed reply gets one repair call with a format reminder; a second
    failure raises :class:`ProjectionFormatError` carrying the raw text.
    An over-budget reply is cut at entry boundaries and marked ``[TRIMMED]``.
    """
    if budget.chars < MIN_BUDGET:
        raise ValueError(f"budget {budget.chars} below the {MIN_BUDGET}-char floor")
    snapshot = log if log.sealed else log.snapshot()
    valid = snapshot.seqs()
    prompt = projection_prompt(snapshot, task, budget)
    req = BackendRequest(Role.PROJECTION, prompt, budget.chars, model_tag=backend.model_tag)
    text = backend.complete(req).text
    try:
        view = _accept(text, valid)
    except ViewFormatError:
        repaired = prompt.replace("\nUSER:\n", REPAIR_REMINDER + "\nUSER:\n", 1)
        repair = BackendRequest(Role.PROJECTION, repaired, budget.chars,
                                model_tag=backend.model_tag)
        text = backend.complete(repair).text
        try:
            view = _accept(text, valid)
        except ViewFormatError as exc:
            raise ProjectionFormatError(f"unparseable projection after repair: {exc}", text) from exc
    return trim_to_budget(view, budget.chars)
