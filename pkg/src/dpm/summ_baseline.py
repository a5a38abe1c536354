"""Summ-only baseline: fold each event into a running summary, one call per event.

The memory after step k is a function of the memory after step k-1 and event
k. The running summary uses the same surface layout as a projected view and
is hard-capped at the budget with the same entry-boundary trimming.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from dpm import prompts
from dpm.backends import Backend, BackendRequest, Role
from dpm.decision import DecisionOutput, decide
from dpm.errors import StepError
from dpm.event_log import Event, EventLog
from dpm.projection import Budget
from dpm.view import MemoryView, parse_view, render, trim_to_budget

__all__ = ["SummaryState", "TrajectoryRun", "consolidate", "decide", "DecisionOutput", "run_trajectory"]

EMPTY_SUMMARY = render(MemoryView())


@dataclass(frozen=True)
class SummaryState:
    step: int = 0
    text: str = EMPTY_SUMMARY

    @property
    def chars(self) -> int:
        return len(self.text)


@dataclass
class TrajectoryRun:
    final_summary: SummaryState
    call_records: list[int] = field(default_factory=list)
    per_step_surfaces: list[str] | None = None
    near_noop_steps: int = 0

    @property
    def near_noop_rate(self) -> float:
        n = len(self.call_records)
        return self.near_noop_steps / n if n else 0.0


def _consolidate(prev: SummaryState, event: Event, budget: Budget, backend: Backend):
    if prev.chars > budget.chars:
        raise ValueError(f"prior summary of {prev.chars} chars exceeds budget {budget.chars}")
    prompt = prompts.render_consolidation(prev.text, event.seq, event.content, budget.chars)
    req = BackendRequest(Role.CONSOLIDATION, prompt, budget.chars, model_tag=backend.model_tag)
    try:
        resp = backend.complete(req)
        view = trim_to_budget(parse_view(resp.text), budget.chars)
    except Exception as exc:
        raise StepError(prev.step + 1, exc) from exc
    return SummaryState(prev.step + 1, render(view)), resp.call_id


def consolidate(prev: SummaryState, event: Event, budget: Budget, backend: Backend) -> SummaryState:
    """One consolidation step; raises :class:`StepError` carrying the step index."""
    return _consolidate(prev, event, budget, backend)[0]


def run_trajectory(log: EventLog, budget: Budget, backend: Backend, *, keep_snapshots: bool = False) -> TrajectoryRun:
    if len(log) == 0:
        raise ValueError("cannot summarize an empty log")
    state = SummaryState()
    run = TrajectoryRun(state, per_step_surfaces=[] if keep_snapshots else None)
    for event in log.events:
        before = state.text
        try:
            state, call_id = _consolidate(state, event, budget, backend)
        except StepError as exc:
            exc.partial = run
            raise
        run.call_records.append(call_id)
        run.final_summary = state
        if keep_snapshots:
            run.per_step_surfaces.append(state.text)
        if len(before) + len(event.content) <= budget.chars:
            run.near_noop_steps += 1
    return run
