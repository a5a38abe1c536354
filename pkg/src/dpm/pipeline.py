"""End-to-end runs of one case under one memory condition."""

from __future__ import annotations

import enum
import threading
import time
from dataclasses import dataclass

from dpm.audit import AuditedBackend, AuditLedger, SurfaceCount
from dpm.backends import Backend, BackendRequest, BackendResponse
from dpm.casegen import CaseBundle
from dpm.decision import decide
from dpm.projection import Budget, project, render
from dpm.scoring import ScoreRecord, ScoreVector, score_all
from dpm.summ_baseline import run_trajectory


class Condition(str, enum.Enum):
    DPM = "dpm"
    SUMM = "summ"

    @property
    def label(self) -> str:
        return self.value.upper()


class _Tally(Backend):
    """Counts calls and perturbed responses passing through it."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.descriptor = inner.descriptor
        self.model_tag = inner.model_tag
        self.calls = 0
        self.perturbed = 0
        self._lock = threading.Lock()

    def next_call_id(self) -> int:
        return self.inner.next_call_id()

    def complete(self, req: BackendRequest) -> BackendResponse:
        resp = self.inner.complete(req)
        with self._lock:
            self.calls += 1
            self.perturbed += int(resp.perturbed)
        return resp


@dataclass
class RunResult:
    case_id: str
    condition: Condition
    budget: Budget
    surface: str
    decision: str
    rationale: str
    scores: ScoreVector
    calls: int
    perturbed_calls: int
    wall_ms: float
    run_id: str
    surface_count: SurfaceCount
    snapshots: list[str] | None = None

    def record(self) -> ScoreRecord:
        return ScoreRecord.build(self.case_id, self.condition.value, self.budget.name, self.scores,
                                 self.calls, round(self.wall_ms, 3))


def run_id_for(case_id: str, condition: Condition | str, budget: Budget, suffix: str = "") -> str:
    rid = f"{case_id}.{Condition(condition).value}.{budget.name}"
    return f"{rid}.{suffix}" if suffix else rid


def memory_surface(bundle: CaseBundle, condition: Condition | str, budget: Budget, backend: Backend,
                   *, keep_snapshots: bool = False) -> tuple[str, list[str] | None]:
    """The pre-decision memory surface for one condition."""
    condition = Condition(condition)
    if condition is Condition.DPM:
        return render(project(bundle.log, bundle.task, budget, backend)), None
    run = run_trajectory(bundle.log, budget, backend, keep_snapshots=keep_snapshots)
    return run.final_summary.text, run.per_step_surfaces


def run_case(bundle: CaseBundle, condition: Condition | str, budget: Budget, backend: Backend, *,
             ledger: AuditLedger | None = None, run_id: str | None = None) -> RunResult:
    """Memory construction, decision and scoring, every call audited.

    Intermediate summaries are kept only when the ledger captures full payloads.
    """
    condition = Condition(condition)
    ledger = ledger if ledger is not None else AuditLedger()
    run_id = ledger.open_run(run_id or run_id_for(bundle.case_id, condition, budget))
    tally = _Tally(backend)
    audited = AuditedBackend(tally, ledger, run_id)
    start = time.perf_counter()
    try:
        surface, snapshots = memory_surface(bundle, condition, budget, audited, keep_snapshots=ledger.full)
        decision = decide(surface, bundle.task, audited)
    finally:
        ledger.close_run(run_id)
    wall_ms = (time.perf_counter() - start) * 1000.0
    return RunResult(
        case_id=bundle.case_id,
        condition=condition,
        budget=budget,
        surface=surface,
        decision=decision.label,
        rationale=decision.rationale,
        scores=score_all(surface, decision.label, bundle.truth),
        calls=tally.calls,
        perturbed_calls=tally.perturbed,
        wall_ms=wall_ms,
        run_id=run_id,
        surface_count=ledger.surface_count(run_id),
        snapshots=snapshots,
    )
