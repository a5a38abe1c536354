"""Experiment runner: budget comparison, replay determinism, and ratio scaling.

Every (case, condition, budget) run is independent and gets its own backend
instance, keyed by a derived seed, so results do not depend on run order or
worker count. Result rows are merged by sorted key. Result CSVs carry no
wall-clock fields, so a deterministic backend gives byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from dpm import prompts
from dpm.audit import AuditLedger
from dpm.backends import DEFAULT_SEED, Backend, make_backend
from dpm.casegen import CaseBundle, derive_seed, large_cases, small_cases, suite_digest
from dpm.event_log import EventKind, EventLog
from dpm.pipeline import Condition, RunResult, memory_surface, run_case
from dpm.projection import PAPER_BUDGETS, Budget, BudgetLabel
from dpm.replay_study import ReplayReport, replay_study, reports_csv
from dpm.scoring import AXES, AXIS_LABELS
from dpm.stats import PairedSample, paired_bootstrap_ci, paired_stats, stats_table_csv
from dpm.summ_baseline import SummaryState, consolidate

# Replay-study layout: large cells are DPM-only at the moderate budget; the
# small cases run both conditions at a budget sized to their short logs.
SMALL_CASE_BUDGET = Budget(2000)
EXP2_LARGE_CASES = ("loan_L01", "claim_C01", "loan_L02")
EXP2_REPLAYS = 10


@dataclass
class ExperimentManifest:
    seed: int = DEFAULT_SEED
    backend: str = "extractive"
    budgets: tuple[Budget, ...] = PAPER_BUDGETS
    conditions: tuple[Condition, ...] = (Condition.DPM, Condition.SUMM)
    suite_digest: str = ""
    capture: str = "digest"
    n_replays: int = EXP2_REPLAYS
    workers: int = 1
    backend_descriptor: dict = field(default_factory=dict)
    prompt_digests: dict = field(default_factory=prompts.template_digests)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "backend": self.backend,
            "backend_descriptor": self.backend_descriptor,
            "budgets": [{"label": b.label.value, "chars": b.chars} for b in self.budgets],
            "conditions": [c.value for c in self.conditions],
            "suite_digest": self.suite_digest,
            "capture": self.capture,
            "n_replays": self.n_replays,
            "prompt_digests": self.prompt_digests,
        }

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path


def parse_budgets(text: str) -> tuple[Budget, ...]:
    if text == "all":
        return PAPER_BUDGETS
    return tuple(Budget.parse(part) for part in text.split(","))


def parse_conditions(text: str) -> tuple[Condition, ...]:
    if text == "both":
        return (Condition.DPM, Condition.SUMM)
    return (Condition(text),)


class BackendPool:
    """One backend per run key. Remote backends are shared; local ones are not."""

    def __init__(self, spec: str, seed: int):
        self.spec = spec
        self.seed = seed
        self._shared = make_backend(spec, seed=seed) if spec == "remote" else None

    def get(self, *key) -> Backend:
        if self._shared is not None:
            return self._shared
        return make_backend(self.spec, seed=derive_seed(self.seed, *key))

    def descriptor(self) -> dict:
        return (self._shared or make_backend(self.spec, seed=self.seed)).descriptor.to_dict()


def expected_calls(condition: Condition, n_events: int) -> int:
    return 2 if condition is Condition.DPM else n_events + 1


# -- experiment 1 -------------------------------------------------------------


@dataclass
class Exp1Result:
    manifest: ExperimentManifest
    runs: list[RunResult]
    failures: dict[tuple[str, str, str], str]
    ledger: AuditLedger
    stats: list[tuple[str, str, object]]

    def run_map(self) -> dict[tuple[str, str, str], RunResult]:
        return {(r.case_id, r.condition.value, r.budget.name): r for r in self.runs}

    def results_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["case_id", "condition", "budget", "budget_chars", "frp", "rcs_proxy", "eda", "crr",
                         "calls", "decision", "surface_sha256"])
        for r in self.runs:
            writer.writerow([r.case_id, r.condition.value, r.budget.name, r.budget.chars, f"{r.scores.frp:.4f}",
                             f"{r.scores.rcs:.4f}", r.scores.eda, f"{r.scores.crr:.4f}", r.calls, r.decision,
                             hashlib.sha256(r.surface.encode("utf-8")).hexdigest()])
        for (case_id, cond, budget), err in sorted(self.failures.items()):
            writer.writerow([case_id, cond, budget, "", "NA", "NA", "NA", "NA", "", "ERROR", err])
        return buf.getvalue()

    def table_csv(self) -> str:
        return stats_table_csv(self.stats)

    def total_calls(self) -> int:
        return sum(r.calls for r in self.runs)


def _run_one(bundle: CaseBundle, cond: Condition, budget: Budget, pool: BackendPool,
             ledger: AuditLedger) -> RunResult:
    backend = pool.get(bundle.case_id, cond.value, budget.name)
    return run_case(bundle, cond, budget, backend, ledger=ledger)


def exp1_stats(runs: Sequence[RunResult], budgets: Sequence[Budget], resamples: int = 10_000,
               seed: int = DEFAULT_SEED) -> list[tuple[str, str, object]]:
    by_key = {(r.case_id, r.condition, r.budget.name): r for r in runs}
    rows = []
    for budget in budgets:
        dpm = {c: r for (c, cond, b), r in by_key.items() if cond is Condition.DPM and b == budget.name}
        summ = {c: r for (c, cond, b), r in by_key.items() if cond is Condition.SUMM and b == budget.name}
        shared = sorted(set(dpm) & set(summ))
        for axis in AXES:
            if len(shared) < 2:
                rows.append((budget.name, AXIS_LABELS[axis], None))
                continue
            sample = PairedSample(tuple(shared), tuple(dpm[c].scores.get(axis) for c in shared),
                                  tuple(summ[c].scores.get(axis) for c in shared))
            rows.append((budget.name, AXIS_LABELS[axis], paired_stats(sample, resamples, seed)))
    return rows


def run_exp1(suite: Sequence[CaseBundle], manifest: ExperimentManifest) -> Exp1Result:
    """Large cases x conditions x budgets, scored and summarized per (budget, axis)."""
    cases = large_cases(list(suite))
    pool = BackendPool(manifest.backend, manifest.seed)
    manifest.suite_digest = suite_digest(list(suite))
    manifest.backend_descriptor = pool.descriptor()
    ledger = AuditLedger(manifest.capture)
    jobs = [(b, c, bud) for bud in manifest.budgets for c in manifest.conditions for b in cases]
    runs, failures = [], {}

    def work(job):
        bundle, cond, budget = job
        try:
            return job, _run_one(bundle, cond, budget, pool, ledger), None
        except Exception as exc:
            return job, None, f"{type(exc).__name__}: {exc}"

    if manifest.workers > 1:
        with ThreadPoolExecutor(manifest.workers) as ex:
            outcomes = list(ex.map(work, jobs))
    else:
        outcomes = [work(j) for j in jobs]
    for (bundle, cond, budget), result, err in outcomes:
        if err is not None:
            failures[(bundle.case_id, cond.value, budget.name)] = err
        else:
            runs.append(result)
    runs.sort(key=lambda r: (r.budget.chars, r.condition.value, r.case_id))
    return Exp1Result(manifest, runs, failures, ledger, exp1_stats(runs, manifest.budgets, seed=manifest.seed))


def write_exp1(result: Exp1Result, out: str | Path, *, write_ledgers: bool = True) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result.manifest.write(out / "manifest.json")
    (out / "results.csv").write_text(result.results_csv(), encoding="utf-8")
    (out / "table1.csv").write_text(result.table_csv(), encoding="utf-8")
    with open(out / "scores.jsonl", "w", encoding="utf-8") as fh:
        for r in result.runs:
            fh.write(r.record().to_json() + "\n")
    if write_ledgers:
        ledger_dir = out / "ledgers"
        ledger_dir.mkdir(exist_ok=True)
        for run_id in result.ledger.run_ids():
            result.ledger.write(run_id, ledger_dir / f"{run_id}.ledger.jsonl")
    return out


# -- experiment 2 -------------------------------------------------------------


def exp2_cells(suite: Sequence[CaseBundle]) -> list[tuple[CaseBundle, Condition, Budget]]:
    by_id = {b.case_id: b for b in suite}
    moderate = Budget.named(BudgetLabel.MODERATE.value)
    cells = [(by_id[c], Condition.DPM, moderate) for c in EXP2_LARGE_CASES if c in by_id]
    for bundle in small_cases(list(suite)):
        cells += [(bundle, Condition.DPM, SMALL_CASE_BUDGET), (bundle, Condition.SUMM, SMALL_CASE_BUDGET)]
    return cells


def run_exp2(suite: Sequence[CaseBundle], manifest: ExperimentManifest) -> list[ReplayReport]:
    manifest.suite_digest = suite_digest(list(suite))
    manifest.backend_descriptor = BackendPool(manifest.backend, manifest.seed).descriptor()
    return [replay_study(bundle, cond, budget, manifest.backend, manifest.n_replays, seed=manifest.seed)
            for bundle, cond, budget in exp2_cells(suite)]


def write_exp2(reports: Sequence[ReplayReport], manifest: ExperimentManifest, out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest.write(out / "manifest.json")
    (out / "table3.csv").write_text(reports_csv(list(reports)), encoding="utf-8")
    (out / "replays.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n",
                                      encoding="utf-8")
    return out


# -- experiment 3 -------------------------------------------------------------

SCALING_COLUMNS = ("budget", "rho", "metric", "mean_delta", "ci_low", "ci_high", "n")


def run_exp3(exp1: Exp1Result, suite: Sequence[CaseBundle], resamples: int = 10_000) -> str:
    """Per-axis DPM-minus-Summ delta against the compression ratio, as CSV."""
    cases = {b.case_id: b for b in large_cases(list(suite))}
    mean_chars = float(np.mean([b.total_chars for b in cases.values()]))
    runs = exp1.run_map()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCALING_COLUMNS)
    for budget in sorted(exp1.manifest.budgets, key=lambda b: -mean_chars / b.chars):
        rho = mean_chars / budget.chars
        ids = sorted(c for c in cases
                     if (c, "dpm", budget.name) in runs and (c, "summ", budget.name) in runs)
        for axis in AXES:
            if len(ids) < 2:
                writer.writerow([budget.name, f"{rho:.2f}", AXIS_LABELS[axis], "NA", "NA", "NA", len(ids)])
                continue
            deltas = [runs[(c, "dpm", budget.name)].scores.get(axis) - runs[(c, "summ", budget.name)].scores.get(axis)
                      for c in ids]
            low, high = paired_bootstrap_ci(deltas, resamples, seed=exp1.manifest.seed)
            mean = float(np.mean(deltas))
            writer.writerow([budget.name, f"{rho:.2f}", AXIS_LABELS[axis], f"{mean:+.3f}",
                             f"{min(low, mean):+.3f}", f"{max(high, mean):+.3f}", len(ids)])
    return buf.getvalue()


# -- demonstrations and self-checks -------------------------------------------

_WITNESS_A = "Requested loan amount: $412,500 as stated on the signed application."
_WITNESS_B = "Appraised value of the subject property: $455,000 per the field review."


def commutativity_witness(backend: Backend, budget: Budget = Budget(200)) -> tuple[str, str]:
    """Final summaries after folding events A then B, and B then A.

    The budget holds one of the two fact entries but not both, so whichever
    event arrives first keeps its place.
    """
    log = EventLog("witness-tenant", "witness-case")
    log.append(EventKind.DOCUMENT_CHUNK, "Document excerpt.\n" + _WITNESS_A)
    log.append(EventKind.DOCUMENT_CHUNK, "Document excerpt.\n" + _WITNESS_B)
    a, b = log.events
    start = SummaryState()
    ab = consolidate(consolidate(start, a, budget, backend), b, budget, backend)
    ba = consolidate(consolidate(start, b, budget, backend), a, budget, backend)
    return ab.text, ba.text


def isolation_check(bundle: CaseBundle, foreign: Sequence[EventLog], backend: Backend, budget: Budget,
                    *, mutations: int = 100, seed: int = DEFAULT_SEED) -> bool:
    """Project ``bundle``, append to foreign logs, project again; True when bytes match."""
    before = memory_surface(bundle, Condition.DPM, budget, backend)[0]
    rng = random.Random(seed)
    for i in range(mutations):
        target = foreign[rng.randrange(len(foreign))]
        target.append(EventKind.USER_MESSAGE, f"Foreign note {i}: amount ${rng.randint(1, 999)},000.")
    after = memory_surface(bundle, Condition.DPM, budget, backend)[0]
    return before == after


def verify_exp1(result: Exp1Result, suite: Sequence[CaseBundle]) -> list[str]:
    """Invariant violations for an experiment-1 run; empty when all hold."""
    problems = []
    events = {b.case_id: len(b.events) for b in suite}
    if result.failures:
        problems.append(f"{len(result.failures)} runs failed")
    for r in result.runs:
        want = expected_calls(r.condition, events[r.case_id])
        if r.calls != want or r.surface_count.total != want:
            problems.append(f"{r.run_id}: {r.calls} calls, ledger {r.surface_count.total}, expected {want}")
    expected_total = sum(expected_calls(r.condition, events[r.case_id]) for r in result.runs)
    if result.total_calls() != expected_total:
        problems.append(f"total calls {result.total_calls()} != {expected_total}")
    deterministic = result.manifest.backend_descriptor.get("deterministic", False)
    runs = result.run_map()
    for budget in result.manifest.budgets:
        ids = sorted({c for (c, _, b) in runs if b == budget.name})
        pairs = [(runs.get((c, "dpm", budget.name)), runs.get((c, "summ", budget.name))) for c in ids]
        pairs = [(d, s) for d, s in pairs if d and s]
        if not deterministic or not pairs:
            continue
        if budget.label is BudgetLabel.TIGHT:
            gap = np.mean([d.scores.frp - s.scores.frp for d, s in pairs])
            if gap <= 0:
                problems.append(f"tight FRP gap {gap:+.3f} is not positive")
        if budget.label is BudgetLabel.LOOSE:
            for axis in AXES:
                if any(d.scores.get(axis) != s.scores.get(axis) for d, s in pairs):
                    problems.append(f"loose {axis} delta is not identically zero")
    return problems


def verify_exp2(reports: Sequence[ReplayReport], deterministic: bool) -> list[str]:
    problems = []
    for r in reports:
        if r.partial:
            problems.append(f"{r.case_id}/{r.condition.value}: partial ({len(r.errors)} failed replays)")
        if r.unique_hashes == 1 and (r.mean_edit or r.max_edit):
            problems.append(f"{r.case_id}/{r.condition.value}: one hash but nonzero edit distance")
        if deterministic and (r.unique_hashes != 1 or r.mean_edit != 0.0):
            problems.append(f"{r.case_id}/{r.condition.value}: {r.unique_hashes} hashes under a deterministic backend")
    return problems
