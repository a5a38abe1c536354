"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line."""

from __future__ import annotations

import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from dpm import event_log as elog
from dpm.anchors import classify_line
from dpm.audit import AuditLedger
from dpm.backends import ExtractiveBackend
from dpm.event_log import EventKind, EventLog
from dpm.experiment import ExperimentManifest, commutativity_witness, run_exp1
from dpm.pipeline import Condition, memory_surface, run_case
from dpm.projection import BUDGET_CHARS, PAPER_BUDGETS, Budget, BudgetLabel, project, render
from dpm.replay_study import binomial_se, expected_drift_rate, replay_study
from dpm.stats import PairedSample, cohens_h, paired_permutation
from dpm.summ_baseline import run_trajectory
from dpm.tams import Choice, Rule, TamsInput, tams_select
from dpm.view import HEADERS, SECTIONS, parse_view


@pytest.fixture
def report(capsys):
    def _report(n: int, ok: bool, what: str, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[acceptance {n:>2}] {'PASS' if ok else 'FAIL'} {what}: {detail}")
        assert ok, f"criterion {n} failed: {detail}"

    return _report


def test_ac01_replay_identity(suite, report):
    start = time.perf_counter()
    bad = []
    for bundle in suite:
        for cond in Condition:
            for budget in PAPER_BUDGETS:
                r = replay_study(bundle, cond, budget, "extractive", 10)
                if r.unique_hashes != 1 or r.mean_edit != 0.0 or r.max_edit != 0.0 or r.partial:
                    bad.append(f"{bundle.case_id}/{cond.value}/{budget.name}")
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 60
    report(1, ok, "replay identity on the extractive backend",
           f"{len(suite) * 2 * 3} cells x 10 replays, {len(bad)} non-identical, {elapsed:.1f}s (limit 60s)")


def test_ac02_audit_surface_arithmetic(suite, report):
    seen_n, bad = set(), []
    for bundle in suite:
        n = len(bundle.events)
        seen_n.add(n)
        for budget in (Budget.named("tight"), Budget.named("loose")):
            ledger = AuditLedger()
            dpm = run_case(bundle, "dpm", budget, ExtractiveBackend(), ledger=ledger)
            summ = run_case(bundle, "summ", budget, ExtractiveBackend(), ledger=ledger)
            d, s = ledger.surface_count(dpm.run_id), ledger.surface_count(summ.run_id)
            if (d.total, d.projection, d.decision, d.consolidation) != (2, 1, 1, 0):
                bad.append(f"{bundle.case_id} dpm {d.to_dict()}")
            if (s.total, s.consolidation, s.decision, s.projection) != (n + 1, n, 1, 0):
                bad.append(f"{bundle.case_id} summ {s.to_dict()}")
    large_n = sorted(x for x in seen_n if x > 50)
    ok = not bad and {16, 22} <= seen_n and all(82 <= x <= 96 for x in large_n)
    report(2, ok, "audit surfaces DPM = 2, Summ-only = n + 1",
           f"n in {sorted(seen_n)}, {len(bad)} mismatches")


def test_ac03_drift_scaling(small, report):
    eps, replays = 0.05, 200
    start = time.perf_counter()
    lines, ok = [], True
    for bundle in small:
        for cond in Condition:
            k = 1 if cond is Condition.DPM else len(bundle.events)
            r = replay_study(bundle, cond, Budget(2000), f"noisy:{eps}", replays)
            p = expected_drift_rate(eps, k)
            se = binomial_se(p, replays)
            within = abs(r.drifted_fraction - p) <= 3 * se
            ok &= within and not r.partial
            lines.append(f"{bundle.case_id}/{cond.value} k={k} observed={r.drifted_fraction:.3f} "
                         f"expected={p:.3f} 3se={3 * se:.3f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    report(3, ok, "drift rate 1-(1-eps)^k within 3 binomial SE", "; ".join(lines) + f"; {elapsed:.1f}s")


def test_ac04_statistics_regression(report):
    h1, h2, h3 = cohens_h(0.907, 0.392), cohens_h(0.800, 0.267), cohens_h(1.0, 0.5)
    p = paired_permutation(np.full(10, 0.5))
    p_neg = paired_permutation(np.full(10, -0.25))
    ok = (abs(h1 - 1.17) <= 0.01 and abs(h2 - 1.13) <= 0.01 and abs(h3 - 1.571) <= 0.001
          and p == 2 / 1024 and p_neg == 2 / 1024)
    report(4, ok, "Cohen's h and the exhaustive permutation floor",
           f"h=({h1:.4f}, {h2:.4f}, {h3:.4f}) p={p:.6f} (2/1024={2 / 1024:.6f})")


def _summ_frp_oracle(bundle, budget_chars: int) -> float:
    """Anchor survival under the head-keeping consolidation rule, simulated from raw lines.

    Each event's extractable lines are appended in order; lines are removed from
    the newest end until the rendered view fits. Earlier entries are never lost.
    """
    kept = {name: [] for name in SECTIONS}
    present = set()

    def size():
        total = 0
        for name in SECTIONS:
            total += len(HEADERS[name]) + 1
            total += sum(len(x) + 1 for x in kept[name]) if kept[name] else len("- UNKNOWN") + 1
        return total - 1

    for e in bundle.events:
        added = []
        for raw in e.content.split("\n"):
            line = raw.strip()
            section = classify_line(line) if line else None
            if section is None or (section, line) in present:
                continue
            present.add((section, line))
            kept[section].append(f"- {line} [{e.seq}]")
            added.append(section)
        while size() > budget_chars and added:
            kept[added.pop()].pop()
    text = "\n".join(x for name in SECTIONS for x in kept[name])
    return sum(a in text for a in bundle.truth.required_anchors) / len(bundle.truth.required_anchors)


def test_ac05_budget_binding_direction(suite, large, report):
    result = run_exp1(suite, ExperimentManifest())
    runs = result.run_map()
    ids = sorted(b.case_id for b in large)
    tight = [runs[(c, "dpm", "tight")].scores.frp - runs[(c, "summ", "tight")].scores.frp for c in ids]
    p = paired_permutation(tight)
    oracle_ok = all(
        math.isclose(runs[(b.case_id, "summ", "tight")].scores.frp, _summ_frp_oracle(b, BUDGET_CHARS[BudgetLabel.TIGHT]))
        for b in large
    )
    loose_zero = all(
        runs[(c, "dpm", "loose")].scores.get(axis) == runs[(c, "summ", "loose")].scores.get(axis)
        for c in ids for axis in ("frp", "rcs", "eda", "crr")
    )
    mean_gap = float(np.mean(tight))
    ok = mean_gap > 0 and p <= 0.01 and oracle_ok and loose_zero
    report(5, ok, "tight FRP gap positive and significant, loose deltas zero",
           f"tight mean dFRP={mean_gap:+.3f} p={p:.5f} (n={len(ids)}), oracle agrees={oracle_ok}, "
           f"loose all-zero={loose_zero}")


_FOREIGN_TEXT = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=60)


@pytest.fixture(scope="module")
def isolation_state(suite):
    fixed = suite[0]
    foreign = []
    for bundle in suite[1:]:
        log = EventLog(bundle.tenant_id, bundle.case_id)
        for e in bundle.events:
            log.append(e.kind, e.content, e.timestamp)
        foreign.append(log)
    foreign += [EventLog(f"tenant-{i:03d}", f"case-{i:03d}") for i in range(100 - len(foreign))]
    budget = Budget.named("tight")
    baseline = render(project(fixed.log, fixed.task, budget, ExtractiveBackend()))
    return fixed, foreign, budget, baseline, {"checks": 0, "diffs": 0}


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.tuples(st.integers(0, 99), st.sampled_from(list(EventKind)), _FOREIGN_TEXT),
                min_size=100, max_size=100))
def test_ac06_tenant_isolation_property(isolation_state, mutations):
    fixed, foreign, budget, baseline, tally = isolation_state
    backend = ExtractiveBackend()
    before = render(project(fixed.log, fixed.task, budget, backend))
    for idx, kind, text in mutations:
        foreign[idx].append(kind, text)
    after = render(project(fixed.log, fixed.task, budget, backend))
    tally["checks"] += 1
    tally["diffs"] += int(before != after or after != baseline)
    assert before == after == baseline


def test_ac06_tenant_isolation_report(isolation_state, report):
    fixed, foreign, budget, baseline, tally = isolation_state
    mutated = sum(len(log) > 0 for log in foreign)
    ok = tally["checks"] > 0 and tally["diffs"] == 0
    report(6, ok, "foreign-log mutation leaves the projection byte-identical",
           f"{tally['checks']} property examples x 100 mutations over {len(foreign)} foreign logs "
           f"({mutated} non-empty), {tally['diffs']} differing surfaces")


def test_ac07_suite_fidelity(large, small, report):
    events_ok = all(82 <= len(b.events) <= 96 for b in large)
    chars_ok = all(26_000 <= b.total_chars <= 28_000 for b in large)
    mean_chars = float(np.mean([b.total_chars for b in large]))
    ratios = [mean_chars / b.chars for b in PAPER_BUDGETS]
    ratio_ok = all(abs(r - t) / t <= 0.05 for r, t in zip(ratios, (20.0, 5.0, 2.0)))
    per_case_ok = all(abs(b.total_chars / bud.chars - t) / t <= 0.05
                      for b in large for bud, t in zip(PAPER_BUDGETS, (20.0, 5.0, 2.0)))
    small_ok = all(16 <= len(b.events) <= 22 and 2_250 <= b.total_chars <= 2_400 for b in small)
    ok = events_ok and chars_ok and ratio_ok and per_case_ok and small_ok
    report(7, ok, "suite sizes and compression ratios",
           f"large events {min(len(b.events) for b in large)}-{max(len(b.events) for b in large)}, "
           f"chars {min(b.total_chars for b in large)}-{max(b.total_chars for b in large)}, "
           f"rho={', '.join(f'{r:.2f}' for r in ratios)}; small "
           f"{[(len(b.events), b.total_chars) for b in small]}")


def test_ac08_tams_table(report):
    mismatches, total = 0, 0
    for flags in itertools.product((False, True), repeat=3):
        for rho in (2.0, 5.0, 20.0):
            total += 1
            want = ((Choice.DPM, Rule.ENTERPRISE_PROPERTY) if any(flags)
                    else (Choice.DPM, Rule.COMPRESSION_RATIO) if rho > 10
                    else (Choice.EITHER, Rule.DEFAULT))
            d = tams_select(TamsInput(*flags, rho))
            mismatches += (d.choice, d.triggered_rule) != want
    report(8, mismatches == 0 and total == 24, "TAMS decision table", f"{total} combinations, {mismatches} mismatches")


def test_ac09_non_commutativity(report):
    ab, ba = commutativity_witness(ExtractiveBackend())
    ok = ab != ba and len(ab) <= 200 and len(ba) <= 200
    report(9, ok, "consolidation order changes the final summary",
           f"A-then-B and B-then-A summaries differ={ab != ba} ({len(ab)} vs {len(ba)} chars, budget 200)")


def test_ac10_round_trips(suite, tmp_path, report):
    log_ok, views, view_ok = True, 0, True
    for bundle in suite:
        path = elog.store(bundle.log, tmp_path)
        back = elog.load(path, seal=True)
        log_ok &= back.events == bundle.log.events and back.chain_digest == bundle.log.chain_digest
        for budget in PAPER_BUDGETS:
            for cond in Condition:
                surface = memory_surface(bundle, cond, budget, ExtractiveBackend())[0]
                views += 1
                view_ok &= render(parse_view(surface)) == surface
        run = run_trajectory(bundle.log, Budget.named("tight"), ExtractiveBackend(), keep_snapshots=True)
        for snap in run.per_step_surfaces:
            views += 1
            view_ok &= render(parse_view(snap)) == snap
    report(10, log_ok and view_ok, "store/load and parse/render identity",
           f"{len(suite)} logs identical={log_ok}; {views} views identical={view_ok}")
