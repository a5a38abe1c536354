from __future__ import annotations

import json

import pytest

from dpm.audit import AuditedBackend, AuditLedger, export_archive, rolling_digest, verify_archive
from dpm.backends import ExtractiveBackend, Role
from dpm.errors import IntegrityError, LedgerClosedError, UnknownRunError
from dpm.pipeline import run_case
from dpm.projection import Budget


def test_record_and_count():
    ledger = AuditLedger()
    rid = ledger.open_run("r1")
    ledger.record_call(rid, Role.PROJECTION, "in", "out", 0.1)
    ledger.record_call(rid, "decision", "in2", "out2", 0.2)
    ledger.close_run(rid)
    assert ledger.surface_count(rid).to_dict() == {"consolidation": 0, "projection": 1, "decision": 1, "total": 2}
    assert ledger.storage_footprint(rid) == 0


def test_closed_run_rejects_writes():
    ledger = AuditLedger()
    rid = ledger.open_run()
    ledger.close_run(rid)
    with pytest.raises(LedgerClosedError):
        ledger.record_call(rid, Role.DECISION, "a", "b", 0.0)


def test_unknown_run():
    with pytest.raises(UnknownRunError):
        AuditLedger().surface_count("nope")


def test_call_ids_must_increase():
    ledger = AuditLedger()
    rid = ledger.open_run()
    ledger.record_call(rid, Role.DECISION, "a", "b", 0.0, call_id=5)
    with pytest.raises(ValueError):
        ledger.record_call(rid, Role.DECISION, "a", "b", 0.0, call_id=5)


def test_full_capture_footprint_and_digests():
    ledger = AuditLedger("full")
    rid = ledger.open_run()
    rec = ledger.record_call(rid, Role.CONSOLIDATION, "héllo", "wörld", 0.0)
    assert ledger.storage_footprint(rid) == len("héllo".encode()) + len("wörld".encode())
    assert rec.input_text == "héllo"


def test_ledger_file_round_trip_and_tamper(tmp_path):
    ledger = AuditLedger()
    rid = ledger.open_run("run")
    for i in range(5):
        ledger.record_call(rid, Role.CONSOLIDATION, f"in{i}", f"out{i}", 0.01)
    path = ledger.write(rid, tmp_path)
    back, back_id = AuditLedger.read(path)
    assert back.digest(back_id) == ledger.digest(rid) == rolling_digest(ledger.records(rid))
    lines = path.read_text().splitlines()
    rec = json.loads(lines[2])
    rec["output_chars"] += 1
    lines[2] = json.dumps(rec, sort_keys=True, separators=(",", ":"))
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(IntegrityError):
        AuditLedger.read(path)


def test_every_response_has_one_record(large):
    ledger = AuditLedger()
    result = run_case(large[0], "summ", Budget.named("tight"), ExtractiveBackend(), ledger=ledger)
    ids = [r.call_id for r in ledger.records(result.run_id)]
    assert len(ids) == len(set(ids)) == result.calls == len(large[0].events) + 1
    assert ids == sorted(ids)


def test_dpm_replay_digests_match(large):
    digests = []
    for _ in range(2):
        ledger = AuditLedger()
        r = run_case(large[2], "dpm", Budget.named("moderate"), ExtractiveBackend(), ledger=ledger)
        digests.append([(x.input_digest, x.output_digest) for x in ledger.records(r.run_id)])
    assert digests[0] == digests[1] and len(digests[0]) == 2


@pytest.mark.parametrize("include_log", [True, False])
def test_archive_export_verifies(tmp_path, large, include_log):
    ledger = AuditLedger("full")
    r = run_case(large[0], "dpm", Budget.named("tight"), ExtractiveBackend(), ledger=ledger)
    path = export_archive(ledger, r.run_id, tmp_path / "a.json", log=large[0].log, include_log=include_log)
    assert verify_archive(path)
    data = json.loads(path.read_text())
    assert data["event_log"]["mode"] == ("embedded" if include_log else "reference")
    data["records"][0]["output_text"] += "x"
    path.write_text(json.dumps(data))
    assert not verify_archive(path)


def test_audited_backend_passes_through():
    ledger = AuditLedger()
    rid = ledger.open_run()
    be = AuditedBackend(ExtractiveBackend(), ledger, rid)
    from dpm.decision import decide
    from dpm.projection import Domain, TaskSpec

    decide("FACTS:\n- a", TaskSpec(Domain.LOAN, "q", ("X.1",)), be)
    assert ledger.surface_count(rid).decision == 1


def _footprint_bounds(bundle, budget):
    """(Summ lower bound, DPM upper bound) in payload chars, from case sizes alone.

    At the moderate budget nothing is discarded, so the summary after step k is
    the rendered extraction of events 1..k. Each consolidation call carries the
    prior summary and one event in, and the new summary out. DPM's two calls
    carry the framed log in, the extraction out, the surface in again and a
    capped rationale out.
    """
    from dpm import prompts
    from dpm.backends import DECISION_CHAR_BUDGET
    from dpm.casegen import extraction_chars
    from dpm.projection import BUDGET_CHARS, BudgetLabel

    assert budget.chars >= BUDGET_CHARS[BudgetLabel.MODERATE]
    fixed_c = len(prompts.template("consolidation")) - 40
    lines, prev, summ_lower = [], len("FACTS:\n- UNKNOWN\nREASONING:\n- UNKNOWN\nCOMPLIANCE NOTES:\n- UNKNOWN"), 0
    for e in bundle.events:
        lines += [(e.seq, ln.strip()) for ln in e.content.split("\n")]
        cur = extraction_chars(lines)
        summ_lower += fixed_c + prev + len(e.content) + cur
        prev = cur
    framed = sum(len(e.content) + 4 * e.content.count("\n") + len(f"[{e.seq}] ") + 1 for e in bundle.events)
    surface = extraction_chars(lines)
    extras = len(bundle.task.question) + sum(len(p) + 2 for p in bundle.task.provisions_universe) + 40
    dpm_upper = (len(prompts.template("projection")) + extras + framed + surface
                 + len(prompts.template("decision")) + len(bundle.task.question) + surface + 4 * (surface // 20)
                 + DECISION_CHAR_BUDGET)
    return summ_lower, dpm_upper


def test_full_capture_footprint_ratio(large):
    """Summ-only persists at least ten times DPM's payload bytes where the size bound says so."""
    budget = Budget.named("moderate")
    qualifying = 0
    for bundle in large:
        summ_lower, dpm_upper = _footprint_bounds(bundle, budget)
        bound = summ_lower / dpm_upper
        ledger = AuditLedger("full")
        dpm = run_case(bundle, "dpm", budget, ExtractiveBackend(), ledger=ledger)
        summ = run_case(bundle, "summ", budget, ExtractiveBackend(), ledger=ledger)
        dpm_bytes, summ_bytes = ledger.storage_footprint(dpm.run_id), ledger.storage_footprint(summ.run_id)
        assert dpm_bytes <= dpm_upper and summ_bytes >= summ_lower, bundle.case_id
        assert summ_bytes / dpm_bytes >= bound
        if bound >= 10:
            qualifying += 1
            assert summ_bytes / dpm_bytes >= 10
        assert summ.snapshots is not None and len(summ.snapshots) == len(bundle.events)
    assert qualifying >= 1
