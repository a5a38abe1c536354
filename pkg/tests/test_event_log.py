from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpm import event_log as elog
from dpm.errors import IntegrityError, LogFormatError, SealedLogError
from dpm.event_log import EMPTY_CHAIN_DIGEST, EventKind, EventLog

TS = datetime(2026, 3, 1, 12, 0, tzinfo=timezone.utc)
texts = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=80)


def _log(*contents):
    log = EventLog("tenant-a", "case-1")
    for c in contents:
        log.append(EventKind.DOCUMENT_CHUNK, c, TS)
    return log


def test_append_assigns_contiguous_seqs():
    log = _log("one", "two", "three")
    assert [e.seq for e in log.events] == [1, 2, 3]
    assert all(e.verify() for e in log.events)


def test_empty_log_chain_digest_is_sha256_of_nothing():
    assert EventLog("t", "c").chain_digest == EMPTY_CHAIN_DIGEST
    assert EMPTY_CHAIN_DIGEST == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_chain_digest_matches_manual_concatenation():
    log = _log("alpha", "beta")
    manual = hashlib.sha256(
        (hashlib.sha256(b"alpha").hexdigest() + hashlib.sha256(b"beta").hexdigest()).encode()
    ).hexdigest()
    assert log.chain_digest == manual == elog.compute_chain_digest([e.content_digest for e in log.events])


def test_empty_content_rejected():
    with pytest.raises(ValueError):
        _log("")


def test_sealed_log_rejects_append():
    log = _log("x")
    log.seal()
    with pytest.raises(SealedLogError):
        log.append(EventKind.INFERENCE, "y")


def test_snapshot_is_sealed_and_detached():
    log = _log("x")
    snap = log.snapshot()
    log.append(EventKind.USER_MESSAGE, "later", TS)
    assert snap.sealed and len(snap) == 1 and len(log) == 2
    assert snap.chain_digest != log.chain_digest


def test_events_are_immutable():
    ev = _log("x").events[0]
    with pytest.raises(AttributeError):
        ev.content = "changed"


def test_store_uses_conventional_name_and_field_names(tmp_path):
    path = elog.store(_log("a\nb"), tmp_path)
    assert path.name == "tenant-a__case-1.events.jsonl"
    rec = json.loads(path.read_text().splitlines()[0])
    assert list(rec) == ["seq", "tenant", "case", "kind", "ts", "content", "sha256"]
    assert rec["ts"] == "2026-03-01T12:00:00Z"


def test_load_empty_file_takes_ids_from_name(tmp_path):
    path = tmp_path / "t9__c9.events.jsonl"
    path.write_text("")
    log = elog.load(path)
    assert (log.tenant_id, log.case_id, len(log)) == ("t9", "c9", 0)


def test_load_detects_tampered_content(tmp_path):
    path = elog.store(_log("first", "second"), tmp_path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["content"] = "secund"
    lines[1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(IntegrityError, match="seq 2"):
        elog.load(path)


def test_load_reports_line_of_bad_json(tmp_path):
    path = elog.store(_log("first", "second"), tmp_path)
    path.write_text(path.read_text().splitlines()[0] + "\n{not json\n")
    with pytest.raises(LogFormatError) as info:
        elog.load(path)
    assert info.value.lineno == 2


def test_load_rejects_seq_gap(tmp_path):
    path = elog.store(_log("a", "b", "c"), tmp_path)
    lines = path.read_text().splitlines()
    path.write_text(lines[0] + "\n" + lines[2] + "\n")
    with pytest.raises(LogFormatError, match="contiguity"):
        elog.load(path)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(list(EventKind)), texts), min_size=1, max_size=12))
def test_store_load_round_trip(tmp_path_factory, items):
    log = EventLog("ten", "case")
    for kind, content in items:
        log.append(kind, content, TS)
    path = elog.store(log, tmp_path_factory.mktemp("rt"))
    back = elog.load(path)
    assert back.events == log.events
    assert back.chain_digest == log.chain_digest


def test_logs_share_no_state():
    a, b = EventLog("ta", "c"), EventLog("tb", "c")
    a.append(EventKind.INFERENCE, "only in a", TS)
    assert len(b) == 0 and b.chain_digest == EMPTY_CHAIN_DIGEST
