"""Audit ledger: one record per backend call, surface counts, export.

Capture modes:

``digest`` (default)
    input/output SHA-256 plus sizes and latency.
``full``
    additionally keeps the prompt and completion text, so the storage
    footprint of a decision becomes measurable.

Ledger files are JSONL, one record per line, closed by a manifest line that
carries a rolling digest over the canonical record lines. Any single-record
edit breaks the rolling digest.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from dpm.backends import Backend, BackendRequest, BackendResponse, Role
from dpm.errors import IntegrityError, LedgerClosedError, UnknownRunError
from dpm.event_log import EventLog, format_ts, sha256_text

GENESIS = "0" * 64


@dataclass(frozen=True)
class AuditRecord:
    run_id: str
    call_id: int
    role: str
    input_digest: str
    output_digest: str
    input_chars: int
    output_chars: int
    latency: float
    backend: str
    timestamp: str
    input_text: str | None = None
    output_text: str | None = None

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    def payload_bytes(self) -> int:
        n = 0
        if self.input_text is not None:
            n += len(self.input_text.encode("utf-8"))
        if self.output_text is not None:
            n += len(self.output_text.encode("utf-8"))
        return n


@dataclass(frozen=True)
class SurfaceCount:
    consolidation: int
    projection: int
    decision: int

    @property
    def total(self) -> int:
        return self.consolidation + self.projection + self.decision

    def to_dict(self) -> dict:
        return {"consolidation": self.consolidation, "projection": self.projection,
                "decision": self.decision, "total": self.total}


def rolling_digest(records) -> str:
    h = GENESIS
    for rec in records:
        h = hashlib.sha256((h + rec.canonical()).encode("utf-8")).hexdigest()
    return h


@dataclass
class _Run:
    run_id: str
    records: list[AuditRecord] = field(default_factory=list)
    closed: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock)


class AuditLedger:
    def __init__(self, capture: str = "digest"):
        if capture not in ("digest", "full"):
            raise ValueError("capture must be 'digest' or 'full'")
        self.capture = capture
        self._runs: dict[str, _Run] = {}
        self._lock = threading.Lock()

    @property
    def full(self) -> bool:
        return self.capture == "full"

    def open_run(self, run_id: str | None = None) -> str:
        run_id = run_id or uuid.uuid4().hex[:12]
        with self._lock:
            if run_id in self._runs:
                raise ValueError(f"run {run_id} already exists")
            self._runs[run_id] = _Run(run_id)
        return run_id

    def close_run(self, run_id: str) -> None:
        self._get(run_id).closed = True

    def _get(self, run_id: str) -> _Run:
        try:
            return self._runs[run_id]
        except KeyError:
            raise UnknownRunError(f"unknown run {run_id!r}") from None

    def run_ids(self) -> list[str]:
        return list(self._runs)

    def records(self, run_id: str) -> list[AuditRecord]:
        return list(self._get(run_id).records)

    def record_call(self, run_id: str, role: Role | str, input: str, output: str, latency: float,
                    *, backend: str = "", call_id: int | None = None) -> AuditRecord:
        run = self._get(run_id)
        with run.lock:
            if run.closed:
                raise LedgerClosedError(f"run {run_id} is closed")
            if call_id is None:
                call_id = run.records[-1].call_id + 1 if run.records else 1
            if run.records and call_id <= run.records[-1].call_id:
                raise ValueError(f"call_id {call_id} not increasing in run {run_id}")
            rec = AuditRecord(
                run_id=run_id,
                call_id=call_id,
                role=Role(role).value,
                input_digest=sha256_text(input),
                output_digest=sha256_text(output),
                input_chars=len(input),
                output_chars=len(output),
                latency=latency,
                backend=backend,
                timestamp=format_ts(datetime.now(timezone.utc)),
                input_text=input if self.full else None,
                output_text=output if self.full else None,
            )
            run.records.append(rec)
            return rec

    def surface_count(self, run_id: str) -> SurfaceCount:
        recs = self._get(run_id).records
        counts = {r.value: 0 for r in Role}
        for rec in recs:
            counts[rec.role] += 1
        return SurfaceCount(counts["consolidation"], counts["projection"], counts["decision"])

    def storage_footprint(self, run_id: str) -> int:
        """Persisted payload bytes for the run (0 in digest-only mode)."""
        return sum(r.payload_bytes() for r in self._get(run_id).records)

    def digest(self, run_id: str) -> str:
        return rolling_digest(self._get(run_id).records)

    def write(self, run_id: str, path: str | Path) -> Path:
        path = Path(path)
        if path.is_dir():
            path = path / f"{run_id}.ledger.jsonl"
        recs = self._get(run_id).records
        lines = [r.canonical() for r in recs]
        manifest = {"manifest": True, "run_id": run_id, "records": len(recs),
                    "capture": self.capture, "rolling_digest": rolling_digest(recs)}
        lines.append(json.dumps(manifest, sort_keys=True))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: str | Path) -> tuple[AuditLedger, str]:
        """Load one run's ledger file, verifying its rolling digest."""
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise IntegrityError(f"{path}: empty ledger")
        manifest = json.loads(lines[-1])
        if not manifest.get("manifest"):
            raise IntegrityError(f"{path}: missing manifest line")
        recs = [AuditRecord(**json.loads(line)) for line in lines[:-1]]
        if len(recs) != manifest["records"] or rolling_digest(recs) != manifest["rolling_digest"]:
            raise IntegrityError(f"{path}: rolling digest mismatch")
        ledger = cls(manifest.get("capture", "digest"))
        run = _Run(manifest["run_id"], recs, closed=True)
        ledger._runs[run.run_id] = run
        return ledger, run.run_id


def export_archive(ledger: AuditLedger, run_id: str, path: str | Path, *,
                   log: EventLog | None = None, log_path: str | None = None,
                   include_log: bool = False) -> Path:
    """Write a self-verifying JSON archive for one decision.

    The event log is embedded (``include_log``) or referenced by path and
    chain digest.
    """
    recs = ledger.records(run_id)
    archive: dict = {
        "run_id": run_id,
        "capture": ledger.capture,
        "surface_count": ledger.surface_count(run_id).to_dict(),
        "records": [asdict(r) for r in recs],
        "rolling_digest": rolling_digest(recs),
    }
    if log is not None:
        if include_log:
            archive["event_log"] = {"mode": "embedded", "chain_digest": log.chain_digest,
                                    "events": [e.to_record() for e in log.events]}
        else:
            archive["event_log"] = {"mode": "reference", "chain_digest": log.chain_digest,
                                    "path": log_path or log.file_name()}
    body = json.dumps(archive, sort_keys=True, ensure_ascii=False)
    archive["archive_digest"] = hashlib.sha256(body.encode("utf-8")).hexdigest()
    path = Path(path)
    path.write_text(json.dumps(archive, sort_keys=True, ensure_ascii=False, indent=1), encoding="utf-8")
    return path


def verify_archive(path: str | Path) -> bool:
    archive = json.loads(Path(path).read_text(encoding="utf-8"))
    claimed = archive.pop("archive_digest", None)
    body = json.dumps(archive, sort_keys=True, ensure_ascii=False)
    if hashlib.sha256(body.encode("utf-8")).hexdigest() != claimed:
        return False
    recs = [AuditRecord(**r) for r in archive["records"]]
    if rolling_digest(recs) != archive["rolling_digest"]:
        return False
    for rec in recs:
        if rec.input_text is not None and sha256_text(rec.input_text) != rec.input_digest:
            return False
        if rec.output_text is not None and sha256_text(rec.output_text) != rec.output_digest:
            return False
    log = archive.get("event_log")
    if log and log["mode"] == "embedded":
        h = hashlib.sha256()
        for ev in log["events"]:
            if sha256_text(ev["content"]) != ev["sha256"]:
                return False
            h.update(ev["sha256"].encode("ascii"))
        if h.hexdigest() != log["chain_digest"]:
            return False
    return True


class AuditedBackend(Backend):
    """Backend wrapper that writes one ledger record per call into ``run_id``."""

    def __init__(self, inner: Backend, ledger: AuditLedger, run_id: str):
        self.inner = inner
        self.ledger = ledger
        self.run_id = run_id
        self.descriptor = inner.descriptor
        self.model_tag = inner.model_tag

    def next_call_id(self) -> int:
        return self.inner.next_call_id()

    def complete(self, req: BackendRequest) -> BackendResponse:
        start = time.perf_counter()
        resp = self.inner.complete(req)
        latency = resp.latency if resp.latency else time.perf_counter() - start
        self.ledger.record_call(self.run_id, req.role, req.prompt, resp.text, latency,
                                backend=self.descriptor.name, call_id=resp.call_id)
        return resp
