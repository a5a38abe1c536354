"""Append-only, tenant-scoped, hash-chained event log.

The log is the single durable representation of a trajectory. Events are
never edited or removed; the only mutating operation is :meth:`EventLog.append`,
and a sealed log rejects even that.

On disk a log is JSONL, one event per line, with keys
``seq, tenant, case, kind, ts, content, sha256``. Files are named
``<tenant>__<case>.events.jsonl``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

from dpm.errors import IntegrityError, LogFormatError, SealedLogError

EMPTY_CHAIN_DIGEST = hashlib.sha256(b"").hexdigest()
FILE_SUFFIX = ".events.jsonl"


class EventKind(str, enum.Enum):
    DOCUMENT_CHUNK = "document_chunk"
    TOOL_OUTPUT = "tool_output"
    USER_MESSAGE = "user_message"
    INFERENCE = "inference"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def format_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_ts(raw: str) -> datetime:
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    ts = datetime.fromisoformat(raw)
    if ts.tzinfo is None:
        raise ValueError(f"timestamp without offset: {raw!r}")
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class Event:
    seq: int
    tenant_id: str
    case_id: str
    kind: EventKind
    timestamp: datetime
    content: str
    content_digest: str

    def verify(self) -> bool:
        return sha256_text(self.content) == self.content_digest

    def to_record(self) -> dict:
        return {
            "seq": self.seq,
            "tenant": self.tenant_id,
            "case": self.case_id,
            "kind": self.kind.value,
            "ts": format_ts(self.timestamp),
            "content": self.content,
            "sha256": self.content_digest,
        }


@dataclass
class EventLog:
    tenant_id: str
    case_id: str
    _events: list[Event] = field(default_factory=list, repr=False)
    _sealed: bool = False
    _chain: "hashlib._Hash" = field(default_factory=hashlib.sha256, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def events(self) -> tuple[Event, ...]:
        return tuple(self._events)

    @property
    def sealed(self) -> bool:
        return self._sealed

    @property
    def chain_digest(self) -> str:
        return self._chain.copy().hexdigest()

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[Event]:
        return iter(tuple(self._events))

    def total_chars(self) -> int:
        return sum(len(e.content) for e in self._events)

    def seqs(self) -> set[int]:
        return {e.seq for e in self._events}

    def append(self, kind: EventKind | str, content: str, timestamp: datetime | None = None) -> int:
        """Append one event and return its 1-based seq."""
        if not content:
            raise ValueError("event content must be non-empty")
        kind = EventKind(kind)
        ts = timestamp or datetime.now(timezone.utc)
        with self._lock:
            if self._sealed:
                raise SealedLogError(f"log {self.tenant_id}/{self.case_id} is sealed")
            event = Event(
                seq=len(self._events) + 1,
                tenant_id=self.tenant_id,
                case_id=self.case_id,
                kind=kind,
                timestamp=ts,
                content=content,
                content_digest=sha256_text(content),
            )
            self._events.append(event)
            self._chain.update(event.content_digest.encode("ascii"))
            return event.seq

    def seal(self) -> None:
        """Finalize the log at decision time; further appends are rejected."""
        with self._lock:
            self._sealed = True

    def snapshot(self) -> EventLog:
        """Sealed copy sharing the (immutable) events."""
        with self._lock:
            snap = EventLog(self.tenant_id, self.case_id, list(self._events), True, self._chain.copy())
        return snap

    def file_name(self) -> str:
        return f"{self.tenant_id}__{self.case_id}{FILE_SUFFIX}"


def compute_chain_digest(content_digests: list[str]) -> str:
    h = hashlib.sha256()
    for d in content_digests:
        h.update(d.encode("ascii"))
    return h.hexdigest()


def store(log: EventLog, path: str | Path) -> Path:
    """Write ``log`` as JSONL. A directory path gets the conventional file name."""
    path = Path(path)
    if path.is_dir():
        path = path / log.file_name()
    lines = [json.dumps(e.to_record(), ensure_ascii=False, sort_keys=False) for e in log.events]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def _ids_from_name(path: Path) -> tuple[str, str]:
    name = path.name
    if name.endswith(FILE_SUFFIX):
        name = name[: -len(FILE_SUFFIX)]
    tenant, sep, case = name.partition("__")
    if not sep:
        return name, name
    return tenant, case


def load(path: str | Path, *, seal: bool = False) -> EventLog:
    """Read a JSONL log, verifying each content digest and seq contiguity."""
    path = Path(path)
    tenant, case = _ids_from_name(path)
    log: EventLog | None = None
    expected = ("seq", "tenant", "case", "kind", "ts", "content", "sha256")
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"{path}: line {lineno}: invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(rec, dict) or any(k not in rec for k in expected):
                raise LogFormatError(f"{path}: line {lineno}: missing fields", lineno)
            try:
                kind = EventKind(rec["kind"])
                ts = parse_ts(rec["ts"])
            except ValueError as exc:
                raise LogFormatError(f"{path}: line {lineno}: {exc}", lineno) from exc
            if log is None:
                log = EventLog(rec["tenant"], rec["case"])
            if (rec["tenant"], rec["case"]) != (log.tenant_id, log.case_id):
                raise LogFormatError(f"{path}: line {lineno}: event belongs to another stream", lineno)
            if rec["seq"] != len(log) + 1:
                raise LogFormatError(f"{path}: line {lineno}: seq {rec['seq']} breaks contiguity", lineno)
            if not isinstance(rec["content"], str) or sha256_text(rec["content"]) != rec["sha256"]:
                raise IntegrityError(f"{path}: line {lineno}: content digest mismatch for seq {rec['seq']}")
            log.append(kind, rec["content"], ts)
    if log is None:
        log = EventLog(tenant, case)
    if seal:
        log.seal()
    return log
