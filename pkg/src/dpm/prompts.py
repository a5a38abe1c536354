"""Prompt templates and the framing contract between callers and backends.

Templates are versioned text assets under ``dpm/templates``. Their SHA-256
digests go into every run manifest so a replay can assert prompt identity.

Framing rules shared by all templates:

* an event is ``[k] <first line>`` followed by its remaining lines, each
  indented by four spaces;
* a nested surface (prior summary, memory) is indented by four spaces;
* the prompt ends with a ``BUDGET: <n> characters.`` line where applicable.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

from dpm.errors import ProtocolError

TEMPLATE_VERSION = "v1"
INDENT = "    "
_EVENT_HEAD_RE = re.compile(r"^\[(\d+)\] ?(.*)$")


@lru_cache(maxsize=None)
def template(role: str, version: str = TEMPLATE_VERSION) -> str:
    return resources.files("dpm.templates").joinpath(f"{role}_{version}.txt").read_text(encoding="utf-8")


def template_digests(version: str = TEMPLATE_VERSION) -> dict[str, str]:
    return {
        role: hashlib.sha256(template(role, version).encode("utf-8")).hexdigest()
        for role in ("projection", "consolidation", "decision")
    }


def _fill(text: str, **values: str) -> str:
    for key, value in values.items():
        text = text.replace("{{" + key + "}}", value)
    return text.rstrip("\n")


def indent_block(text: str) -> str:
    return "\n".join(INDENT + line for line in text.split("\n"))


def dedent_block(lines: Sequence[str]) -> str:
    out = []
    for line in lines:
        if not line.startswith(INDENT) and line != "":
            raise ProtocolError(f"expected indented block line, got {line!r}")
        out.append(line[len(INDENT):])
    return "\n".join(out)


def format_event(seq: int, content: str) -> str:
    first, *rest = content.split("\n")
    return "\n".join([f"[{seq}] {first}"] + [INDENT + line for line in rest])


def format_events(events: Iterable[tuple[int, str]]) -> str:
    return "\n".join(format_event(seq, content) for seq, content in events)


def parse_events(lines: Sequence[str]) -> list[tuple[int, str]]:
    events: list[tuple[int, list[str]]] = []
    for line in lines:
        m = _EVENT_HEAD_RE.match(line)
        if m:
            events.append((int(m.group(1)), [m.group(2)]))
        elif line.startswith(INDENT) and events:
            events[-1][1].append(line[len(INDENT):])
        elif line == "" and not events:
            continue
        else:
            raise ProtocolError(f"unframed line in event block: {line!r}")
    return [(seq, "\n".join(parts)) for seq, parts in events]


def render_projection(question: str, domain: str, provisions: Sequence[str],
                      events: Iterable[tuple[int, str]], budget: int) -> str:
    return _fill(
        template("projection"),
        TASK=question,
        DOMAIN=domain,
        PROVISIONS=", ".join(provisions),
        EVENTS=format_events(events),
        BUDGET=str(budget),
    )


def render_consolidation(summary: str, seq: int, content: str, budget: int) -> str:
    return _fill(
        template("consolidation"),
        SUMMARY=indent_block(summary),
        EVENT=format_event(seq, content),
        BUDGET=str(budget),
    )


def render_decision(question: str, surface: str) -> str:
    return _fill(template("decision"), TASK=question, MEMORY=indent_block(surface))


def _user_lines(prompt: str) -> list[str]:
    head, sep, body = prompt.partition("\nUSER:\n")
    if not sep:
        raise ProtocolError("prompt has no USER: block")
    return body.split("\n")


def _take_key(lines: list[str], i: int, key: str) -> tuple[str, int]:
    if i >= len(lines) or not lines[i].startswith(key):
        found = lines[i] if i < len(lines) else "<end>"
        raise ProtocolError(f"expected {key!r} at user line {i + 1}, found {found!r}")
    return lines[i][len(key):], i + 1


def _parse_budget(line: str) -> int:
    m = re.fullmatch(r"BUDGET: (\d+) characters\.", line)
    if not m:
        raise ProtocolError(f"malformed budget line: {line!r}")
    return int(m.group(1))


@dataclass(frozen=True)
class ProjectionPrompt:
    question: str
    domain: str
    provisions: tuple[str, ...]
    events: tuple[tuple[int, str], ...]
    budget: int


@dataclass(frozen=True)
class ConsolidationPrompt:
    summary: str
    event: tuple[int, str]
    budget: int


@dataclass(frozen=True)
class DecisionPrompt:
    question: str
    surface: str


def parse_projection(prompt: str) -> ProjectionPrompt:
    lines = _user_lines(prompt)
    question, i = _take_key(lines, 0, "TASK: ")
    domain, i = _take_key(lines, i, "DOMAIN: ")
    provisions, i = _take_key(lines, i, "PROVISIONS: ")
    _, i = _take_key(lines, i, "EVENTS:")
    end = len(lines) - 1
    if end < i or not lines[end].startswith("BUDGET: "):
        raise ProtocolError("projection prompt has no BUDGET line")
    events = parse_events(lines[i:end])
    provs = tuple(p.strip() for p in provisions.split(",") if p.strip())
    return ProjectionPrompt(question, domain, provs, tuple(events), _parse_budget(lines[end]))


def parse_consolidation(prompt: str) -> ConsolidationPrompt:
    lines = _user_lines(prompt)
    _, i = _take_key(lines, 0, "PRIOR SUMMARY:")
    try:
        j = lines.index("NEW EVENT:", i)
    except ValueError:
        raise ProtocolError("consolidation prompt has no NEW EVENT: block") from None
    summary = dedent_block(lines[i:j])
    if not lines[-1].startswith("BUDGET: "):
        raise ProtocolError("consolidation prompt has no BUDGET line")
    events = parse_events(lines[j + 1 : -1])
    if len(events) != 1:
        raise ProtocolError(f"consolidation prompt must carry one event, got {len(events)}")
    return ConsolidationPrompt(summary, events[0], _parse_budget(lines[-1]))


def parse_decision(prompt: str) -> DecisionPrompt:
    lines = _user_lines(prompt)
    question, i = _take_key(lines, 0, "TASK: ")
    _, i = _take_key(lines, i, "MEMORY:")
    try:
        j = len(lines) - 1 - lines[::-1].index("END MEMORY")
    except ValueError:
        raise ProtocolError("decision prompt has no END MEMORY marker") from None
    if j < i:
        raise ProtocolError("END MEMORY precedes MEMORY:")
    return DecisionPrompt(question, dedent_block(lines[i:j]))
