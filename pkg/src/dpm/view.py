"""Memory view structure and its text surface.

The surface layout is fixed::

    FACTS:
    - Requested loan amount: $412,500. [12]
    REASONING:
    - UNKNOWN
    COMPLIANCE NOTES:
    - Compliance: ECOA.1002.9 notice timing applies. [77] [80]

An empty section renders as a single ``- UNKNOWN`` entry. A view that had to be
cut to fit its budget ends with a ``[TRIMMED]`` line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from dpm.anchors import find_provisions
from dpm.errors import ViewFormatError

SECTIONS = ("facts", "reasoning", "compliance")
HEADERS = {"facts": "FACTS:", "reasoning": "REASONING:", "compliance": "COMPLIANCE NOTES:"}
UNKNOWN = "UNKNOWN"
TRIM_SENTINEL = "[TRIMMED]"

_CITES_RE = re.compile(r"((?: \[\d+\])+)$")
_CITE_RE = re.compile(r"\[(\d+)\]")


@dataclass(frozen=True)
class Entry:
    text: str
    citations: tuple[int, ...] = ()

    @property
    def provision_id(self) -> str | None:
        found = find_provisions(self.text)
        return found[0] if found else None

    def line(self) -> str:
        return "- " + self.text + "".join(f" [{k}]" for k in self.citations)


@dataclass(frozen=True)
class MemoryView:
    facts: tuple[Entry, ...] = ()
    reasoning: tuple[Entry, ...] = ()
    compliance: tuple[Entry, ...] = ()
    trimmed: bool = False

    def section(self, name: str) -> tuple[Entry, ...]:
        return getattr(self, name)

    def entries(self):
        for name in SECTIONS:
            for entry in self.section(name):
                yield name, entry

    def citations(self) -> set[int]:
        return {k for _, e in self.entries() for k in e.citations}

    @property
    def surface(self) -> str:
        return render(self)


def render(view: MemoryView) -> str:
    lines: list[str] = []
    for name in SECTIONS:
        lines.append(HEADERS[name])
        entries = view.section(name)
        if entries:
            lines.extend(e.line() for e in entries)
        else:
            lines.append("- " + UNKNOWN)
    if view.trimmed:
        lines.append(TRIM_SENTINEL)
    return "\n".join(lines)


def rendered_length(sections: dict[str, list[Entry]], trimmed: bool = False) -> int:
    """Length of ``render`` for the given sections without building the string."""
    total = 0
    n_lines = 0
    for name in SECTIONS:
        total += len(HEADERS[name])
        entries = sections.get(name) or ()
        if entries:
            total += sum(len(e.line()) for e in entries)
            n_lines += 1 + len(entries)
        else:
            total += 2 + len(UNKNOWN)
            n_lines += 2
    if trimmed:
        total += len(TRIM_SENTINEL)
        n_lines += 1
    return total + n_lines - 1


def parse_entry(line: str) -> Entry:
    if not line.startswith("- ") or len(line) <= 2:
        raise ViewFormatError(f"malformed entry line: {line!r}")
    body = line[2:]
    m = _CITES_RE.search(body)
    cites: tuple[int, ...] = ()
    if m:
        cites = tuple(int(k) for k in _CITE_RE.findall(m.group(1)))
        body = body[: m.start()]
    if not body:
        raise ViewFormatError(f"entry without text: {line!r}")
    return Entry(body, cites)


def parse_view(text: str) -> MemoryView:
    """Strict inverse of :func:`render`."""
    lines = text.split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    trimmed = bool(lines) and lines[-1] == TRIM_SENTINEL
    if trimmed:
        lines.pop()
    header_at: dict[str, int] = {}
    for i, line in enumerate(lines):
        for name, header in HEADERS.items():
            if line == header:
                if name in header_at:
                    raise ViewFormatError(f"duplicate section header {header!r}")
                header_at[name] = i
    for name in SECTIONS:
        if name not in header_at:
            raise ViewFormatError(f"missing section {HEADERS[name]!r}")
    order = [header_at[n] for n in SECTIONS]
    if order != sorted(order):
        raise ViewFormatError("sections out of order; expected FACTS, REASONING, COMPLIANCE NOTES")
    if order[0] != 0:
        raise ViewFormatError("text before FACTS: header")
    bounds = order + [len(lines)]
    parsed: dict[str, tuple[Entry, ...]] = {}
    for idx, name in enumerate(SECTIONS):
        body = lines[bounds[idx] + 1 : bounds[idx + 1]]
        if not body:
            raise ViewFormatError(f"section {HEADERS[name]!r} has no entries")
        if body == ["- " + UNKNOWN]:
            parsed[name] = ()
            continue
        parsed[name] = tuple(parse_entry(line) for line in body)
    return MemoryView(parsed["facts"], parsed["reasoning"], parsed["compliance"], trimmed)


def split_sections(text: str) -> dict[str, str]:
    """Lenient section splitter used for scoring; tolerates malformed surfaces.

    Returns the raw text under each header (empty string when absent).
    """
    out = {name: [] for name in SECTIONS}
    current: str | None = None
    by_header = {h: n for n, h in HEADERS.items()}
    for line in text.split("\n"):
        stripped = line.strip()
        if stripped in by_header:
            current = by_header[stripped]
            continue
        if current is not None:
            out[current].append(line)
    return {name: "\n".join(lines) for name, lines in out.items()}


def trim_to_budget(view: MemoryView, chars: int) -> MemoryView:
    """Drop whole entries from the end of the surface until it fits ``chars``.

    Returns ``view`` unchanged when it already fits; otherwise the result
    carries the trim sentinel.
    """
    if len(render(view)) <= chars:
        return view
    sections = {name: list(view.section(name)) for name in SECTIONS}
    while rendered_length(sections, trimmed=True) > chars:
        for name in reversed(SECTIONS):
            if sections[name]:
                sections[name].pop()
                break
        else:
            raise ViewFormatError(f"budget {chars} below the empty-view skeleton")
    return replace(
        view,
        facts=tuple(sections["facts"]),
        reasoning=tuple(sections["reasoning"]),
        compliance=tuple(sections["compliance"]),
        trimmed=True,
    )


def skeleton_length() -> int:
    return len(render(MemoryView(trimmed=True)))
