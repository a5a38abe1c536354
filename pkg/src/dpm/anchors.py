"""Anchor grammar shared by the extractive backend, the case generator and scoring.

An anchor is a verbatim fact token. Four classes are recognised:

* currency amounts   ``$412,500`` or ``$1,250.75``
* ISO dates          ``2026-04-20``
* identifiers        ``LN-40213`` (2-4 capitals, dash, 3-6 digits)
* percentages        ``43%`` or ``38.5%``

Lines are further classified as disqualifier, reasoning or compliance lines.
Provision identifiers (``ECOA.1002.9``) deliberately never match an anchor
class so compliance text and fact text stay separable.
"""

from __future__ import annotations

import re

CURRENCY_RE = re.compile(r"\$\d{1,3}(?:,\d{3})*(?:\.\d{2})?(?![\d,])")
DATE_RE = re.compile(r"(?<![\d-])\d{4}-\d{2}-\d{2}(?![\d-])")
IDENTIFIER_RE = re.compile(r"(?<![A-Za-z0-9-])[A-Z]{2,4}-\d{3,6}(?![\d-])")
PERCENT_RE = re.compile(r"(?<![\d.])\d{1,3}(?:\.\d{1,2})?%")

ANCHOR_PATTERNS = (
    ("currency", CURRENCY_RE),
    ("date", DATE_RE),
    ("identifier", IDENTIFIER_RE),
    ("percent", PERCENT_RE),
)

PROVISION_RE = re.compile(r"(?<![A-Za-z0-9.])[A-Z][A-Za-z]{1,5}(?:\.\d+)+[a-z]?(?![\d.]*\d)")
DISQUALIFIER_MARK = "DISQUALIFIER:"
REASONING_RE = re.compile(r"^(?:Reasoning|Inference|Assessment):")

_WORD_RE = re.compile(r"[a-z]+")
_STOPWORDS = frozenset(
    """
    about above after again against also among because been before being below
    between both could does doing down during each from further have having here
    into itself just more most must once only other over same should some such
    than that their them then there these they this those through under until
    very were what when where which while whom with would your whether using
    decide approve deny
    """.split()
)


def find_anchors(text: str) -> list[str]:
    """Return anchors in order of first appearance, without duplicates."""
    hits: list[tuple[int, str]] = []
    for _, pattern in ANCHOR_PATTERNS:
        hits.extend((m.start(), m.group()) for m in pattern.finditer(text))
    hits.sort()
    seen: set[str] = set()
    out = []
    for _, token in hits:
        if token not in seen:
            seen.add(token)
            out.append(token)
    return out


def has_anchor(text: str) -> bool:
    return any(p.search(text) for _, p in ANCHOR_PATTERNS)


def find_provisions(text: str) -> list[str]:
    return PROVISION_RE.findall(text)


def classify_line(line: str) -> str | None:
    """Section a log line belongs to: ``facts``, ``reasoning``, ``compliance`` or None.

    Precedence: disqualifier, reasoning marker, provision token, anchor.
    """
    if DISQUALIFIER_MARK in line:
        return "facts"
    if REASONING_RE.match(line):
        return "reasoning"
    if PROVISION_RE.search(line):
        return "compliance"
    if has_anchor(line):
        return "facts"
    return None


def content_words(text: str) -> set[str]:
    """Lower-cased alphabetic words of 4+ letters minus stopwords."""
    return {w for w in _WORD_RE.findall(text.lower()) if len(w) >= 4 and w not in _STOPWORDS}


def normalize_ws(text: str) -> str:
    return " ".join(text.split())
