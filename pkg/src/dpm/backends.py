"""Model-backend contract and its three implementations.

Every model call in the workbench goes through :meth:`Backend.complete`,
which takes a fully rendered :class:`BackendRequest` and returns exactly one
:class:`BackendResponse`.

``ExtractiveBackend``
    Rule-based, deterministic stand-in for an LLM. Same request, same bytes.
``NoisyBackend``
    Wraps a deterministic backend and, with probability ``epsilon`` per call,
    swaps one content token for a tagged variant. Keyed by (rng_seed, call_id)
    so drift is reproducible.
``RemoteBackend``
    HTTP client for a hosted model at temperature 0. Not byte-deterministic.
"""

from __future__ import annotations

import enum
import itertools
import math
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field

import httpx

from dpm import prompts
from dpm.anchors import (
    DISQUALIFIER_MARK,
    classify_line,
    content_words,
    find_anchors,
    find_provisions,
)
from dpm.errors import (
    ConfigurationError,
    ContextWindowError,
    ProtocolError,
    RemoteRetriableError,
    ViewFormatError,
)
from dpm.view import SECTIONS, Entry, MemoryView, parse_view, render, rendered_length

DEFAULT_SEED = 20260420
CHARS_PER_TOKEN = 3
DECISION_CHAR_BUDGET = 1200


class Role(str, enum.Enum):
    PROJECTION = "projection"
    CONSOLIDATION = "consolidation"
    DECISION = "decision"


@dataclass(frozen=True)
class BackendRequest:
    role: Role
    prompt: str
    char_budget: int
    seed: int = DEFAULT_SEED
    model_tag: str = ""

    def __post_init__(self):
        if self.char_budget <= 0:
            raise ValueError("char_budget must be positive")
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        object.__setattr__(self, "role", Role(self.role))


@dataclass(frozen=True)
class BackendResponse:
    text: str
    input_chars: int
    output_chars: int
    latency: float
    call_id: int
    perturbed: bool = False
    input_tokens: int | None = None
    output_tokens: int | None = None


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    deterministic: bool
    drift_epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.drift_epsilon <= 1.0:
            raise ValueError("drift_epsilon must lie in [0, 1]")
        if self.deterministic and self.drift_epsilon != 0.0:
            raise ValueError("a deterministic backend has drift_epsilon 0")

    def to_dict(self) -> dict:
        return {"name": self.name, "deterministic": self.deterministic, "drift_epsilon": self.drift_epsilon}


class Backend:
    """Base class: call-id assignment shared by all implementations."""

    descriptor: BackendDescriptor
    model_tag: str = ""

    def __init__(self):
        self._ids = itertools.count(1)
        self._id_lock = threading.Lock()

    def next_call_id(self) -> int:
        with self._id_lock:
            return next(self._ids)

    def complete(self, req: BackendRequest) -> BackendResponse:
        raise NotImplementedError


# -- extractive oracle -------------------------------------------------------

TIER_DISQUALIFIER = 0
TIER_RELEVANT_FACT = 1
TIER_REASONING = 2
TIER_COMPLIANCE = 3
TIER_OTHER_FACT = 4


@dataclass
class _Candidate:
    tier: int
    order: int
    section: str
    text: str
    citations: list[int] = field(default_factory=list)


def _event_lines(content: str) -> list[tuple[str, str]]:
    """(section, stripped line) for every extractable line of an event."""
    out = []
    for raw in content.split("\n"):
        line = raw.strip()
        if not line:
            continue
        section = classify_line(line)
        if section is not None:
            out.append((section, line))
    return out


def _tier(section: str, line: str, task_words: set[str], provisions: set[str]) -> int:
    if section == "facts":
        if DISQUALIFIER_MARK in line:
            return TIER_DISQUALIFIER
        return TIER_RELEVANT_FACT if content_words(line) & task_words else TIER_OTHER_FACT
    if section == "reasoning":
        return TIER_REASONING
    if provisions and not set(find_provisions(line)) & provisions:
        return TIER_OTHER_FACT
    return TIER_COMPLIANCE


def _to_view(cands: list[_Candidate]) -> MemoryView:
    by_section: dict[str, list[Entry]] = {name: [] for name in SECTIONS}
    for c in sorted(cands, key=lambda c: c.order):
        by_section[c.section].append(Entry(c.text, tuple(c.citations)))
    return MemoryView(*(tuple(by_section[n]) for n in SECTIONS))


def extract_projection(p: prompts.ProjectionPrompt, budget: int) -> MemoryView:
    """Priority-ordered extraction over the whole log, cut to ``budget``.

    Entries are dropped lowest tier first and, within a tier, latest event first.
    """
    task_words = content_words(p.question)
    provisions = set(p.provisions)
    cands: list[_Candidate] = []
    index: dict[tuple[str, str], _Candidate] = {}
    for seq, content in p.events:
        for section, line in _event_lines(content):
            key = (section, line)
            if key in index:
                if seq not in index[key].citations:
                    index[key].citations.append(seq)
                continue
            c = _Candidate(_tier(section, line, task_words, provisions), len(cands), section, line, [seq])
            index[key] = c
            cands.append(c)
    drop_order = sorted(cands, key=lambda c: (-c.tier, -c.order))
    kept = set(range(len(cands)))
    sections = {name: [] for name in SECTIONS}
    for c in cands:
        sections[c.section].append(Entry(c.text, tuple(c.citations)))
    length = rendered_length(sections)
    for c in drop_order:
        if length <= budget:
            break
        kept.discard(c.order)
        sections = {name: [] for name in SECTIONS}
        for k in cands:
            if k.order in kept:
                sections[k.section].append(Entry(k.text, tuple(k.citations)))
        length = rendered_length(sections)
    return _to_view([c for c in cands if c.order in kept])


def extract_consolidation(p: prompts.ConsolidationPrompt, budget: int) -> MemoryView:
    """Prior entries kept as-is; the event's new lines appended; tail dropped to fit."""
    try:
        prior = parse_view(p.summary)
    except ViewFormatError as exc:
        raise ProtocolError(f"prior summary is not a memory view: {exc}") from exc
    sections = {name: list(prior.section(name)) for name in SECTIONS}
    present = {(name, e.text) for name, e in prior.entries()}
    seq, content = p.event
    added: list[str] = []
    for section, line in _event_lines(content):
        if (section, line) in present:
            continue
        present.add((section, line))
        sections[section].append(Entry(line, (seq,)))
        added.append(section)
    while rendered_length(sections) > budget:
        if added:
            sections[added.pop()].pop()
            continue
        for name in reversed(SECTIONS):
            if sections[name]:
                sections[name].pop()
                break
        else:
            break
    return MemoryView(*(tuple(sections[n]) for n in SECTIONS))


def decide_from_surface(surface: str) -> tuple[str, list[str]]:
    """Label and cited-anchor list for a memory surface (the decision rule)."""
    label = "APPROVE"
    cited: list[str] = []
    for line in surface.split("\n"):
        if not line.startswith("- "):
            continue
        if DISQUALIFIER_MARK in line:
            label = "DENY"
        cites = re.findall(r"\[\d+\]", line)
        marker = cites[0] if cites else ""
        for anchor in find_anchors(line):
            cited.append(f"{anchor} {marker}".strip())
    return label, cited


def extract_decision(p: prompts.DecisionPrompt, budget: int) -> str:
    label, cited = decide_from_surface(p.surface)
    head = f"DECISION: {label}\nRATIONALE: "
    body = "; ".join(cited) if cited else "no anchored facts in memory"
    text = head + body
    if len(text) > budget:
        cut = text[:budget]
        if " " in cut[len(head):]:
            cut = cut[: cut.rfind(" ")]
        text = cut.rstrip("; ")
    return text


class ExtractiveBackend(Backend):
    """Deterministic rule-based backend; ``seed`` is ignored."""

    model_tag = "extractive-v1"

    def __init__(self):
        super().__init__()
        self.descriptor = BackendDescriptor("extractive", True, 0.0)

    def complete(self, req: BackendRequest) -> BackendResponse:
        start = time.perf_counter()
        if req.role is Role.PROJECTION:
            text = render(extract_projection(prompts.parse_projection(req.prompt), req.char_budget))
        elif req.role is Role.CONSOLIDATION:
            text = render(extract_consolidation(prompts.parse_consolidation(req.prompt), req.char_budget))
        else:
            text = extract_decision(prompts.parse_decision(req.prompt), req.char_budget)
        return BackendResponse(
            text=text,
            input_chars=len(req.prompt),
            output_chars=len(text),
            latency=time.perf_counter() - start,
            call_id=self.next_call_id(),
        )


# -- noise wrapper -----------------------------------------------------------

DRIFT_TAG = "~"
_TOKEN_RE = re.compile(r"\S+")
_HEADER_LINE_RE = re.compile(r"^[A-Z][A-Z ]*:$")
_CITATION_TOKEN_RE = re.compile(r"^\[\d+\]$")


def content_token_spans(text: str) -> list[tuple[int, int]]:
    """Spans of tokens eligible for perturbation.

    Excludes framing: section-header lines, ``DECISION:`` lines, the leading
    ``-`` bullet, the ``RATIONALE:`` keyword, citation markers, empty-section
    placeholders and the trim sentinel. Drift lands on content, never on the
    structure parsers rely on.
    """
    spans = []
    offset = 0
    for line in text.split("\n"):
        stripped = line.strip()
        framing = _HEADER_LINE_RE.match(stripped) or stripped.startswith("DECISION:") or stripped == "- UNKNOWN"
        if not framing:
            for i, m in enumerate(_TOKEN_RE.finditer(line)):
                tok = m.group()
                if i == 0 and tok in ("-", "RATIONALE:"):
                    continue
                if _CITATION_TOKEN_RE.match(tok) or tok == "[TRIMMED]":
                    continue
                spans.append((offset + m.start(), offset + m.end()))
        offset += len(line) + 1
    return spans


def perturb(text: str, rng: random.Random) -> str | None:
    spans = content_token_spans(text)
    if not spans:
        return None
    start, end = spans[rng.randrange(len(spans))]
    return text[:end] + DRIFT_TAG + text[end:]


class NoisyBackend(Backend):
    def __init__(self, inner: Backend, epsilon: float, rng_seed: int):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        if not inner.descriptor.deterministic:
            raise ValueError("noise wrapper needs a deterministic inner backend")
        super().__init__()
        self.inner = inner
        self.epsilon = epsilon
        self.rng_seed = rng_seed
        self.model_tag = inner.model_tag
        self.descriptor = BackendDescriptor(f"noisy:{epsilon:g}", epsilon == 0.0, float(epsilon))
        self.perturbed_by_role: dict[str, int] = {r.value: 0 for r in Role}
        self._count_lock = threading.Lock()

    def complete(self, req: BackendRequest) -> BackendResponse:
        resp = self.inner.complete(req)
        rng = random.Random(f"{self.rng_seed}:{resp.call_id}")
        if self.epsilon == 0.0 or rng.random() >= self.epsilon:
            return resp
        text = perturb(resp.text, rng)
        if text is None:
            return resp
        with self._count_lock:
            self.perturbed_by_role[req.role.value] += 1
        return BackendResponse(
            text=text,
            input_chars=resp.input_chars,
            output_chars=len(text),
            latency=resp.latency,
            call_id=resp.call_id,
            perturbed=True,
        )

    def next_call_id(self) -> int:
        return self.inner.next_call_id()


# -- remote ------------------------------------------------------------------

ENV_URL = "DPM_REMOTE_URL"
ENV_KEY = "DPM_REMOTE_KEY"
ENV_MODEL = "DPM_REMOTE_MODEL"


def max_tokens_for(char_budget: int) -> int:
    return math.ceil(char_budget / CHARS_PER_TOKEN)


class RemoteBackend(Backend):
    """Messages-style HTTP backend at temperature 0 with the fixed seed.

    ``client`` can be any ``httpx.Client``; tests pass one built on
    ``httpx.MockTransport``.
    """

    def __init__(self, url: str, key: str, model: str, *, client: httpx.Client | None = None,
                 max_in_flight: int = 4, max_retries: int = 2, timeout: float = 120.0,
                 max_prompt_chars: int = 600_000, sleep=time.sleep):
        super().__init__()
        if not url or not key or not model:
            raise ConfigurationError("remote backend needs url, key and model")
        self.url = url
        self.key = key
        self.model_tag = model
        self.client = client or httpx.Client(timeout=timeout)
        self.max_retries = max_retries
        self.max_prompt_chars = max_prompt_chars
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._sleep = sleep
        self.descriptor = BackendDescriptor("remote", False, 0.0)

    @classmethod
    def from_env(cls, env=None, **kwargs) -> RemoteBackend:
        env = os.environ if env is None else env
        missing = [k for k in (ENV_URL, ENV_KEY, ENV_MODEL) if not env.get(k)]
        if missing:
            raise ConfigurationError(f"missing environment variables: {', '.join(missing)}")
        return cls(env[ENV_URL], env[ENV_KEY], env[ENV_MODEL], **kwargs)

    def payload(self, req: BackendRequest) -> dict:
        system, _, user = req.prompt.partition("\nUSER:\n")
        system = system.removeprefix("SYSTEM:\n")
        return {
            "model": req.model_tag or self.model_tag,
            "max_tokens": max_tokens_for(req.char_budget),
            "temperature": 0,
            "seed": req.seed,
            "system": system,
            "messages": [{"role": "user", "content": user or req.prompt}],
        }

    def complete(self, req: BackendRequest) -> BackendResponse:
        if len(req.prompt) > self.max_prompt_chars:
            raise ContextWindowError(f"prompt of {len(req.prompt)} chars exceeds {self.max_prompt_chars}")
        body = self.payload(req)
        headers = {"x-api-key": self.key, "authorization": f"Bearer {self.key}"}
        attempt = 0
        with self._slots:
            while True:
                attempt += 1
                start = time.perf_counter()
                try:
                    r = self.client.post(self.url, json=body, headers=headers)
                except httpx.TransportError as exc:
                    err = RemoteRetriableError(f"network error: {exc}", 2.0 ** attempt, attempt)
                else:
                    err = self._classify(r, attempt)
                    if err is None:
                        return self._response(req, r.json(), time.perf_counter() - start)
                if attempt > self.max_retries:
                    raise err
                self._sleep(err.retry_after or 0.0)

    def _classify(self, r: httpx.Response, attempt: int) -> Exception | None:
        if r.status_code < 300:
            return None
        text = r.text[:300]
        if r.status_code == 413 or (r.status_code == 400 and "context" in text.lower()):
            raise ContextWindowError(f"remote rejected prompt size: {text}")
        if r.status_code in (401, 403):
            raise ConfigurationError(f"remote authentication failed ({r.status_code})")
        if r.status_code == 429 or r.status_code >= 500:
            retry_after = r.headers.get("retry-after")
            delay = float(retry_after) if retry_after else 2.0 ** attempt
            return RemoteRetriableError(f"remote returned {r.status_code}", delay, attempt)
        raise ProtocolError(f"remote returned {r.status_code}: {text}")

    def _response(self, req: BackendRequest, data: dict, latency: float) -> BackendResponse:
        if "content" in data:
            text = "".join(part.get("text", "") for part in data["content"] if isinstance(part, dict))
        elif "choices" in data:
            text = data["choices"][0]["message"]["content"]
        else:
            raise ProtocolError("remote response carries no content")
        usage = data.get("usage") or {}
        return BackendResponse(
            text=text,
            input_chars=len(req.prompt),
            output_chars=len(text),
            latency=latency,
            call_id=self.next_call_id(),
            input_tokens=usage.get("input_tokens") or usage.get("prompt_tokens"),
            output_tokens=usage.get("output_tokens") or usage.get("completion_tokens"),
        )


def make_backend(spec: str, *, seed: int = DEFAULT_SEED, env=None) -> Backend:
    """Build a backend from a CLI selection string.

    ``extractive`` | ``noisy:<epsilon>`` | ``remote``. For ``noisy`` the
    ``seed`` keys the perturbation stream.
    """
    if spec == "extractive":
        return ExtractiveBackend()
    if spec.startswith("noisy:"):
        try:
            eps = float(spec.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad noisy backend spec {spec!r}") from None
        return NoisyBackend(ExtractiveBackend(), eps, seed)
    if spec == "remote":
        return RemoteBackend.from_env(env)
    raise ValueError(f"unknown backend {spec!r}; expected extractive, noisy:<eps> or remote")
