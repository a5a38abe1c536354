"""Replay determinism: surface hash uniqueness and prefix edit distance over N replays.

Each replay rebuilds the memory surface from the stored log with a fresh
backend, so every replay owns its call-id namespace and its noise stream.
Drift is judged against a reference surface produced by the clean inner
backend. The hashed surface is the pre-decision memory for both conditions.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from dpm.backends import Backend, ExtractiveBackend, make_backend
from dpm.casegen import CaseBundle, derive_seed
from dpm.pipeline import Condition, memory_surface
from dpm.projection import Budget

BackendFactory = Callable[[int], Backend]
CSV_COLUMNS = ("case_id", "condition", "n_replays", "unique_hashes", "mean_edit", "max_edit", "mean_chars")


def surface_hash(surface: str) -> str:
    return hashlib.sha256(surface.encode("utf-8")).hexdigest()


def levenshtein(a: str, b: str) -> int:
    """Classic two-row dynamic program over characters."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_prefix_edit_distance(a: str, b: str, prefix_len: int = 200) -> float:
    if prefix_len < 1:
        raise ValueError("prefix_len must be at least 1")
    pa, pb = a[:prefix_len], b[:prefix_len]
    longest = max(len(pa), len(pb))
    if longest == 0:
        return 0.0
    return levenshtein(pa, pb) / longest


def pairwise_edit(surfaces: list[str], prefix_len: int = 200) -> tuple[float, float]:
    """(mean, max) normalized prefix distance over all unordered pairs."""
    if len(surfaces) < 2:
        return 0.0, 0.0
    cache: dict[tuple[str, str], float] = {}
    dists = []
    for a, b in itertools.combinations(surfaces, 2):
        key = (a[:prefix_len], b[:prefix_len])
        key = key if key[0] <= key[1] else (key[1], key[0])
        if key not in cache:
            cache[key] = normalized_prefix_edit_distance(*key, prefix_len=prefix_len)
        dists.append(cache[key])
    return float(np.mean(dists)), float(np.max(dists))


@dataclass(frozen=True)
class ReplayEntry:
    hash: str
    chars: int
    call_count: int
    perturbed_calls: int
    drifted: bool


@dataclass
class ReplayReport:
    case_id: str
    condition: Condition
    budget_label: str
    n_replays: int
    unique_hashes: int
    mean_edit: float
    max_edit: float
    mean_chars: float
    reference_hash: str
    per_replay: list[ReplayEntry] = field(default_factory=list)
    partial: bool = False
    errors: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.per_replay and not 1 <= self.unique_hashes <= len(self.per_replay):
            raise ValueError("unique_hashes out of range")
        if not 0.0 <= self.mean_edit <= self.max_edit <= 1.0:
            raise ValueError("edit distances out of order")

    @property
    def completed(self) -> int:
        return len(self.per_replay)

    @property
    def drifted_fraction(self) -> float:
        if not self.per_replay:
            return 0.0
        return sum(r.drifted for r in self.per_replay) / len(self.per_replay)

    @property
    def mean_perturbed_calls(self) -> float:
        if not self.per_replay:
            return 0.0
        return float(np.mean([r.perturbed_calls for r in self.per_replay]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["condition"] = self.condition.value
        d["drifted_fraction"] = self.drifted_fraction
        d["mean_perturbed_calls"] = self.mean_perturbed_calls
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def csv_row(self) -> list:
        return [self.case_id, self.condition.label, self.n_replays, self.unique_hashes,
                f"{self.mean_edit:.3f}", f"{self.max_edit:.3f}", f"{self.mean_chars:.0f}"]


def reports_csv(reports: list[ReplayReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def backend_factory(spec: str, seed: int, *cell) -> BackendFactory:
    """Per-replay backends whose noise seeds derive from (seed, cell, replay index)."""
    return lambda i: make_backend(spec, seed=derive_seed(seed, *cell, i))


def _clean(backend: Backend) -> Backend:
    inner = backend
    while hasattr(inner, "inner"):
        inner = inner.inner
    return inner if inner.descriptor.deterministic else ExtractiveBackend()


class _Counter(Backend):
    def __init__(self, inner: Backend):
        self.inner = inner
        self.descriptor = inner.descriptor
        self.model_tag = inner.model_tag
        self.calls = 0
        self.perturbed = 0

    def next_call_id(self) -> int:
        return self.inner.next_call_id()

    def complete(self, req):
        resp = self.inner.complete(req)
        self.calls += 1
        self.perturbed += int(resp.perturbed)
        return resp


def replay_study(case: CaseBundle, condition: Condition | str, budget: Budget,
                 factory: BackendFactory | str = "extractive", n_replays: int = 10, *,
                 seed: int = 20260420, prefix_len: int = 200,
                 reference: str | None = None) -> ReplayReport:
    """Rebuild the memory surface ``n_replays`` times and summarize drift."""
    if n_replays < 2:
        raise ValueError("n_replays must be at least 2")
    condition = Condition(condition)
    if isinstance(factory, str):
        factory = backend_factory(factory, seed, case.case_id, condition.value, budget.name)
    if reference is None:
        reference = memory_surface(case, condition, budget, _clean(factory(0)))[0]
    ref_hash = surface_hash(reference)
    surfaces, entries, errors = [], [], []
    for i in range(n_replays):
        try:
            counter = _Counter(factory(i))
            surface, _ = memory_surface(case, condition, budget, counter)
        except Exception as exc:  # a failed replay leaves the others usable
            errors.append(f"replay {i}: {exc}")
            continue
        h = surface_hash(surface)
        surfaces.append(surface)
        entries.append(ReplayEntry(h, len(surface), counter.calls, counter.perturbed, h != ref_hash))
    mean_edit, max_edit = pairwise_edit(surfaces, prefix_len)
    return ReplayReport(
        case_id=case.case_id,
        condition=condition,
        budget_label=budget.name,
        n_replays=n_replays,
        unique_hashes=len({e.hash for e in entries}),
        mean_edit=mean_edit,
        max_edit=max_edit,
        mean_chars=float(np.mean([e.chars for e in entries])) if entries else 0.0,
        reference_hash=ref_hash,
        per_replay=entries,
        partial=bool(errors),
        errors=errors,
    )


def expected_drift_rate(epsilon: float, calls: int) -> float:
    """Probability that at least one of ``calls`` independent calls drifts."""
    return 1.0 - (1.0 - epsilon) ** calls


def binomial_se(p: float, n: int) -> float:
    return float(np.sqrt(p * (1.0 - p) / n))
