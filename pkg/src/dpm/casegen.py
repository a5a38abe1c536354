"""Synthetic decisioning cases built by inversion.

The label and its evidence are drawn first; documents are then written around
them. Each required anchor sits on its own fact line inside otherwise
anchor-free prose, distractor lines carry anchors unrelated to the task, and
a disqualifier (``DISQUALIFIER:`` line) is present iff the label is DENY.

Large cases are calibrated so the full set of extractable entries overflows
the tight budget but fits the moderate one; :func:`validate_case` checks it.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from dpm import event_log as elog
from dpm.anchors import DISQUALIFIER_MARK, classify_line, content_words, find_anchors, normalize_ws
from dpm.event_log import EventKind, EventLog
from dpm.projection import BUDGET_CHARS, BudgetLabel, Domain, TaskSpec
from dpm.view import HEADERS, SECTIONS

LARGE = "large"
SMALL = "small"
SCALES = (LARGE, SMALL)

LARGE_EVENTS = (82, 96)
LARGE_CHARS = (26_000, 28_000)
SMALL_EVENTS = (16, 22)
SMALL_CHARS = (2_250, 2_400)
DEFAULT_ANCHORS = {LARGE: 15, SMALL: 5}
REASONING_COUNT = {LARGE: 4, SMALL: 2}
PROVISION_COUNT = {LARGE: 3, SMALL: 2}
# Extractable-entry volume for a large case, in rendered chars.
EXTRACTION_TARGET = (3_900, 4_600)
SMALL_DISTRACTORS = 3

# -- lexicon -----------------------------------------------------------------
# Field templates: (line template, anchor kind, argument). Kinds: id (prefix,
# digits), cur (low, high, step), pct (low, high), date.

LOAN = {
    "question": (
        "Decide whether to APPROVE or DENY the mortgage loan application under the lender "
        "qualification policy, using the application reference, requested loan amount, appraised "
        "value, appraisal report, annual income, income documentation, monthly debt obligations, "
        "debt-to-income ratio, loan-to-value ratio, credit report, employment verification, cash "
        "reserves, rate lock, scheduled closing, property tax escrow, insurance binder and earnest "
        "money deposit."
    ),
    "fields": [
        ("Application reference: {}.", "id", ("LN", 5)),
        ("Requested loan amount: {}.", "cur", (150_000, 900_000, 500)),
        ("Appraised value of the subject property: {}.", "cur", (180_000, 1_200_000, 1_000)),
        ("Verified annual income: {}.", "cur", (48_000, 260_000, 250)),
        ("Total monthly debt obligations: {}.", "cur", (400, 6_500, 5)),
        ("Debt-to-income ratio computed at {}.", "pct", (18, 49)),
        ("Loan-to-value ratio computed at {}.", "pct", (55, 97)),
        ("Credit report identifier: {}.", "id", ("CR", 6)),
        ("Employment verification completed on {}.", "date", None),
        ("Cash reserves on deposit: {}.", "cur", (5_000, 90_000, 50)),
        ("Rate lock expires on {}.", "date", None),
        ("Scheduled closing on {}.", "date", None),
        ("Appraisal report number: {}.", "id", ("APR", 4)),
        ("Property tax escrow estimate: {} per year.", "cur", (1_200, 14_000, 10)),
        ("Income documentation packet: {}.", "id", ("DOC", 5)),
        ("Homeowners insurance binder: {}.", "id", ("HOI", 5)),
        ("Earnest money deposit: {}.", "cur", (2_000, 40_000, 100)),
    ],
    "disqualifiers": [
        "DISQUALIFIER: unresolved federal tax lien recorded as {}.",
        "DISQUALIFIER: foreclosure within the last four years under case {}.",
        "DISQUALIFIER: identity check failed on fraud alert {}.",
    ],
    "disqualifier_prefixes": ["LIEN", "FCL", "FRD"],
    "reasoning": [
        ("repayment capacity", "Reasoning: repayment capacity holds given the income trend and steady obligations."),
        ("collateral coverage", "Reasoning: collateral coverage is sound since the appraisal supports the request."),
        ("income stability", "Reasoning: income stability rests on two years with the same employer."),
        ("reserve adequacy", "Reasoning: reserve adequacy meets guidelines once closing costs are paid."),
    ],
    "provisions": [
        ("ECOA.1002.4", "Compliance: ECOA.1002.4 bars discouraging applicants on a prohibited basis."),
        ("ECOA.1002.6", "Compliance: ECOA.1002.6 limits which traits may enter the evaluation."),
        ("ECOA.1002.9", "Compliance: ECOA.1002.9 requires notice of action taken within thirty days."),
        ("RegB.1002.13", "Compliance: RegB.1002.13 governs the monitoring information collected."),
        ("FCRA.615", "Compliance: FCRA.615 requires an adverse action notice when a bureau file is used."),
        ("TILA.1026.43", "Compliance: TILA.1026.43 requires a reasonable ability-to-repay finding."),
    ],
    "documents": [
        "Uniform residential loan application", "Borrower pay stub bundle", "Bank statement excerpt",
        "Appraisal narrative", "Title commitment", "Underwriting worksheet", "Homeowners insurance quote",
        "Purchase contract", "Gift letter", "Employment letter",
    ],
    "tools": ["credit bureau pull", "automated underwriting", "flood zone lookup", "policy rules engine",
              "document classifier", "income calculator"],
    "parties": ["applicant", "co-applicant", "listing agent", "loan officer", "processor"],
    "subjects": ["The applicant", "The co-applicant", "The processor", "The loan officer", "The underwriter",
                 "The listing agent", "The title company", "The appraiser"],
    "verbs": ["asked about", "confirmed", "sent a follow-up on", "flagged a question about", "clarified",
              "requested more time for", "uploaded a revised copy of", "left a voicemail about"],
    "objects": ["the signature pages", "the homeowner association letter", "a gap in the bank statements",
                "the gift funds explanation", "the preferred contact hours", "the survey exhibit",
                "the condo questionnaire", "the pest inspection", "a missing page of the pay stub",
                "the explanation of a recent inquiry", "the moving timeline", "the portal upload limits"],
    "tails": ["before the end of the week.", "and promised to send a cleaner scan.", "through the secure portal.",
              "after speaking with the branch.", "without changing any figures.", "in a short email.",
              "and asked for a call back.", "as part of the routine checklist."],
}

CLAIMS = {
    "question": (
        "Decide whether to APPROVE or DENY the insurance claim under the policy coverage terms, using "
        "the claim number, policy number, date of loss, reported loss amount, adjuster estimate, adjuster "
        "assignment, deductible, dwelling and contents coverage limits, policy effective date, premium "
        "status, police report, repair invoice, depreciation percentage, settlement target, mitigation "
        "invoice and proof of loss."
    ),
    "fields": [
        ("Claim number: {}.", "id", ("CLM", 5)),
        ("Policy number: {}.", "id", ("POL", 6)),
        ("Date of loss: {}.", "date", None),
        ("Reported loss amount: {}.", "cur", (2_000, 240_000, 10)),
        ("Adjuster estimate of covered damage: {}.", "cur", (1_500, 220_000, 10)),
        ("Policy deductible: {}.", "cur", (250, 5_000, 250)),
        ("Dwelling coverage limit: {}.", "cur", (150_000, 900_000, 1_000)),
        ("Policy effective date: {}.", "date", None),
        ("Premium paid through {}.", "date", None),
        ("Police report reference: {}.", "id", ("PR", 5)),
        ("Repair invoice number: {}.", "id", ("INV", 5)),
        ("Depreciation percentage applied: {}.", "pct", (5, 45)),
        ("Settlement target on {}.", "date", None),
        ("Contents coverage limit: {}.", "cur", (20_000, 300_000, 500)),
        ("Adjuster assignment: {}.", "id", ("ADJ", 4)),
        ("Mitigation invoice: {}.", "id", ("MIT", 5)),
        ("Proof of loss received on {}.", "date", None),
    ],
    "disqualifiers": [
        "DISQUALIFIER: loss occurred while coverage was lapsed per notice {}.",
        "DISQUALIFIER: material misrepresentation confirmed by investigation {}.",
        "DISQUALIFIER: excluded flood peril confirmed by engineer finding {}.",
    ],
    "disqualifier_prefixes": ["LPS", "SIU", "ENG"],
    "reasoning": [
        ("causation", "Reasoning: causation traces the damage to a sudden pipe failure, not wear."),
        ("coverage trigger", "Reasoning: the coverage trigger is met since the event fell in the policy period."),
        ("loss valuation", "Reasoning: loss valuation reconciles the adjuster figures with contractor bids."),
        ("policy conditions", "Reasoning: policy conditions on prompt notice and cooperation look satisfied."),
    ],
    "provisions": [
        ("UCSPA.2695.5", "Compliance: UCSPA.2695.5 sets deadlines to acknowledge claim communications."),
        ("UCSPA.2695.7", "Compliance: UCSPA.2695.7 requires a written basis for any denial."),
        ("UCSPA.2695.9", "Compliance: UCSPA.2695.9 sets standards for repair estimates."),
        ("NAIC.900.4", "Compliance: NAIC.900.4 lists unfair settlement practices to avoid."),
        ("POL.4.2", "Compliance: POL.4.2 is the policy condition on timely notice."),
        ("POL.6.1", "Compliance: POL.6.1 is the appraisal clause for disputed figures."),
    ],
    "documents": [
        "First notice of loss", "Adjuster field report", "Contractor estimate", "Policy declarations",
        "Photo log", "Recorded statement transcript", "Water mitigation log", "Contents inventory",
        "Engineer memo", "Correspondence file",
    ],
    "tools": ["policy administration lookup", "claims triage model", "weather event lookup",
              "policy rules engine", "fraud screening", "payment ledger"],
    "parties": ["policyholder", "public adjuster", "contractor", "field adjuster", "claims handler"],
    "subjects": ["The policyholder", "The contractor", "The field adjuster", "The claims handler",
                 "The public adjuster", "The mitigation crew", "The neighbor", "The property manager"],
    "verbs": ["asked about", "confirmed", "sent a follow-up on", "flagged a question about", "clarified",
              "requested more time for", "uploaded a revised copy of", "left a voicemail about"],
    "objects": ["the photos of the kitchen ceiling", "the temporary housing receipts", "the drying schedule",
                "the moisture readings", "the preferred contact hours", "the debris removal",
                "the access instructions for the basement", "the list of damaged furniture",
                "the roof tarp", "the mold inspection", "the lockbox code", "the hotel stay"],
    "tails": ["before the end of the week.", "and promised to send clearer photos.", "through the claims portal.",
              "after speaking with the carrier.", "without changing any figures.", "in a short email.",
              "and asked for a call back.", "as part of the routine checklist."],
}

LEXICON = {Domain.LOAN: LOAN, Domain.CLAIMS: CLAIMS}

DISTRACTORS = [
    "Facilities ticket {id} logged a flickering hallway light near the elevators.",
    "The regional newsletter quoted a printing cost of {cur}.",
    "Staff picnic planning notes mention {date} as a tentative weekend.",
    "Parking badge {id} was reissued after the gate reader broke.",
    "Supplier {id} shipped replacement toner for the copier.",
    "Humidity in the server closet hovered near {pct} all afternoon.",
    "The cafeteria renovation quote came back at {cur}.",
    "Maintenance window {id} is booked for {date}.",
    "Town hall slides showed {pct} participation in the wellness survey.",
    "The mail room logged package {id} for the facilities team.",
    "Courier pickup moved to {date} at the north entrance.",
    "The travel desk booked a conference booth costing {cur}.",
    "Badge photo retakes are planned for {date} in the lobby.",
    "Printer fleet uptime reached {pct} last month.",
    "Holiday party catering was capped at {cur}.",
    "Software license renewal {id} goes to procurement.",
    "The elevator inspection happened on {date} without issues.",
    "Desk move request {id} covers the third floor.",
    "Coffee machine servicing was billed at {cur}.",
    "Volunteer day signups stand at {pct} of staff.",
]
DISTRACTOR_PREFIXES = ["FAC", "TKT", "BDG", "SUP", "MNT", "PKG", "SWL", "DSK"]

FILLER_KINDS = (EventKind.DOCUMENT_CHUNK, EventKind.TOOL_OUTPUT, EventKind.USER_MESSAGE)
FILLER_WEIGHTS = (0.55, 0.2, 0.25)
BASE_TIME = datetime(2026, 1, 5, 9, 0, tzinfo=timezone.utc)


@dataclass(frozen=True)
class CaseGroundTruth:
    label: str
    required_anchors: tuple[str, ...]
    disqualifiers: tuple[str, ...]
    required_reasoning_keys: tuple[str, ...]
    required_provisions: tuple[str, ...]

    def __post_init__(self):
        if self.label not in ("APPROVE", "DENY"):
            raise ValueError(f"bad label {self.label!r}")
        if (self.label == "DENY") != bool(self.disqualifiers):
            raise ValueError("label must be DENY exactly when disqualifiers are present")
        if not set(self.disqualifiers) <= set(self.required_anchors):
            raise ValueError("disqualifiers must be required anchors")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "required_anchors": list(self.required_anchors),
            "disqualifiers": list(self.disqualifiers),
            "required_reasoning_keys": list(self.required_reasoning_keys),
            "required_provisions": list(self.required_provisions),
        }

    @classmethod
    def from_dict(cls, d: dict) -> CaseGroundTruth:
        return cls(d["label"], tuple(d["required_anchors"]), tuple(d["disqualifiers"]),
                   tuple(d["required_reasoning_keys"]), tuple(d["required_provisions"]))


def label_from_anchors(truth: CaseGroundTruth) -> str:
    """The published rule: DENY iff any disqualifier anchor is present."""
    return "DENY" if truth.disqualifiers else "APPROVE"


@dataclass
class CaseBundle:
    case_id: str
    domain: Domain
    scale: str
    log: EventLog
    task: TaskSpec
    truth: CaseGroundTruth
    generator_seed: int

    @property
    def events(self):
        return self.log.events

    @property
    def tenant_id(self) -> str:
        return self.log.tenant_id

    @property
    def total_chars(self) -> int:
        return self.log.total_chars()

    def compression_ratio(self, budget_chars: int) -> float:
        return self.total_chars / budget_chars


# -- generation --------------------------------------------------------------


class _AnchorPool:
    """Issues anchors that are unique and never substrings of one another."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: list[str] = []

    def _ok(self, token: str) -> bool:
        return all(token not in u and u not in token for u in self.used)

    def _draw(self, kind: str, arg) -> str:
        r = self.rng
        if kind == "id":
            prefix, digits = arg if isinstance(arg, tuple) else (arg, r.randint(4, 6))
            return f"{prefix}-{r.randint(10 ** (digits - 1), 10 ** digits - 1)}"
        if kind == "cur":
            low, high, step = arg
            return f"${r.randrange(low, high, step):,}"
        if kind == "pct":
            low, high = arg
            value = r.randint(low, high)
            return f"{value}.5%" if r.random() < 0.3 else f"{value}%"
        if kind == "date":
            day = datetime(2023, 1, 1) + timedelta(days=r.randint(0, 3 * 365))
            return day.strftime("%Y-%m-%d")
        raise ValueError(kind)

    def issue(self, kind: str, arg=None) -> str:
        for _ in range(1000):
            token = self._draw(kind, arg)
            if self._ok(token):
                self.used.append(token)
                return token
        raise RuntimeError("anchor space exhausted")


def derive_seed(*parts) -> int:
    return int(hashlib.sha256(":".join(map(str, parts)).encode()).hexdigest()[:12], 16)


def _stratified_positions(rng: random.Random, count: int, lo: int, hi: int) -> list[int]:
    """``count`` event indices in [lo, hi), one per equal-width stratum."""
    width = (hi - lo) / count
    out = []
    for i in range(count):
        a = lo + int(i * width)
        b = max(a + 1, lo + int((i + 1) * width))
        out.append(rng.randrange(a, min(b, hi)))
    return out


def _fill_distractor(template: str, pool: _AnchorPool, rng: random.Random) -> str:
    values = {}
    if "{id}" in template:
        values["id"] = pool.issue("id", rng.choice(DISTRACTOR_PREFIXES))
    if "{cur}" in template:
        values["cur"] = pool.issue("cur", (20, 90_000, 5))
    if "{pct}" in template:
        values["pct"] = pool.issue("pct", (1, 99))
    if "{date}" in template:
        values["date"] = pool.issue("date")
    return template.format(**values)


def _filler_sentence(lex: dict, rng: random.Random) -> str:
    return f"{rng.choice(lex['subjects'])} {rng.choice(lex['verbs'])} {rng.choice(lex['objects'])} {rng.choice(lex['tails'])}"


def _header(kind: EventKind, lex: dict, rng: random.Random) -> str:
    if kind is EventKind.DOCUMENT_CHUNK:
        total = rng.randint(2, 9)
        return f"Document: {rng.choice(lex['documents'])}, page {rng.randint(1, total)} of {total}."
    if kind is EventKind.TOOL_OUTPUT:
        return f"Tool output ({rng.choice(lex['tools'])}):"
    if kind is EventKind.USER_MESSAGE:
        return f"Message from the {rng.choice(lex['parties'])}:"
    return "Agent working note:"


def line_entry_chars(line: str, seq: int) -> int:
    return len(f"- {line} [{seq}]") + 1


def extraction_chars(lines: list[tuple[int, str]]) -> int:
    """Rendered size of a view that keeps every extractable line."""
    per_section = {name: 0 for name in SECTIONS}
    seen = set()
    for seq, line in lines:
        section = classify_line(line)
        if section is None or (section, line) in seen:
            continue
        seen.add((section, line))
        per_section[section] += line_entry_chars(line, seq)
    total = sum(len(HEADERS[n]) + 1 for n in SECTIONS)
    total += sum(v if v else len("- UNKNOWN") + 1 for v in per_section.values())
    return total - 1


def generate_case(domain: Domain | str, seed: int, scale: str, *, case_id: str | None = None,
                  label: str | None = None, n_events: int | None = None,
                  target_chars: int | None = None, anchor_count: int | None = None) -> CaseBundle:
    """Build one case. Same arguments, same bytes."""
    domain = Domain(domain)
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}")
    lex = LEXICON[domain]
    rng = random.Random(f"casegen|{domain.value}|{scale}|{seed}")
    pool = _AnchorPool(rng)
    large = scale == LARGE
    prefix = "loan" if domain is Domain.LOAN else "claim"
    case_id = case_id or f"{prefix}_{seed}"
    if label is None:
        label = rng.choice(["APPROVE", "DENY"])
    anchor_count = anchor_count or DEFAULT_ANCHORS[scale]
    if not 2 <= anchor_count <= len(lex["fields"]):
        raise ValueError(f"anchor_count must lie in [2, {len(lex['fields'])}]")

    lo, hi = LARGE_EVENTS if large else SMALL_EVENTS
    n = n_events or rng.randint(lo, hi)
    if target_chars is None:
        target_chars = rng.randint(26_200, 27_600) if large else rng.randint(2_255, 2_320)

    # Decision first: fields, disqualifier, rubric keys, provisions.
    n_disq = 1 if label == "DENY" else 0
    fields = [lex["fields"][0]] + rng.sample(lex["fields"][1:], anchor_count - 1 - n_disq)
    fact_lines, anchors = [], []
    for template, kind, arg in fields:
        token = pool.issue(kind, arg)
        anchors.append(token)
        fact_lines.append(template.format(token))
    disq_lines, disq_anchors = [], []
    for i in rng.sample(range(len(lex["disqualifiers"])), n_disq):
        token = pool.issue("id", (lex["disqualifier_prefixes"][i], 5))
        disq_anchors.append(token)
        disq_lines.append(lex["disqualifiers"][i].format(token))
    reasoning = rng.sample(lex["reasoning"], REASONING_COUNT[scale])
    provisions = rng.sample(lex["provisions"], PROVISION_COUNT[scale])

    # Documents second: place every line, then pad with prose.
    bodies: list[list[str]] = [[] for _ in range(n)]
    kinds: list[EventKind] = [rng.choices(FILLER_KINDS, FILLER_WEIGHTS)[0] for _ in range(n)]
    kinds[0] = EventKind.DOCUMENT_CHUNK
    bodies[0].append(fact_lines[0])
    rest = fact_lines[1:]
    order = list(range(len(rest)))
    rng.shuffle(order)
    for slot, idx in zip(_stratified_positions(rng, len(rest), 1, n), order):
        bodies[slot].append(rest[idx])
    for line, pos in zip(disq_lines, _stratified_positions(rng, len(disq_lines), n // 2, n) if disq_lines else []):
        bodies[pos].append(line)
    for (_, line), pos in zip(reasoning, _stratified_positions(rng, len(reasoning), int(n * 0.6), n)):
        bodies[pos].append(line)
        kinds[pos] = EventKind.INFERENCE
    for (_, line), pos in zip(provisions, _stratified_positions(rng, len(provisions), int(n * 0.7), n)):
        bodies[pos].append(line)
        if kinds[pos] is not EventKind.INFERENCE:
            kinds[pos] = EventKind.TOOL_OUTPUT

    def placed() -> list[tuple[int, str]]:
        return [(i + 1, line) for i, body in enumerate(bodies) for line in body]

    if large:
        goal = rng.randint(*EXTRACTION_TARGET)
        while extraction_chars(placed()) < goal:
            bodies[rng.randrange(1, n)].append(_fill_distractor(rng.choice(DISTRACTORS), pool, rng))
    else:
        for _ in range(SMALL_DISTRACTORS):
            bodies[rng.randrange(1, n)].append(_fill_distractor(rng.choice(DISTRACTORS), pool, rng))

    headers = [_header(kinds[i], lex, rng) for i in range(n)]
    for body in bodies:
        rng.shuffle(body)
    # Large events each get at least one prose sentence; then pad the shortest events.
    if large:
        for body in bodies:
            body.append(_filler_sentence(lex, rng))
    sizes = [len(h) + sum(len(b) + 1 for b in body) for h, body in zip(headers, bodies)]
    total = sum(sizes)
    while total < target_chars:
        shortest = sorted(range(n), key=lambda i: (sizes[i], i))[: max(3, n // 8)]
        i = rng.choice(shortest)
        sentence = _filler_sentence(lex, rng)
        bodies[i].insert(rng.randint(0, len(bodies[i])), sentence)
        sizes[i] += len(sentence) + 1
        total += len(sentence) + 1

    tenant = f"{'lender' if domain is Domain.LOAN else 'insurer'}-{derive_seed('tenant', domain.value, seed) % 16**6:06x}"
    log = EventLog(tenant, case_id)
    ts = BASE_TIME + timedelta(minutes=rng.randint(0, 60 * 24 * 30))
    for i in range(n):
        ts += timedelta(minutes=rng.randint(3, 240))
        log.append(kinds[i], "\n".join([headers[i]] + bodies[i]), ts)
    log.seal()

    task = TaskSpec(domain, lex["question"], tuple(p for p, _ in lex["provisions"]))
    truth = CaseGroundTruth(
        label=label,
        required_anchors=tuple(anchors + disq_anchors),
        disqualifiers=tuple(disq_anchors),
        required_reasoning_keys=tuple(k for k, _ in reasoning),
        required_provisions=tuple(p for p, _ in provisions),
    )
    return CaseBundle(case_id, domain, scale, log, task, truth, seed)


# -- validation --------------------------------------------------------------


def validate_case(bundle: CaseBundle) -> list[str]:
    """Return a list of problems; empty means the case is sound."""
    problems = []
    text = "\n".join(e.content for e in bundle.events)
    flat = normalize_ws(text)
    truth = bundle.truth
    if label_from_anchors(truth) != truth.label:
        problems.append("label disagrees with the disqualifier rule")
    for anchor in truth.required_anchors:
        hits = sum(normalize_ws(e.content).count(anchor) for e in bundle.events)
        if hits == 0:
            problems.append(f"required anchor {anchor} missing from events")
        elif hits > 1:
            problems.append(f"required anchor {anchor} appears {hits} times")
    marks = flat.count(DISQUALIFIER_MARK)
    if marks != len(truth.disqualifiers):
        problems.append(f"{marks} disqualifier lines for {len(truth.disqualifiers)} disqualifiers")
    lines = [(e.seq, ln.strip()) for e in bundle.events for ln in e.content.split("\n")]
    section_of = {ln: classify_line(ln) for _, ln in lines}
    for key in truth.required_reasoning_keys:
        if not any(section_of[ln] == "reasoning" and key in ln.lower() for _, ln in lines):
            problems.append(f"reasoning key {key!r} has no reasoning line")
    for prov in truth.required_provisions:
        if not any(section_of[ln] == "compliance" and prov in ln for _, ln in lines):
            problems.append(f"provision {prov} has no compliance line")
    all_anchors = find_anchors(text)
    for a in all_anchors:
        for b in all_anchors:
            if a != b and a in b:
                problems.append(f"anchor {a} is a substring of {b}")
    task_words = content_words(bundle.task.question)
    required = set(truth.required_anchors)
    for _, ln in lines:
        if section_of[ln] != "facts" or DISQUALIFIER_MARK in ln:
            continue
        carries_required = any(a in ln for a in required)
        relevant = bool(content_words(ln) & task_words)
        if carries_required != relevant:
            problems.append(f"relevance mismatch on fact line {ln!r}")
    lo, hi = (LARGE_EVENTS, LARGE_CHARS) if bundle.scale == LARGE else (SMALL_EVENTS, SMALL_CHARS)
    if not lo[0] <= len(bundle.events) <= lo[1]:
        problems.append(f"{len(bundle.events)} events outside {lo}")
    if not hi[0] <= bundle.total_chars <= hi[1]:
        problems.append(f"{bundle.total_chars} chars outside {hi}")
    if bundle.scale == LARGE:
        full = extraction_chars(lines)
        tight = BUDGET_CHARS[BudgetLabel.TIGHT]
        moderate = BUDGET_CHARS[BudgetLabel.MODERATE]
        if not tight < full <= moderate:
            problems.append(f"extractable volume {full} not in ({tight}, {moderate}]")
    return problems


# -- suite -------------------------------------------------------------------

SUITE_LAYOUT = [
    # (case_id, domain, scale, label, n_events, target_chars)
    ("loan_L01", Domain.LOAN, LARGE, "DENY", None, None),
    ("loan_L02", Domain.LOAN, LARGE, "APPROVE", None, None),
    ("loan_L03", Domain.LOAN, LARGE, "DENY", None, None),
    ("loan_L04", Domain.LOAN, LARGE, "APPROVE", None, None),
    ("loan_L05", Domain.LOAN, LARGE, "DENY", None, None),
    ("claim_C01", Domain.CLAIMS, LARGE, "APPROVE", None, None),
    ("claim_C02", Domain.CLAIMS, LARGE, "DENY", None, None),
    ("claim_C03", Domain.CLAIMS, LARGE, "APPROVE", None, None),
    ("claim_C04", Domain.CLAIMS, LARGE, "DENY", None, None),
    ("claim_C05", Domain.CLAIMS, LARGE, "APPROVE", None, None),
    ("loan_001", Domain.LOAN, SMALL, "DENY", 22, 2_320),
    ("claim_001", Domain.CLAIMS, SMALL, "APPROVE", 16, 2_255),
]


def generate_suite(seed: int = 20260420) -> list[CaseBundle]:
    """Ten large cases (five loan, five claim) and the two small cases."""
    return [
        generate_case(domain, derive_seed(seed, case_id), scale, case_id=case_id, label=label,
                      n_events=n, target_chars=chars)
        for case_id, domain, scale, label, n, chars in SUITE_LAYOUT
    ]


def large_cases(suite: list[CaseBundle]) -> list[CaseBundle]:
    return [b for b in suite if b.scale == LARGE]


def small_cases(suite: list[CaseBundle]) -> list[CaseBundle]:
    return [b for b in suite if b.scale == SMALL]


def suite_digest(suite: list[CaseBundle]) -> str:
    lines = sorted(f"{b.case_id}:{b.log.chain_digest}" for b in suite)
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()


def write_case(bundle: CaseBundle, root: str | Path) -> Path:
    case_dir = Path(root) / bundle.case_id
    case_dir.mkdir(parents=True, exist_ok=True)
    events_path = elog.store(bundle.log, case_dir)
    meta = {
        "case_id": bundle.case_id,
        "domain": bundle.domain.value,
        "scale": bundle.scale,
        "tenant": bundle.tenant_id,
        "generator_seed": bundle.generator_seed,
        "events_file": events_path.name,
        "chain_digest": bundle.log.chain_digest,
        "n_events": len(bundle.events),
        "total_chars": bundle.total_chars,
        "task": bundle.task.to_dict(),
        "truth": bundle.truth.to_dict(),
    }
    (case_dir / "case.json").write_text(json.dumps(meta, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return case_dir


def read_case(case_dir: str | Path) -> CaseBundle:
    case_dir = Path(case_dir)
    meta = json.loads((case_dir / "case.json").read_text(encoding="utf-8"))
    log = elog.load(case_dir / meta["events_file"], seal=True)
    if log.chain_digest != meta["chain_digest"]:
        raise elog.IntegrityError(f"{case_dir}: chain digest differs from case.json")
    return CaseBundle(meta["case_id"], Domain(meta["domain"]), meta["scale"], log,
                      TaskSpec.from_dict(meta["task"]), CaseGroundTruth.from_dict(meta["truth"]),
                      meta["generator_seed"])


def write_suite(suite: list[CaseBundle], root: str | Path, seed: int | None = None) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for bundle in suite:
        write_case(bundle, root)
    manifest = {
        "seed": seed,
        "suite_digest": suite_digest(suite),
        "cases": [
            {"case_id": b.case_id, "domain": b.domain.value, "scale": b.scale, "label": b.truth.label,
             "chain_digest": b.log.chain_digest, "n_events": len(b.events), "total_chars": b.total_chars,
             "anchor_count": len(b.truth.required_anchors)}
            for b in suite
        ],
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def read_suite(root: str | Path) -> list[CaseBundle]:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    suite = [read_case(root / c["case_id"]) for c in manifest["cases"]]
    if suite_digest(suite) != manifest["suite_digest"]:
        raise elog.IntegrityError(f"{root}: suite digest mismatch")
    return suite
