from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpm import prompts
from dpm.errors import ProtocolError, ViewFormatError
from dpm.view import (
    Entry,
    MemoryView,
    parse_view,
    render,
    rendered_length,
    skeleton_length,
    split_sections,
    trim_to_budget,
)

line_text = st.text(st.characters(whitelist_categories=("Lu", "Ll", "Nd"), whitelist_characters=" $,.-:%"),
                    min_size=1, max_size=40).map(str.strip).filter(lambda t: t and not t.endswith("]"))
entries = st.lists(st.builds(Entry, line_text, st.lists(st.integers(1, 99), max_size=3).map(tuple)), max_size=5)
views = st.builds(MemoryView, entries.map(tuple), entries.map(tuple), entries.map(tuple), st.booleans())


def test_render_empty_view_marks_unknown():
    assert render(MemoryView()) == "FACTS:\n- UNKNOWN\nREASONING:\n- UNKNOWN\nCOMPLIANCE NOTES:\n- UNKNOWN"


def test_entry_line_carries_citations():
    assert Entry("Loan amount: $412,500.", (3, 7)).line() == "- Loan amount: $412,500. [3] [7]"


@settings(max_examples=150, deadline=None)
@given(views)
def test_parse_render_round_trip(view):
    text = render(view)
    assert parse_view(text) == view
    assert rendered_length({n: list(view.section(n)) for n in ("facts", "reasoning", "compliance")},
                           view.trimmed) == len(text)


@pytest.mark.parametrize(
    "text, match",
    [
        ("FACTS:\n- a\nREASONING:\n- b", "COMPLIANCE NOTES"),
        ("REASONING:\n- b\nFACTS:\n- a\nCOMPLIANCE NOTES:\n- c", "order"),
        ("preamble\nFACTS:\n- a\nREASONING:\n- b\nCOMPLIANCE NOTES:\n- c", "before FACTS"),
        ("FACTS:\nREASONING:\n- b\nCOMPLIANCE NOTES:\n- c", "no entries"),
        ("FACTS:\n- a\nFACTS:\n- a\nREASONING:\n- b\nCOMPLIANCE NOTES:\n- c", "duplicate"),
        ("FACTS:\nno bullet\nREASONING:\n- b\nCOMPLIANCE NOTES:\n- c", "malformed"),
    ],
)
def test_parse_view_rejects_malformed(text, match):
    with pytest.raises(ViewFormatError, match=match):
        parse_view(text)


def test_split_sections_is_lenient():
    parts = split_sections("junk\nREASONING:\n- why\nFACTS:\n- what")
    assert parts == {"facts": "- what", "reasoning": "- why", "compliance": ""}


def test_trim_drops_from_the_end_and_marks():
    view = MemoryView((Entry("a" * 50, (1,)), Entry("b" * 50, (2,))), (Entry("r" * 50),), (Entry("c" * 50),))
    cut = trim_to_budget(view, len(render(view)) - 10)
    assert cut.trimmed and cut.compliance == () and cut.reasoning == view.reasoning
    assert render(cut).endswith("[TRIMMED]")
    assert len(render(cut)) <= len(render(view)) - 10


def test_trim_leaves_fitting_view_alone():
    view = MemoryView((Entry("x"),))
    assert trim_to_budget(view, 1000) is view


def test_trim_below_skeleton_raises():
    with pytest.raises(ViewFormatError):
        trim_to_budget(MemoryView((Entry("x" * 40),)), skeleton_length() - 1)


@settings(max_examples=100, deadline=None)
@given(views, st.integers(80, 400))
def test_trim_respects_budget(view, budget):
    assert len(render(trim_to_budget(view, budget))) <= budget


def test_projection_prompt_round_trip():
    events = [(1, "Header line\nApplication reference: LN-12345."), (2, "single")]
    text = prompts.render_projection("Decide it.", "loan_qualification", ["ECOA.1002.9", "FCRA.615"], events, 1338)
    parsed = prompts.parse_projection(text)
    assert parsed.events == tuple(events)
    assert parsed.provisions == ("ECOA.1002.9", "FCRA.615")
    assert parsed.budget == 1338 and parsed.question == "Decide it."


def test_projection_prompt_with_no_events_parses():
    text = prompts.render_projection("Q", "claims_adjudication", ["POL.4.2"], [], 500)
    assert prompts.parse_projection(text).events == ()


def test_consolidation_and_decision_prompt_round_trip():
    summary = render(MemoryView((Entry("x", (1,)),)))
    c = prompts.parse_consolidation(prompts.render_consolidation(summary, 4, "a\nb", 900))
    assert (c.summary, c.event, c.budget) == (summary, (4, "a\nb"), 900)
    d = prompts.parse_decision(prompts.render_decision("Decide.", summary))
    assert (d.question, d.surface) == ("Decide.", summary)


def test_unframed_prompt_rejected():
    with pytest.raises(ProtocolError):
        prompts.parse_projection("SYSTEM:\nhello\nUSER:\nnothing useful")


def test_template_digests_are_stable():
    digests = prompts.template_digests()
    assert set(digests) == {"projection", "consolidation", "decision"}
    assert digests == prompts.template_digests()
