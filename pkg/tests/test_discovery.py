"""Discovery stages: refinement cap, baseline anchoring, defect audit."""

import pytest
from conftest import (
    BASELINE_TEXT,
    DEFECTS_TEXT,
    REFINE_TEXT,
    discovery_rules,
    make_story,
)

from u2f.domain import DefectKind
from u2f.errors import (
    BaselineUnanchored,
    EmptyStatement,
    SchemaViolation,
    StageError,
    StatementTooLong,
)
from u2f.gateway import MockGateway, MockRule
from u2f.discovery import MAX_STATEMENT_WORDS, run_discovery


def test_word_cap_constant():
    assert MAX_STATEMENT_WORDS == 60


def test_happy_path_produces_a_full_brief():
    gw = MockGateway(discovery_rules())
    brief = run_discovery(make_story(), gw)
    assert "shutter noise" in brief.problem_statement
    assert "electronic shutter" in brief.baseline_solution
    assert [d.kind for d in brief.defect_analysis] == [
        DefectKind.IMPLICIT_ASSUMPTION,
        DefectKind.SCOPE_LIMITATION,
    ]
    assert not brief.no_defects_declared
    assert gw.call_count == 3


def long_statement(n=61):
    return "@problem_statement\n" + " ".join(f"w{i}" for i in range(n))


def test_refine_retries_over_the_word_cap():
    gw = MockGateway(
        [
            MockRule(
                stage_tag="discovery.refine",
                contains="Your previous statement was rejected",
                text=REFINE_TEXT,
            ),
            MockRule(stage_tag="discovery.refine", text=long_statement()),
            MockRule(stage_tag="discovery.baseline", text=BASELINE_TEXT),
            MockRule(stage_tag="discovery.defects", text=DEFECTS_TEXT),
        ]
    )
    brief = run_discovery(make_story(), gw)
    assert "shutter noise" in brief.problem_statement
    assert gw.call_count == 4


def test_refine_retry_prompt_names_the_overrun():
    prompts = []

    class Spy:
        def complete(self, request, provider=None):
            prompts.append(request.user_prompt)
            from u2f.gateway import ChatResponse

            return ChatResponse(text=long_statement(63), provider_id="spy")

    with pytest.raises(StageError) as err:
        run_discovery(make_story(), Spy())
    assert err.value.stage == "discovery.refine"
    assert isinstance(err.value.cause, StatementTooLong)
    assert "the statement ran 63 words; the cap is 60" in prompts[1]


def test_refine_gives_up_on_persistent_emptiness():
    gw = MockGateway(
        [
            MockRule(stage_tag="discovery.refine", text="@problem_statement\n"),
            MockRule(stage_tag="discovery.baseline", text=BASELINE_TEXT),
        ]
    )
    with pytest.raises(StageError) as err:
        run_discovery(make_story(), gw)
    assert isinstance(err.value.cause, EmptyStatement)


def test_exactly_sixty_words_is_accepted():
    gw = MockGateway(
        [
            MockRule(stage_tag="discovery.refine", text=long_statement(60)),
            MockRule(stage_tag="discovery.baseline", text=BASELINE_TEXT),
            MockRule(stage_tag="discovery.defects", text=DEFECTS_TEXT),
        ]
    )
    brief = run_discovery(make_story(), gw)
    assert len(brief.problem_statement.split()) == 60


UNANCHORED = """@baseline_solution
Buy quieter cameras from a different vendor and hope the issue resolves."""


def test_baseline_retry_demands_the_anchor():
    prompts = []
    anchored_on_retry = MockGateway(
        [
            MockRule(
                stage_tag="discovery.baseline",
                contains="Anchor it explicitly to:",
                text=BASELINE_TEXT,
            ),
            MockRule(stage_tag="discovery.baseline", text=UNANCHORED),
            MockRule(stage_tag="discovery.refine", text=REFINE_TEXT),
            MockRule(stage_tag="discovery.defects", text=DEFECTS_TEXT),
        ]
    )
    brief = run_discovery(make_story(), anchored_on_retry)
    assert "electronic shutter" in brief.baseline_solution


def test_baseline_unanchored_twice_fails():
    gw = MockGateway(
        [
            MockRule(stage_tag="discovery.refine", text=REFINE_TEXT),
            MockRule(stage_tag="discovery.baseline", text=UNANCHORED),
        ]
    )
    with pytest.raises(StageError) as err:
        run_discovery(make_story(), gw)
    assert err.value.stage == "discovery.baseline"
    assert isinstance(err.value.cause, BaselineUnanchored)


def test_anchor_passes_trivially_for_content_free_fixes():
    story = make_story(potential_fix="do it now")  # no token reaches 4 chars
    gw = MockGateway(
        [
            MockRule(stage_tag="discovery.refine", text=REFINE_TEXT),
            MockRule(stage_tag="discovery.baseline", text=UNANCHORED),
            MockRule(stage_tag="discovery.defects", text=DEFECTS_TEXT),
        ]
    )
    brief = run_discovery(story, gw)
    assert "quieter cameras" in brief.baseline_solution


def test_defects_retry_then_no_defects_declaration():
    gw = MockGateway(
        [
            MockRule(stage_tag="discovery.refine", text=REFINE_TEXT),
            MockRule(stage_tag="discovery.baseline", text=BASELINE_TEXT),
            MockRule(
                stage_tag="discovery.defects",
                contains="Provide one or the other.",
                text="@no_defects\nThe baseline holds as stated.",
            ),
            MockRule(stage_tag="discovery.defects", text="@no_defects\n"),
        ]
    )
    brief = run_discovery(make_story(), gw)
    assert brief.no_defects_declared
    assert brief.defect_analysis == ()


def test_defects_empty_twice_fails():
    gw = MockGateway(
        [
            MockRule(stage_tag="discovery.refine", text=REFINE_TEXT),
            MockRule(stage_tag="discovery.baseline", text=BASELINE_TEXT),
            MockRule(stage_tag="discovery.defects", text="@no_defects\n"),
        ]
    )
    with pytest.raises(StageError) as err:
        run_discovery(make_story(), gw)
    assert isinstance(err.value.cause, SchemaViolation)


def test_defect_kinds_are_validated():
    bad_kind = """@defect
kind: Gremlin
description: something vague"""
    gw = MockGateway(
        [
            MockRule(stage_tag="discovery.refine", text=REFINE_TEXT),
            MockRule(stage_tag="discovery.baseline", text=BASELINE_TEXT),
            MockRule(stage_tag="discovery.defects", text=bad_kind),
        ]
    )
    with pytest.raises(StageError) as err:
        run_discovery(make_story(), gw)
    assert isinstance(err.value.cause, SchemaViolation)
