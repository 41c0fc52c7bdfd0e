"""Discovery agent: problem refinement, baseline drafting, defect audit."""

from __future__ import annotations

import re

from .control import Phase
from .directives import DirectiveLog, EMPTY_DIRECTIVES
from .domain import Defect, DefectKind, EnablerStory, StrategicBrief
from .errors import (
    BaselineUnanchored,
    EmptyStatement,
    SchemaViolation,
    StatementTooLong,
)
from .stages import StageHook, run_stage
from .gateway import (
    ENUM,
    RECORDS,
    TEXT,
    ChatRequest,
    FieldSchema,
    FieldSpec,
    Gateway,
    ProviderConfig,
    complete_structured,
    format_reminder,
    stage_temperature,
)
from . import prompts

MAX_STATEMENT_WORDS = 60

# optional at the parse layer: emptiness is a semantic failure with its own
# corrective wording, not a formatting failure for the generic repair loop
_REFINE_SCHEMA = FieldSchema(fields=(FieldSpec("problem_statement", TEXT, required=False),))
_BASELINE_SCHEMA = FieldSchema(fields=(FieldSpec("baseline_solution", TEXT),))
_DEFECTS_SCHEMA = FieldSchema(
    fields=(
        FieldSpec(
            "defect",
            RECORDS,
            required=False,
            subfields=(
                FieldSpec("kind", ENUM, values=tuple(k.value for k in DefectKind)),
                FieldSpec("description", TEXT),
            ),
        ),
        FieldSpec("no_defects", TEXT, required=False),
    )
)

# Tokens this short or shorter never count as anchoring evidence.
_ANCHOR_MIN_LEN = 4


def _word_count(text: str) -> int:
    return len(text.split())


def _content_tokens(text: str) -> set[str]:
    return {t for t in re.findall(r"[a-z0-9']+", text.lower()) if len(t) >= _ANCHOR_MIN_LEN}


def _request(stage: str, system: str, user: str) -> ChatRequest:
    return ChatRequest(
        stage_tag=stage,
        system_prompt=system,
        user_prompt=user,
        temperature=stage_temperature(stage),
    )


def refine_problem(
    story: EnablerStory,
    gw: Gateway,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    provider: ProviderConfig | None = None,
    feedback: str = "",
) -> str:
    """Compress the story into a problem statement of at most 60 words.

    A violation earns one corrective re-prompt before the error escalates.
    """
    stage = "discovery.refine"
    system = prompts.system_prompt("discovery", directives.lines(Phase.DISCOVERY))
    user = prompts.render(
        "discovery_refine",
        story_type=story.story_type.value,
        narrative=story.narrative,
        expected_result=story.expected_result,
        actual_result=story.actual_result,
        potential_fix=story.potential_fix,
        format_instructions=format_reminder(_REFINE_SCHEMA),
    )
    if feedback:
        user += prompts.feedback_suffix(feedback)

    parsed = complete_structured(gw, _request(stage, system, user), _REFINE_SCHEMA, provider=provider)
    statement = parsed.get("problem_statement", "").strip()
    if statement and _word_count(statement) <= MAX_STATEMENT_WORDS:
        return statement

    problem = (
        "the statement was empty"
        if not statement
        else f"the statement ran {_word_count(statement)} words; the cap is {MAX_STATEMENT_WORDS}"
    )
    retry_user = f"{user}\n\nYour previous statement was rejected: {problem}. Try again."
    parsed = complete_structured(
        gw, _request(stage, system, retry_user), _REFINE_SCHEMA, provider=provider
    )
    statement = parsed.get("problem_statement", "").strip()
    if not statement:
        raise EmptyStatement("problem statement empty after one corrective re-prompt")
    if _word_count(statement) > MAX_STATEMENT_WORDS:
        raise StatementTooLong(
            f"problem statement still {_word_count(statement)} words after re-prompt"
        )
    return statement


def generate_baseline(
    story: EnablerStory,
    problem_statement: str,
    gw: Gateway,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    provider: ProviderConfig | None = None,
    feedback: str = "",
) -> str:
    """Draft the conventional solution, anchored to the story's potential fix.

    Anchoring is a lexical check: the baseline must share at least one
    content token (4+ chars) with the potential fix. One corrective
    re-prompt, then BaselineUnanchored.
    """
    stage = "discovery.baseline"
    system = prompts.system_prompt("discovery", directives.lines(Phase.DISCOVERY))
    user = prompts.render(
        "discovery_baseline",
        problem_statement=problem_statement,
        potential_fix=story.potential_fix,
        format_instructions=format_reminder(_BASELINE_SCHEMA),
    )
    if feedback:
        user += prompts.feedback_suffix(feedback)

    anchor = _content_tokens(story.potential_fix)

    def anchored(text: str) -> bool:
        # A fix with no content tokens anchors trivially.
        return not anchor or bool(anchor & _content_tokens(text))

    parsed = complete_structured(gw, _request(stage, system, user), _BASELINE_SCHEMA, provider=provider)
    baseline = parsed["baseline_solution"].strip()
    if anchored(baseline):
        return baseline

    retry_user = (
        f"{user}\n\nYour previous draft never mentioned the suggested remedy. "
        f"Anchor it explicitly to: {story.potential_fix}"
    )
    parsed = complete_structured(
        gw, _request(stage, system, retry_user), _BASELINE_SCHEMA, provider=provider
    )
    baseline = parsed["baseline_solution"].strip()
    if not anchored(baseline):
        raise BaselineUnanchored(
            "baseline shares no content token with the potential fix after re-prompt"
        )
    return baseline


def identify_defects(
    problem_statement: str,
    baseline_solution: str,
    gw: Gateway,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    provider: ProviderConfig | None = None,
    feedback: str = "",
) -> tuple[tuple[Defect, ...], bool]:
    """Audit the baseline. Returns (defects, no_defects_declared).

    An empty defect list without the explicit marker gets one coverage
    re-prompt; a second empty reply is a schema violation, not a finding.
    """
    stage = "discovery.defects"
    system = prompts.system_prompt("discovery", directives.lines(Phase.DISCOVERY))
    user = prompts.render(
        "discovery_defects",
        problem_statement=problem_statement,
        baseline_solution=baseline_solution,
        format_instructions=format_reminder(_DEFECTS_SCHEMA),
    )
    if feedback:
        user += prompts.feedback_suffix(feedback)

    def build(parsed: dict) -> tuple[tuple[Defect, ...], bool] | None:
        defects = tuple(
            Defect(kind=DefectKind(rec["kind"]), description=rec["description"])
            for rec in parsed.get("defect", [])
        )
        marker = parsed.get("no_defects", "").strip()
        if defects:
            return defects, False
        if marker:
            return (), True
        return None

    parsed = complete_structured(gw, _request(stage, system, user), _DEFECTS_SCHEMA, provider=provider)
    built = build(parsed)
    if built is not None:
        return built

    retry_user = (
        f"{user}\n\nYour previous reply listed no defect records and no no_defects "
        "section. Provide one or the other."
    )
    parsed = complete_structured(
        gw, _request(stage, system, retry_user), _DEFECTS_SCHEMA, provider=provider
    )
    built = build(parsed)
    if built is None:
        raise SchemaViolation(
            ["defect audit produced neither defect records nor a no_defects marker"],
            raw_text=parsed.get("_raw", ""),
            attempts=2,
        )
    return built


def run_discovery(
    story: EnablerStory,
    gw: Gateway,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    provider: ProviderConfig | None = None,
    boundary: StageHook | None = None,
) -> StrategicBrief:
    """Run the three discovery stages in order and assemble the brief."""
    statement = run_stage(
        "discovery.refine",
        lambda fb: refine_problem(story, gw, directives, provider, feedback=fb),
        boundary,
    )
    baseline = run_stage(
        "discovery.baseline",
        lambda fb: generate_baseline(story, statement, gw, directives, provider, feedback=fb),
        boundary,
    )
    defects, declared = run_stage(
        "discovery.defects",
        lambda fb: identify_defects(statement, baseline, gw, directives, provider, feedback=fb),
        boundary,
    )
    return StrategicBrief(
        problem_statement=statement,
        baseline_solution=baseline,
        defect_analysis=defects,
        no_defects_declared=declared,
    )
