"""Integration agent: conflict mapping, refactoring, advantage attribution,
implementation planning, and the final control verdict."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any

from .control import ControlDecision, ControlSignal, Phase
from .directives import DirectiveLog, EMPTY_DIRECTIVES
from .domain import Advantage, IntegratedSolution, Plan, StrategicBrief, UURecord
from .errors import (
    IncompletePlan,
    NoAcceptedUUs,
    SearchError,
    UnaddressedConflict,
)
from .gateway import (
    ENUM,
    LIST,
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
from .search import SearchAugmentor, SearchPurpose, SearchQuery
from .stages import StageHook, checked_structured, run_stage
from . import prompts

ADVANTAGE_DIMENSIONS = ("cost", "performance", "risk", "capability", "other")


class ConflictRelation(str, Enum):
    CHALLENGES = "Challenges"
    ENHANCES = "Enhances"


@dataclass(frozen=True)
class ConflictEntry:
    uu_id: str
    relation: ConflictRelation
    aspect: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "uu_id": self.uu_id,
            "relation": self.relation.value,
            "aspect": self.aspect,
        }


@dataclass(frozen=True)
class ConflictMap:
    """Every accepted UU mapped once against the baseline."""

    entries: tuple[ConflictEntry, ...]

    def challenged(self) -> tuple[str, ...]:
        return tuple(
            e.uu_id for e in self.entries if e.relation is ConflictRelation.CHALLENGES
        )

    def to_dict(self) -> dict[str, Any]:
        return {"entries": [e.to_dict() for e in self.entries]}


_CONFLICTS_SCHEMA = FieldSchema(
    fields=(
        FieldSpec(
            "entry",
            RECORDS,
            subfields=(
                FieldSpec("uu", TEXT),
                FieldSpec(
                    "relation", ENUM, values=tuple(r.value for r in ConflictRelation)
                ),
                FieldSpec("aspect", TEXT),
            ),
        ),
    )
)
_REFACTOR_SCHEMA = FieldSchema(fields=(FieldSpec("refactored", TEXT),))
_ADVANTAGES_SCHEMA = FieldSchema(
    fields=(
        FieldSpec(
            "advantage",
            RECORDS,
            required=False,
            subfields=(
                FieldSpec("dimension", ENUM, values=ADVANTAGE_DIMENSIONS),
                FieldSpec("claim", TEXT),
            ),
        ),
        FieldSpec("parity", TEXT, required=False),
    )
)
_PLAN_SCHEMA = FieldSchema(
    fields=(
        FieldSpec("toolchain", LIST, required=False),
        FieldSpec("phases", LIST, required=False),
        FieldSpec("risks", LIST, required=False),
        FieldSpec(
            "control",
            ENUM,
            required=False,
            values=(
                ControlSignal.DONE.value,
                ControlSignal.DEMAND_DEEPER_EXPLORATION.value,
                ControlSignal.STRATEGIC_RESET.value,
            ),
        ),
        FieldSpec("control_reason", TEXT, required=False),
    )
)


def _request(stage: str, system: str, user: str) -> ChatRequest:
    return ChatRequest(
        stage_tag=stage,
        system_prompt=system,
        user_prompt=user,
        temperature=stage_temperature(stage),
    )


def _uu_block(uus: tuple[UURecord, ...]) -> str:
    return prompts.bulleted(
        [f"{u.uu_id} ({u.name}): {u.overview}" for u in uus]
    )


def _brief_block(brief: StrategicBrief) -> str:
    defects = "; ".join(
        f"{d.kind.value}: {d.description}" for d in brief.defect_analysis
    )
    return (
        f"Problem: {brief.problem_statement}\n"
        f"Baseline: {brief.baseline_solution}\n"
        f"Defects: {defects or '(none declared)'}"
    )


def map_conflicts(
    brief: StrategicBrief,
    uus: tuple[UURecord, ...],
    gw: Gateway,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    provider: ProviderConfig | None = None,
    feedback: str = "",
) -> ConflictMap:
    """Classify every accepted UU as challenging or enhancing the baseline.

    Coverage is strict: each UU exactly once. One corrective re-prompt
    names what is missing or duplicated before the error escalates.
    """
    if not uus:
        return ConflictMap(entries=())
    stage = "integration.conflicts"
    system = prompts.system_prompt("integration", directives.lines(Phase.INTEGRATION))
    user = prompts.render(
        "integration_conflicts",
        brief=_brief_block(brief),
        uus=_uu_block(uus),
        format_instructions=format_reminder(_CONFLICTS_SCHEMA),
    )
    if feedback:
        user += prompts.feedback_suffix(feedback)

    by_id = {u.uu_id.lower(): u.uu_id for u in uus}
    by_name = {u.name.strip().lower(): u.uu_id for u in uus}

    def resolve(label: str) -> str | None:
        key = label.strip().lower()
        return by_id.get(key) or by_name.get(key)

    def check(parsed: dict[str, Any]) -> list[str]:
        problems: list[str] = []
        seen: list[str] = []
        for rec in parsed.get("entry", []):
            uu_id = resolve(rec["uu"])
            if uu_id is None:
                problems.append(f"entry names unknown finding {rec['uu']!r}")
            else:
                seen.append(uu_id)
        for u in uus:
            count = seen.count(u.uu_id)
            if count == 0:
                problems.append(f"finding {u.uu_id} is not covered")
            elif count > 1:
                problems.append(f"finding {u.uu_id} is covered {count} times")
        return problems

    parsed = checked_structured(
        gw, _request(stage, system, user), _CONFLICTS_SCHEMA, check, provider=provider
    )
    entries = tuple(
        ConflictEntry(
            uu_id=resolve(rec["uu"]),
            relation=ConflictRelation(rec["relation"]),
            aspect=rec["aspect"],
        )
        for rec in parsed["entry"]
    )
    return ConflictMap(entries=entries)


def refactor_solution(
    brief: StrategicBrief,
    uus: tuple[UURecord, ...],
    conflicts: ConflictMap,
    gw: Gateway,
    search: SearchAugmentor | None = None,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    provider: ProviderConfig | None = None,
    feedback: str = "",
) -> str:
    """Rewrite the baseline so every challenging UU is answered by name.

    One supporting search is always issued when search is available; its
    absence or failure degrades to empty notes, never skips the rewrite.
    The naming requirement is lexical: each challenged UU's name must
    appear in the text. One corrective re-prompt, then UnaddressedConflict.
    """
    stage = "integration.refactor"
    notes = "(search unavailable)"
    if search is not None and uus:
        query_text = "refactoring guidance: " + ", ".join(u.name for u in uus)
        try:
            items = search.search(
                SearchQuery(
                    text=query_text,
                    purpose=SearchPurpose.REFACTOR_SUPPORT,
                    issued_by=stage,
                )
            )
            notes = prompts.evidence_block(items)
        except SearchError:
            notes = "(search unavailable)"

    system = prompts.system_prompt("integration", directives.lines(Phase.INTEGRATION))
    user = prompts.render(
        "integration_refactor",
        brief=_brief_block(brief),
        uus=_uu_block(uus),
        conflicts=prompts.bulleted(
            [f"{e.uu_id}: {e.relation.value} ({e.aspect})" for e in conflicts.entries]
        ),
        search_notes=notes,
        format_instructions=format_reminder(_REFACTOR_SCHEMA),
    )
    if feedback:
        user += prompts.feedback_suffix(feedback)

    names_by_id = {u.uu_id: u.name for u in uus}
    challenged_names = [names_by_id[uu_id] for uu_id in conflicts.challenged()]

    def missing_names(text: str) -> list[str]:
        lowered = text.lower()
        return [n for n in challenged_names if n.lower() not in lowered]

    parsed = complete_structured(
        gw, _request(stage, system, user), _REFACTOR_SCHEMA, provider=provider
    )
    missing = missing_names(parsed["refactored"])
    if not missing:
        return parsed["refactored"]

    retry_user = (
        f"{user}\n\nYour previous rewrite never named these challenging findings: "
        f"{', '.join(missing)}. Address each by name."
    )
    parsed = complete_structured(
        gw, _request(stage, system, retry_user), _REFACTOR_SCHEMA, provider=provider
    )
    missing = missing_names(parsed["refactored"])
    if missing:
        raise UnaddressedConflict(missing)
    return parsed["refactored"]


def attribute_advantages(
    baseline: str,
    refactored: str,
    gw: Gateway,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    provider: ProviderConfig | None = None,
    feedback: str = "",
) -> tuple[tuple[Advantage, ...], bool]:
    """Attribute wins over the baseline. Returns (advantages, parity_declared).

    No advantages without an explicit parity declaration is a violation,
    not a finding.
    """
    stage = "integration.advantages"
    system = prompts.system_prompt("integration", directives.lines(Phase.INTEGRATION))
    user = prompts.render(
        "integration_advantages",
        baseline_solution=baseline,
        refactored=refactored,
        format_instructions=format_reminder(_ADVANTAGES_SCHEMA),
    )
    if feedback:
        user += prompts.feedback_suffix(feedback)

    def check(parsed: dict[str, Any]) -> list[str]:
        if parsed.get("advantage") or parsed.get("parity", "").strip():
            return []
        return ["no advantage records and no parity section"]

    parsed = checked_structured(
        gw, _request(stage, system, user), _ADVANTAGES_SCHEMA, check, provider=provider
    )
    advantages = tuple(
        Advantage(dimension=rec["dimension"], claim=rec["claim"])
        for rec in parsed.get("advantage", [])
    )
    parity = bool(parsed.get("parity", "").strip()) and not advantages
    return advantages, parity


def _plan_call(
    refactored: str,
    gw: Gateway,
    directives: DirectiveLog,
    provider: ProviderConfig | None,
    feedback: str,
) -> tuple[Plan, ControlDecision]:
    stage = "integration.plan"
    system = prompts.system_prompt("integration", directives.lines(Phase.INTEGRATION))
    user = prompts.render(
        "integration_plan",
        refactored=refactored,
        format_instructions=format_reminder(_PLAN_SCHEMA),
    )
    if feedback:
        user += prompts.feedback_suffix(feedback)
    parsed = complete_structured(
        gw, _request(stage, system, user), _PLAN_SCHEMA, provider=provider
    )
    plan = Plan(
        toolchain=tuple(parsed.get("toolchain", [])),
        phases=tuple(parsed.get("phases", [])),
        risks=tuple(parsed.get("risks", [])),
    )
    signal = ControlSignal(parsed.get("control", ControlSignal.DONE.value))
    decision = ControlDecision(signal=signal, reason=parsed.get("control_reason", ""))
    return plan, decision


def plan_implementation(
    refactored: str,
    gw: Gateway,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    provider: ProviderConfig | None = None,
    feedback: str = "",
) -> Plan:
    """Produce a complete implementation plan: toolchain, phases, risks."""
    plan, _ = _plan_call(refactored, gw, directives, provider, feedback)
    for section in ("toolchain", "phases", "risks"):
        if not getattr(plan, section):
            raise IncompletePlan(section)
    return plan


def run_integration(
    brief: StrategicBrief,
    uus: tuple[UURecord, ...],
    gw: Gateway,
    search: SearchAugmentor | None = None,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    allow_empty_uus: bool = False,
    provider: ProviderConfig | None = None,
    boundary: StageHook | None = None,
) -> tuple[IntegratedSolution | None, ControlDecision]:
    """Run the four integration stages and return (solution, control).

    The solution is present only on a Done verdict; on a redirect signal
    the partial artifacts live in the trace, not the return value. An
    empty UU set is refused unless the caller explicitly allows it (the
    exploration-skipping configuration does).
    """
    if not uus and not allow_empty_uus:
        raise NoAcceptedUUs("integration requires at least one accepted finding")

    conflicts: ConflictMap = run_stage(
        "integration.conflicts",
        lambda fb: map_conflicts(brief, uus, gw, directives, provider, feedback=fb),
        boundary,
    )
    refactored: str = run_stage(
        "integration.refactor",
        lambda fb: refactor_solution(
            brief, uus, conflicts, gw, search, directives, provider, feedback=fb
        ),
        boundary,
    )
    advantages, parity = run_stage(
        "integration.advantages",
        lambda fb: attribute_advantages(
            brief.baseline_solution, refactored, gw, directives, provider, feedback=fb
        ),
        boundary,
    )

    def plan_stage(fb: str) -> tuple[Plan, ControlDecision]:
        plan, decision = _plan_call(refactored, gw, directives, provider, fb)
        if decision.signal is ControlSignal.DONE:
            for section in ("toolchain", "phases", "risks"):
                if not getattr(plan, section):
                    raise IncompletePlan(section)
        return plan, decision

    plan, decision = run_stage("integration.plan", plan_stage, boundary)

    if decision.signal is not ControlSignal.DONE:
        return None, decision
    solution = IntegratedSolution(
        overview=refactored,
        comparative_analysis=advantages,
        implementation_plan=plan,
        parity_declared=parity,
    )
    return solution, decision
