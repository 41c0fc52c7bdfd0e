"""Exploration agent: abstraction, cross-domain analogy, reverse chaining,
candidate drafting, evidence-based validation, and the acceptance filter."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any

from .control import ControlDecision, ControlSignal, Phase
from .directives import DirectiveLog, EMPTY_DIRECTIVES
from .domain import (
    Component,
    EnablerStory,
    EvidenceItem,
    FilterConfig,
    ImpactArea,
    Severity,
    StrategicBrief,
    Strategy,
    UURecord,
    ValidationScore,
    apply_uu_filter,
)
from .errors import AbstractionTooConcrete, EmptyChain, SearchError
from .gateway import (
    ENUM,
    FLOAT,
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
from .search import PURPOSE_FOR_COMPONENT, SearchAugmentor, SearchQuery
from .stages import StageHook, checked_structured, run_stage
from . import prompts

DEFAULT_DOMAINS = ("Biology", "Psychology", "Economics", "Physics")
MAX_CANDIDATES = 5

# Anchored scoring scale for validation components.
SCORE_CONTRADICTED = 0.0
SCORE_NO_EVIDENCE = 0.3
SCORE_PLAUSIBLE = 0.6
SCORE_EVIDENCED = 0.9

_COMPONENT_QUESTIONS = {
    Component.FEASIBILITY: "can this be built at all",
    Component.IMPLEMENTATION: "does a concrete route to build it exist",
    Component.CONTEXT: "does it fit this problem's constraints",
}


@dataclass(frozen=True)
class GeneralProblem:
    """Domain-free restatement of the problem as forces and constraints."""

    abstraction: str
    invariant_structure: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "abstraction": self.abstraction,
            "invariant_structure": list(self.invariant_structure),
        }


@dataclass(frozen=True)
class AnalogyCandidate:
    domain: str
    mechanism: str
    mapped_solution: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "domain": self.domain,
            "mechanism": self.mechanism,
            "mapped_solution": self.mapped_solution,
        }


@dataclass(frozen=True)
class PrerequisiteChain:
    """Backward chain from a goal; pruned holds discarded duplicates."""

    goal: str
    prerequisites: tuple[str, ...]
    pruned: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "goal": self.goal,
            "prerequisites": list(self.prerequisites),
            "pruned": list(self.pruned),
        }


@dataclass(frozen=True)
class ExplorationReport:
    """Exploration deliverable: accepted UUs plus the control decision.

    Intermediate artifacts ride along so traces and downstream reports can
    show the work; rejected keeps every candidate the filter turned away,
    verdict attached.
    """

    uus: tuple[UURecord, ...]
    control: ControlDecision
    general_problem: GeneralProblem | None = None
    analogies: tuple[AnalogyCandidate, ...] = ()
    no_analogy_domains: tuple[tuple[str, str], ...] = ()
    chain: PrerequisiteChain | None = None
    rejected: tuple[UURecord, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "uus": [u.to_dict() for u in self.uus],
            "control": self.control.to_dict(),
            "general_problem": self.general_problem.to_dict() if self.general_problem else None,
            "analogies": [a.to_dict() for a in self.analogies],
            "no_analogy_domains": [list(pair) for pair in self.no_analogy_domains],
            "chain": self.chain.to_dict() if self.chain else None,
            "rejected": [u.to_dict() for u in self.rejected],
        }


_ABSTRACT_SCHEMA = FieldSchema(
    fields=(
        FieldSpec("abstraction", TEXT),
        FieldSpec("invariants", LIST, required=False),
    )
)
_ANALOGY_SCHEMA = FieldSchema(
    fields=(
        FieldSpec(
            "analogy",
            RECORDS,
            required=False,
            subfields=(
                FieldSpec("mechanism", TEXT),
                FieldSpec("mapped_solution", TEXT),
            ),
        ),
        FieldSpec("no_analogy", TEXT, required=False),
    )
)
_REVERSE_SCHEMA = FieldSchema(
    fields=(
        FieldSpec("prerequisites", LIST),
        FieldSpec("pruned", LIST, required=False),
    )
)
_CANDIDATES_SCHEMA = FieldSchema(
    fields=(
        FieldSpec(
            "candidate",
            RECORDS,
            required=False,
            subfields=(
                FieldSpec("name", TEXT),
                FieldSpec("overview", TEXT),
                FieldSpec("overlooked_reason", TEXT),
                FieldSpec("strategy", ENUM, values=tuple(s.value for s in Strategy)),
                FieldSpec(
                    "severity",
                    ENUM,
                    required=False,
                    values=tuple(s.value for s in Severity),
                ),
                FieldSpec("impact_areas", TEXT, required=False, csv=True),
                FieldSpec("conflicts_with", TEXT, required=False, csv=True),
                FieldSpec("critical_quote", TEXT, required=False),
            ),
        ),
        FieldSpec("no_candidates", TEXT, required=False),
    )
)
_VALIDATE_SCHEMA = FieldSchema(
    fields=(
        FieldSpec("score", FLOAT),
        FieldSpec("cites", TEXT, csv=True),
        FieldSpec("rationale", TEXT, required=False),
    )
)


def _request(stage: str, system: str, user: str) -> ChatRequest:
    return ChatRequest(
        stage_tag=stage,
        system_prompt=system,
        user_prompt=user,
        temperature=stage_temperature(stage),
    )


def _tokens(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9']+", text.lower()))


def find_stopwords(text: str, stopwords: tuple[str, ...]) -> list[str]:
    """Software-vocabulary tokens present in the text, in stopword order."""
    present = _tokens(text)
    return [w for w in stopwords if w in present]


def abstract_problem(
    brief: StrategicBrief,
    gw: Gateway,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    stopwords: tuple[str, ...] | None = None,
    provider: ProviderConfig | None = None,
    feedback: str = "",
) -> GeneralProblem:
    """Generalize the problem; software vocabulary is banned from the result.

    One corrective re-prompt names the offending terms; a second offense
    raises AbstractionTooConcrete.
    """
    stage = "exploration.abstract"
    words = stopwords if stopwords is not None else prompts.load_stopwords()
    system = prompts.system_prompt("exploration", directives.lines(Phase.EXPLORATION))
    user = prompts.render(
        "exploration_abstract",
        problem_statement=brief.problem_statement,
        baseline_solution=brief.baseline_solution,
        defects=prompts.bulleted(
            [f"{d.kind.value}: {d.description}" for d in brief.defect_analysis]
        ),
        banned_terms=", ".join(words),
        format_instructions=format_reminder(_ABSTRACT_SCHEMA),
    )
    if feedback:
        user += prompts.feedback_suffix(feedback)

    parsed = complete_structured(gw, _request(stage, system, user), _ABSTRACT_SCHEMA, provider=provider)
    offending = find_stopwords(parsed["abstraction"], words)
    if not offending:
        return GeneralProblem(
            abstraction=parsed["abstraction"],
            invariant_structure=tuple(parsed.get("invariants", [])),
        )

    retry_user = (
        f"{user}\n\nYour previous abstraction still used software vocabulary: "
        f"{', '.join(offending)}. Remove every such term."
    )
    parsed = complete_structured(
        gw, _request(stage, system, retry_user), _ABSTRACT_SCHEMA, provider=provider
    )
    offending = find_stopwords(parsed["abstraction"], words)
    if offending:
        raise AbstractionTooConcrete(offending)
    return GeneralProblem(
        abstraction=parsed["abstraction"],
        invariant_structure=tuple(parsed.get("invariants", [])),
    )


def map_analogies(
    problem: GeneralProblem,
    gw: Gateway,
    domains: tuple[str, ...] = DEFAULT_DOMAINS,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    provider: ProviderConfig | None = None,
    feedback: str = "",
) -> tuple[tuple[AnalogyCandidate, ...], tuple[tuple[str, str], ...]]:
    """Mine each domain for mechanisms; a domain may opt out with a reason.

    Returns (analogies, (domain, reason) pairs for opt-outs). Every domain
    must produce one or the other.
    """
    stage = "exploration.analogy"
    system = prompts.system_prompt("exploration", directives.lines(Phase.EXPLORATION))
    analogies: list[AnalogyCandidate] = []
    markers: list[tuple[str, str]] = []
    for domain in domains:
        user = prompts.render(
            "exploration_analogy",
            abstraction=problem.abstraction,
            invariants=prompts.bulleted(list(problem.invariant_structure)),
            domain=domain,
            format_instructions=format_reminder(_ANALOGY_SCHEMA),
        )
        if feedback:
            user += prompts.feedback_suffix(feedback)

        def check(parsed: dict[str, Any]) -> list[str]:
            if parsed.get("analogy") or parsed.get("no_analogy", "").strip():
                return []
            return [f"no analogy records and no no_analogy section for {domain}"]

        parsed = checked_structured(
            gw, _request(stage, system, user), _ANALOGY_SCHEMA, check, provider=provider
        )
        for rec in parsed.get("analogy", []):
            analogies.append(
                AnalogyCandidate(
                    domain=domain,
                    mechanism=rec["mechanism"],
                    mapped_solution=rec["mapped_solution"],
                )
            )
        marker = parsed.get("no_analogy", "").strip()
        if marker and not parsed.get("analogy"):
            markers.append((domain, marker))
    return tuple(analogies), tuple(markers)


def reverse_chain(
    goal: str,
    gw: Gateway,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    provider: ProviderConfig | None = None,
    feedback: str = "",
) -> PrerequisiteChain:
    """Chain prerequisites backward from the goal, deduplicated.

    Exact duplicates (case-insensitive) keep their first occurrence; later
    copies land in pruned alongside whatever the model pruned itself.
    """
    stage = "exploration.reverse"
    system = prompts.system_prompt("exploration", directives.lines(Phase.EXPLORATION))
    user = prompts.render(
        "exploration_reverse",
        goal=goal,
        format_instructions=format_reminder(_REVERSE_SCHEMA),
    )
    if feedback:
        user += prompts.feedback_suffix(feedback)

    parsed = complete_structured(gw, _request(stage, system, user), _REVERSE_SCHEMA, provider=provider)
    seen: set[str] = set()
    prerequisites: list[str] = []
    pruned: list[str] = []
    for step in parsed["prerequisites"]:
        key = step.strip().lower()
        if not key:
            continue
        if key in seen:
            pruned.append(step)
        else:
            seen.add(key)
            prerequisites.append(step)
    pruned.extend(parsed.get("pruned", []))
    if not prerequisites:
        raise EmptyChain(f"no prerequisites produced for goal: {goal!r}")
    return PrerequisiteChain(
        goal=goal, prerequisites=tuple(prerequisites), pruned=tuple(pruned)
    )


def _parse_impact_areas(raw: list[str]) -> tuple[list[str], tuple[ImpactArea, ...]]:
    problems: list[str] = []
    areas: list[ImpactArea] = []
    for item in raw:
        try:
            areas.append(ImpactArea(item.strip().lower()))
        except ValueError:
            problems.append(f"unknown impact area {item!r}")
    return problems, tuple(areas)


def generate_candidates(
    brief: StrategicBrief,
    problem: GeneralProblem,
    analogies: tuple[AnalogyCandidate, ...],
    chain: PrerequisiteChain,
    gw: Gateway,
    max_candidates: int = MAX_CANDIDATES,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    provider: ProviderConfig | None = None,
    id_namespace: str = "uu",
    feedback: str = "",
) -> tuple[UURecord, ...]:
    """Draft unvalidated candidate records from the exploration artifacts.

    Ids are assigned positionally under the caller's namespace; asserted
    conflicts are resolved from names to ids, unknown names dropped. The
    soft cap truncates rather than failing.
    """
    stage = "exploration.candidates"
    system = prompts.system_prompt("exploration", directives.lines(Phase.EXPLORATION))
    user = prompts.render(
        "exploration_candidates",
        problem_statement=brief.problem_statement,
        baseline_solution=brief.baseline_solution,
        abstraction=problem.abstraction,
        analogies=prompts.bulleted(
            [f"{a.domain}: {a.mechanism} -> {a.mapped_solution}" for a in analogies]
        ),
        chain=prompts.numbered(list(chain.prerequisites)),
        max_candidates=max_candidates,
        format_instructions=format_reminder(_CANDIDATES_SCHEMA),
    )
    if feedback:
        user += prompts.feedback_suffix(feedback)

    def check(parsed: dict[str, Any]) -> list[str]:
        records = parsed.get("candidate", [])
        if not records and not parsed.get("no_candidates", "").strip():
            return ["no candidate records and no no_candidates section"]
        problems: list[str] = []
        for i, rec in enumerate(records, start=1):
            impact_problems, _ = _parse_impact_areas(rec.get("impact_areas", []))
            problems.extend(f"candidate {i}: {p}" for p in impact_problems)
            if rec.get("severity") == Severity.CRITICAL.value and not rec.get(
                "critical_quote", ""
            ).strip():
                problems.append(
                    f"candidate {i}: severity Critical requires a critical_quote"
                )
        return problems

    parsed = checked_structured(
        gw, _request(stage, system, user), _CANDIDATES_SCHEMA, check, provider=provider
    )
    records = parsed.get("candidate", [])[:max_candidates]

    ids_by_name = {
        rec["name"].strip().lower(): f"{id_namespace}-{i}"
        for i, rec in enumerate(records, start=1)
    }
    out: list[UURecord] = []
    for i, rec in enumerate(records, start=1):
        _, areas = _parse_impact_areas(rec.get("impact_areas", []))
        conflicts = tuple(
            ids_by_name[name.strip().lower()]
            for name in rec.get("conflicts_with", [])
            if name.strip().lower() in ids_by_name
        )
        severity = Severity(rec["severity"]) if rec.get("severity") else Severity.NORMAL
        out.append(
            UURecord(
                uu_id=f"{id_namespace}-{i}",
                name=rec["name"],
                overview=rec["overview"],
                overlooked_reason=rec["overlooked_reason"],
                strategy=Strategy(rec["strategy"]),
                severity=severity,
                impact_areas=areas,
                conflicts_with=conflicts,
                critical_quote=rec.get("critical_quote", ""),
            )
        )
    return tuple(out)


def validate_candidate(
    candidate: UURecord,
    gw: Gateway,
    search: SearchAugmentor | None,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    provider: ProviderConfig | None = None,
) -> tuple[ValidationScore, tuple[EvidenceItem, ...]]:
    """Score feasibility, implementation, and context against evidence.

    Components with no evidence (search disabled, provider down, or simply
    nothing found) take exactly the no-evidence anchor with no judgment
    call made: the scoring rubric requires citing evidence, which nothing
    could satisfy.
    """
    stage = "exploration.validate"
    system = prompts.system_prompt("exploration", directives.lines(Phase.EXPLORATION))
    claim = f"{candidate.name}: {candidate.overview}"

    scores: dict[Component, float] = {}
    no_evidence: list[Component] = []
    evidence: list[EvidenceItem] = []
    for component in (Component.FEASIBILITY, Component.IMPLEMENTATION, Component.CONTEXT):
        items: tuple[EvidenceItem, ...] = ()
        if search is not None:
            try:
                items = search.search(
                    SearchQuery(
                        text=claim,
                        purpose=PURPOSE_FOR_COMPONENT[component],
                        issued_by=stage,
                    )
                )
            except SearchError:
                items = ()
        if not items:
            scores[component] = SCORE_NO_EVIDENCE
            no_evidence.append(component)
            continue

        user = prompts.render(
            "exploration_validate",
            name=candidate.name,
            overview=candidate.overview,
            component=component.value,
            component_question=_COMPONENT_QUESTIONS[component],
            evidence=prompts.evidence_block(items),
            format_instructions=format_reminder(_VALIDATE_SCHEMA),
        )

        def check(parsed: dict[str, Any]) -> list[str]:
            problems: list[str] = []
            if not 0.0 <= parsed["score"] <= 1.0:
                problems.append(f"score {parsed['score']} outside [0, 1]")
            cited = [c for c in parsed.get("cites", []) if c.strip().isdigit()]
            valid = [c for c in cited if 1 <= int(c) <= len(items)]
            if not valid:
                problems.append("at least one evidence item must be cited by number")
            return problems

        parsed = checked_structured(
            gw, _request(stage, system, user), _VALIDATE_SCHEMA, check, provider=provider
        )
        scores[component] = parsed["score"]
        evidence.extend(items)

    return (
        ValidationScore(
            feasibility=scores[Component.FEASIBILITY],
            implementation=scores[Component.IMPLEMENTATION],
            context=scores[Component.CONTEXT],
            no_evidence=tuple(no_evidence),
        ),
        tuple(evidence),
    )


def decide_control(accepted: tuple[UURecord, ...]) -> ControlDecision:
    """Control decision from the accepted set.

    A Critical finding invalidates the brief and forces a Discovery reset.
    Two or more mutually conflicting findings defer resolution to the
    Integration agent. Otherwise the pipeline continues.
    """
    critical = [u for u in accepted if u.severity is Severity.CRITICAL]
    if critical:
        return ControlDecision(
            signal=ControlSignal.RESET_TO_DISCOVERY,
            detail=tuple(u.uu_id for u in critical),
            reason=f"critical finding invalidates the brief: {critical[0].name}",
        )
    ids = {u.uu_id for u in accepted}
    conflicted: set[str] = set()
    for u in accepted:
        for other in u.conflicts_with:
            if other in ids:
                conflicted.add(u.uu_id)
                conflicted.add(other)
    if len(conflicted) >= 2:
        return ControlDecision(
            signal=ControlSignal.DEFER_TO_INTEGRATION,
            detail=tuple(sorted(conflicted)),
            reason="conflicting findings need integration-time resolution",
        )
    return ControlDecision(signal=ControlSignal.CONTINUE)


def run_exploration(
    story: EnablerStory,
    brief: StrategicBrief,
    gw: Gateway,
    search: SearchAugmentor | None = None,
    directives: DirectiveLog = EMPTY_DIRECTIVES,
    domains: tuple[str, ...] = DEFAULT_DOMAINS,
    max_candidates: int = MAX_CANDIDATES,
    stopwords: tuple[str, ...] | None = None,
    filter_config: FilterConfig | None = None,
    id_namespace: str = "uu",
    provider: ProviderConfig | None = None,
    boundary: StageHook | None = None,
) -> ExplorationReport:
    """Run the exploration stages and filter candidates into accepted UUs.

    Rejected candidates keep their verdicts so the trace can show why each
    fell. Zero accepted UUs is a legal outcome and continues the pipeline.
    """
    problem: GeneralProblem = run_stage(
        "exploration.abstract",
        lambda fb: abstract_problem(brief, gw, directives, stopwords, provider, feedback=fb),
        boundary,
    )
    analogies, markers = run_stage(
        "exploration.analogy",
        lambda fb: map_analogies(problem, gw, domains, directives, provider, feedback=fb),
        boundary,
    )
    chain: PrerequisiteChain = run_stage(
        "exploration.reverse",
        lambda fb: reverse_chain(story.expected_result, gw, directives, provider, feedback=fb),
        boundary,
    )
    candidates: tuple[UURecord, ...] = run_stage(
        "exploration.candidates",
        lambda fb: generate_candidates(
            brief,
            problem,
            analogies,
            chain,
            gw,
            max_candidates,
            directives,
            provider,
            id_namespace,
            feedback=fb,
        ),
        boundary,
    )

    def validate_all(fb: str) -> tuple[tuple[UURecord, ...], tuple[UURecord, ...]]:
        accepted: list[UURecord] = []
        rejected: list[UURecord] = []
        for cand in candidates:
            score, evidence = validate_candidate(cand, gw, search, directives, provider)
            scored = cand.with_validation(score, evidence)
            verdict = apply_uu_filter(scored, story, filter_config)
            scored = scored.with_verdict(verdict)
            (accepted if verdict.accepted else rejected).append(scored)
        return tuple(accepted), tuple(rejected)

    accepted, rejected = run_stage("exploration.validate", validate_all, boundary)

    return ExplorationReport(
        uus=accepted,
        control=decide_control(accepted),
        general_problem=problem,
        analogies=analogies,
        no_analogy_domains=markers,
        chain=chain,
        rejected=rejected,
    )
