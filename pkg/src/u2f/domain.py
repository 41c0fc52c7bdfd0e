"""Core domain types and the executable four-condition UU acceptance test.

Every type here is an immutable value object with a documented JSON shape
(snake_case field names, enums serialized by value); datasets are JSON-Lines
with one enabler story per line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any

from .errors import MissingValidation, StoryValidationError, ValidationIssue

DIMENSION_FIELDS = ("business_value", "feasibility", "impact")
TEXT_FIELDS = ("narrative", "expected_result", "actual_result", "potential_fix")


class StoryType(str, Enum):
    EXPLORATION = "Exploration"
    ARCHITECTURE = "Architecture"
    INFRASTRUCTURE = "Infrastructure"
    COMPLIANCE = "Compliance"


class Strategy(str, Enum):
    ANALOGY = "Analogy"
    REVERSE_THINKING = "ReverseThinking"


class Severity(str, Enum):
    NORMAL = "Normal"
    CRITICAL = "Critical"


class Component(str, Enum):
    """The three validation aspects a piece of evidence can support."""

    FEASIBILITY = "feasibility"
    IMPLEMENTATION = "implementation"
    CONTEXT = "context"


class ImpactArea(str, Enum):
    ARCHITECTURE = "architecture"
    TECHNOLOGY_CHOICE = "technology choice"
    CAPABILITY_PRIORITY = "capability priority"


class DefectKind(str, Enum):
    IMPLICIT_ASSUMPTION = "ImplicitAssumption"
    SCOPE_LIMITATION = "ScopeLimitation"
    SIDE_EFFECT = "SideEffect"


@dataclass(frozen=True)
class EnablerStory:
    """Structured input unit: narrative plus causal fields and 1-5 dimensions.

    Constructors do not validate; `validate_enabler_story` is the gate. That
    keeps degraded inputs (robustness suite) constructible while ingestion
    stays strict.
    """

    id: str
    narrative: str
    expected_result: str
    actual_result: str
    potential_fix: str
    story_type: StoryType
    business_value: int
    feasibility: int
    impact: int
    artifact_corpus: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "narrative": self.narrative,
            "expected_result": self.expected_result,
            "actual_result": self.actual_result,
            "potential_fix": self.potential_fix,
            "story_type": self.story_type.value,
            "business_value": self.business_value,
            "feasibility": self.feasibility,
            "impact": self.impact,
            "artifact_corpus": list(self.artifact_corpus),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EnablerStory":
        return cls(
            id=str(d["id"]),
            narrative=d["narrative"],
            expected_result=d["expected_result"],
            actual_result=d["actual_result"],
            potential_fix=d["potential_fix"],
            story_type=StoryType(d["story_type"]),
            business_value=int(d["business_value"]),
            feasibility=int(d["feasibility"]),
            impact=int(d["impact"]),
            artifact_corpus=tuple(d.get("artifact_corpus", ())),
        )


@dataclass(frozen=True)
class Defect:
    kind: DefectKind
    description: str

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "description": self.description}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Defect":
        return cls(kind=DefectKind(d["kind"]), description=d["description"])


@dataclass(frozen=True)
class StrategicBrief:
    """Discovery deliverable: refined problem, baseline solution, defect analysis."""

    problem_statement: str
    baseline_solution: str
    defect_analysis: tuple[Defect, ...]
    risks: tuple[str, ...] = ()
    no_defects_declared: bool = False  # empty defect list is legal only with this

    def to_dict(self) -> dict[str, Any]:
        return {
            "problem_statement": self.problem_statement,
            "baseline_solution": self.baseline_solution,
            "defect_analysis": [d.to_dict() for d in self.defect_analysis],
            "risks": list(self.risks),
            "no_defects_declared": self.no_defects_declared,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StrategicBrief":
        return cls(
            problem_statement=d["problem_statement"],
            baseline_solution=d["baseline_solution"],
            defect_analysis=tuple(Defect.from_dict(x) for x in d["defect_analysis"]),
            risks=tuple(d.get("risks", ())),
            no_defects_declared=bool(d.get("no_defects_declared", False)),
        )


@dataclass(frozen=True)
class EvidenceItem:
    source: str  # URL or fixture id
    snippet: str
    supports: Component | None  # None for evidence not tied to one aspect
    retrieved_at: str  # ISO-8601

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": self.source,
            "snippet": self.snippet,
            "supports": self.supports.value if self.supports else None,
            "retrieved_at": self.retrieved_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvidenceItem":
        return cls(
            source=d["source"],
            snippet=d["snippet"],
            supports=Component(d["supports"]) if d.get("supports") else None,
            retrieved_at=d["retrieved_at"],
        )


@dataclass(frozen=True)
class ValidationScore:
    """Additive evidence-grounded score: feasibility + implementation + context.

    `total` is computed, never stored, so the additivity invariant holds exactly.
    Components carrying an explicit no-evidence marker were scored on the
    degraded path (capped at 0.3).
    """

    feasibility: float
    implementation: float
    context: float
    no_evidence: tuple[Component, ...] = ()

    @property
    def total(self) -> float:
        return self.feasibility + self.implementation + self.context

    def to_dict(self) -> dict[str, Any]:
        return {
            "feasibility": self.feasibility,
            "implementation": self.implementation,
            "context": self.context,
            "total": self.total,
            "no_evidence": [c.value for c in self.no_evidence],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ValidationScore":
        return cls(
            feasibility=float(d["feasibility"]),
            implementation=float(d["implementation"]),
            context=float(d["context"]),
            no_evidence=tuple(Component(c) for c in d.get("no_evidence", ())),
        )


@dataclass(frozen=True)
class FilterVerdict:
    """Outcome of the four-condition UU acceptance test.

    `accepted` is the conjunction of the four condition flags, computed rather
    than stored, so no verdict can ever claim acceptance its flags deny.
    """

    evidence_absence: bool
    discovery_triggering: bool
    solution_space_impact: bool
    non_triviality: bool
    rejection_reasons: tuple[str, ...] = ()

    @property
    def accepted(self) -> bool:
        return (
            self.evidence_absence
            and self.discovery_triggering
            and self.solution_space_impact
            and self.non_triviality
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "evidence_absence": self.evidence_absence,
            "discovery_triggering": self.discovery_triggering,
            "solution_space_impact": self.solution_space_impact,
            "non_triviality": self.non_triviality,
            "accepted": self.accepted,
            "rejection_reasons": list(self.rejection_reasons),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FilterVerdict":
        return cls(
            evidence_absence=bool(d["evidence_absence"]),
            discovery_triggering=bool(d["discovery_triggering"]),
            solution_space_impact=bool(d["solution_space_impact"]),
            non_triviality=bool(d["non_triviality"]),
            rejection_reasons=tuple(d.get("rejection_reasons", ())),
        )


@dataclass(frozen=True)
class UURecord:
    """A discovered unknown-unknown in the three-element report structure:
    name + one-line overview, the reason it was overlooked, and supporting
    evidence — plus strategy provenance and validation results."""

    uu_id: str
    name: str
    overview: str
    overlooked_reason: str
    evidence: tuple[EvidenceItem, ...] = ()
    strategy: Strategy | None = None
    validation: ValidationScore | None = None
    severity: Severity = Severity.NORMAL
    impact_areas: tuple[ImpactArea, ...] = ()
    conflicts_with: tuple[str, ...] = ()  # uu_ids this one is asserted to conflict with
    critical_quote: str = ""  # the brief clause a Critical finding invalidates
    filter_verdict: FilterVerdict | None = None

    def with_validation(self, score: ValidationScore, evidence: tuple[EvidenceItem, ...]) -> "UURecord":
        return replace(self, validation=score, evidence=evidence)

    def with_verdict(self, verdict: FilterVerdict) -> "UURecord":
        return replace(self, filter_verdict=verdict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "uu_id": self.uu_id,
            "name": self.name,
            "overview": self.overview,
            "overlooked_reason": self.overlooked_reason,
            "evidence": [e.to_dict() for e in self.evidence],
            "strategy": self.strategy.value if self.strategy else None,
            "validation": self.validation.to_dict() if self.validation else None,
            "severity": self.severity.value,
            "impact_areas": [a.value for a in self.impact_areas],
            "conflicts_with": list(self.conflicts_with),
            "critical_quote": self.critical_quote,
            "filter_verdict": self.filter_verdict.to_dict() if self.filter_verdict else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "UURecord":
        return cls(
            uu_id=d["uu_id"],
            name=d["name"],
            overview=d["overview"],
            overlooked_reason=d["overlooked_reason"],
            evidence=tuple(EvidenceItem.from_dict(e) for e in d.get("evidence", ())),
            strategy=Strategy(d["strategy"]) if d.get("strategy") else None,
            validation=ValidationScore.from_dict(d["validation"]) if d.get("validation") else None,
            severity=Severity(d.get("severity", "Normal")),
            impact_areas=tuple(ImpactArea(a) for a in d.get("impact_areas", ())),
            conflicts_with=tuple(d.get("conflicts_with", ())),
            critical_quote=d.get("critical_quote", ""),
            filter_verdict=FilterVerdict.from_dict(d["filter_verdict"]) if d.get("filter_verdict") else None,
        )


@dataclass(frozen=True)
class Advantage:
    dimension: str  # cost | performance | risk | capability | other
    claim: str

    def to_dict(self) -> dict[str, Any]:
        return {"dimension": self.dimension, "claim": self.claim}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Advantage":
        return cls(dimension=d["dimension"], claim=d["claim"])


@dataclass(frozen=True)
class Plan:
    toolchain: tuple[str, ...]
    phases: tuple[str, ...]
    risks: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "toolchain": list(self.toolchain),
            "phases": list(self.phases),
            "risks": list(self.risks),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Plan":
        return cls(
            toolchain=tuple(d["toolchain"]),
            phases=tuple(d["phases"]),
            risks=tuple(d["risks"]),
        )


@dataclass(frozen=True)
class IntegratedSolution:
    """Final three-part deliverable: overview, comparative advantages, plan.

    An empty comparative analysis is legal only when parity with the
    baseline was explicitly declared; the flag keeps such a solution
    complete without a manufactured advantage.
    """

    overview: str
    comparative_analysis: tuple[Advantage, ...]
    implementation_plan: Plan
    parity_declared: bool = False

    def is_complete(self) -> bool:
        return bool(
            self.overview.strip()
            and (self.comparative_analysis or self.parity_declared)
            and self.implementation_plan.toolchain
            and self.implementation_plan.phases
            and self.implementation_plan.risks
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "overview": self.overview,
            "comparative_analysis": [a.to_dict() for a in self.comparative_analysis],
            "implementation_plan": self.implementation_plan.to_dict(),
            "parity_declared": self.parity_declared,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "IntegratedSolution":
        return cls(
            overview=d["overview"],
            comparative_analysis=tuple(Advantage.from_dict(a) for a in d["comparative_analysis"]),
            implementation_plan=Plan.from_dict(d["implementation_plan"]),
            parity_declared=bool(d.get("parity_declared", False)),
        )


# --- story validation -------------------------------------------------------

_REQUIRED_STORY_FIELDS = (
    "id",
    "narrative",
    "expected_result",
    "actual_result",
    "potential_fix",
    "story_type",
    "business_value",
    "feasibility",
    "impact",
)


def validate_enabler_story(raw: dict[str, Any]) -> EnablerStory:
    """Validate a parsed ingestion record into an EnablerStory.

    Collects every problem before raising, and never repairs scores: a 6 stays
    a 6 and fails. Dimension scores must be integers in [1, 5]; fractional
    values are rejected even when in range.
    """
    issues: list[ValidationIssue] = []
    for name in _REQUIRED_STORY_FIELDS:
        value = raw.get(name)
        if value is None or (isinstance(value, str) and not value.strip()):
            issues.append(ValidationIssue("missing_field", name))
    if issues:
        raise StoryValidationError(issues)

    for name in DIMENSION_FIELDS:
        value = raw[name]
        if isinstance(value, bool) or not isinstance(value, int) or not 1 <= value <= 5:
            issues.append(ValidationIssue("score_out_of_range", name, value))

    try:
        story_type = StoryType(raw["story_type"])
    except ValueError:
        issues.append(ValidationIssue("unknown_story_type", "story_type", raw["story_type"]))
        story_type = None

    if issues:
        raise StoryValidationError(issues)

    return EnablerStory(
        id=str(raw["id"]),
        narrative=raw["narrative"],
        expected_result=raw["expected_result"],
        actual_result=raw["actual_result"],
        potential_fix=raw["potential_fix"],
        story_type=story_type,
        business_value=raw["business_value"],
        feasibility=raw["feasibility"],
        impact=raw["impact"],
        artifact_corpus=tuple(raw.get("artifact_corpus", ())),
    )


# --- the four-condition filter ----------------------------------------------


@dataclass(frozen=True)
class FilterConfig:
    """Thresholds for the acceptance test.

    overlap_threshold: Jaccard similarity above which a corpus artifact counts
    as already documenting the candidate. min_total: validation total below
    which a candidate is considered trivial (mean component < 0.6).
    """

    overlap_threshold: float = 0.6
    min_total: float = 1.8

    def to_dict(self) -> dict[str, Any]:
        return {"overlap_threshold": self.overlap_threshold, "min_total": self.min_total}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FilterConfig":
        return cls(
            overlap_threshold=float(d.get("overlap_threshold", 0.6)),
            min_total=float(d.get("min_total", 1.8)),
        )


_WORD_RE = re.compile(r"[a-z0-9']+")


def _words(text: str) -> set[str]:
    return set(_WORD_RE.findall(text.lower()))


def _normalize(text: str) -> str:
    return " ".join(_WORD_RE.findall(text.lower()))


def jaccard(a: str, b: str) -> float:
    """Token Jaccard over lowercase word sets; 0.0 when either side is empty."""
    wa, wb = _words(a), _words(b)
    if not wa or not wb:
        return 0.0
    return len(wa & wb) / len(wa | wb)


def artifact_documents(candidate_overview: str, artifact: str, threshold: float) -> bool:
    """True when the artifact already covers the candidate.

    Two-part lexical test: a normalized-substring hit counts regardless of the
    artifact's length (a verbatim quote buried in a long artifact must match),
    otherwise Jaccard over word sets against the threshold.
    """
    overview_norm = _normalize(candidate_overview)
    if overview_norm and overview_norm in _normalize(artifact):
        return True
    return jaccard(candidate_overview, artifact) >= threshold


def apply_uu_filter(
    candidate: UURecord,
    story: EnablerStory,
    thresholds: FilterConfig | None = None,
) -> FilterVerdict:
    """Run the four-condition acceptance test against a scored candidate.

    Conditions: (1) evidence absence — no documented artifact already covers
    the candidate's overview; (2) discovery triggering — strategy provenance
    present; (3) solution-space impact — at least one self-declared impact
    area; (4) non-triviality — validation total at or above the threshold and
    a non-empty overlooked reason.
    """
    cfg = thresholds or FilterConfig()
    if candidate.validation is None:
        raise MissingValidation(f"candidate {candidate.uu_id} has no validation scores")

    reasons: list[str] = []

    matches = [
        art for art in story.artifact_corpus
        if artifact_documents(candidate.overview, art, cfg.overlap_threshold)
    ]
    evidence_absence = not matches
    if matches:
        reasons.append(f"already documented by {len(matches)} corpus artifact(s)")

    discovery_triggering = candidate.strategy is not None
    if not discovery_triggering:
        reasons.append("no exploration-strategy provenance")

    solution_space_impact = bool(candidate.impact_areas)
    if not solution_space_impact:
        reasons.append("no declared solution-space impact area")

    # tolerance: anchored component scores (0.3 + 0.6 + 0.9) must meet an
    # 1.8 threshold exactly despite binary float representation
    total_ok = candidate.validation.total >= cfg.min_total - 1e-9
    non_triviality = total_ok and bool(candidate.overlooked_reason.strip())
    if not non_triviality:
        if not total_ok:
            reasons.append(
                f"validation total {candidate.validation.total:.2f} below {cfg.min_total}"
            )
        if not candidate.overlooked_reason.strip():
            reasons.append("no overlooked reason given")

    return FilterVerdict(
        evidence_absence=evidence_absence,
        discovery_triggering=discovery_triggering,
        solution_space_impact=solution_space_impact,
        non_triviality=non_triviality,
        rejection_reasons=tuple(reasons),
    )


# --- JSON-Lines dataset helpers ----------------------------------------------


def load_stories(path) -> list[EnablerStory]:
    """Read a JSON-Lines dataset, validating every record."""
    from .jsonio import read_jsonl

    return [validate_enabler_story(rec) for rec in read_jsonl(path)]


def save_stories(path, stories: list[EnablerStory]) -> None:
    from .jsonio import write_jsonl

    write_jsonl(path, (s.to_dict() for s in stories))
