"""Shared test scaffolding: stories, scripted gateways, trace helpers.

Every end-to-end scenario lives here as a Bundle: the story, the run
configuration, the mock script, and the search fixtures that together
make one reproducible pipeline run. Unit tests, CLI tests, service
tests, and the acceptance gate all run the same bundles so their
expectations stay aligned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from u2f.domain import (
    Component,
    EnablerStory,
    ImpactArea,
    Severity,
    StoryType,
    Strategy,
    UURecord,
    ValidationScore,
)
from u2f.gateway import MockGateway, MockRule
from u2f.orchestrator import EventKind, RunConfig, RunMode, TraceEvent, run_case
from u2f.search import FixtureSearchProvider

# ---------------------------------------------------------------------------
# stories


def make_story(**over) -> EnablerStory:
    base = {
        "id": "case-photo-01",
        "narrative": (
            "A field research unit photographs nocturnal wildlife inside "
            "acoustically sensitive habitats. Rangers report that every "
            "mechanical capture startles the subjects and ruins follow-up "
            "shots. The unit wants image capture that leaves the soundscape "
            "untouched."
        ),
        "expected_result": (
            "Cameras capture publishable images in silence-critical "
            "environments."
        ),
        "actual_result": (
            "Every capture emits an audible shutter sound that disturbs "
            "the subjects."
        ),
        "potential_fix": (
            "Switch the capture pipeline to an electronic shutter mode."
        ),
        "story_type": "Exploration",
        "business_value": 4,
        "feasibility": 3,
        "impact": 5,
        "artifact_corpus": [],
    }
    base.update(over)
    story_type = base["story_type"]
    if isinstance(story_type, str):
        story_type = StoryType(story_type)
    return EnablerStory(
        id=base["id"],
        narrative=base["narrative"],
        expected_result=base["expected_result"],
        actual_result=base["actual_result"],
        potential_fix=base["potential_fix"],
        story_type=story_type,
        business_value=base["business_value"],
        feasibility=base["feasibility"],
        impact=base["impact"],
        artifact_corpus=tuple(base["artifact_corpus"]),
    )


# ---------------------------------------------------------------------------
# scripted responses


REFINE_TEXT = """@problem_statement
Wildlife photography in acoustically sensitive habitats fails because every mechanical capture emits audible shutter noise that disturbs the subjects."""

BASELINE_TEXT = """@baseline_solution
Adopt an electronic shutter capture mode across the fleet, disable the mechanical curtain, and validate exposure parity in the lab before field rollout."""

DEFECTS_TEXT = """@defect
kind: ImplicitAssumption
description: Assumes electronic capture matches mechanical image quality in every regime.
@defect
kind: ScopeLimitation
description: Only addresses shutter noise, not autofocus motor noise."""

ABSTRACT_TEXT = """@abstraction
An observer must record events without the act of recording emitting energy that alerts the observed. The instrument itself is the disturbance source, so observation has to be decoupled from emission.
@invariants
- observation must not perturb the observed
- the recording mechanism is the emission source"""

ANALOGY_BIOLOGY = """@analogy
mechanism: Owl feather serrations break airflow into silent micro-vortices
mapped_solution: Damp the moving parts so residual vibration never reaches audible amplitude"""

ANALOGY_PSYCHOLOGY = """@analogy
mechanism: Habituation lowers response to repeated neutral stimuli
mapped_solution: Precondition subjects with harmless playback so residual sound stops triggering alarm"""

ANALOGY_ECONOMICS = """@no_analogy
Market mechanisms trade on incentives, not on emission control."""

ANALOGY_PHYSICS = """@analogy
mechanism: Destructive interference cancels a wave with its inverse
mapped_solution: Emit an anti-phase pulse timed to the capture actuation"""

REVERSE_TEXT = """@prerequisites
- Images publish at full quality from silent captures
- Exposure artifacts of silent capture are corrected in post
- Silent capture mode is enabled on every camera body
- Subjects show no startle response during field trials
@pruned
- Silence is verified twice"""

GOLDEN_CAND_1_NAME = "Rolling Artifact Bias"
GOLDEN_CAND_1_OVERVIEW = (
    "Electronic capture introduces rolling distortion on fast wing motion "
    "that invalidates publishable frames."
)
GOLDEN_CAND_2_NAME = "Habituation Protocol"
GOLDEN_CAND_2_OVERVIEW = (
    "Gradual subject habituation can relax the silence requirement more "
    "cheaply than hardware replacement."
)

GOLDEN_CANDIDATES_TEXT = f"""@candidate
name: {GOLDEN_CAND_1_NAME}
overview: {GOLDEN_CAND_1_OVERVIEW}
overlooked_reason: Teams benchmark stills of static subjects, never peak wing speed.
strategy: ReverseThinking
severity: Normal
impact_areas: technology choice
@candidate
name: {GOLDEN_CAND_2_NAME}
overview: {GOLDEN_CAND_2_OVERVIEW}
overlooked_reason: Behavioral fixes sit outside the camera team's charter.
strategy: Analogy
severity: Normal
impact_areas: capability priority, architecture"""

VALIDATE_FEASIBILITY = """@score
0.9
@cites
1
@rationale
The cited note shows the effect is real and reproducible."""

VALIDATE_IMPLEMENTATION = """@score
0.6
@cites
1"""

VALIDATE_CONTEXT = """@score
0.6
@cites
1"""

GOLDEN_CONFLICTS_TEXT = """@entry
uu: uu1-1
relation: Challenges
aspect: exclusive reliance on electronic capture
@entry
uu: uu1-2
relation: Enhances
aspect: rollout sequencing of silent capture"""

GOLDEN_REFACTOR_TEXT = f"""@refactored
Deploy electronic capture with a damped mechanical fallback: where {GOLDEN_CAND_1_NAME} would skew fast wing motion the body falls back to the damped curtain, while the {GOLDEN_CAND_2_NAME} runs in parallel so residual noise stops mattering."""

GOLDEN_ADVANTAGES_TEXT = """@advantage
dimension: risk
claim: The damped fallback removes the publishability risk on fast subjects.
@advantage
dimension: cost
claim: Habituation defers fleet-wide hardware replacement."""

GOLDEN_PLAN_TEXT = """@toolchain
- camera fleet firmware with silent mode
- damped shutter retrofit kit
@phases
- lab parity validation
- staged field rollout
@risks
- habituation fails for skittish species
@control
Done"""


def golden_claim(name: str, overview: str) -> str:
    return f"{name}: {overview}"


GOLDEN_SEARCH = {
    golden_claim(GOLDEN_CAND_1_NAME, GOLDEN_CAND_1_OVERVIEW): [
        {
            "source": "notes/rolling-shutter",
            "snippet": "Prosumer bodies show skewed geometry on fast motion in silent mode.",
        }
    ],
    golden_claim(GOLDEN_CAND_2_NAME, GOLDEN_CAND_2_OVERVIEW): [
        {
            "source": "notes/habituation",
            "snippet": "Desensitization protocols reduced startle responses across species.",
        }
    ],
    f"refactoring guidance: {GOLDEN_CAND_1_NAME}, {GOLDEN_CAND_2_NAME}": [
        {
            "source": "notes/hybrid-shutter",
            "snippet": "Hybrid shutter firmware can fall back per scene.",
        }
    ],
}


def discovery_rules() -> list[MockRule]:
    return [
        MockRule(stage_tag="discovery.refine", text=REFINE_TEXT),
        MockRule(stage_tag="discovery.baseline", text=BASELINE_TEXT),
        MockRule(stage_tag="discovery.defects", text=DEFECTS_TEXT),
    ]


def exploration_rules(candidates_text: str) -> list[MockRule]:
    return [
        MockRule(stage_tag="exploration.abstract", text=ABSTRACT_TEXT),
        MockRule(
            stage_tag="exploration.analogy",
            contains="Domain to mine: Biology.",
            text=ANALOGY_BIOLOGY,
        ),
        MockRule(
            stage_tag="exploration.analogy",
            contains="Domain to mine: Psychology.",
            text=ANALOGY_PSYCHOLOGY,
        ),
        MockRule(
            stage_tag="exploration.analogy",
            contains="Domain to mine: Economics.",
            text=ANALOGY_ECONOMICS,
        ),
        MockRule(
            stage_tag="exploration.analogy",
            contains="Domain to mine: Physics.",
            text=ANALOGY_PHYSICS,
        ),
        MockRule(stage_tag="exploration.reverse", text=REVERSE_TEXT),
        MockRule(stage_tag="exploration.candidates", text=candidates_text),
        MockRule(
            stage_tag="exploration.validate",
            contains="Score the feasibility dimension",
            text=VALIDATE_FEASIBILITY,
        ),
        MockRule(
            stage_tag="exploration.validate",
            contains="Score the implementation dimension",
            text=VALIDATE_IMPLEMENTATION,
        ),
        MockRule(
            stage_tag="exploration.validate",
            contains="Score the context dimension",
            text=VALIDATE_CONTEXT,
        ),
    ]


def integration_defaults(
    conflicts_text: str = GOLDEN_CONFLICTS_TEXT,
    refactor_text: str = GOLDEN_REFACTOR_TEXT,
    advantages_text: str = GOLDEN_ADVANTAGES_TEXT,
    plan_text: str = GOLDEN_PLAN_TEXT,
) -> list[MockRule]:
    return [
        MockRule(stage_tag="integration.conflicts", text=conflicts_text),
        MockRule(stage_tag="integration.refactor", text=refactor_text),
        MockRule(stage_tag="integration.advantages", text=advantages_text),
        MockRule(stage_tag="integration.plan", text=plan_text),
    ]


# ---------------------------------------------------------------------------
# bundles


@dataclass
class Bundle:
    story: EnablerStory
    config: RunConfig
    rules: list[MockRule]
    search: dict[str, list[dict]]


def golden_bundle(**config_over) -> Bundle:
    config = replace(RunConfig(), **config_over) if config_over else RunConfig()
    rules = (
        discovery_rules()
        + exploration_rules(GOLDEN_CANDIDATES_TEXT)
        + integration_defaults()
    )
    return Bundle(make_story(), config, rules, dict(GOLDEN_SEARCH))


DEFER_CAND_1_NAME = "Silent Capture Parity"
DEFER_CAND_1_OVERVIEW = (
    "Full parity with mechanical image quality is unproven for the silent "
    "mode on current bodies."
)
DEFER_CAND_2_NAME = "Behavioral Desensitizing"
DEFER_CAND_2_OVERVIEW = (
    "Deliberate desensitizing of subjects could make strict silence "
    "unnecessary within one season."
)

DEFER_CANDIDATES_TEXT = f"""@candidate
name: {DEFER_CAND_1_NAME}
overview: {DEFER_CAND_1_OVERVIEW}
overlooked_reason: Parity was assumed from vendor marketing material.
strategy: ReverseThinking
severity: Normal
impact_areas: technology choice
conflicts_with: {DEFER_CAND_2_NAME}
@candidate
name: {DEFER_CAND_2_NAME}
overview: {DEFER_CAND_2_OVERVIEW}
overlooked_reason: Behavioral options were never costed against hardware.
strategy: Analogy
severity: Normal
impact_areas: capability priority
conflicts_with: {DEFER_CAND_1_NAME}"""

DEFER_CONFLICTS_TEXT = """@entry
uu: uu1-1
relation: Challenges
aspect: the assumption that silent mode ships at full quality
@entry
uu: uu1-2
relation: Enhances
aspect: the fallback posture while parity is proven"""

DEFER_REFACTOR_TEXT = f"""@refactored
Stage the rollout behind a parity gate: {DEFER_CAND_1_NAME} is treated as open until lab proof lands, and the desensitizing program runs meanwhile so the constraint itself softens."""


def deferral_bundle() -> Bundle:
    rules = (
        discovery_rules()
        + exploration_rules(DEFER_CANDIDATES_TEXT)
        + integration_defaults(
            conflicts_text=DEFER_CONFLICTS_TEXT,
            refactor_text=DEFER_REFACTOR_TEXT,
        )
    )
    search = {
        golden_claim(DEFER_CAND_1_NAME, DEFER_CAND_1_OVERVIEW): [
            {
                "source": "notes/parity-bench",
                "snippet": "Lab benches show banding artifacts in silent mode.",
            }
        ],
        golden_claim(DEFER_CAND_2_NAME, DEFER_CAND_2_OVERVIEW): [
            {
                "source": "notes/desensitizing",
                "snippet": "Season-long exposure programs reduced flight responses.",
            }
        ],
    }
    return Bundle(make_story(), RunConfig(), rules, search)


# Two-pass integration scripts. Pass one sees uu1-* identifiers, pass two
# sees uu2-*, so the refactor text (and therefore the plan prompt) differs
# between passes and the plan rule can steer the control verdict.

CONFLICTS_PASS2_TEXT = """@entry
uu: uu2-1
relation: Challenges
aspect: exclusive reliance on electronic capture
@entry
uu: uu2-2
relation: Enhances
aspect: rollout sequencing of silent capture"""

REFACTOR_PASS1_TEXT = f"""@refactored
Refactored rev A: keep electronic capture primary even though {GOLDEN_CAND_1_NAME} stays unresolved at peak wing speed, and fold the {GOLDEN_CAND_2_NAME} into the field manual."""

REFACTOR_PASS2_TEXT = f"""@refactored
Refactored rev B: hybrid capture with a damped fallback absorbs {GOLDEN_CAND_1_NAME}, while the {GOLDEN_CAND_2_NAME} relaxes the silence constraint."""

PLAN_DEEPEN_TEXT = """@control
DemandDeeperExploration
@control_reason
The findings were too shallow to plan against."""

PLAN_RESET_TEXT = """@control
StrategicReset
@control_reason
The refactored direction contradicts the brief."""

PLAN_DONE_TEXT = GOLDEN_PLAN_TEXT


def _two_pass_integration(plan_pass1_text: str) -> list[MockRule]:
    return [
        MockRule(
            stage_tag="integration.conflicts",
            contains="uu1-1 (",
            text=GOLDEN_CONFLICTS_TEXT,
        ),
        MockRule(
            stage_tag="integration.conflicts",
            contains="uu2-1 (",
            text=CONFLICTS_PASS2_TEXT,
        ),
        MockRule(
            stage_tag="integration.refactor",
            contains="uu1-1 (",
            text=REFACTOR_PASS1_TEXT,
        ),
        MockRule(
            stage_tag="integration.refactor",
            contains="uu2-1 (",
            text=REFACTOR_PASS2_TEXT,
        ),
        MockRule(
            stage_tag="integration.plan",
            contains="rev A",
            text=plan_pass1_text,
        ),
        MockRule(
            stage_tag="integration.plan",
            contains="rev B",
            text=PLAN_DONE_TEXT,
        ),
        MockRule(stage_tag="integration.advantages", text=GOLDEN_ADVANTAGES_TEXT),
    ]


def deepen_bundle(**config_over) -> Bundle:
    config = replace(RunConfig(), **config_over) if config_over else RunConfig()
    rules = (
        discovery_rules()
        + exploration_rules(GOLDEN_CANDIDATES_TEXT)
        + _two_pass_integration(PLAN_DEEPEN_TEXT)
    )
    return Bundle(make_story(), config, rules, dict(GOLDEN_SEARCH))


def strategic_bundle(**config_over) -> Bundle:
    config = replace(RunConfig(), **config_over) if config_over else RunConfig()
    rules = (
        discovery_rules()
        + exploration_rules(GOLDEN_CANDIDATES_TEXT)
        + _two_pass_integration(PLAN_RESET_TEXT)
    )
    return Bundle(make_story(), config, rules, dict(GOLDEN_SEARCH))


CRITICAL_CAND_NAME = "Quiet Habitat Premise"
CRITICAL_CAND_OVERVIEW = (
    "The strict silence requirement itself is unvalidated because several "
    "target species tolerate brief mechanical sounds."
)

CRITICAL_CANDIDATES_TEXT = f"""@candidate
name: {CRITICAL_CAND_NAME}
overview: {CRITICAL_CAND_OVERVIEW}
overlooked_reason: Nobody re-validated the acoustic constraint after the original incident report.
strategy: Analogy
severity: Critical
impact_areas: capability priority
critical_quote: every capture emits an audible shutter sound that disturbs the subjects"""


def critical_bundle(max_resets: int = 1) -> Bundle:
    config = replace(RunConfig(), max_resets=max_resets)
    rules = discovery_rules() + exploration_rules(CRITICAL_CANDIDATES_TEXT)
    search = {
        golden_claim(CRITICAL_CAND_NAME, CRITICAL_CAND_OVERVIEW): [
            {
                "source": "notes/species-tolerance",
                "snippet": "Several ungulates ignored brief mechanical clicks in trials.",
            }
        ]
    }
    return Bundle(make_story(), config, rules, search)


def baseline_bundle(mode: RunMode) -> Bundle:
    config = replace(RunConfig(), mode=mode)
    rules = [
        MockRule(
            stage_tag=f"baseline.{mode.value}",
            text="Replace the mechanical shutter with an electronic one and verify quality in the lab.",
        )
    ]
    return Bundle(make_story(), config, rules, {})


# ---------------------------------------------------------------------------
# runners and trace helpers


def run_bundle(bundle: Bundle, trace_path=None, channel=None):
    gateway = MockGateway(list(bundle.rules))
    provider = FixtureSearchProvider(entries=bundle.search)
    return run_case(
        bundle.story,
        bundle.config,
        gateway,
        search_provider=provider,
        channel=channel,
        trace_path=str(trace_path) if trace_path else None,
    )


def events_of(trace, kind: EventKind) -> list[TraceEvent]:
    return [e for e in trace.events if e.kind is kind]


_PHASE_OF_PREFIX = {
    "discovery": "Discovery",
    "exploration": "Exploration",
    "integration": "Integration",
}


def phase_visits(trace) -> list[str]:
    """Phase entry sequence, derived from stage-start events."""
    seq: list[str] = []
    for event in events_of(trace, EventKind.STAGE_START):
        prefix = event.payload["stage"].split(".", 1)[0]
        phase = _PHASE_OF_PREFIX.get(prefix)
        if phase and (not seq or seq[-1] != phase):
            seq.append(phase)
    return seq


def control_signals(trace) -> list[tuple[str, str]]:
    return [
        (e.payload["phase"], e.payload["signal"])
        for e in events_of(trace, EventKind.CONTROL_SIGNAL)
    ]


def provider_requests(trace) -> list[dict]:
    return [e.payload["request"] for e in events_of(trace, EventKind.PROVIDER_CALL)]


class StageBoundaryChannel:
    """Delivers scripted directives the first time a stage boundary fires."""

    def __init__(self, by_stage):
        self._pending = {k: list(v) for k, v in by_stage.items()}

    def boundary(self, stage: str):
        return self._pending.pop(stage, [])


def write_mock_dir(path, rules) -> str:
    path.mkdir(parents=True, exist_ok=True)
    (path / "rules.json").write_text(
        json.dumps([r.to_dict() for r in rules], indent=2), encoding="utf-8"
    )
    return str(path)


def write_search_file(path, entries) -> str:
    lines = [
        json.dumps({"query": q, "results": results})
        for q, results in entries.items()
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------------------
# UU filter fixture suite: five accepts, three rejects, exact expected flags


def _candidate(uu_id, overview, **over) -> UURecord:
    kwargs = {
        "uu_id": uu_id,
        "name": over.pop("name", f"Finding {uu_id}"),
        "overview": overview,
        "overlooked_reason": over.pop("overlooked_reason", "nobody owned the question"),
        "strategy": over.pop("strategy", Strategy.ANALOGY),
        "validation": over.pop(
            "validation", ValidationScore(feasibility=0.9, implementation=0.9, context=0.9)
        ),
        "impact_areas": over.pop("impact_areas", (ImpactArea.ARCHITECTURE,)),
    }
    kwargs.update(over)
    return UURecord(**kwargs)


FILTER_CASES = [
    {
        "label": "accept: clean candidate, empty corpus",
        "candidate": _candidate(
            "flt-1",
            "thermal drift skews the calibration rig every dawn",
        ),
        "corpus": (),
        "expect": (True, True, True, True),
        "reasons": (),
    },
    {
        "label": "accept: total exactly at the threshold",
        "candidate": _candidate(
            "flt-2",
            "battery swell disables the remote triggers in summer",
            validation=ValidationScore(feasibility=0.3, implementation=0.6, context=0.9),
        ),
        "corpus": (),
        "expect": (True, True, True, True),
        "reasons": (),
    },
    {
        "label": "accept: corpus overlap stays below the threshold",
        "candidate": _candidate(
            "flt-3",
            "thermal drift skews the calibration rig",
            strategy=Strategy.REVERSE_THINKING,
        ),
        "corpus": ("calibration rig maintenance schedule and parts list",),
        "expect": (True, True, True, True),
        "reasons": (),
    },
    {
        "label": "accept: critical severity is orthogonal to the filter",
        "candidate": _candidate(
            "flt-4",
            "firmware rollbacks erase the acoustic profiles",
            severity=Severity.CRITICAL,
            critical_quote="profiles lost on rollback",
            impact_areas=(ImpactArea.ARCHITECTURE, ImpactArea.CAPABILITY_PRIORITY),
        ),
        "corpus": (),
        "expect": (True, True, True, True),
        "reasons": (),
    },
    {
        "label": "accept: rich corpus, all artifacts unrelated",
        "candidate": _candidate(
            "flt-5",
            "power rail brownouts reset the annotation boards",
        ),
        "corpus": (
            "annotation backlog triage notes",
            "field wiring diagram for the capture shed",
            "board replacement vendor quotes",
        ),
        "expect": (True, True, True, True),
        "reasons": (),
    },
    {
        "label": "reject: overview quoted verbatim in a corpus artifact",
        "candidate": _candidate(
            "flt-6",
            "vibration from the cooling fan blurs long exposures",
        ),
        "corpus": (
            "Ops log 114: vibration from the cooling fan blurs long "
            "exposures; tripod damping pads ordered.",
        ),
        "expect": (False, True, True, True),
        "reasons": ("already documented by 1 corpus artifact(s)",),
    },
    {
        "label": "reject: high word overlap plus missing strategy",
        "candidate": _candidate(
            "flt-7",
            "sensor housing traps condensation overnight",
            strategy=None,
        ),
        "corpus": ("sensor housing traps condensation nightly",),
        "expect": (False, False, True, True),
        "reasons": (
            "already documented by 1 corpus artifact(s)",
            "no exploration-strategy provenance",
        ),
    },
    {
        "label": "reject: weak validation, no impact, no reason",
        "candidate": _candidate(
            "flt-8",
            "spare parts sourcing has a single supplier",
            validation=ValidationScore(
                feasibility=0.3,
                implementation=0.3,
                context=0.3,
                no_evidence=(
                    Component.FEASIBILITY,
                    Component.IMPLEMENTATION,
                    Component.CONTEXT,
                ),
            ),
            impact_areas=(),
            overlooked_reason="",
        ),
        "corpus": (),
        "expect": (True, True, False, False),
        "reasons": (
            "no declared solution-space impact area",
            "validation total 0.90 below 1.8",
            "no overlooked reason given",
        ),
    },
]


def filter_story(case) -> EnablerStory:
    return make_story(id=f"story-{case['candidate'].uu_id}", artifact_corpus=list(case["corpus"]))
