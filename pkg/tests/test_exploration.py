"""Exploration agent: abstraction ban, analogy mining, reverse chaining,
candidate drafting, evidence validation, and the control call."""

import pytest
from conftest import (
    ABSTRACT_TEXT,
    ANALOGY_BIOLOGY,
    ANALOGY_ECONOMICS,
    ANALOGY_PHYSICS,
    ANALOGY_PSYCHOLOGY,
    BASELINE_TEXT,
    DEFER_CANDIDATES_TEXT,
    GOLDEN_CAND_1_NAME,
    GOLDEN_CAND_2_NAME,
    GOLDEN_CANDIDATES_TEXT,
    GOLDEN_SEARCH,
    REFINE_TEXT,
    REVERSE_TEXT,
    VALIDATE_CONTEXT,
    VALIDATE_FEASIBILITY,
    VALIDATE_IMPLEMENTATION,
    exploration_rules,
    make_story,
)

from u2f.control import ControlSignal
from u2f.domain import (
    Component,
    Defect,
    DefectKind,
    ImpactArea,
    Severity,
    StrategicBrief,
    Strategy,
    UURecord,
    ValidationScore,
)
from u2f.errors import (
    AbstractionTooConcrete,
    EmptyChain,
    SchemaViolation,
    SearchError,
    StageError,
)
from u2f.exploration import (
    DEFAULT_DOMAINS,
    MAX_CANDIDATES,
    SCORE_NO_EVIDENCE,
    GeneralProblem,
    PrerequisiteChain,
    abstract_problem,
    decide_control,
    find_stopwords,
    generate_candidates,
    map_analogies,
    reverse_chain,
    run_exploration,
    validate_candidate,
)
from u2f.gateway import ChatResponse, MockGateway, MockRule
from u2f.search import FixtureSearchProvider, SearchAugmentor
from u2f import prompts


def make_brief() -> StrategicBrief:
    statement = REFINE_TEXT.split("\n", 1)[1]
    baseline = BASELINE_TEXT.split("\n", 1)[1]
    return StrategicBrief(
        problem_statement=statement,
        baseline_solution=baseline,
        defect_analysis=(
            Defect(DefectKind.IMPLICIT_ASSUMPTION, "Assumes parity everywhere."),
            Defect(DefectKind.SCOPE_LIMITATION, "Ignores autofocus noise."),
        ),
    )


def make_problem() -> GeneralProblem:
    return GeneralProblem(
        abstraction=(
            "An observer must record events without the act of recording "
            "emitting energy that alerts the observed."
        ),
        invariant_structure=("observation must not perturb the observed",),
    )


def make_chain() -> PrerequisiteChain:
    return PrerequisiteChain(
        goal="silent publishable captures",
        prerequisites=("Silent mode enabled", "Artifacts corrected"),
    )


def golden_augmentor(**over) -> SearchAugmentor:
    args = {"provider": FixtureSearchProvider(entries=GOLDEN_SEARCH)}
    args.update(over)
    return SearchAugmentor(**args)


class Recorder:
    """MockGateway wrapper that keeps every request for prompt assertions."""

    def __init__(self, rules):
        self.inner = MockGateway(rules)
        self.requests = []

    def complete(self, request, provider=None):
        self.requests.append(request)
        return self.inner.complete(request, provider)

    @property
    def calls(self):
        return self.inner.call_count


# ---------------------------------------------------------------------------
# abstraction


def test_find_stopwords_orders_by_stopword_list():
    text = "The API gateway ships a database Shard"
    assert find_stopwords(text, ("database", "api", "kernel")) == ["database", "api"]
    assert find_stopwords("nothing banned here", ("api",)) == []


def test_abstract_happy_path():
    gw = MockGateway([MockRule(stage_tag="exploration.abstract", text=ABSTRACT_TEXT)])
    problem = abstract_problem(make_brief(), gw)
    assert "observer" in problem.abstraction
    assert problem.invariant_structure == (
        "observation must not perturb the observed",
        "the recording mechanism is the emission source",
    )


def test_abstract_retry_names_offenders_in_order():
    concrete = "@abstraction\nRun the backend software through a faster api."
    prompts_seen: list[str] = []

    class Spy:
        def __init__(self):
            self.replies = [concrete, ABSTRACT_TEXT]

        def complete(self, request, provider=None):
            prompts_seen.append(request.user_prompt)
            return ChatResponse(text=self.replies.pop(0), provider_id="spy")

    problem = abstract_problem(
        make_brief(), Spy(), stopwords=("software", "api", "backend")
    )
    assert problem.invariant_structure  # the clean retry landed
    assert (
        "Your previous abstraction still used software vocabulary: "
        "software, api, backend. Remove every such term." in prompts_seen[1]
    )


def test_abstract_gives_up_after_second_offense():
    concrete = "@abstraction\nDeploy the software to the cluster."
    gw = MockGateway([MockRule(stage_tag="exploration.abstract", text=concrete)])
    with pytest.raises(AbstractionTooConcrete) as err:
        abstract_problem(make_brief(), gw, stopwords=("cluster", "software"))
    assert "cluster" in str(err.value) and "software" in str(err.value)


def test_abstract_default_stopword_list_is_loaded():
    # a reply using stock software vocabulary trips the default ban
    concrete = "@abstraction\nThe kubernetes deployment scales the api pods."
    gw = MockGateway([MockRule(stage_tag="exploration.abstract", text=concrete)])
    with pytest.raises(AbstractionTooConcrete):
        abstract_problem(make_brief(), gw)
    assert "kubernetes" in prompts.load_stopwords()


# ---------------------------------------------------------------------------
# analogy mining


def analogy_rules() -> list[MockRule]:
    return [
        r
        for r in exploration_rules(GOLDEN_CANDIDATES_TEXT)
        if r.stage_tag == "exploration.analogy"
    ]


def test_map_analogies_collects_domains_and_opt_outs():
    gw = MockGateway(analogy_rules())
    analogies, markers = map_analogies(make_problem(), gw)
    assert [a.domain for a in analogies] == ["Biology", "Psychology", "Physics"]
    assert analogies[0].mechanism.startswith("Owl feather")
    assert analogies[2].mapped_solution.startswith("Emit an anti-phase")
    assert markers == (
        ("Economics", "Market mechanisms trade on incentives, not on emission control."),
    )


def test_map_analogies_retries_a_domain_with_neither_section():
    # correction rule listed first: contains rules match in listed order and
    # the retry prompt still carries the original domain line
    gw = Recorder(
        [
            MockRule(
                stage_tag="exploration.analogy",
                contains="Your previous reply was rejected",
                text=ANALOGY_BIOLOGY,
            ),
            # parses fine (optional empty text) but satisfies neither branch
            MockRule(
                stage_tag="exploration.analogy",
                contains="Domain to mine: Biology.",
                text="@no_analogy\n",
            ),
        ]
    )
    analogies, markers = map_analogies(make_problem(), gw, domains=("Biology",))
    assert len(analogies) == 1 and markers == ()
    assert gw.calls == 2
    assert (
        "no analogy records and no no_analogy section for Biology"
        in gw.requests[1].user_prompt
    )


def test_map_analogies_records_win_over_stray_opt_out():
    both = ANALOGY_BIOLOGY + "\n@no_analogy\nAlso nothing here."
    gw = MockGateway([MockRule(stage_tag="exploration.analogy", text=both)])
    analogies, markers = map_analogies(make_problem(), gw, domains=("Biology",))
    assert len(analogies) == 1
    assert markers == ()


def test_default_domains():
    assert DEFAULT_DOMAINS == ("Biology", "Psychology", "Economics", "Physics")


# ---------------------------------------------------------------------------
# reverse chaining


def test_reverse_chain_keeps_order_and_prunes():
    gw = MockGateway([MockRule(stage_tag="exploration.reverse", text=REVERSE_TEXT)])
    chain = reverse_chain("silent captures", gw)
    assert chain.goal == "silent captures"
    assert len(chain.prerequisites) == 4
    assert chain.prerequisites[0].startswith("Images publish")
    assert chain.pruned == ("Silence is verified twice",)


def test_reverse_chain_dedups_case_insensitively():
    text = (
        "@prerequisites\n- Enable silent mode\n- ENABLE SILENT MODE\n"
        "- Verify exposure\n@pruned\n- model pruned this"
    )
    gw = MockGateway([MockRule(stage_tag="exploration.reverse", text=text)])
    chain = reverse_chain("goal", gw)
    assert chain.prerequisites == ("Enable silent mode", "Verify exposure")
    assert chain.pruned == ("ENABLE SILENT MODE", "model pruned this")


def test_reverse_chain_raises_on_empty_chain():
    text = "@prerequisites\n-  \n-   "
    gw = MockGateway([MockRule(stage_tag="exploration.reverse", text=text)])
    with pytest.raises(EmptyChain) as err:
        reverse_chain("the goal", gw)
    assert "the goal" in str(err.value)


# ---------------------------------------------------------------------------
# candidate drafting


def candidates_gw(text: str) -> MockGateway:
    return MockGateway([MockRule(stage_tag="exploration.candidates", text=text)])


def draft(gw: MockGateway, **over) -> tuple[UURecord, ...]:
    args = {
        "brief": make_brief(),
        "problem": make_problem(),
        "analogies": (),
        "chain": make_chain(),
        "gw": gw,
    }
    args.update(over)
    return generate_candidates(**args)


def test_candidates_ids_are_positional_and_fields_parse():
    uus = draft(candidates_gw(GOLDEN_CANDIDATES_TEXT))
    assert [u.uu_id for u in uus] == ["uu-1", "uu-2"]
    assert uus[0].name == GOLDEN_CAND_1_NAME
    assert uus[0].strategy is Strategy.REVERSE_THINKING
    assert uus[0].severity is Severity.NORMAL
    assert uus[0].impact_areas == (ImpactArea.TECHNOLOGY_CHOICE,)
    assert uus[1].strategy is Strategy.ANALOGY
    assert uus[1].impact_areas == (
        ImpactArea.CAPABILITY_PRIORITY,
        ImpactArea.ARCHITECTURE,
    )
    assert uus[0].validation is None  # drafting never scores


def test_candidates_namespace_prefixes_ids():
    uus = draft(candidates_gw(GOLDEN_CANDIDATES_TEXT), id_namespace="uu2")
    assert [u.uu_id for u in uus] == ["uu2-1", "uu2-2"]


def test_candidates_conflicts_resolve_names_to_ids():
    uus = draft(candidates_gw(DEFER_CANDIDATES_TEXT))
    assert uus[0].conflicts_with == ("uu-2",)
    assert uus[1].conflicts_with == ("uu-1",)


def test_candidates_unknown_conflict_names_are_dropped():
    text = GOLDEN_CANDIDATES_TEXT + "\nconflicts_with: Phantom Finding"
    uus = draft(candidates_gw(text))
    assert uus[1].conflicts_with == ()


def test_candidates_soft_cap_truncates():
    record = (
        "@candidate\nname: Finding {i}\noverview: Overview {i}.\n"
        "overlooked_reason: Reason {i}.\nstrategy: Analogy"
    )
    text = "\n".join(record.format(i=i) for i in range(1, 8))
    uus = draft(candidates_gw(text), max_candidates=3)
    assert [u.uu_id for u in uus] == ["uu-1", "uu-2", "uu-3"]
    assert uus[-1].name == "Finding 3"
    assert MAX_CANDIDATES == 5


def test_candidates_unknown_impact_area_is_rejected_then_retried():
    bad = GOLDEN_CANDIDATES_TEXT.replace(
        "impact_areas: technology choice", "impact_areas: warp drive"
    )
    gw = Recorder(
        [
            MockRule(
                stage_tag="exploration.candidates",
                contains="Your previous reply was rejected",
                text=GOLDEN_CANDIDATES_TEXT,
            ),
            MockRule(stage_tag="exploration.candidates", text=bad),
        ]
    )
    uus = draft(gw)
    assert gw.calls == 2
    assert "candidate 1: unknown impact area 'warp drive'" in gw.requests[1].user_prompt
    assert uus[0].impact_areas == (ImpactArea.TECHNOLOGY_CHOICE,)


def test_candidates_critical_without_quote_is_rejected():
    critical = GOLDEN_CANDIDATES_TEXT.replace(
        "strategy: ReverseThinking\nseverity: Normal",
        "strategy: ReverseThinking\nseverity: Critical",
    )
    gw = MockGateway([MockRule(stage_tag="exploration.candidates", text=critical)])
    with pytest.raises(SchemaViolation) as err:
        draft(gw)
    assert "candidate 1: severity Critical requires a critical_quote" in str(err.value)
    assert gw.call_count == 2


def test_candidates_critical_with_quote_passes():
    critical = GOLDEN_CANDIDATES_TEXT.replace(
        "strategy: ReverseThinking\nseverity: Normal",
        "strategy: ReverseThinking\nseverity: Critical\n"
        "critical_quote: every mechanical capture emits audible shutter noise",
    )
    uus = draft(candidates_gw(critical))
    assert uus[0].severity is Severity.CRITICAL
    assert uus[0].critical_quote.startswith("every mechanical capture")


def test_candidates_explicit_opt_out_yields_empty():
    text = "@no_candidates\nThe exploration artifacts expose no overlooked angle."
    assert draft(candidates_gw(text)) == ()


# ---------------------------------------------------------------------------
# validation


def make_candidate(name: str, overview: str) -> UURecord:
    return UURecord(
        uu_id="uu-1",
        name=name,
        overview=overview,
        overlooked_reason="Benchmarks skip this regime.",
        strategy=Strategy.REVERSE_THINKING,
        impact_areas=(ImpactArea.TECHNOLOGY_CHOICE,),
    )


def golden_candidate() -> UURecord:
    return make_candidate(
        GOLDEN_CAND_1_NAME,
        "Electronic capture introduces rolling distortion on fast wing motion "
        "that invalidates publishable frames.",
    )


def validate_rules() -> list[MockRule]:
    return [
        r
        for r in exploration_rules(GOLDEN_CANDIDATES_TEXT)
        if r.stage_tag == "exploration.validate"
    ]


def test_validate_scores_every_component_from_evidence():
    gw = Recorder(validate_rules())
    score, evidence = validate_candidate(golden_candidate(), gw, golden_augmentor())
    assert (score.feasibility, score.implementation, score.context) == (0.9, 0.6, 0.6)
    assert score.no_evidence == ()
    assert len(evidence) == 3  # one hit per component, same cached result
    assert {e.supports for e in evidence} == {
        Component.FEASIBILITY,
        Component.IMPLEMENTATION,
        Component.CONTEXT,
    }
    assert gw.calls == 3


def test_validate_without_search_anchors_no_evidence_scores():
    # an empty gateway raises on any call, so success proves no model call
    score, evidence = validate_candidate(golden_candidate(), MockGateway([]), None)
    assert (score.feasibility, score.implementation, score.context) == (
        SCORE_NO_EVIDENCE,
    ) * 3
    assert score.no_evidence == (
        Component.FEASIBILITY,
        Component.IMPLEMENTATION,
        Component.CONTEXT,
    )
    assert evidence == ()


def test_validate_treats_zero_hits_like_no_search():
    empty = SearchAugmentor(provider=FixtureSearchProvider(entries={}))
    score, evidence = validate_candidate(golden_candidate(), MockGateway([]), empty)
    assert score.total == pytest.approx(3 * SCORE_NO_EVIDENCE)
    assert evidence == ()


def test_validate_swallows_search_errors_per_component():
    class FailingProvider:
        def search(self, text, max_results):
            raise SearchError("index offline")

    broken = SearchAugmentor(provider=FailingProvider())
    score, _ = validate_candidate(golden_candidate(), MockGateway([]), broken)
    assert score.no_evidence == (
        Component.FEASIBILITY,
        Component.IMPLEMENTATION,
        Component.CONTEXT,
    )


def test_validate_rejects_out_of_range_score():
    rules = [
        MockRule(
            stage_tag="exploration.validate",
            contains="Your previous reply was rejected",
            text=VALIDATE_FEASIBILITY,
        ),
        MockRule(stage_tag="exploration.validate", text="@score\n1.5\n@cites\n1"),
    ]
    gw = Recorder(rules)
    score, _ = validate_candidate(golden_candidate(), gw, golden_augmentor())
    assert "score 1.5 outside [0, 1]" in gw.requests[1].user_prompt
    assert score.feasibility == 0.9


def test_validate_requires_a_citation_in_range():
    # cites "7" with one evidence item on offer is rejected
    rules = [
        MockRule(
            stage_tag="exploration.validate",
            contains="Your previous reply was rejected",
            text=VALIDATE_FEASIBILITY,
        ),
        MockRule(stage_tag="exploration.validate", text="@score\n0.9\n@cites\n7"),
    ]
    gw = Recorder(rules)
    validate_candidate(golden_candidate(), gw, golden_augmentor())
    assert (
        "at least one evidence item must be cited by number"
        in gw.requests[1].user_prompt
    )


def test_validate_prompt_carries_component_and_evidence():
    gw = Recorder(validate_rules())
    validate_candidate(golden_candidate(), gw, golden_augmentor())
    first = gw.requests[0].user_prompt
    assert "Score the feasibility dimension" in first
    assert "notes/rolling-shutter" in first
    assert "Score the context dimension" in gw.requests[2].user_prompt


# ---------------------------------------------------------------------------
# control decision


def scored(uu: UURecord, **over) -> UURecord:
    fields = dict(
        feasibility=0.9, implementation=0.9, context=0.9, no_evidence=()
    )
    return uu.with_validation(ValidationScore(**fields), ())


def test_decide_control_continues_on_empty_set():
    decision = decide_control(())
    assert decision.signal is ControlSignal.CONTINUE


def test_decide_control_resets_on_critical():
    normal = make_candidate("Plain", "A plain finding.")
    critical = UURecord(
        uu_id="uu-2",
        name="Fatal Premise",
        overview="The brief rests on a false premise.",
        overlooked_reason="Nobody re-read the source claim.",
        strategy=Strategy.ANALOGY,
        severity=Severity.CRITICAL,
        critical_quote="the premise text",
    )
    decision = decide_control((normal, critical))
    assert decision.signal is ControlSignal.RESET_TO_DISCOVERY
    assert decision.detail == ("uu-2",)
    assert "Fatal Premise" in decision.reason


def test_decide_control_defers_on_mutual_conflict():
    a = make_candidate("A", "First.")
    b = UURecord(
        uu_id="uu-2",
        name="B",
        overview="Second.",
        overlooked_reason="Reason.",
        strategy=Strategy.ANALOGY,
        conflicts_with=("uu-1",),
    )
    decision = decide_control((a, b))
    assert decision.signal is ControlSignal.DEFER_TO_INTEGRATION
    assert decision.detail == ("uu-1", "uu-2")


def test_decide_control_ignores_conflicts_outside_the_set():
    a = UURecord(
        uu_id="uu-1",
        name="A",
        overview="First.",
        overlooked_reason="Reason.",
        strategy=Strategy.ANALOGY,
        conflicts_with=("uu-9",),  # uu-9 was rejected by the filter
    )
    assert decide_control((a,)).signal is ControlSignal.CONTINUE


def test_decide_control_critical_outranks_conflicts():
    a = UURecord(
        uu_id="uu-1",
        name="A",
        overview="First.",
        overlooked_reason="Reason.",
        strategy=Strategy.ANALOGY,
        severity=Severity.CRITICAL,
        critical_quote="quoted",
        conflicts_with=("uu-2",),
    )
    b = UURecord(
        uu_id="uu-2",
        name="B",
        overview="Second.",
        overlooked_reason="Reason.",
        strategy=Strategy.ANALOGY,
        conflicts_with=("uu-1",),
    )
    assert decide_control((a, b)).signal is ControlSignal.RESET_TO_DISCOVERY


# ---------------------------------------------------------------------------
# full exploration pass


def test_run_exploration_full_pass():
    gw = MockGateway(exploration_rules(GOLDEN_CANDIDATES_TEXT))
    report = run_exploration(
        make_story(),
        make_brief(),
        gw,
        search=golden_augmentor(),
        id_namespace="uu1",
    )
    assert [u.uu_id for u in report.uus] == ["uu1-1", "uu1-2"]
    assert report.control.signal is ControlSignal.CONTINUE
    assert report.general_problem is not None
    assert len(report.analogies) == 3
    assert report.no_analogy_domains[0][0] == "Economics"
    assert len(report.chain.prerequisites) == 4
    assert report.rejected == ()
    for uu in report.uus:
        assert uu.filter_verdict is not None and uu.filter_verdict.accepted
        assert uu.validation.total == pytest.approx(2.1)


def test_run_exploration_zero_accepted_is_legal():
    gw = MockGateway(exploration_rules(GOLDEN_CANDIDATES_TEXT))
    report = run_exploration(make_story(), make_brief(), gw, search=None)
    assert report.uus == ()
    assert len(report.rejected) == 2
    assert report.control.signal is ControlSignal.CONTINUE
    for uu in report.rejected:
        assert not uu.filter_verdict.accepted
        assert uu.validation.total == pytest.approx(0.9)


def test_run_exploration_wraps_stage_failures():
    rules = [
        r
        for r in exploration_rules(GOLDEN_CANDIDATES_TEXT)
        if r.stage_tag != "exploration.abstract"
    ]
    rules.append(
        MockRule(stage_tag="exploration.abstract", text="@abstraction\nUse the api.")
    )
    with pytest.raises(StageError) as err:
        run_exploration(make_story(), make_brief(), MockGateway(rules))
    assert err.value.stage == "exploration.abstract"
    assert isinstance(err.value.cause, AbstractionTooConcrete)
