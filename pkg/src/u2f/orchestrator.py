"""Run orchestration: the phase state machine, tracing, execution, replay.

Everything a run produces is reconstructable from its trace: the trace
header carries the story and config, and every provider call, search,
directive, control signal, and error is an ordered event. Replay feeds
the recorded responses back through the same code paths and must land on
a byte-identical result.
"""

from __future__ import annotations

import queue as queue_mod
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Callable, Sequence

from .control import ControlDecision, ControlSignal, Phase
from .directives import ALL_PHASES, DirectiveKind, DirectiveLog, HumanDirective
from .discovery import run_discovery
from .domain import EnablerStory, FilterConfig, IntegratedSolution, StrategicBrief, UURecord
from .errors import (
    IllegalTransition,
    StageError,
    TerminalState,
    TraceDivergence,
    U2FError,
)
from .exploration import DEFAULT_DOMAINS, ExplorationReport, run_exploration
from .gateway import ChatRequest, ChatResponse, Gateway, ProviderConfig, stage_temperature
from .integration import run_integration
from .jsonio import dumps_canonical
from .search import SearchAugmentor, SearchProvider
from . import prompts

MAX_RESETS = 3
MAX_DEEPENS = 2


class RunMode(str, Enum):
    U2F = "u2f"
    ZEROSHOT = "zeroshot"
    ROLEBASED = "rolebased"
    SEAP = "seap"


# System-prompt template key per baseline mode.
_BASELINE_SYSTEM = {
    RunMode.ZEROSHOT: "plain",
    RunMode.ROLEBASED: "rolebased",
    RunMode.SEAP: "plain",
}

ALL_STAGES = (Phase.DISCOVERY.value, Phase.EXPLORATION.value, Phase.INTEGRATION.value)


@dataclass(frozen=True)
class RunConfig:
    """Everything that shapes a run; snapshotted verbatim into the trace."""

    mode: RunMode = RunMode.U2F
    enabled_stages: tuple[str, ...] = ALL_STAGES
    search_enabled: bool = True
    max_resets: int = MAX_RESETS
    max_deepens: int = MAX_DEEPENS
    provider_id: str = "mock"
    search_provider_id: str = "fixture"
    filter_config: FilterConfig = FilterConfig()
    domains: tuple[str, ...] = DEFAULT_DOMAINS
    max_candidates: int = 5
    variant: str = "full"

    def __post_init__(self) -> None:
        for name in self.enabled_stages:
            Phase(name)
        if Phase.DISCOVERY.value not in self.enabled_stages:
            raise ValueError("the Discovery stage can never be disabled")
        if self.max_resets < 0 or self.max_deepens < 0:
            raise ValueError("signal caps must be non-negative")

    def stage_enabled(self, phase: Phase) -> bool:
        return phase.value in self.enabled_stages

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "enabled_stages": list(self.enabled_stages),
            "search_enabled": self.search_enabled,
            "max_resets": self.max_resets,
            "max_deepens": self.max_deepens,
            "provider_id": self.provider_id,
            "search_provider_id": self.search_provider_id,
            "filter_config": self.filter_config.to_dict(),
            "domains": list(self.domains),
            "max_candidates": self.max_candidates,
            "variant": self.variant,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "RunConfig":
        return RunConfig(
            mode=RunMode(d.get("mode", RunMode.U2F.value)),
            enabled_stages=tuple(d.get("enabled_stages", ALL_STAGES)),
            search_enabled=bool(d.get("search_enabled", True)),
            max_resets=int(d.get("max_resets", MAX_RESETS)),
            max_deepens=int(d.get("max_deepens", MAX_DEEPENS)),
            provider_id=d.get("provider_id", "mock"),
            search_provider_id=d.get("search_provider_id", "fixture"),
            filter_config=FilterConfig(**d["filter_config"]) if d.get("filter_config") else FilterConfig(),
            domains=tuple(d.get("domains", DEFAULT_DOMAINS)),
            max_candidates=int(d.get("max_candidates", 5)),
            variant=d.get("variant", "full"),
        )


@dataclass(frozen=True)
class PipelineState:
    """Immutable snapshot of where a run stands; step() maps state to state."""

    config: RunConfig
    phase: Phase = Phase.DISCOVERY
    reset_count: int = 0
    deepen_count: int = 0
    directives: tuple[HumanDirective, ...] = ()
    failure_reason: str = ""


def _next_after(state: PipelineState, candidates: Sequence[Phase]) -> Phase:
    for phase in candidates:
        if state.config.stage_enabled(phase):
            return phase
    return Phase.DONE


def step(state: PipelineState, signal: ControlSignal) -> PipelineState:
    """Pure transition function of the pipeline state machine.

    Transition table (counters only change where shown):

    Discovery, Continue -> Exploration if enabled, else Integration if
        enabled, else Done
    Exploration, Continue | DeferToIntegration -> Integration if enabled,
        else Done
    Exploration, ResetToDiscovery -> Discovery with reset_count+1, or
        Failed("reset cap exceeded") when reset_count == max_resets
    Integration, Done -> Done
    Integration, DemandDeeperExploration -> Exploration with
        deepen_count+1, or Failed("deepen cap exceeded") when
        deepen_count == max_deepens; Failed("deepen demanded with
        Exploration disabled") if the stage is off
    Integration, StrategicReset -> Discovery with reset_count+1, or
        Failed("reset cap exceeded") when reset_count == max_resets

    Any signal from a terminal phase raises TerminalState; any pair not
    listed raises IllegalTransition.
    """
    if state.phase.terminal:
        raise TerminalState(f"no transitions out of {state.phase.value}")

    if state.phase is Phase.DISCOVERY:
        if signal is ControlSignal.CONTINUE:
            return replace(
                state, phase=_next_after(state, (Phase.EXPLORATION, Phase.INTEGRATION))
            )
        raise IllegalTransition(state.phase.value, signal.value)

    if state.phase is Phase.EXPLORATION:
        if signal in (ControlSignal.CONTINUE, ControlSignal.DEFER_TO_INTEGRATION):
            return replace(state, phase=_next_after(state, (Phase.INTEGRATION,)))
        if signal is ControlSignal.RESET_TO_DISCOVERY:
            if state.reset_count >= state.config.max_resets:
                return replace(
                    state, phase=Phase.FAILED, failure_reason="reset cap exceeded"
                )
            return replace(
                state, phase=Phase.DISCOVERY, reset_count=state.reset_count + 1
            )
        raise IllegalTransition(state.phase.value, signal.value)

    # Integration
    if signal is ControlSignal.DONE:
        return replace(state, phase=Phase.DONE)
    if signal is ControlSignal.DEMAND_DEEPER_EXPLORATION:
        if not state.config.stage_enabled(Phase.EXPLORATION):
            return replace(
                state,
                phase=Phase.FAILED,
                failure_reason="deepen demanded with Exploration disabled",
            )
        if state.deepen_count >= state.config.max_deepens:
            return replace(
                state, phase=Phase.FAILED, failure_reason="deepen cap exceeded"
            )
        return replace(
            state, phase=Phase.EXPLORATION, deepen_count=state.deepen_count + 1
        )
    if signal is ControlSignal.STRATEGIC_RESET:
        if state.reset_count >= state.config.max_resets:
            return replace(state, phase=Phase.FAILED, failure_reason="reset cap exceeded")
        return replace(state, phase=Phase.DISCOVERY, reset_count=state.reset_count + 1)
    raise IllegalTransition(state.phase.value, signal.value)


def apply_directive(state: PipelineState, directive: HumanDirective) -> PipelineState:
    """Accept a directive into the run; terminal states take none."""
    if state.phase.terminal:
        raise TerminalState(f"run already {state.phase.value}; directive refused")
    return replace(state, directives=state.directives + (directive,))


# --- tracing --------------------------------------------------------------------


class EventKind(str, Enum):
    STAGE_START = "StageStart"
    STAGE_END = "StageEnd"
    PROVIDER_CALL = "ProviderCall"
    SEARCH_CALL = "SearchCall"
    DIRECTIVE = "Directive"
    CONTROL_SIGNAL = "ControlSignal"
    ERROR = "Error"


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    kind: EventKind
    payload: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {"seq": self.seq, "kind": self.kind.value, "payload": self.payload}


@dataclass(frozen=True)
class RunTrace:
    case_id: str
    story: dict[str, Any]
    config: dict[str, Any]
    events: tuple[TraceEvent, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "story": self.story,
            "config": self.config,
            "events": [e.to_dict() for e in self.events],
        }


def jsonable(x: Any) -> Any:
    """Best-effort conversion of stage artifacts into JSON-safe payloads."""
    if x is None or isinstance(x, (bool, int, float, str)):
        return x
    if isinstance(x, Enum):
        return x.value
    if hasattr(x, "to_dict"):
        return x.to_dict()
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(i) for i in x]
    return str(x)


class TraceLog:
    """Append-only event log; when given a path, each event is flushed as a
    JSON line the moment it is appended, so a crashed run keeps its partial
    trace on disk."""

    def __init__(
        self,
        case_id: str,
        story: dict[str, Any],
        config: dict[str, Any],
        path: str | None = None,
    ):
        self.case_id = case_id
        self.story = story
        self.config = config
        self._events: list[TraceEvent] = []
        self._stage_ends = 0
        self.listeners: list[Callable[[TraceEvent], None]] = []
        self._fh = open(path, "w", encoding="utf-8") if path else None
        if self._fh:
            header = {"header": {"case_id": case_id, "story": story, "config": config}}
            self._fh.write(dumps_canonical(header) + "\n")
            self._fh.flush()

    def append(self, kind: EventKind, payload: dict[str, Any]) -> TraceEvent:
        event = TraceEvent(seq=len(self._events) + 1, kind=kind, payload=payload)
        self._events.append(event)
        if kind is EventKind.STAGE_END:
            self._stage_ends += 1
        if self._fh:
            self._fh.write(dumps_canonical(event.to_dict()) + "\n")
            self._fh.flush()
        for listener in list(self.listeners):
            listener(event)
        return event

    @property
    def stage_end_count(self) -> int:
        return self._stage_ends

    def events(self) -> tuple[TraceEvent, ...]:
        return tuple(self._events)

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None

    def to_trace(self) -> RunTrace:
        return RunTrace(
            case_id=self.case_id,
            story=self.story,
            config=self.config,
            events=self.events(),
        )


def read_trace(path: str) -> RunTrace:
    """Load a persisted trace, checking the event sequence is gapless from 1."""
    from .jsonio import read_jsonl

    rows = list(read_jsonl(path))
    if not rows or "header" not in rows[0]:
        raise TraceDivergence(0, "trace file has no header line")
    header = rows[0]["header"]
    events = []
    for i, row in enumerate(rows[1:], start=1):
        event = TraceEvent(
            seq=int(row["seq"]), kind=EventKind(row["kind"]), payload=row["payload"]
        )
        if event.seq != i:
            raise TraceDivergence(event.seq, f"sequence gap: expected {i}")
        events.append(event)
    return RunTrace(
        case_id=header["case_id"],
        story=header["story"],
        config=header["config"],
        events=tuple(events),
    )


class TracingGateway:
    """Gateway wrapper that records every call as a ProviderCall event."""

    def __init__(self, inner: Gateway, log: TraceLog):
        self.inner = inner
        self.log = log

    def complete(self, req: ChatRequest, provider: ProviderConfig | None = None) -> ChatResponse:
        resp = self.inner.complete(req, provider)
        self.log.append(
            EventKind.PROVIDER_CALL,
            {"request": req.to_dict(), "response": resp.to_dict()},
        )
        return resp


class ReplayGateway:
    """Serves recorded responses in order, verifying each request matches."""

    def __init__(self, recorded: list[tuple[int, dict[str, Any]]]):
        self._recorded = recorded
        self._cursor = 0

    @property
    def remaining(self) -> int:
        return len(self._recorded) - self._cursor

    def complete(self, req: ChatRequest, provider: ProviderConfig | None = None) -> ChatResponse:
        if self._cursor >= len(self._recorded):
            raise TraceDivergence(
                len(self._recorded), "run issued more provider calls than were recorded"
            )
        seq, payload = self._recorded[self._cursor]
        self._cursor += 1
        rec = payload["request"]
        for fld in ("stage_tag", "system_prompt", "user_prompt"):
            if getattr(req, fld) != rec[fld]:
                raise TraceDivergence(seq, f"provider request {fld} differs from recording")
        return ChatResponse.from_dict(payload["response"])


class ReplaySearchProvider:
    """Serves recorded search results keyed by normalized query text."""

    def __init__(self, recorded: list[dict[str, Any]]):
        from .search import normalize_query

        self._normalize = normalize_query
        self._results = {
            normalize_query(p["query"]): p.get("results", []) for p in recorded
        }

    def search(self, text: str, max_results: int) -> list[dict]:
        key = self._normalize(text)
        if key not in self._results:
            raise TraceDivergence(0, f"search query was never recorded: {text!r}")
        return list(self._results[key])[:max_results]


# --- interaction channels -------------------------------------------------------


class NullInteraction:
    """No human in the loop; every boundary passes straight through."""

    def boundary(self, stage: str) -> Sequence[HumanDirective]:
        return ()


_RESUME = object()


class QueueInteraction:
    """Thread-safe channel feeding directives into a running case.

    Non-interactive: each boundary drains whatever queued up and moves on.
    Interactive: each boundary blocks until resume() arrives, collecting
    directives in the meantime; on_state reports where the run is waiting.
    """

    def __init__(
        self,
        interactive: bool = False,
        on_state: Callable[[str | None], None] | None = None,
    ):
        self._queue: queue_mod.Queue = queue_mod.Queue()
        self.interactive = interactive
        self.on_state = on_state

    def submit(self, directive: HumanDirective) -> None:
        self._queue.put(directive)

    def resume(self) -> None:
        self._queue.put(_RESUME)

    def boundary(self, stage: str) -> Sequence[HumanDirective]:
        out: list[HumanDirective] = []
        if not self.interactive:
            while True:
                try:
                    item = self._queue.get_nowait()
                except queue_mod.Empty:
                    return out
                if item is not _RESUME:
                    out.append(item)
        if self.on_state:
            self.on_state(stage)
        try:
            while True:
                item = self._queue.get()
                if item is _RESUME:
                    return out
                out.append(item)
        finally:
            if self.on_state:
                self.on_state(None)


class ReplayInteraction:
    """Re-delivers recorded human directives at their original boundaries."""

    def __init__(
        self,
        by_stage_end_count: dict[int, list[HumanDirective]],
        count_fn: Callable[[], int],
    ):
        self._by_count = by_stage_end_count
        self._count_fn = count_fn

    def boundary(self, stage: str) -> Sequence[HumanDirective]:
        return self._by_count.get(self._count_fn(), [])


# --- case execution -------------------------------------------------------------


@dataclass(frozen=True)
class CaseResult:
    """Run outcome bundle; canonical-JSON serialization is the identity
    replay must reproduce byte for byte."""

    case_id: str
    mode: str
    final_phase: str
    initial_text: str
    result_text: str
    brief: StrategicBrief | None = None
    accepted_uus: tuple[UURecord, ...] = ()
    solution: IntegratedSolution | None = None
    failure_reason: str = ""
    reset_count: int = 0
    deepen_count: int = 0
    enabled_stages: tuple[str, ...] = ALL_STAGES

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "mode": self.mode,
            "final_phase": self.final_phase,
            "initial_text": self.initial_text,
            "result_text": self.result_text,
            "brief": self.brief.to_dict() if self.brief else None,
            "accepted_uus": [u.to_dict() for u in self.accepted_uus],
            "solution": self.solution.to_dict() if self.solution else None,
            "failure_reason": self.failure_reason,
            "reset_count": self.reset_count,
            "deepen_count": self.deepen_count,
            "enabled_stages": list(self.enabled_stages),
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "CaseResult":
        return CaseResult(
            case_id=d["case_id"],
            mode=d["mode"],
            final_phase=d["final_phase"],
            initial_text=d["initial_text"],
            result_text=d["result_text"],
            brief=StrategicBrief.from_dict(d["brief"]) if d.get("brief") else None,
            accepted_uus=tuple(UURecord.from_dict(u) for u in d.get("accepted_uus", [])),
            solution=IntegratedSolution.from_dict(d["solution"]) if d.get("solution") else None,
            failure_reason=d.get("failure_reason", ""),
            reset_count=int(d.get("reset_count", 0)),
            deepen_count=int(d.get("deepen_count", 0)),
            enabled_stages=tuple(d.get("enabled_stages", ALL_STAGES)),
        )


def result_bytes(result: CaseResult) -> bytes:
    return dumps_canonical(result.to_dict()).encode("utf-8")


class _RunnerHook:
    """StageHook implementation: records events and handles boundaries."""

    def __init__(self, runner: "CaseRunner"):
        self.runner = runner

    def stage_start(self, name: str) -> None:
        self.runner.log.append(EventKind.STAGE_START, {"stage": name})

    def stage_end(self, name: str, rerun: Callable[[str], Any], result: Any) -> Any:
        self.runner.log.append(
            EventKind.STAGE_END, {"stage": name, "output": jsonable(result)}
        )
        directives = list(self.runner.channel.boundary(name))
        for d in directives:
            self.runner.accept_directive(d, source="human")
        for d in directives:
            if d.kind is DirectiveKind.FREE_TEXT_FEEDBACK:
                self.stage_start(name)
                try:
                    result = rerun(d.content)
                except U2FError as exc:
                    raise StageError(name, exc) from exc
                self.runner.log.append(
                    EventKind.STAGE_END, {"stage": name, "output": jsonable(result)}
                )
        return result


class CaseRunner:
    """Executes one story through the configured pipeline, tracing as it goes."""

    def __init__(
        self,
        story: EnablerStory,
        config: RunConfig,
        gateway: Gateway,
        search_provider: SearchProvider | None = None,
        channel: Any = None,
        trace_path: str | None = None,
        state_listener: Callable[[PipelineState], None] | None = None,
    ):
        self.story = story
        self.config = config
        self.channel = channel if channel is not None else NullInteraction()
        self.state_listener = state_listener
        self.log = TraceLog(
            case_id=story.id,
            story=story.to_dict(),
            config=config.to_dict(),
            path=trace_path,
        )
        self.gateway = TracingGateway(gateway, self.log)
        self.provider = ProviderConfig(provider_id=config.provider_id)
        self.augmentor: SearchAugmentor | None = None
        if config.search_enabled and search_provider is not None:
            self.augmentor = SearchAugmentor(
                provider=search_provider,
                gateway=self.gateway,
                observer=lambda payload: self.log.append(EventKind.SEARCH_CALL, payload),
                provider_config=self.provider,
            )
        self.directive_log = DirectiveLog()
        self.state = PipelineState(config=config)
        self.hook = _RunnerHook(self)

    def accept_directive(self, directive: HumanDirective, source: str) -> None:
        self.state = apply_directive(self.state, directive)
        self.directive_log.add(directive)
        self.log.append(
            EventKind.DIRECTIVE, {"directive": directive.to_dict(), "source": source}
        )

    def _set_state(self, state: PipelineState) -> None:
        self.state = state
        if self.state_listener:
            self.state_listener(state)

    def run(self) -> tuple[CaseResult, RunTrace]:
        try:
            if self.config.mode is not RunMode.U2F:
                result = self._run_baseline()
            else:
                result = self._run_pipeline()
        finally:
            self.log.close()
        return result, self.log.to_trace()

    # -- baseline modes: exactly one provider call, no pipeline stages --

    def _run_baseline(self) -> CaseResult:
        mode = self.config.mode
        stage = f"baseline.{mode.value}"
        user = prompts.render(
            f"baseline_{mode.value}",
            story_type=self.story.story_type.value,
            narrative=self.story.narrative,
            expected_result=self.story.expected_result,
            actual_result=self.story.actual_result,
            potential_fix=self.story.potential_fix,
        )
        req = ChatRequest(
            stage_tag=stage,
            system_prompt=prompts.system_prompt(_BASELINE_SYSTEM[mode]),
            user_prompt=user,
            temperature=stage_temperature(stage),
        )

        def call(feedback: str) -> str:
            final = req
            if feedback:
                final = replace(req, user_prompt=req.user_prompt + prompts.feedback_suffix(feedback))
            return self.gateway.complete(final, self.provider).text

        self.hook.stage_start(stage)
        try:
            text = call("")
        except U2FError as exc:
            self.log.append(
                EventKind.ERROR,
                {"stage": stage, "type": type(exc).__name__, "error": str(exc)},
            )
            self._set_state(replace(self.state, phase=Phase.FAILED, failure_reason=str(exc)))
            return self._result(None, None, None, "")
        text = self.hook.stage_end(stage, call, text)
        self._set_state(replace(self.state, phase=Phase.DONE))
        return self._result(None, None, None, text)

    # -- the full pipeline --

    def _run_pipeline(self) -> CaseResult:
        brief: StrategicBrief | None = None
        report: ExplorationReport | None = None
        solution: IntegratedSolution | None = None
        first_baseline = ""
        exploration_pass = 0
        # Loose safety bound; the caps guarantee far fewer iterations.
        max_iterations = 3 * (2 + self.config.max_resets + self.config.max_deepens) + 3

        for _ in range(max_iterations):
            if self.state.phase.terminal:
                break
            try:
                if self.state.phase is Phase.DISCOVERY:
                    brief = run_discovery(
                        self.story,
                        self.gateway,
                        self.directive_log,
                        provider=self.provider,
                        boundary=self.hook,
                    )
                    if not first_baseline:
                        first_baseline = brief.baseline_solution
                    decision = ControlDecision(signal=ControlSignal.CONTINUE)
                elif self.state.phase is Phase.EXPLORATION:
                    exploration_pass += 1
                    report = run_exploration(
                        self.story,
                        brief,
                        self.gateway,
                        search=self.augmentor,
                        directives=self.directive_log,
                        domains=self.config.domains,
                        max_candidates=self.config.max_candidates,
                        filter_config=self.config.filter_config,
                        id_namespace=f"uu{exploration_pass}",
                        provider=self.provider,
                        boundary=self.hook,
                    )
                    decision = report.control
                else:
                    solution, decision = run_integration(
                        brief,
                        report.uus if report is not None else (),
                        self.gateway,
                        search=self.augmentor,
                        directives=self.directive_log,
                        allow_empty_uus=not self.config.stage_enabled(Phase.EXPLORATION),
                        provider=self.provider,
                        boundary=self.hook,
                    )
            except U2FError as exc:
                if isinstance(exc, TraceDivergence) or isinstance(
                    getattr(exc, "cause", None), TraceDivergence
                ):
                    raise
                stage = getattr(exc, "stage", self.state.phase.value)
                self.log.append(
                    EventKind.ERROR,
                    {"stage": stage, "type": type(exc).__name__, "error": str(exc)},
                )
                self._set_state(
                    replace(self.state, phase=Phase.FAILED, failure_reason=str(exc))
                )
                break

            self.log.append(
                EventKind.CONTROL_SIGNAL,
                {"phase": self.state.phase.value, **decision.to_dict()},
            )
            self._set_state(step(self.state, decision.signal))
            if self.state.phase is Phase.FAILED:
                self.log.append(
                    EventKind.ERROR,
                    {
                        "stage": "orchestrator",
                        "type": "CapExceeded",
                        "error": self.state.failure_reason,
                    },
                )
                break
            self._inject_redirect(decision)
        else:
            raise RuntimeError("pipeline failed to terminate within its hard bound")

        return self._result(brief, report, solution, first_baseline)

    def _inject_redirect(self, decision: ControlDecision) -> None:
        """Resets and deepens carry their reason forward as a directive, so
        the re-entered stage sees different prompts than its first pass."""
        if decision.signal in (ControlSignal.RESET_TO_DISCOVERY, ControlSignal.STRATEGIC_RESET):
            directive = HumanDirective(
                kind=DirectiveKind.REDIRECT_PATH,
                content=f"redirect: {decision.reason or 'strategy reset requested'}",
                target_phase=ALL_PHASES,
            )
        elif decision.signal is ControlSignal.DEMAND_DEEPER_EXPLORATION:
            directive = HumanDirective(
                kind=DirectiveKind.REDIRECT_PATH,
                content=f"dig deeper: {decision.reason or 'previous findings too shallow'}",
                target_phase=Phase.EXPLORATION.value,
            )
        else:
            return
        self.accept_directive(directive, source="system")

    def _result(
        self,
        brief: StrategicBrief | None,
        report: ExplorationReport | None,
        solution: IntegratedSolution | None,
        first_baseline: str,
    ) -> CaseResult:
        if self.config.mode is not RunMode.U2F:
            # first_baseline carries the single completion text here.
            result_text = first_baseline if self.state.phase is Phase.DONE else ""
            return CaseResult(
                case_id=self.story.id,
                mode=self.config.mode.value,
                final_phase=self.state.phase.value,
                initial_text=self.story.potential_fix,
                result_text=result_text,
                failure_reason=self.state.failure_reason,
                enabled_stages=(),
            )

        accepted = report.uus if report is not None else ()
        if self.state.phase is Phase.DONE:
            if solution is not None:
                result_text = solution.overview
            elif self.config.stage_enabled(Phase.EXPLORATION) and brief is not None:
                parts = [brief.baseline_solution] + [u.overview for u in accepted]
                result_text = "\n\n".join(parts)
            elif brief is not None:
                result_text = brief.baseline_solution
            else:
                result_text = ""
        else:
            result_text = ""
        return CaseResult(
            case_id=self.story.id,
            mode=self.config.mode.value,
            final_phase=self.state.phase.value,
            initial_text=first_baseline or self.story.potential_fix,
            result_text=result_text,
            brief=brief,
            accepted_uus=accepted,
            solution=solution,
            failure_reason=self.state.failure_reason,
            reset_count=self.state.reset_count,
            deepen_count=self.state.deepen_count,
            enabled_stages=self.config.enabled_stages,
        )


def run_case(
    story: EnablerStory,
    config: RunConfig,
    gateway: Gateway,
    search_provider: SearchProvider | None = None,
    channel: Any = None,
    trace_path: str | None = None,
    state_listener: Callable[[PipelineState], None] | None = None,
) -> tuple[CaseResult, RunTrace]:
    """Run one story end to end. Returns (result, in-memory trace)."""
    runner = CaseRunner(
        story,
        config,
        gateway,
        search_provider=search_provider,
        channel=channel,
        trace_path=trace_path,
        state_listener=state_listener,
    )
    return runner.run()


# --- replay ---------------------------------------------------------------------


def _human_directives_by_boundary(trace: RunTrace) -> dict[int, list[HumanDirective]]:
    by_count: dict[int, list[HumanDirective]] = {}
    stage_ends = 0
    for event in trace.events:
        if event.kind is EventKind.STAGE_END:
            stage_ends += 1
        elif event.kind is EventKind.DIRECTIVE and event.payload.get("source") == "human":
            by_count.setdefault(stage_ends, []).append(
                HumanDirective.from_dict(event.payload["directive"])
            )
    return by_count


def replay(trace: RunTrace) -> CaseResult:
    """Re-execute a run from its trace without any live provider.

    Every recorded provider response is fed back in order with the request
    verified verbatim; searches are served from their recorded results;
    human directives are re-injected at their original boundaries. Any
    divergence, including leftover recorded calls, raises TraceDivergence.
    """
    story = EnablerStory.from_dict(trace.story)
    config = RunConfig.from_dict(trace.config)
    provider_calls = [
        (e.seq, e.payload) for e in trace.events if e.kind is EventKind.PROVIDER_CALL
    ]
    search_calls = [e.payload for e in trace.events if e.kind is EventKind.SEARCH_CALL]

    gw = ReplayGateway(provider_calls)
    sp = ReplaySearchProvider(search_calls)
    runner = CaseRunner(story, config, gateway=gw, search_provider=sp)
    channel = ReplayInteraction(
        _human_directives_by_boundary(trace), lambda: runner.log.stage_end_count
    )
    runner.channel = channel
    result, _ = runner.run()
    if gw.remaining:
        raise TraceDivergence(
            provider_calls[-gw.remaining][0],
            f"{gw.remaining} recorded provider calls were never consumed",
        )
    return result
