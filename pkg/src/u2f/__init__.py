"""u2f: staged multi-agent discovery of unknown-unknown solution factors
from enabler stories, with search-grounded validation, human steering,
replayable traces, and an evaluation harness."""

from .control import ControlDecision, ControlSignal, Phase
from .directives import DirectiveKind, DirectiveLog, HumanDirective
from .domain import (
    Advantage,
    Component,
    Defect,
    DefectKind,
    EnablerStory,
    EvidenceItem,
    FilterConfig,
    FilterVerdict,
    ImpactArea,
    IntegratedSolution,
    Plan,
    Severity,
    StoryType,
    Strategy,
    StrategicBrief,
    UURecord,
    ValidationScore,
    apply_uu_filter,
    load_stories,
    save_stories,
    validate_enabler_story,
)
from .errors import U2FError
from .gateway import (
    ChatRequest,
    ChatResponse,
    Gateway,
    HttpGateway,
    MockGateway,
    ProviderConfig,
)
from .orchestrator import (
    CaseResult,
    CaseRunner,
    PipelineState,
    QueueInteraction,
    RunConfig,
    RunMode,
    RunTrace,
    read_trace,
    replay,
    run_case,
    step,
)
from .search import FixtureSearchProvider, LiveSearchProvider, SearchAugmentor

__version__ = "0.1.0"

__all__ = [
    "Advantage",
    "CaseResult",
    "CaseRunner",
    "ChatRequest",
    "ChatResponse",
    "Component",
    "ControlDecision",
    "ControlSignal",
    "Defect",
    "DefectKind",
    "DirectiveKind",
    "DirectiveLog",
    "EnablerStory",
    "EvidenceItem",
    "FilterConfig",
    "FilterVerdict",
    "FixtureSearchProvider",
    "Gateway",
    "HttpGateway",
    "HumanDirective",
    "ImpactArea",
    "IntegratedSolution",
    "LiveSearchProvider",
    "MockGateway",
    "Phase",
    "PipelineState",
    "Plan",
    "ProviderConfig",
    "QueueInteraction",
    "RunConfig",
    "RunMode",
    "RunTrace",
    "SearchAugmentor",
    "Severity",
    "StoryType",
    "Strategy",
    "StrategicBrief",
    "U2FError",
    "UURecord",
    "ValidationScore",
    "apply_uu_filter",
    "load_stories",
    "read_trace",
    "replay",
    "run_case",
    "save_stories",
    "step",
    "validate_enabler_story",
    "__version__",
]
