"""Phases and control signals shared by the stage agents and the orchestrator.

These live in their own module so the agent modules can emit control
decisions without importing the orchestrator (which imports them back).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Phase(str, Enum):
    """Pipeline phases, including the two terminal states."""

    DISCOVERY = "Discovery"
    EXPLORATION = "Exploration"
    INTEGRATION = "Integration"
    DONE = "Done"
    FAILED = "Failed"

    @property
    def terminal(self) -> bool:
        return self in (Phase.DONE, Phase.FAILED)


# The three working phases, in forward order.
WORKING_PHASES = (Phase.DISCOVERY, Phase.EXPLORATION, Phase.INTEGRATION)


class ControlSignal(str, Enum):
    """Signals a stage may emit to steer the pipeline."""

    CONTINUE = "Continue"
    RESET_TO_DISCOVERY = "ResetToDiscovery"
    DEFER_TO_INTEGRATION = "DeferToIntegration"
    DEMAND_DEEPER_EXPLORATION = "DemandDeeperExploration"
    STRATEGIC_RESET = "StrategicReset"
    DONE = "Done"


@dataclass(frozen=True)
class ControlDecision:
    """A control signal plus the evidence that justifies it.

    detail carries the ids of the findings that triggered a non-Continue
    signal (e.g. the Critical finding behind a ResetToDiscovery); reason is
    a short free-text justification suitable for the trace.
    """

    signal: ControlSignal
    detail: tuple[str, ...] = field(default=())
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "signal": self.signal.value,
            "detail": list(self.detail),
            "reason": self.reason,
        }

    @staticmethod
    def from_dict(data: dict) -> "ControlDecision":
        return ControlDecision(
            signal=ControlSignal(data["signal"]),
            detail=tuple(data.get("detail", ())),
            reason=data.get("reason", ""),
        )


CONTINUE = ControlDecision(ControlSignal.CONTINUE)
