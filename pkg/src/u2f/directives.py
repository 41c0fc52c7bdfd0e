"""Human steering directives and their rendering into prompt constraints."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum

from .control import Phase


class DirectiveKind(str, Enum):
    PREFERENCE = "Preference"
    TABOO = "Taboo"
    OPTIMIZATION_GOAL = "OptimizationGoal"
    FREE_TEXT_FEEDBACK = "FreeTextFeedback"
    REDIRECT_PATH = "RedirectPath"


# Stock optimization goals; anything else requires custom_goal=True.
OPTIMIZATION_GOALS = ("cost first", "innovation first", "minimum risk")

# target_phase value meaning "applies everywhere".
ALL_PHASES = "All"


@dataclass(frozen=True)
class HumanDirective:
    """One steering instruction injected at a stage boundary.

    target_phase is a Phase value or "All". timestamp is informational
    only and never participates in replay comparison or result hashing.
    """

    kind: DirectiveKind
    content: str
    target_phase: str = ALL_PHASES
    custom_goal: bool = False
    timestamp: str = ""

    def __post_init__(self) -> None:
        if not self.content.strip():
            raise ValueError("directive content must be non-empty")
        if self.target_phase != ALL_PHASES:
            Phase(self.target_phase)  # raises ValueError on junk
        if (
            self.kind is DirectiveKind.OPTIMIZATION_GOAL
            and not self.custom_goal
            and self.content not in OPTIMIZATION_GOALS
        ):
            raise ValueError(
                "unknown optimization goal %r; pass custom_goal=True to allow it"
                % self.content
            )

    def applies_to(self, phase: Phase) -> bool:
        return self.target_phase in (ALL_PHASES, phase.value)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "content": self.content,
            "target_phase": self.target_phase,
            "custom_goal": self.custom_goal,
            "timestamp": self.timestamp,
        }

    @staticmethod
    def from_dict(data: dict) -> "HumanDirective":
        return HumanDirective(
            kind=DirectiveKind(data["kind"]),
            content=data["content"],
            target_phase=data.get("target_phase", ALL_PHASES),
            custom_goal=bool(data.get("custom_goal", False)),
            timestamp=data.get("timestamp", ""),
        )


class DirectiveLog:
    """Mutable, thread-safe list of directives accepted so far in a run.

    The runner appends when the interaction channel delivers a directive;
    agents read constraint lines for the phase they are prompting in.
    """

    def __init__(self, initial: tuple[HumanDirective, ...] = ()) -> None:
        self._lock = threading.Lock()
        self._items: list[HumanDirective] = list(initial)

    def add(self, directive: HumanDirective) -> None:
        with self._lock:
            self._items.append(directive)

    def items(self) -> tuple[HumanDirective, ...]:
        with self._lock:
            return tuple(self._items)

    def lines(self, phase: Phase) -> list[str]:
        """Constraint lines for every directive that applies to phase."""
        return [
            "[%s] %s" % (d.kind.value, d.content)
            for d in self.items()
            if d.applies_to(phase)
        ]


EMPTY_DIRECTIVES = DirectiveLog()
