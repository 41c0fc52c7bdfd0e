"""Human directive validation, phase scoping, and the shared log."""

import threading

import pytest

from u2f.control import Phase
from u2f.directives import (
    ALL_PHASES,
    OPTIMIZATION_GOALS,
    DirectiveKind,
    DirectiveLog,
    HumanDirective,
)


def test_stock_goals_are_fixed():
    assert OPTIMIZATION_GOALS == ("cost first", "innovation first", "minimum risk")


def test_directive_defaults_to_all_phases():
    d = HumanDirective(kind=DirectiveKind.PREFERENCE, content="prefer retrofits")
    assert d.target_phase == ALL_PHASES
    assert d.applies_to(Phase.DISCOVERY)
    assert d.applies_to(Phase.INTEGRATION)


def test_directive_phase_scoping():
    d = HumanDirective(
        kind=DirectiveKind.TABOO,
        content="no vendor lock-in",
        target_phase="Exploration",
    )
    assert d.applies_to(Phase.EXPLORATION)
    assert not d.applies_to(Phase.DISCOVERY)


def test_directive_rejects_empty_content():
    with pytest.raises(ValueError):
        HumanDirective(kind=DirectiveKind.PREFERENCE, content="   ")


def test_directive_rejects_unknown_phase():
    with pytest.raises(ValueError):
        HumanDirective(kind=DirectiveKind.PREFERENCE, content="x", target_phase="Dreaming")


def test_goal_must_be_stock_unless_custom():
    with pytest.raises(ValueError):
        HumanDirective(kind=DirectiveKind.OPTIMIZATION_GOAL, content="speed above all")
    ok = HumanDirective(
        kind=DirectiveKind.OPTIMIZATION_GOAL, content="speed above all", custom_goal=True
    )
    assert ok.custom_goal
    stock = HumanDirective(kind=DirectiveKind.OPTIMIZATION_GOAL, content="cost first")
    assert not stock.custom_goal


def test_directive_round_trip():
    d = HumanDirective(
        kind=DirectiveKind.REDIRECT_PATH,
        content="redirect: rethink the premise",
        target_phase="Discovery",
        timestamp="2024-05-01T00:00:00Z",
    )
    assert HumanDirective.from_dict(d.to_dict()) == d


def test_log_formats_lines_per_phase():
    log = DirectiveLog()
    log.add(HumanDirective(kind=DirectiveKind.PREFERENCE, content="keep costs flat"))
    log.add(
        HumanDirective(
            kind=DirectiveKind.TABOO,
            content="no new hardware",
            target_phase="Exploration",
        )
    )
    assert log.lines(Phase.EXPLORATION) == [
        "[Preference] keep costs flat",
        "[Taboo] no new hardware",
    ]
    assert log.lines(Phase.DISCOVERY) == ["[Preference] keep costs flat"]


def test_log_is_thread_safe_under_concurrent_appends():
    log = DirectiveLog()

    def add(n):
        for i in range(50):
            log.add(
                HumanDirective(kind=DirectiveKind.PREFERENCE, content=f"p{n}-{i}")
            )

    threads = [threading.Thread(target=add, args=(n,)) for n in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(log.lines(Phase.DISCOVERY)) == 200
