"""Shared stage-execution plumbing for the three pipeline agents."""

from __future__ import annotations

from dataclasses import replace
from typing import Any, Callable, Protocol

from .errors import SchemaViolation, StageError, U2FError
from .gateway import ChatRequest, FieldSchema, Gateway, ProviderConfig, complete_structured


class StageHook(Protocol):
    """Observer the orchestrator threads through agent runs.

    stage_end may replace the result: it is where stage-boundary feedback
    triggers a re-run via rerun(feedback_text).
    """

    def stage_start(self, name: str) -> None: ...

    def stage_end(self, name: str, rerun: Callable[[str], Any], result: Any) -> Any: ...


def run_stage(name: str, fn: Callable[[str], Any], hook: StageHook | None) -> Any:
    """Execute one stage, attribute failures to it, offer the boundary hook."""
    if hook is not None:
        hook.stage_start(name)
    try:
        result = fn("")
    except U2FError as exc:
        raise StageError(name, exc) from exc
    if hook is not None:
        result = hook.stage_end(name, fn, result)
    return result


def checked_structured(
    gw: Gateway,
    req: ChatRequest,
    schema: FieldSchema,
    check: Callable[[dict[str, Any]], list[str]],
    provider: ProviderConfig | None = None,
) -> dict[str, Any]:
    """complete_structured plus one semantic check with a corrective re-prompt.

    `check` returns problem strings; an empty list passes. Format-level
    repairs are already handled inside complete_structured, so this layer
    only pays for violations the schema cannot express (ranges, coverage,
    cross-field rules).
    """
    parsed = complete_structured(gw, req, schema, provider=provider)
    problems = check(parsed)
    if not problems:
        return parsed
    retry = replace(
        req,
        user_prompt=(
            f"{req.user_prompt}\n\nYour previous reply was rejected: "
            f"{'; '.join(problems)}. Try again."
        ),
    )
    parsed = complete_structured(gw, retry, schema, provider=provider)
    problems = check(parsed)
    if problems:
        raise SchemaViolation(problems, raw_text=parsed.get("_raw", ""), attempts=2)
    return parsed
