"""Prompt assembly: packaged templates, constraint injection, text blocks.

Templates are plain text with str.format placeholders. Format
instructions are generated from the same FieldSchema the caller parses
with, so the instruction text can never drift from the parser.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .domain import EvidenceItem


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    path = resources.files("u2f") / "templates" / f"{name}.txt"
    return path.read_text(encoding="utf-8").rstrip("\n")


@lru_cache(maxsize=None)
def _load_config(name: str) -> str:
    path = resources.files("u2f") / "config" / f"{name}.txt"
    return path.read_text(encoding="utf-8")


def render(name: str, /, **values: object) -> str:
    # positional-only: templates may themselves take a {name} placeholder
    return load_template(name).format(**values)


def system_prompt(agent_key: str, constraint_lines: list[str] | None = None) -> str:
    """System prompt for an agent, with accepted directives appended.

    Directives always ride in a dedicated section at the end so scripted
    tests can key on its presence.
    """
    base = load_template(f"system_{agent_key}")
    if not constraint_lines:
        return base
    bullets = "\n".join(f"- {line}" for line in constraint_lines)
    return f"{base}\n\nHuman constraints:\n{bullets}"


def feedback_suffix(feedback: str) -> str:
    return (
        "\n\nReviewer feedback on your previous answer:\n"
        f"{feedback}\nRevise accordingly."
    )


@lru_cache(maxsize=None)
def load_stopwords() -> tuple[str, ...]:
    """Software vocabulary banned from problem abstractions."""
    words = [
        line.strip().lower()
        for line in _load_config("software_stopwords").splitlines()
        if line.strip()
    ]
    return tuple(words)


def load_transcription_context() -> str:
    """Static process context given to the dataset transcription prompt."""
    return _load_config("transcription_context").strip()


# --- text blocks embedded in prompts -------------------------------------------


def numbered(lines: list[str]) -> str:
    if not lines:
        return "(none)"
    return "\n".join(f"{i}. {line}" for i, line in enumerate(lines, start=1))


def bulleted(lines: list[str]) -> str:
    if not lines:
        return "(none)"
    return "\n".join(f"- {line}" for line in lines)


def evidence_block(items: tuple[EvidenceItem, ...] | list[EvidenceItem]) -> str:
    return numbered([f"[{it.source}] {it.snippet}" for it in items])
