"""Dataset construction: field extraction, story transcription, consensus
ranking across transcription models."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

from .domain import EnablerStory, StoryType, validate_enabler_story
from .errors import (
    ExtractionFailed,
    MismatchedTaskSets,
    NarrativeLengthViolation,
    SchemaViolation,
    U2FError,
)
from .gateway import (
    ENUM,
    INT,
    TEXT,
    ChatRequest,
    FieldSchema,
    FieldSpec,
    Gateway,
    ProviderConfig,
    complete_structured,
    format_reminder,
    stage_temperature,
)
from .jsonio import read_jsonl
from . import prompts

NARRATIVE_WORDS = (150, 250)

# The causal fields a raw task must yield.
_CAUSAL_FIELDS = ("expected_result", "actual_result", "potential_fix")

_LABEL_RE = re.compile(
    r"^\s*(expected result|actual result|potential fix)\s*:\s*(.*)$", re.IGNORECASE
)


@dataclass(frozen=True)
class RawTask:
    """One backlog item before transcription."""

    task_id: str
    title: str
    body: str
    artifacts: tuple[str, ...] = ()
    metadata: Mapping[str, Any] = field(default_factory=dict)

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "RawTask":
        return RawTask(
            task_id=d.get("task_id") or d["id"],
            title=d.get("title", ""),
            body=d.get("body", ""),
            artifacts=tuple(d.get("artifacts", ())),
            metadata=dict(d.get("metadata", {})),
        )


def load_raw_tasks(path: str) -> list[RawTask]:
    return [RawTask.from_dict(d) for d in read_jsonl(path)]


@dataclass(frozen=True)
class ScoredStory:
    """One model's transcription of one task."""

    model: str
    story: EnablerStory

    @property
    def rank_key(self) -> int:
        return self.story.business_value + self.story.feasibility + self.story.impact


_EXTRACT_SCHEMA = FieldSchema(
    fields=(
        FieldSpec("expected_result", TEXT, required=False),
        FieldSpec("actual_result", TEXT, required=False),
        FieldSpec("potential_fix", TEXT, required=False),
    )
)
_TRANSCRIBE_SCHEMA = FieldSchema(
    fields=(
        FieldSpec("narrative", TEXT),
        FieldSpec("story_type", ENUM, values=tuple(t.value for t in StoryType)),
        FieldSpec("business_value", INT),
        FieldSpec("feasibility", INT),
        FieldSpec("impact", INT),
    )
)


def _labeled_sections(body: str) -> dict[str, str]:
    """Pull labeled field sections out of a task body.

    A section runs from its label line to the next label or a blank line;
    continuation lines are joined with spaces.
    """
    found: dict[str, list[str]] = {}
    current: str | None = None
    for line in body.splitlines():
        match = _LABEL_RE.match(line)
        if match:
            current = match.group(1).lower().replace(" ", "_")
            found[current] = [match.group(2).strip()] if match.group(2).strip() else []
            continue
        if current is None:
            continue
        if not line.strip():
            current = None
            continue
        found[current].append(line.strip())
    return {key: " ".join(parts).strip() for key, parts in found.items() if parts}


def extract_fields(
    task: RawTask,
    gw: Gateway | None = None,
    provider: ProviderConfig | None = None,
) -> dict[str, str]:
    """Extract the three causal fields, label parsing first, gateway second.

    Labeled text wins over any model output; the gateway only fills gaps.
    Anything still missing raises ExtractionFailed naming the fields.
    """
    fields = {k: v for k, v in _labeled_sections(task.body).items() if k in _CAUSAL_FIELDS}
    missing = [k for k in _CAUSAL_FIELDS if not fields.get(k)]
    if missing and gw is not None:
        stage = "dataset.extract"
        req = ChatRequest(
            stage_tag=stage,
            system_prompt=prompts.system_prompt("dataset"),
            user_prompt=prompts.render(
                "dataset_extract",
                title=task.title,
                body=task.body,
                format_instructions=format_reminder(_EXTRACT_SCHEMA),
            ),
            temperature=stage_temperature(stage),
        )
        parsed = complete_structured(gw, req, _EXTRACT_SCHEMA, provider=provider)
        for key in missing:
            value = parsed.get(key, "")
            if isinstance(value, str) and value.strip():
                fields[key] = value.strip()
        missing = [k for k in _CAUSAL_FIELDS if not fields.get(k)]
    if missing:
        raise ExtractionFailed(task.task_id, ", ".join(missing))
    return {k: fields[k] for k in _CAUSAL_FIELDS}


def _word_count(text: str) -> int:
    return len(text.split())


def transcribe_story(
    task: RawTask,
    fields: Mapping[str, str],
    model: str,
    gw: Gateway,
    context: str | None = None,
) -> ScoredStory:
    """Transcribe extracted fields into a full enabler story under one model.

    The narrative must run 150-250 words and the three scores must be
    integers in [1, 5]; each rule earns one corrective re-prompt before
    its error escalates. The returned story always passes validation.
    """
    stage = "dataset.transcribe"
    provider = ProviderConfig(provider_id=model)
    user = prompts.render(
        "dataset_transcribe",
        process_context=context if context is not None else prompts.load_transcription_context(),
        expected_result=fields["expected_result"],
        actual_result=fields["actual_result"],
        potential_fix=fields["potential_fix"],
        format_instructions=format_reminder(_TRANSCRIBE_SCHEMA),
    )
    req = ChatRequest(
        stage_tag=stage,
        system_prompt=prompts.system_prompt("dataset"),
        user_prompt=user,
        temperature=stage_temperature(stage),
    )

    def problems_of(parsed: dict[str, Any]) -> tuple[list[str], list[str]]:
        length_problems = []
        words = _word_count(parsed["narrative"])
        if not NARRATIVE_WORDS[0] <= words <= NARRATIVE_WORDS[1]:
            length_problems.append(
                f"narrative is {words} words; it must run "
                f"{NARRATIVE_WORDS[0]}-{NARRATIVE_WORDS[1]}"
            )
        score_problems = []
        for key in ("business_value", "feasibility", "impact"):
            if not 1 <= parsed[key] <= 5:
                score_problems.append(f"{key} must be in [1, 5], got {parsed[key]}")
        return length_problems, score_problems

    parsed = complete_structured(gw, req, _TRANSCRIBE_SCHEMA, provider=provider)
    length_problems, score_problems = problems_of(parsed)
    if length_problems or score_problems:
        retry = replace(
            req,
            user_prompt=(
                f"{user}\n\nYour previous reply was rejected: "
                f"{'; '.join(length_problems + score_problems)}. Try again."
            ),
        )
        parsed = complete_structured(gw, retry, _TRANSCRIBE_SCHEMA, provider=provider)
        length_problems, score_problems = problems_of(parsed)
        if length_problems:
            raise NarrativeLengthViolation(
                _word_count(parsed["narrative"]), NARRATIVE_WORDS[0], NARRATIVE_WORDS[1]
            )
        if score_problems:
            raise SchemaViolation(score_problems, raw_text=parsed.get("_raw", ""), attempts=2)

    story = EnablerStory(
        id=task.task_id,
        narrative=parsed["narrative"],
        expected_result=fields["expected_result"],
        actual_result=fields["actual_result"],
        potential_fix=fields["potential_fix"],
        story_type=StoryType(parsed["story_type"]),
        business_value=parsed["business_value"],
        feasibility=parsed["feasibility"],
        impact=parsed["impact"],
        artifact_corpus=task.artifacts,
    )
    validate_enabler_story(story.to_dict())
    return ScoredStory(model=model, story=story)


def rank_and_intersect(
    per_model: Mapping[str, Sequence[ScoredStory]], k: int
) -> list[EnablerStory]:
    """Top-k consensus: tasks every model independently ranks in its top k.

    Ranking is by descending combined score with the task id breaking
    ties; all models must have transcribed the same task set. The
    returned stories are the first listed model's transcriptions, in task
    id order.
    """
    if not per_model:
        return []
    models = list(per_model)
    id_sets = {
        model: {s.story.id for s in stories} for model, stories in per_model.items()
    }
    first_ids = id_sets[models[0]]
    for model, ids in id_sets.items():
        if ids != first_ids:
            raise MismatchedTaskSets(
                f"model {model!r} transcribed a different task set than {models[0]!r}"
            )

    top_ids: list[set[str]] = []
    for model in models:
        ranked = sorted(per_model[model], key=lambda s: (-s.rank_key, s.story.id))
        top_ids.append({s.story.id for s in ranked[:k]})
    selected = set.intersection(*top_ids) if top_ids else set()

    first_by_id = {s.story.id: s.story for s in per_model[models[0]]}
    return [first_by_id[sid] for sid in sorted(selected)]


def build_dataset(
    tasks: Sequence[RawTask],
    models: Sequence[str],
    k: int,
    gw: Gateway,
    context: str | None = None,
) -> tuple[list[EnablerStory], dict[str, Any]]:
    """Extract, transcribe under every model, and take the top-k consensus.

    A task failing extraction, or failing transcription under any model,
    is dropped everywhere with its reason recorded. The provenance dict
    captures scores, per-model top-k membership, rejections, and the
    final selection.
    """
    rejected: dict[str, str] = {}
    fields_by_task: dict[str, dict[str, str]] = {}
    for task in tasks:
        try:
            fields_by_task[task.task_id] = extract_fields(task, gw)
        except U2FError as exc:
            rejected[task.task_id] = str(exc)

    transcripts: dict[str, dict[str, ScoredStory]] = {m: {} for m in models}
    for model in models:
        for task in tasks:
            if task.task_id in rejected:
                continue
            try:
                transcripts[model][task.task_id] = transcribe_story(
                    task, fields_by_task[task.task_id], model, gw, context=context
                )
            except U2FError as exc:
                rejected[task.task_id] = f"model {model}: {exc}"

    per_model = {
        model: [s for tid, s in sorted(by_task.items()) if tid not in rejected]
        for model, by_task in transcripts.items()
    }
    stories = rank_and_intersect(per_model, k)

    provenance = {
        "k": k,
        "models": list(models),
        "selected": [s.id for s in stories],
        "rejected": rejected,
        "per_model_top": {},
        "scores": {
            model: {s.story.id: s.rank_key for s in scored}
            for model, scored in per_model.items()
        },
    }
    for model, scored in per_model.items():
        ranked = sorted(scored, key=lambda s: (-s.rank_key, s.story.id))
        provenance["per_model_top"][model] = [s.story.id for s in ranked[:k]]
    return stories, provenance
