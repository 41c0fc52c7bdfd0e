"""Robustness machinery: input degradation tiers and ablation variants."""

from __future__ import annotations

import csv
import hashlib
import math
import random
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Sequence

from .control import Phase
from .domain import EnablerStory
from .errors import U2FError
from .evaluation import EmbeddingProvider, semantic_novelty
from .gateway import Gateway
from .jsonio import read_jsonl
from .orchestrator import CaseResult, RunConfig, run_case
from .search import SearchProvider

OBSCURE_MARKER = "[REDACTED]"

# Legal corruption ratios: exactly zero (control) or the studied band.
RATIO_BAND = (0.25, 0.60)

# The four story fields degradation touches, in stable order.
_DEGRADED_FIELDS = ("narrative", "expected_result", "actual_result", "potential_fix")


class DegradeMode(str, Enum):
    REMOVE = "remove"
    OBSCURE = "obscure"
    MIXED = "mixed"


@dataclass(frozen=True)
class DegradationSpec:
    """One corruption tier: how much, how, and under which seed."""

    ratio: float
    mode: DegradeMode = DegradeMode.MIXED
    seed: int = 0

    def __post_init__(self) -> None:
        if self.ratio != 0.0 and not RATIO_BAND[0] <= self.ratio <= RATIO_BAND[1]:
            raise ValueError(
                f"ratio must be 0 or within [{RATIO_BAND[0]}, {RATIO_BAND[1]}], got {self.ratio}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {"ratio": self.ratio, "mode": self.mode.value, "seed": self.seed}


def split_units(text: str) -> list[str]:
    """Sentence units: split on whitespace after terminal punctuation."""
    parts = re.split(r"(?<=[.!?])\s+", text.strip())
    return [p for p in parts if p]


def _stable_int(seed: int, story_id: str, index: int) -> int:
    digest = hashlib.sha256(f"{seed}:{story_id}:{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def degrade_input(story: EnablerStory, spec: DegradationSpec) -> EnablerStory:
    """Corrupt ceil(ratio * N) of the story's N sentence units.

    The affected set is a prefix of one seeded global permutation, so a
    higher ratio under the same seed strictly contains a lower one's
    units. Removal drops the unit; obscuring replaces it with the marker;
    mixed picks per unit by a stable hash, independent of the ratio.
    """
    if spec.ratio == 0.0:
        return story

    units_per_field = [split_units(getattr(story, f)) for f in _DEGRADED_FIELDS]
    total = sum(len(units) for units in units_per_field)
    if total == 0:
        return story
    count = math.ceil(spec.ratio * total)
    rng = random.Random(f"{spec.seed}:{story.id}")
    permutation = rng.sample(range(total), total)
    affected = set(permutation[:count])

    def corrupt(index: int) -> bool:
        if spec.mode is DegradeMode.REMOVE:
            return True
        if spec.mode is DegradeMode.OBSCURE:
            return False
        return _stable_int(spec.seed, story.id, index) % 2 == 0

    new_values: dict[str, str] = {}
    cursor = 0
    for fld, units in zip(_DEGRADED_FIELDS, units_per_field):
        kept: list[str] = []
        for unit in units:
            index = cursor
            cursor += 1
            if index not in affected:
                kept.append(unit)
            elif not corrupt(index):
                kept.append(OBSCURE_MARKER)
            # removal: the unit simply disappears
        new_values[fld] = " ".join(kept)
    return replace(story, **new_values)


def classify_failure(result: CaseResult) -> tuple[bool, str]:
    """Decide whether a run produced its expected deliverable.

    Failure means the pipeline ended Failed, or the configuration promised
    an integrated solution and none (or an incomplete one) arrived, or a
    baseline produced no text at all.
    """
    if result.final_phase == Phase.FAILED.value:
        return True, result.failure_reason or "pipeline failed"
    if result.mode != "u2f":
        if not result.result_text.strip():
            return True, "baseline produced no solution text"
        return False, ""
    if Phase.INTEGRATION.value in result.enabled_stages:
        if result.solution is None:
            return True, "missing deliverable: integrated solution"
        if not result.solution.is_complete():
            return True, "incomplete deliverable: integrated solution"
    return False, ""


@dataclass(frozen=True)
class RobustnessRating:
    """Imported 1-5 quality ratings for one case at one corruption ratio."""

    case_id: str
    ratio: float
    logical_coherence: int
    relevance: int

    def __post_init__(self) -> None:
        for label, score in (
            ("logical_coherence", self.logical_coherence),
            ("relevance", self.relevance),
        ):
            if not isinstance(score, int) or isinstance(score, bool) or not 1 <= score <= 5:
                raise ValueError(f"{label} must be an integer in [1, 5], got {score!r}")


def load_robustness_ratings(path: str) -> list[RobustnessRating]:
    return [
        RobustnessRating(
            case_id=d["case_id"],
            ratio=float(d["ratio"]),
            logical_coherence=int(d["logical_coherence"]),
            relevance=int(d["relevance"]),
        )
        for d in read_jsonl(path)
    ]


def run_robustness_suite(
    stories: Sequence[EnablerStory],
    specs: Sequence[DegradationSpec],
    config: RunConfig,
    gateway: Gateway,
    search_provider: SearchProvider | None = None,
    embedder: EmbeddingProvider | None = None,
    ratings: Sequence[RobustnessRating] | None = None,
) -> list[dict[str, Any]]:
    """Run every story at every corruption tier and aggregate per tier.

    Requires a ratio-0 control tier: novelty retention is each tier's mean
    semantic novelty as a percentage of the control's. Failed cases count
    toward the failure rate and are excluded from quality means. A tier is
    flagged when retention is undefined (control mean missing or zero).
    """
    if not any(spec.ratio == 0.0 for spec in specs):
        raise ValueError("a ratio-0 control tier is required")

    rows: list[dict[str, Any]] = []
    for spec in specs:
        failures = 0
        semantic: list[float] = []
        for story in stories:
            degraded = degrade_input(story, spec)
            try:
                result, _ = run_case(degraded, config, gateway, search_provider)
            except U2FError:
                failures += 1
                continue
            failed, _reason = classify_failure(result)
            if failed:
                failures += 1
                continue
            if (
                embedder is not None
                and result.result_text.strip()
                and result.initial_text.strip()
            ):
                semantic.append(
                    semantic_novelty(result.result_text, result.initial_text, embedder)
                )

        tier_ratings = [r for r in (ratings or []) if r.ratio == spec.ratio]
        coherence = (
            sum(r.logical_coherence for r in tier_ratings) / len(tier_ratings)
            if tier_ratings
            else None
        )
        relevance = (
            sum(r.relevance for r in tier_ratings) / len(tier_ratings)
            if tier_ratings
            else None
        )
        rows.append(
            {
                "label": f"ratio_{spec.ratio:g}",
                "ratio": spec.ratio,
                "mode": spec.mode.value,
                "seed": spec.seed,
                "cases": len(stories),
                "failures": failures,
                "failure_rate": 100.0 * failures / len(stories) if stories else 0.0,
                "semantic_novelty": (
                    sum(semantic) / len(semantic) if semantic else None
                ),
                "logical_coherence": coherence,
                "relevance": relevance,
            }
        )

    control = next(row for row in rows if row["ratio"] == 0.0)
    control_mean = control["semantic_novelty"]
    for row in rows:
        tier_mean = row["semantic_novelty"]
        if control_mean is None or control_mean == 0.0 or tier_mean is None:
            row["novelty_retention"] = None
            row["flagged"] = True
        else:
            row["novelty_retention"] = 100.0 * tier_mean / control_mean
            row["flagged"] = False
    return rows


_ROBUSTNESS_COLUMNS = (
    "label",
    "ratio",
    "mode",
    "seed",
    "cases",
    "failures",
    "failure_rate",
    "semantic_novelty",
    "novelty_retention",
    "logical_coherence",
    "relevance",
    "flagged",
)


def write_robustness_csv(rows: list[dict[str, Any]], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_ROBUSTNESS_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    "" if row.get(col) is None else row.get(col)
                    for col in _ROBUSTNESS_COLUMNS
                ]
            )


# --- ablations ------------------------------------------------------------------

ABLATION_VARIANTS = (
    "full",
    "no_search",
    "no_exploration",
    "no_integration",
    "discovery_only",
)


def ablation_config(variant: str, base: RunConfig | None = None) -> RunConfig:
    """Derive an ablation configuration; only the named flags differ from base."""
    base = base if base is not None else RunConfig()
    if variant == "full":
        return replace(base, variant=variant)
    if variant == "no_search":
        return replace(base, search_enabled=False, variant=variant)
    if variant == "no_exploration":
        return replace(
            base,
            enabled_stages=(Phase.DISCOVERY.value, Phase.INTEGRATION.value),
            variant=variant,
        )
    if variant == "no_integration":
        return replace(
            base,
            enabled_stages=(Phase.DISCOVERY.value, Phase.EXPLORATION.value),
            variant=variant,
        )
    if variant == "discovery_only":
        return replace(base, enabled_stages=(Phase.DISCOVERY.value,), variant=variant)
    raise ValueError(f"unknown ablation variant {variant!r}; choose from {ABLATION_VARIANTS}")
