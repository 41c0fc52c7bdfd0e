"""Evaluation: embeddings, semantic novelty, agreement statistics, reports.

The statistics are implemented from their definitions on purpose: tests
pin them against independent oracles, and the package carries no heavy
stats dependency at runtime.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Protocol, Sequence

import numpy as np

from .errors import DegenerateInput, EmbedderFailure, MissingRatings, UnequalRaterCounts
from .jsonio import read_jsonl
from .orchestrator import CaseResult

# Cosine distances this close to zero are the same text up to float noise.
_SNAP_EPS = 1e-12


class RaterKind(str, Enum):
    HUMAN_EXPERT = "HumanExpert"
    HUMAN_STUDENT = "HumanStudent"
    LLM_JUDGE = "LLMJudge"


_HUMAN_KINDS = (RaterKind.HUMAN_EXPERT, RaterKind.HUMAN_STUDENT)


@dataclass(frozen=True)
class RatingRecord:
    """One rater's scores for one produced solution.

    novelty and feasibility ride the 1-5 scale; uu_approvals carries
    (uu_id, approved) pairs for the case's accepted findings. mode scopes
    the rating to one method's output; empty applies to any mode.
    """

    case_id: str
    rater_id: str
    rater_kind: RaterKind
    novelty: int
    feasibility: int
    uu_approvals: tuple[tuple[str, bool], ...] = ()
    mode: str = ""

    def __post_init__(self) -> None:
        for label, score in (("novelty", self.novelty), ("feasibility", self.feasibility)):
            if not isinstance(score, int) or isinstance(score, bool) or not 1 <= score <= 5:
                raise ValueError(f"{label} must be an integer in [1, 5], got {score!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "rater_id": self.rater_id,
            "rater_kind": self.rater_kind.value,
            "novelty": self.novelty,
            "feasibility": self.feasibility,
            "uu_approvals": [[uu, bool(a)] for uu, a in self.uu_approvals],
            "mode": self.mode,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "RatingRecord":
        return RatingRecord(
            case_id=d["case_id"],
            rater_id=d["rater_id"],
            rater_kind=RaterKind(d["rater_kind"]),
            novelty=int(d["novelty"]),
            feasibility=int(d["feasibility"]),
            uu_approvals=tuple((uu, bool(a)) for uu, a in d.get("uu_approvals", [])),
            mode=d.get("mode", ""),
        )


def _approvals_from_text(text: str) -> tuple[tuple[str, bool], ...]:
    # CSV encoding: "uu1-1:1|uu1-2:0"
    pairs = []
    for part in text.split("|"):
        part = part.strip()
        if not part:
            continue
        uu, _, flag = part.rpartition(":")
        pairs.append((uu, flag.strip() == "1"))
    return tuple(pairs)


def load_ratings(path: str) -> list[RatingRecord]:
    """Load ratings from .jsonl (native shape) or .csv (flat encoding)."""
    if path.endswith(".csv"):
        out = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                out.append(
                    RatingRecord(
                        case_id=row["case_id"],
                        rater_id=row["rater_id"],
                        rater_kind=RaterKind(row["rater_kind"]),
                        novelty=int(row["novelty"]),
                        feasibility=int(row["feasibility"]),
                        uu_approvals=_approvals_from_text(row.get("uu_approvals", "")),
                        mode=row.get("mode", ""),
                    )
                )
        return out
    return [RatingRecord.from_dict(d) for d in read_jsonl(path)]


# --- embeddings -----------------------------------------------------------------


class EmbeddingProvider(Protocol):
    model_id: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic test-scale embedder: the text hash seeds the vector.

    Identical texts embed identically; distinct texts land nearly
    orthogonal at this dimension. No semantics, exactly reproducible.
    """

    def __init__(self, dimension: int = 64):
        self.model_id = f"hash-{dimension}"
        self.dimension = dimension
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        if text not in self._cache:
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "big")
            rng = np.random.default_rng(seed)
            vec = rng.standard_normal(self.dimension)
            self._cache[text] = vec / np.linalg.norm(vec)
        return self._cache[text]


class RemoteEmbedder:
    """Client for an HTTP embeddings endpoint; vectors are unit-normalized."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str = "",
        dimension: int = 768,
        transport: Callable | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model_id = model
        self.dimension = dimension
        self.api_key = api_key
        if transport is None:
            import requests

            def transport(url: str, payload: dict, headers: dict):
                resp = requests.post(url, json=payload, headers=headers, timeout=60)
                resp.raise_for_status()
                return resp.json()

        self._transport = transport

    def embed(self, text: str) -> np.ndarray:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            body = self._transport(
                f"{self.base_url}/embeddings",
                {"model": self.model_id, "input": text},
                headers,
            )
            vec = np.asarray(body["data"][0]["embedding"], dtype=float)
        except Exception as exc:
            raise EmbedderFailure(f"embedding request failed: {exc}") from exc
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise EmbedderFailure("embedding endpoint returned a zero vector")
        return vec / norm


def semantic_novelty(result_text: str, initial_text: str, embedder: EmbeddingProvider) -> float:
    """1 - cosine similarity between the result and the starting solution.

    Identical texts give exactly 0.0 (sub-epsilon noise is snapped), and
    the value is clamped into [0, 2].
    """
    if not result_text.strip() or not initial_text.strip():
        raise EmbedderFailure("semantic novelty needs two non-empty texts")
    a = _unit(embedder.embed(result_text))
    b = _unit(embedder.embed(initial_text))
    value = 1.0 - float(np.dot(a, b))
    if abs(value) < _SNAP_EPS:
        value = 0.0
    return min(max(value, 0.0), 2.0)


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0 or not np.isfinite(norm):
        raise EmbedderFailure("embedder produced a zero or non-finite vector")
    return vec / norm


# --- agreement statistics -------------------------------------------------------


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson product-moment correlation from the definition."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise DegenerateInput("pearson needs two equal-length vectors")
    if xa.size < 2:
        raise DegenerateInput("pearson needs at least two observations")
    xd = xa - xa.mean()
    yd = ya - ya.mean()
    sx = float(np.sqrt(np.sum(xd * xd)))
    sy = float(np.sqrt(np.sum(yd * yd)))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInput("pearson is undefined for a constant vector")
    return float(np.sum(xd * yd) / (sx * sy))


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks with ties sharing the average of their positions."""
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=float)
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        # positions i..j (0-based) share rank mean of (i+1 .. j+1)
        shared = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks.tolist()


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation: pearson over average ranks."""
    if len(x) != len(y):
        raise DegenerateInput("spearman needs two equal-length vectors")
    return pearson(average_ranks(x), average_ranks(y))


def fleiss_kappa(counts: Sequence[Sequence[int]]) -> float:
    """Fleiss' kappa over an items x categories count matrix.

    Every row must sum to the same rater count n >= 2. Perfect agreement
    in a single category (expected agreement 1) returns 1.0 by definition.
    """
    matrix = np.asarray(counts, dtype=float)
    if matrix.ndim != 2 or matrix.size == 0:
        raise DegenerateInput("kappa needs a non-empty items x categories matrix")
    if np.any(matrix < 0):
        raise DegenerateInput("kappa counts must be non-negative")
    row_sums = matrix.sum(axis=1)
    n = row_sums[0]
    if np.any(row_sums != n):
        raise UnequalRaterCounts("every item must carry the same number of ratings")
    if n < 2:
        raise DegenerateInput("kappa needs at least two ratings per item")

    p_i = (np.sum(matrix * matrix, axis=1) - n) / (n * (n - 1))
    p_bar = float(p_i.mean())
    p_j = matrix.sum(axis=0) / (matrix.shape[0] * n)
    p_e = float(np.sum(p_j * p_j))
    if p_e >= 1.0:
        return 1.0
    return (p_bar - p_e) / (1.0 - p_e)


# --- run-level evaluation -------------------------------------------------------


@dataclass(frozen=True)
class ModeRow:
    """Aggregates for one mode; None means the column had no samples."""

    mode: str
    cases: int
    failures: int
    novelty_human_mean: float | None
    novelty_human_std: float | None
    novelty_llm_mean: float | None
    novelty_llm_std: float | None
    feasibility_human_mean: float | None
    feasibility_human_std: float | None
    feasibility_llm_mean: float | None
    feasibility_llm_std: float | None
    semantic_novelty_mean: float | None
    semantic_novelty_std: float | None
    uus_mean: float
    approval_expert: float | None
    approval_human: float | None
    approval_llm: float | None


_COLUMNS = (
    "mode",
    "cases",
    "failures",
    "novelty_human_mean",
    "novelty_human_std",
    "novelty_llm_mean",
    "novelty_llm_std",
    "feasibility_human_mean",
    "feasibility_human_std",
    "feasibility_llm_mean",
    "feasibility_llm_std",
    "semantic_novelty_mean",
    "semantic_novelty_std",
    "uus_mean",
    "approval_expert",
    "approval_human",
    "approval_llm",
)


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


@dataclass(frozen=True)
class ReportTable:
    rows: tuple[ModeRow, ...]

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(_COLUMNS)
            for row in self.rows:
                writer.writerow([_fmt(getattr(row, col)) for col in _COLUMNS])

    def to_markdown(self) -> str:
        lines = [
            "| " + " | ".join(_COLUMNS) + " |",
            "| " + " | ".join("---" for _ in _COLUMNS) + " |",
        ]
        for row in self.rows:
            lines.append(
                "| " + " | ".join(_fmt(getattr(row, col)) for col in _COLUMNS) + " |"
            )
        return "\n".join(lines)


def _mean_std(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def _rate(flags: list[bool]) -> float | None:
    if not flags:
        return None
    return sum(flags) / len(flags)


def evaluate_run(
    results: Sequence[CaseResult],
    ratings: Sequence[RatingRecord],
    embedder: EmbeddingProvider | None = None,
) -> ReportTable:
    """Aggregate results and ratings into one row per mode.

    Every result must be covered by at least one rating (matching case id
    and mode scope); otherwise MissingRatings lists the uncovered ids.
    Semantic novelty is computed only for results with both texts present.
    """
    def covers(rating: RatingRecord, result: CaseResult) -> bool:
        return rating.case_id == result.case_id and rating.mode in ("", result.mode)

    uncovered = sorted(
        r.case_id for r in results if not any(covers(rt, r) for rt in ratings)
    )
    if uncovered:
        raise MissingRatings(uncovered)

    modes: list[str] = []
    for r in results:
        if r.mode not in modes:
            modes.append(r.mode)

    rows = []
    for mode in modes:
        mode_results = [r for r in results if r.mode == mode]
        mode_ratings = [
            rt for rt in ratings if any(covers(rt, r) for r in mode_results)
        ]
        human = [rt for rt in mode_ratings if rt.rater_kind in _HUMAN_KINDS]
        llm = [rt for rt in mode_ratings if rt.rater_kind is RaterKind.LLM_JUDGE]

        semantic: list[float] = []
        if embedder is not None:
            for r in mode_results:
                if r.result_text.strip() and r.initial_text.strip():
                    semantic.append(
                        semantic_novelty(r.result_text, r.initial_text, embedder)
                    )

        nh_mean, nh_std = _mean_std([float(rt.novelty) for rt in human])
        nl_mean, nl_std = _mean_std([float(rt.novelty) for rt in llm])
        fh_mean, fh_std = _mean_std([float(rt.feasibility) for rt in human])
        fl_mean, fl_std = _mean_std([float(rt.feasibility) for rt in llm])
        sem_mean, sem_std = _mean_std(semantic)

        expert_flags = [
            a
            for rt in mode_ratings
            if rt.rater_kind is RaterKind.HUMAN_EXPERT
            for _, a in rt.uu_approvals
        ]
        human_flags = [
            a for rt in human for _, a in rt.uu_approvals
        ]
        llm_flags = [a for rt in llm for _, a in rt.uu_approvals]

        rows.append(
            ModeRow(
                mode=mode,
                cases=len(mode_results),
                failures=sum(1 for r in mode_results if r.final_phase == "Failed"),
                novelty_human_mean=nh_mean,
                novelty_human_std=nh_std,
                novelty_llm_mean=nl_mean,
                novelty_llm_std=nl_std,
                feasibility_human_mean=fh_mean,
                feasibility_human_std=fh_std,
                feasibility_llm_mean=fl_mean,
                feasibility_llm_std=fl_std,
                semantic_novelty_mean=sem_mean,
                semantic_novelty_std=sem_std,
                uus_mean=(
                    sum(len(r.accepted_uus) for r in mode_results) / len(mode_results)
                    if mode_results
                    else 0.0
                ),
                approval_expert=_rate(expert_flags),
                approval_human=_rate(human_flags),
                approval_llm=_rate(llm_flags),
            )
        )
    return ReportTable(rows=tuple(rows))
