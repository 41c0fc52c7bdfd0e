"""Search providers and the evidence augmentor the agents go through.

Every search in the system is issued through SearchAugmentor with an
explicit purpose and issuer, so traces can prove no query happened
without an agent asking for it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Protocol

from .domain import Component, EvidenceItem
from .errors import ProviderUnavailable, QuotaExceeded, SearchError
from .gateway import (
    ENUM,
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

# Hard cap on results per query; providers may return fewer.
MAX_RESULTS = 5

# retrieved_at stamp used when no clock is injected; keeps scripted runs
# reproducible without threading wall time through every test.
FIXED_RETRIEVED_AT = "1970-01-01T00:00:00Z"


class SearchPurpose(str, Enum):
    PROBE_WEAKNESS = "ProbeWeakness"
    GROUND_ANALOGY = "GroundAnalogy"
    VALIDATE_FEASIBILITY = "ValidateFeasibility"
    VALIDATE_IMPLEMENTATION = "ValidateImplementation"
    VALIDATE_CONTEXT = "ValidateContext"
    REFACTOR_SUPPORT = "RefactorSupport"


PURPOSE_FOR_COMPONENT = {
    Component.FEASIBILITY: SearchPurpose.VALIDATE_FEASIBILITY,
    Component.IMPLEMENTATION: SearchPurpose.VALIDATE_IMPLEMENTATION,
    Component.CONTEXT: SearchPurpose.VALIDATE_CONTEXT,
}
COMPONENT_FOR_PURPOSE = {p: c for c, p in PURPOSE_FOR_COMPONENT.items()}


@dataclass(frozen=True)
class SearchQuery:
    text: str
    purpose: SearchPurpose
    issued_by: str  # stage tag of the issuing agent step

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("search query text must be non-empty")
        if not self.issued_by.strip():
            raise ValueError("search query must name its issuer")


class Stance(str, Enum):
    SUPPORTS = "Supports"
    CONTRADICTS = "Contradicts"
    NO_EVIDENCE = "NoEvidence"


@dataclass(frozen=True)
class VerificationResult:
    stance: Stance
    evidence: tuple[EvidenceItem, ...]
    rationale: str = ""


class SearchProvider(Protocol):
    def search(self, text: str, max_results: int) -> list[dict]: ...


def normalize_query(text: str) -> str:
    return " ".join(text.lower().split())


class FixtureSearchProvider:
    """Replays canned results from a JSON-Lines file.

    Each line: {"query": ..., "results": [{"source", "snippet"}, ...]}.
    Lookup is by normalized query text; unknown queries return no results
    rather than failing, mirroring a live engine that finds nothing.
    """

    def __init__(self, path: str | None = None, entries: dict[str, list[dict]] | None = None):
        self._entries: dict[str, list[dict]] = {}
        if path is not None:
            for row in read_jsonl(path):
                self._entries[normalize_query(row["query"])] = list(row.get("results", []))
        if entries:
            for query, results in entries.items():
                self._entries[normalize_query(query)] = list(results)
        self.hits = 0

    def search(self, text: str, max_results: int) -> list[dict]:
        self.hits += 1
        return self._entries.get(normalize_query(text), [])[:max_results]


class LiveSearchProvider:
    """Thin client for an HTTP search endpoint.

    POSTs {"query", "max_results"} and expects {"results": [...]}. Quota
    exhaustion and availability failures map onto the search error types
    so callers can degrade to the no-evidence path uniformly.
    """

    def __init__(self, base_url: str, api_key: str = "", transport: Callable | None = None):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        if transport is None:
            import requests

            def transport(url: str, payload: dict, headers: dict):
                resp = requests.post(url, json=payload, headers=headers, timeout=30)
                return resp.status_code, resp.json() if resp.content else {}

        self._transport = transport

    def search(self, text: str, max_results: int) -> list[dict]:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            status, body = self._transport(
                f"{self.base_url}/search",
                {"query": text, "max_results": max_results},
                headers,
            )
        except SearchError:
            raise
        except Exception as exc:
            raise ProviderUnavailable(f"search transport failed: {exc}") from exc
        if status == 429:
            raise QuotaExceeded("search quota exhausted")
        if status >= 500:
            raise ProviderUnavailable(f"search provider returned {status}")
        if status >= 400:
            raise SearchError(f"search request rejected with {status}")
        return list(body.get("results", []))[:max_results]


_STANCE_SCHEMA = FieldSchema(
    fields=(
        FieldSpec("stance", ENUM, values=(Stance.SUPPORTS.value, Stance.CONTRADICTS.value)),
        FieldSpec("rationale", TEXT, required=False),
    )
)


@dataclass
class SearchAugmentor:
    """Cached, observable front door for all agent-issued searches.

    Results are cached by normalized query text, so a repeated question
    costs one provider call. The observer sees every agent-level search
    (cache hits included) and is how the orchestrator records SearchCall
    trace events.
    """

    provider: SearchProvider
    gateway: Gateway | None = None
    max_results: int = MAX_RESULTS
    observer: Callable[[dict[str, Any]], None] | None = None
    retrieved_at: str = FIXED_RETRIEVED_AT
    provider_config: ProviderConfig | None = None
    _cache: dict[str, list[dict]] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def search(self, query: SearchQuery) -> tuple[EvidenceItem, ...]:
        key = normalize_query(query.text)
        with self._lock:
            cache_hit = key in self._cache
            if not cache_hit:
                self._cache[key] = self.provider.search(query.text, self.max_results)[
                    : self.max_results
                ]
            results = self._cache[key]
        if self.observer is not None:
            self.observer(
                {
                    "query": query.text,
                    "purpose": query.purpose.value,
                    "issued_by": query.issued_by,
                    "cache_hit": cache_hit,
                    # retrieved_at rides along so a replayed run rebuilds
                    # byte-identical evidence items.
                    "results": [
                        {
                            "source": r.get("source", ""),
                            "snippet": r.get("snippet", ""),
                            "retrieved_at": r.get("retrieved_at", self.retrieved_at),
                        }
                        for r in results
                    ],
                }
            )
        supports = COMPONENT_FOR_PURPOSE.get(query.purpose)
        return tuple(
            EvidenceItem(
                source=r.get("source", ""),
                snippet=r.get("snippet", ""),
                supports=supports,
                retrieved_at=r.get("retrieved_at", self.retrieved_at),
            )
            for r in results
        )

    def verify_claim(
        self,
        claim: str,
        component: Component,
        issued_by: str,
        constraint_lines: list[str] | None = None,
    ) -> VerificationResult:
        """Search for the claim and judge the evidence stance.

        No results means NoEvidence with no judgment call made: the stance
        rubric requires citing evidence, which nothing could satisfy.
        """
        query = SearchQuery(
            text=claim, purpose=PURPOSE_FOR_COMPONENT[component], issued_by=issued_by
        )
        evidence = self.search(query)
        if not evidence:
            return VerificationResult(stance=Stance.NO_EVIDENCE, evidence=())
        if self.gateway is None:
            raise SearchError("stance judgment requires a gateway")
        stage = "search.stance"
        req = ChatRequest(
            stage_tag=stage,
            system_prompt=prompts.system_prompt("search", constraint_lines),
            user_prompt=prompts.render(
                "search_stance",
                component=component.value,
                claim=claim,
                evidence=prompts.evidence_block(evidence),
                format_instructions=format_reminder(_STANCE_SCHEMA),
            ),
            temperature=stage_temperature(stage),
        )
        parsed = complete_structured(self.gateway, req, _STANCE_SCHEMA, provider=self.provider_config)
        return VerificationResult(
            stance=Stance(parsed["stance"]),
            evidence=evidence,
            rationale=parsed.get("rationale", ""),
        )
