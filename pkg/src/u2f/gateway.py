"""Provider-agnostic chat access: stateless calls, retries, structured parsing.

Agents exchange structured output as labeled plain-text sections so any chat
provider works without function calling:

    @problem_statement
    Capture images without audible shutter noise.
    @risks
    - hardware variance
    - regulatory constraints

A section starts at a line beginning with ``@name`` and runs to the next
section. List fields use ``- item`` lines; record fields repeat the section,
each body holding ``key: value`` lines.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Protocol

from .errors import MissingScript, ProviderError, RateLimited, SchemaViolation, Timeout

DEFAULT_MAX_TOKENS = 1024
# Divergent stage runs hotter than the convergent ones.
STAGE_TEMPERATURES = {"exploration": 0.7}
DEFAULT_TEMPERATURE = 0.2


def stage_temperature(stage_tag: str) -> float:
    return STAGE_TEMPERATURES.get(stage_tag.split(".", 1)[0], DEFAULT_TEMPERATURE)


@dataclass(frozen=True)
class ChatRequest:
    """One stateless completion request; every call carries its full context."""

    system_prompt: str
    user_prompt: str
    stage_tag: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self):
        if not self.system_prompt.strip() or not self.user_prompt.strip():
            raise ValueError("prompts must be non-empty")
        if not self.stage_tag.strip():
            raise ValueError("stage_tag must identify the issuing stage")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "system_prompt": self.system_prompt,
            "user_prompt": self.user_prompt,
            "stage_tag": self.stage_tag,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ChatRequest":
        return cls(
            system_prompt=d["system_prompt"],
            user_prompt=d["user_prompt"],
            stage_tag=d["stage_tag"],
            temperature=float(d.get("temperature", DEFAULT_TEMPERATURE)),
            max_tokens=int(d.get("max_tokens", DEFAULT_MAX_TOKENS)),
        )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    provider_id: str
    latency_ms: int = 0
    input_tokens: int = 0
    output_tokens: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "provider_id": self.provider_id,
            "latency_ms": self.latency_ms,
            "token_usage": {"input": self.input_tokens, "output": self.output_tokens},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ChatResponse":
        usage = d.get("token_usage", {})
        return cls(
            text=d["text"],
            provider_id=d["provider_id"],
            latency_ms=int(d.get("latency_ms", 0)),
            input_tokens=int(usage.get("input", 0)),
            output_tokens=int(usage.get("output", 0)),
        )


@dataclass(frozen=True)
class ProviderConfig:
    provider_id: str = "mock"
    base_url: str = ""
    api_key: str = ""
    model: str = ""
    deadline_s: float = 30.0
    grace_s: float = 2.0
    max_retries: int = 2
    requests_per_second: float = 0.0  # 0 = unlimited

    def to_dict(self) -> dict[str, Any]:
        return {
            "provider_id": self.provider_id,
            "base_url": self.base_url,
            "model": self.model,
            "deadline_s": self.deadline_s,
            "max_retries": self.max_retries,
            "requests_per_second": self.requests_per_second,
        }


class Gateway(Protocol):
    def complete(self, req: ChatRequest, provider: ProviderConfig | None = None) -> ChatResponse: ...


# --- structured output schema -------------------------------------------------

TEXT = "text"
INT = "int"
FLOAT = "float"
ENUM = "enum"
LIST = "list"
RECORDS = "records"


@dataclass(frozen=True)
class FieldSpec:
    """One expected section of a structured reply."""

    name: str
    kind: str = TEXT
    required: bool = True
    values: tuple[str, ...] = ()  # for ENUM (top-level or record keys)
    subfields: tuple["FieldSpec", ...] = ()  # for RECORDS
    csv: bool = False  # record key holds a comma-separated list


@dataclass(frozen=True)
class FieldSchema:
    fields: tuple[FieldSpec, ...]

    def names(self) -> list[str]:
        return [f.name for f in self.fields]


def parse_sections(text: str) -> list[tuple[str, str]]:
    """Split a reply into (section_name, body) pairs in order of appearance."""
    sections: list[tuple[str, str]] = []
    current: str | None = None
    body: list[str] = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("@") and len(stripped) > 1 and not stripped[1].isspace():
            if current is not None:
                sections.append((current, "\n".join(body).strip()))
            current = stripped[1:].strip().lower()
            body = []
        elif current is not None:
            body.append(line)
    if current is not None:
        sections.append((current, "\n".join(body).strip()))
    return sections


def _match_enum(value: str, allowed: tuple[str, ...]) -> str | None:
    for cand in allowed:
        if value.strip().lower() == cand.lower():
            return cand
    return None


def _parse_record_body(body: str) -> dict[str, str]:
    rec: dict[str, str] = {}
    for line in body.splitlines():
        if ":" in line:
            key, _, val = line.partition(":")
            rec[key.strip().lower()] = val.strip()
    return rec


def parse_structured(text: str, schema: FieldSchema) -> dict[str, Any]:
    """Parse a labeled-section reply against a schema.

    Raises SchemaViolation listing every problem found; the raw text rides
    along for diagnostics and repair prompts.
    """
    problems: list[str] = []
    sections = parse_sections(text)
    if not sections:
        raise SchemaViolation(["no labeled sections found"], raw_text=text)

    by_name: dict[str, list[str]] = {}
    for name, body in sections:
        by_name.setdefault(name, []).append(body)

    out: dict[str, Any] = {}
    for spec in schema.fields:
        bodies = by_name.get(spec.name, [])
        if not bodies:
            if spec.required:
                problems.append(f"missing section @{spec.name}")
            elif spec.kind == RECORDS:
                out[spec.name] = []
            continue

        if spec.kind == RECORDS:
            records = []
            for body in bodies:
                rec = _parse_record_body(body)
                parsed: dict[str, Any] = {}
                for sub in spec.subfields:
                    raw = rec.get(sub.name, "")
                    if not raw:
                        if sub.required:
                            problems.append(f"@{spec.name} record missing key '{sub.name}'")
                        parsed[sub.name] = [] if sub.csv else ""
                        continue
                    if sub.csv:
                        parsed[sub.name] = [p.strip() for p in raw.split(",") if p.strip()]
                    elif sub.kind == ENUM:
                        matched = _match_enum(raw, sub.values)
                        if matched is None:
                            problems.append(
                                f"@{spec.name} key '{sub.name}' has unknown value {raw!r}"
                            )
                        else:
                            parsed[sub.name] = matched
                    elif sub.kind == INT:
                        try:
                            parsed[sub.name] = int(raw)
                        except ValueError:
                            problems.append(f"@{spec.name} key '{sub.name}' is not an integer: {raw!r}")
                    elif sub.kind == FLOAT:
                        try:
                            parsed[sub.name] = float(raw)
                        except ValueError:
                            problems.append(f"@{spec.name} key '{sub.name}' is not a number: {raw!r}")
                    else:
                        parsed[sub.name] = raw
                records.append(parsed)
            out[spec.name] = records
            continue

        body = bodies[0]
        if spec.kind == LIST:
            items = [
                line.strip()[2:].strip()
                for line in body.splitlines()
                if line.strip().startswith("- ")
            ]
            out[spec.name] = items
        elif spec.kind == INT:
            try:
                out[spec.name] = int(body.strip())
            except ValueError:
                problems.append(f"@{spec.name} is not an integer: {body.strip()!r}")
        elif spec.kind == FLOAT:
            try:
                out[spec.name] = float(body.strip())
            except ValueError:
                problems.append(f"@{spec.name} is not a number: {body.strip()!r}")
        elif spec.kind == ENUM:
            matched = _match_enum(body, spec.values)
            if matched is None:
                problems.append(f"@{spec.name} has unknown value {body.strip()!r}")
            else:
                out[spec.name] = matched
        else:
            if spec.required and not body.strip():
                problems.append(f"@{spec.name} is empty")
            out[spec.name] = body.strip()

    if problems:
        raise SchemaViolation(problems, raw_text=text)
    return out


def format_reminder(schema: FieldSchema) -> str:
    lines = ["Reply using exactly these labeled sections:"]
    for spec in schema.fields:
        suffix = {
            LIST: " (one '- item' per line)",
            RECORDS: " (repeat the section per record, 'key: value' lines inside)",
            ENUM: f" (one of: {', '.join(spec.values)})",
            INT: " (an integer)",
            FLOAT: " (a number)",
            TEXT: "",
        }[spec.kind]
        opt = "" if spec.required else " [optional]"
        lines.append(f"@{spec.name}{suffix}{opt}")
    return "\n".join(lines)


def complete_structured(
    gw: Gateway,
    req: ChatRequest,
    schema: FieldSchema,
    max_repairs: int = 1,
    provider: ProviderConfig | None = None,
) -> dict[str, Any]:
    """Complete and parse; on parse failure re-prompt with a repair instruction.

    Total attempts never exceed max_repairs + 1. The final SchemaViolation
    carries the last raw text and the attempt count.
    """
    attempt_req = req
    last_error: SchemaViolation | None = None
    attempts = 0
    for attempt in range(max_repairs + 1):
        attempts += 1
        resp = gw.complete(attempt_req, provider)
        try:
            parsed = parse_structured(resp.text, schema)
            parsed["_attempts"] = attempts
            parsed["_raw"] = resp.text
            return parsed
        except SchemaViolation as exc:
            last_error = exc
            repair = (
                f"{req.user_prompt}\n\n"
                f"Your previous reply could not be parsed ({'; '.join(exc.problems)}).\n"
                f"{format_reminder(schema)}"
            )
            attempt_req = replace(req, user_prompt=repair)
    raise SchemaViolation(last_error.problems, raw_text=last_error.raw_text, attempts=attempts)


# --- scripted mock -------------------------------------------------------------


def prompt_hash(user_prompt: str) -> str:
    return hashlib.sha256(user_prompt.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class MockRule:
    """One scripted response.

    Resolution is a pure function of request content: exact prompt-hash
    entries win, then `contains` rules in listed order, then the stage
    default. Rules may be scoped to a provider id.
    """

    stage_tag: str
    text: str
    hash: str = ""
    contains: str = ""
    provider: str = ""  # empty = any provider

    @property
    def is_default(self) -> bool:
        return not self.hash and not self.contains

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"stage_tag": self.stage_tag, "text": self.text}
        if self.hash:
            d["hash"] = self.hash
        if self.contains:
            d["contains"] = self.contains
        if self.provider:
            d["provider"] = self.provider
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MockRule":
        return cls(
            stage_tag=d["stage_tag"],
            text=d["text"],
            hash=d.get("hash", ""),
            contains=d.get("contains", ""),
            provider=d.get("provider", ""),
        )


class MockGateway:
    """Deterministic scripted backend: identical (stage_tag, prompt) in, byte
    identical response out, across processes. Unknown keys raise MissingScript
    rather than fabricating output."""

    def __init__(self, rules: list[MockRule] | None = None):
        self.rules = list(rules or [])
        self.call_count = 0

    @classmethod
    def from_dir(cls, script_dir: str | Path) -> "MockGateway":
        rules: list[MockRule] = []
        for path in sorted(Path(script_dir).glob("*.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            rules.extend(MockRule.from_dict(d) for d in data)
        return cls(rules)

    def add(self, stage_tag: str, text: str, contains: str = "", hash: str = "", provider: str = "") -> None:
        self.rules.append(MockRule(stage_tag=stage_tag, text=text, contains=contains, hash=hash, provider=provider))

    def complete(self, req: ChatRequest, provider: ProviderConfig | None = None) -> ChatResponse:
        self.call_count += 1
        provider_id = provider.provider_id if provider else "mock"
        h = prompt_hash(req.user_prompt)
        candidates = [
            r for r in self.rules
            if r.stage_tag == req.stage_tag and r.provider in ("", provider_id)
        ]
        chosen: MockRule | None = None
        for r in candidates:
            if r.hash and r.hash == h:
                chosen = r
                break
        if chosen is None:
            for r in candidates:
                if r.contains and r.contains in req.user_prompt:
                    chosen = r
                    break
        if chosen is None:
            for r in candidates:
                if r.is_default:
                    chosen = r
                    break
        if chosen is None:
            raise MissingScript(
                f"no script for stage_tag={req.stage_tag!r} provider={provider_id!r} hash={h}"
            )
        return ChatResponse(
            text=chosen.text,
            provider_id=provider_id,
            latency_ms=0,
            input_tokens=len(req.user_prompt.split()),
            output_tokens=len(chosen.text.split()),
        )


# --- live HTTP backend ----------------------------------------------------------


class RateLimiter:
    """Minimum-interval limiter; the gateway's only shared mutable state."""

    def __init__(self, requests_per_second: float, clock=time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / requests_per_second if requests_per_second > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_at = 0.0

    def acquire(self) -> None:
        if self.interval <= 0:
            return
        with self._lock:
            now = self._clock()
            wait = self._next_at - now
            self._next_at = max(now, self._next_at) + self.interval
        if wait > 0:
            self._sleep(wait)


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float):
    import requests

    resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    return resp.status_code, dict(resp.headers), resp.text


class HttpGateway:
    """OpenAI-style chat-completions client with retry and deadline handling.

    The transport, clock and sleep are injectable so timeout behavior is
    testable without a network or a real 30-second wait.
    """

    def __init__(
        self,
        config: ProviderConfig,
        transport: Callable = _requests_transport,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._transport = transport
        self._clock = clock
        self._sleep = sleep
        self._limiter = RateLimiter(config.requests_per_second, clock=clock, sleep=sleep)

    def complete(self, req: ChatRequest, provider: ProviderConfig | None = None) -> ChatResponse:
        cfg = provider or self.config
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {cfg.api_key}"} if cfg.api_key else {}
        payload = {
            "model": cfg.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        started = self._clock()
        deadline = started + cfg.deadline_s
        attempt = 0
        while True:
            attempt += 1
            self._limiter.acquire()
            now = self._clock()
            if now >= deadline + cfg.grace_s:
                raise Timeout(f"deadline {cfg.deadline_s}s exceeded for {req.stage_tag}")
            try:
                status, resp_headers, body = self._transport(
                    url, headers, payload, max(0.001, deadline - now)
                )
            except Exception as exc:  # transport-level failure
                if attempt > cfg.max_retries or self._clock() >= deadline:
                    raise Timeout(f"{req.stage_tag}: {exc}") from exc
                continue
            if status == 429:
                retry_after = float(resp_headers.get("Retry-After", 1.0))
                if attempt > cfg.max_retries:
                    raise RateLimited(retry_after)
                if self._clock() + retry_after >= deadline + cfg.grace_s:
                    raise RateLimited(retry_after, "retry-after exceeds deadline")
                self._sleep(retry_after)
                continue
            if status != 200:
                if 500 <= status < 600 and attempt <= cfg.max_retries:
                    continue
                raise ProviderError(status, body)
            data = json.loads(body)
            text = data.get("choices", [{}])[0].get("message", {}).get("content", "")
            usage = data.get("usage", {})
            return ChatResponse(
                text=text,
                provider_id=cfg.provider_id,
                latency_ms=int((self._clock() - now) * 1000),
                input_tokens=int(usage.get("prompt_tokens", 0)),
                output_tokens=int(usage.get("completion_tokens", 0)),
            )
