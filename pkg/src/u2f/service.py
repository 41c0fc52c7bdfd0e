"""HTTP service exposing the orchestrator to the steering console.

One run = one worker thread; the console is a pure client of this API and
a run never depends on any console being connected.
"""

from __future__ import annotations

import queue
import threading
import time
from pathlib import Path
from typing import Any, Callable

from fastapi import Body, FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse

from .directives import HumanDirective
from .domain import validate_enabler_story
from .errors import StoryValidationError
from .gateway import Gateway
from .jsonio import dumps_canonical
from .orchestrator import (
    CaseResult,
    CaseRunner,
    QueueInteraction,
    RunConfig,
    TraceEvent,
)
from .search import SearchProvider

GatewayFactory = Callable[[RunConfig], Gateway]
SearchFactory = Callable[[RunConfig], "SearchProvider | None"]

_HEARTBEAT_SECONDS = 5.0


def _sse(event: str, data: dict[str, Any], event_id: int | None = None) -> str:
    lines = []
    if event_id is not None:
        lines.append(f"id: {event_id}")
    lines.append(f"event: {event}")
    lines.append(f"data: {dumps_canonical(data)}")
    return "\n".join(lines) + "\n\n"


def _collect_uus(node: Any, found: dict[str, dict[str, Any]]) -> None:
    """Walk any JSON-shaped payload and index every UU record by id."""
    if isinstance(node, dict):
        if "uu_id" in node and isinstance(node.get("uu_id"), str):
            found.setdefault(node["uu_id"], node)
        for value in node.values():
            _collect_uus(value, found)
    elif isinstance(node, list):
        for item in node:
            _collect_uus(item, found)


class ManagedRun:
    """One case run owned by the service: worker thread, event fan-out,
    directive channel, and adjudication ledger."""

    def __init__(
        self,
        run_id: str,
        runner: CaseRunner,
        channel: QueueInteraction,
        interactive: bool,
    ):
        self.run_id = run_id
        self.runner = runner
        self.channel = channel
        self.interactive = interactive
        self.created_at = time.time()
        self.done = False
        self.result: CaseResult | None = None
        self.error: str | None = None
        self.waiting_at: str | None = None
        self._lock = threading.Lock()
        self._events: list[dict[str, Any]] = []
        self._subscribers: list[queue.Queue] = []
        self._adjudications: list[dict[str, Any]] = []
        runner.log.listeners.append(self._on_event)
        self.thread = threading.Thread(target=self._run, daemon=True)

    def start(self) -> None:
        self.thread.start()

    def _run(self) -> None:
        try:
            self.result, _ = self.runner.run()
        except Exception as exc:  # fault barrier: errors surface via the API
            self.error = f"{type(exc).__name__}: {exc}"
        finally:
            with self._lock:
                self.done = True
                subscribers = list(self._subscribers)
            for sub in subscribers:
                sub.put(None)

    def _on_event(self, event: TraceEvent) -> None:
        row = event.to_dict()
        with self._lock:
            self._events.append(row)
            subscribers = list(self._subscribers)
        for sub in subscribers:
            sub.put(row)

    def _on_waiting(self, stage: str | None) -> None:
        self.waiting_at = stage
        status = {"type": "status", "waiting_at": stage}
        with self._lock:
            subscribers = list(self._subscribers)
        for sub in subscribers:
            sub.put(status)

    @property
    def terminal(self) -> bool:
        return self.done or self.runner.state.phase.terminal

    def subscribe(self, cursor: int) -> tuple[queue.Queue, list[dict], bool]:
        sub: queue.Queue = queue.Queue()
        with self._lock:
            backlog = [e for e in self._events if e["seq"] > cursor]
            done = self.done
            if not done:
                self._subscribers.append(sub)
        return sub, backlog, done

    def unsubscribe(self, sub: queue.Queue) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def events(self) -> list[dict[str, Any]]:
        with self._lock:
            return list(self._events)

    def snapshot(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "case_id": self.runner.story.id,
            "mode": self.runner.config.mode.value,
            "phase": self.runner.state.phase.value,
            "done": self.done,
            "interactive": self.interactive,
            "waiting_at": self.waiting_at,
            "event_count": len(self.events()),
            "error": self.error,
        }

    # -- adjudication ------------------------------------------------------

    def known_uus(self) -> dict[str, dict[str, Any]]:
        found: dict[str, dict[str, Any]] = {}
        _collect_uus(self.events(), found)
        if self.result is not None:
            _collect_uus([u.to_dict() for u in self.result.accepted_uus], found)
        return found

    def adjudicate(self, uu_id: str, approved: bool, note: str) -> dict[str, Any]:
        record = {
            "uu_id": uu_id,
            "approved": bool(approved),
            "note": note,
            "timestamp": time.time(),
        }
        with self._lock:
            self._adjudications.append(record)
        return record

    def adjudication_report(self) -> dict[str, Any]:
        with self._lock:
            history = list(self._adjudications)
        effective: dict[str, dict[str, Any]] = {}
        for row in history:
            effective[row["uu_id"]] = row
        accepted_ids = set()
        if self.result is not None:
            accepted_ids = {u.uu_id for u in self.result.accepted_uus}
        pool = accepted_ids | set(effective)
        approved = sum(1 for row in effective.values() if row["approved"])
        rate = approved / len(pool) if pool else None
        fragment = {
            "case_id": self.runner.story.id,
            "rater_id": "console",
            "rater_kind": "HumanExpert",
            "uu_approvals": [
                {"uu_id": uid, "approved": row["approved"]}
                for uid, row in sorted(effective.items())
            ],
        }
        return {
            "judgments": [effective[uid] for uid in sorted(effective)],
            "history": history,
            "approval_rate": rate,
            "rating_fragment": fragment,
        }


def create_app(
    gateway_factory: GatewayFactory,
    search_factory: SearchFactory | None = None,
    trace_dir: str | None = None,
) -> FastAPI:
    """Build the service around injected backends.

    The factories receive the run's config so mode and provider selection
    stay in one place; trace_dir, when set, persists one JSONL per run.
    """
    app = FastAPI(title="u2f service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    runs: dict[str, ManagedRun] = {}
    counter = threading.Lock()
    state = {"next_id": 1}

    def _error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": message})

    def _get(run_id: str) -> ManagedRun | None:
        return runs.get(run_id)

    @app.post("/runs", status_code=201)
    def start_run(payload: dict[str, Any] = Body(...)) -> Any:
        try:
            story = validate_enabler_story(payload["story"])
            config = RunConfig.from_dict(payload.get("config", {}))
        except KeyError as exc:
            return _error(422, f"missing field: {exc}")
        except (ValueError, TypeError, StoryValidationError) as exc:
            return _error(422, str(exc))
        interactive = bool(payload.get("interactive", False))
        with counter:
            run_id = f"run-{state['next_id']:04d}"
            state["next_id"] += 1
        channel = QueueInteraction(interactive=interactive)
        trace_path = None
        if trace_dir:
            Path(trace_dir).mkdir(parents=True, exist_ok=True)
            trace_path = str(Path(trace_dir) / f"{run_id}.jsonl")
        runner = CaseRunner(
            story,
            config,
            gateway_factory(config),
            search_provider=search_factory(config) if search_factory else None,
            channel=channel,
            trace_path=trace_path,
        )
        run = ManagedRun(run_id, runner, channel, interactive)
        channel.on_state = run._on_waiting
        runs[run_id] = run
        run.start()
        return {"run_id": run_id, "case_id": story.id}

    @app.get("/runs")
    def list_runs() -> Any:
        ordered = sorted(runs.values(), key=lambda r: r.run_id)
        return {"runs": [r.snapshot() for r in ordered]}

    @app.get("/runs/{run_id}")
    def run_detail(run_id: str) -> Any:
        run = _get(run_id)
        if run is None:
            return _error(404, f"no run {run_id}")
        detail = run.snapshot()
        detail["result"] = run.result.to_dict() if run.result else None
        return detail

    @app.get("/runs/{run_id}/trace")
    def run_trace(run_id: str) -> Any:
        run = _get(run_id)
        if run is None:
            return _error(404, f"no run {run_id}")
        return {
            "case_id": run.runner.log.case_id,
            "story": run.runner.log.story,
            "config": run.runner.log.config,
            "events": run.events(),
        }

    @app.post("/runs/{run_id}/directive", status_code=202)
    def post_directive(run_id: str, payload: dict[str, Any] = Body(...)) -> Any:
        run = _get(run_id)
        if run is None:
            return _error(404, f"no run {run_id}")
        if run.terminal:
            return _error(409, "run is terminal; directives are no longer accepted")
        try:
            directive = HumanDirective.from_dict(payload)
        except (ValueError, KeyError, TypeError) as exc:
            return _error(422, str(exc))
        run.channel.submit(directive)
        return {"status": "accepted", "directive": directive.to_dict()}

    @app.post("/runs/{run_id}/resume", status_code=202)
    def post_resume(run_id: str) -> Any:
        run = _get(run_id)
        if run is None:
            return _error(404, f"no run {run_id}")
        if run.terminal:
            return _error(409, "run is terminal")
        run.channel.resume()
        return {"status": "resumed"}

    @app.get("/runs/{run_id}/events")
    def run_events(run_id: str, cursor: int = 0) -> Any:
        run = _get(run_id)
        if run is None:
            return _error(404, f"no run {run_id}")
        sub, backlog, already_done = run.subscribe(cursor)

        def stream():
            try:
                for row in backlog:
                    yield _sse("trace", row, event_id=row["seq"])
                if already_done:
                    yield _sse("done", run.snapshot())
                    return
                while True:
                    try:
                        item = sub.get(timeout=_HEARTBEAT_SECONDS)
                    except queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    if item is None:
                        yield _sse("done", run.snapshot())
                        return
                    if item.get("type") == "status":
                        yield _sse("status", item)
                    else:
                        yield _sse("trace", item, event_id=item["seq"])
            finally:
                run.unsubscribe(sub)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/runs/{run_id}/adjudications", status_code=201)
    def post_adjudication(run_id: str, payload: dict[str, Any] = Body(...)) -> Any:
        run = _get(run_id)
        if run is None:
            return _error(404, f"no run {run_id}")
        uu_id = payload.get("uu_id", "")
        if uu_id not in run.known_uus():
            return _error(404, f"no UU {uu_id!r} in run {run_id}")
        if not isinstance(payload.get("approved"), bool):
            return _error(422, "approved must be a boolean")
        record = run.adjudicate(uu_id, payload["approved"], str(payload.get("note", "")))
        report = run.adjudication_report()
        return {"recorded": record, "approval_rate": report["approval_rate"]}

    @app.get("/runs/{run_id}/adjudications")
    def get_adjudications(run_id: str) -> Any:
        run = _get(run_id)
        if run is None:
            return _error(404, f"no run {run_id}")
        return run.adjudication_report()

    return app
