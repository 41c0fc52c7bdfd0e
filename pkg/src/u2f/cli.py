"""Operator entry point: run, batch, replay, eval, dataset build, degrade,
ablate, serve.

Every subcommand works offline against scripted mocks; exit codes are 0 on
success, 1 on domain errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import queue
import sys
import threading
from pathlib import Path
from typing import Any, Callable, Sequence

from .directives import OPTIMIZATION_GOALS, DirectiveKind, HumanDirective
from .domain import EnablerStory, load_stories, save_stories, validate_enabler_story
from .errors import U2FError
from .evaluation import HashEmbedder, RemoteEmbedder, evaluate_run, load_ratings
from .figures import render_eval_figures
from .gateway import Gateway, HttpGateway, MockGateway, ProviderConfig
from .jsonio import dumps_canonical, read_jsonl, write_jsonl
from .orchestrator import (
    CaseResult,
    QueueInteraction,
    RunConfig,
    RunMode,
    read_trace,
    replay,
    run_case,
)
from .robustness import (
    ABLATION_VARIANTS,
    DegradationSpec,
    DegradeMode,
    ablation_config,
    degrade_input,
)
from .search import FixtureSearchProvider, LiveSearchProvider, SearchProvider
from . import dataset as dataset_mod


class UsageError(Exception):
    """Bad invocation: print the contract and exit 2."""


# Setting name -> (environment variable, default). Precedence:
# flags > config file > environment > defaults.
_SETTINGS = {
    "provider_id": ("U2F_PROVIDER", "mock"),
    "gateway_url": ("U2F_GATEWAY_URL", ""),
    "gateway_key": ("U2F_GATEWAY_KEY", ""),
    "search_url": ("U2F_SEARCH_URL", ""),
    "search_key": ("U2F_SEARCH_KEY", ""),
    "embed_url": ("U2F_EMBED_URL", ""),
    "embed_model": ("U2F_EMBED_MODEL", ""),
    "trace_dir": ("U2F_TRACE_DIR", ""),
}


def resolve_settings(
    args: argparse.Namespace, env: dict[str, str] | None = None
) -> dict[str, tuple[str, str]]:
    """Merge settings by precedence; each value carries where it came from."""
    env = os.environ if env is None else env
    file_cfg: dict[str, Any] = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            file_cfg = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {config_path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError(f"config file {config_path} must hold a JSON object")

    resolved: dict[str, tuple[str, str]] = {}
    for name, (env_key, default) in _SETTINGS.items():
        value, source = default, "default"
        if env_key in env:
            value, source = env[env_key], f"env {env_key}"
        if name in file_cfg:
            value, source = str(file_cfg[name]), "config file"
        flag = getattr(args, name, None)
        if flag not in (None, ""):
            value, source = str(flag), "flag"
        resolved[name] = (value, source)
    return resolved


def print_settings(settings: dict[str, tuple[str, str]], out: Callable[[str], None]) -> None:
    for name in sorted(settings):
        value, source = settings[name]
        shown = "***" if value and name.endswith("_key") else value
        out(f"config {name}={shown} ({source})")


def build_gateway(args: argparse.Namespace, settings: dict[str, tuple[str, str]]) -> Gateway:
    mock_dir = getattr(args, "mock", None)
    if mock_dir:
        return MockGateway.from_dir(mock_dir)
    url = settings["gateway_url"][0]
    if not url:
        raise UsageError(
            "no provider configured: pass --mock <script-dir> or set a gateway URL "
            "(flag --gateway-url, config file, or U2F_GATEWAY_URL)"
        )
    return HttpGateway(
        ProviderConfig(
            provider_id=settings["provider_id"][0],
            base_url=url,
            api_key=settings["gateway_key"][0],
        )
    )


def build_search(
    args: argparse.Namespace, settings: dict[str, tuple[str, str]]
) -> SearchProvider | None:
    fixtures = getattr(args, "search_fixtures", None)
    if fixtures:
        return FixtureSearchProvider(path=fixtures)
    url = settings["search_url"][0]
    if url:
        return LiveSearchProvider(url, api_key=settings["search_key"][0])
    return None


def build_embedder(settings: dict[str, tuple[str, str]]):
    url = settings["embed_url"][0]
    if url:
        return RemoteEmbedder(url, model=settings["embed_model"][0] or "default")
    return HashEmbedder()


def _load_single_story(path: str) -> EnablerStory:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        records = list(read_jsonl(path))
        if len(records) != 1:
            raise UsageError(
                f"{path} holds {len(records)} stories; `run` takes exactly one "
                "(use `batch` for datasets)"
            ) from None
        data = records[0]
    if isinstance(data, list):
        raise UsageError(f"{path} holds a list; `run` takes exactly one story")
    return validate_enabler_story(data)


def _make_config(args: argparse.Namespace, settings: dict[str, tuple[str, str]]) -> RunConfig:
    base = RunConfig(
        mode=RunMode(getattr(args, "mode", "u2f")),
        provider_id=settings["provider_id"][0],
        search_enabled=not getattr(args, "no_search", False),
    )
    return base


# --- interactive terminal loop ---------------------------------------------------

_DIRECTIVE_VERBS = {
    "pref": DirectiveKind.PREFERENCE,
    "taboo": DirectiveKind.TABOO,
    "goal": DirectiveKind.OPTIMIZATION_GOAL,
    "feedback": DirectiveKind.FREE_TEXT_FEEDBACK,
}


def parse_directive_line(line: str) -> HumanDirective:
    """Parse `verb text [@Phase]` into a directive.

    Verbs: pref, taboo, goal, feedback. A trailing `@Discovery`,
    `@Exploration`, `@Integration` or `@All` scopes the directive.
    """
    stripped = line.strip()
    verb, _, rest = stripped.partition(" ")
    kind = _DIRECTIVE_VERBS.get(verb.lower())
    if kind is None:
        raise ValueError(
            f"unknown directive verb {verb!r}; use one of {sorted(_DIRECTIVE_VERBS)}"
        )
    target = "All"
    content = rest.strip()
    if "@" in content:
        body, _, phase = content.rpartition("@")
        if body.strip():
            content, target = body.strip(), phase.strip()
    if not content:
        raise ValueError("directive needs content after the verb")
    custom = kind is DirectiveKind.OPTIMIZATION_GOAL and content not in OPTIMIZATION_GOALS
    return HumanDirective(kind=kind, content=content, target_phase=target, custom_goal=custom)


def interactive_session(
    story: EnablerStory,
    config: RunConfig,
    gateway: Gateway,
    search_provider: SearchProvider | None,
    trace_path: str | None,
    in_fn: Callable[[str], str] = input,
    out: Callable[[str], None] = print,
) -> tuple[CaseResult, Any]:
    """Run one case, pausing at every stage boundary for terminal directives.

    The same QueueInteraction channel drives serve mode, so the directive
    protocol is one codepath.
    """
    channel = QueueInteraction(interactive=True)
    waiting: queue.Queue = queue.Queue()
    channel.on_state = lambda stage: waiting.put(stage) if stage else None
    outcome: dict[str, Any] = {}

    def work() -> None:
        try:
            outcome["value"] = run_case(
                story,
                config,
                gateway,
                search_provider=search_provider,
                channel=channel,
                trace_path=trace_path,
            )
        except BaseException as exc:  # re-raised on the main thread
            outcome["error"] = exc
        finally:
            waiting.put(None)

    thread = threading.Thread(target=work, daemon=True)
    thread.start()
    while True:
        stage = waiting.get()
        if stage is None:
            break
        out(f"-- paused after {stage}: pref/taboo/goal/feedback <text> [@Phase]; blank line continues --")
        while True:
            try:
                line = in_fn("u2f> ")
            except EOFError:
                line = ""
            if not line.strip():
                channel.resume()
                break
            try:
                directive = parse_directive_line(line)
            except ValueError as exc:
                out(f"error: {exc}")
                continue
            channel.submit(directive)
            out(f"queued {directive.kind.value} for {directive.target_phase}")
    thread.join()
    if "error" in outcome:
        raise outcome["error"]
    return outcome["value"]


# --- subcommands ------------------------------------------------------------------


def _print_result(result: CaseResult, out: Callable[[str], None]) -> None:
    out(f"case {result.case_id}: {result.final_phase} (mode={result.mode})")
    if result.failure_reason:
        out(f"failure: {result.failure_reason}")
    out(f"accepted UUs: {len(result.accepted_uus)}")
    for uu in result.accepted_uus:
        out(f"  - {uu.uu_id}: {uu.name}")
    if result.result_text:
        out("result:")
        out(result.result_text)


def cmd_run(args: argparse.Namespace, settings: dict, out: Callable[[str], None]) -> int:
    story = _load_single_story(args.story_file)
    config = _make_config(args, settings)
    gateway = build_gateway(args, settings)
    search_provider = build_search(args, settings)
    trace_path = args.trace or (
        str(Path(settings["trace_dir"][0]) / f"{story.id}.jsonl")
        if settings["trace_dir"][0]
        else None
    )
    if trace_path:
        Path(trace_path).parent.mkdir(parents=True, exist_ok=True)
    if args.interactive:
        result, _ = interactive_session(
            story, config, gateway, search_provider, trace_path, out=out
        )
    else:
        result, _ = run_case(
            story, config, gateway, search_provider=search_provider, trace_path=trace_path
        )
    _print_result(result, out)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(
            dumps_canonical(result.to_dict()) + "\n", encoding="utf-8"
        )
        out(f"wrote {args.out}")
    if trace_path:
        out(f"trace: {trace_path}")
    return 0 if result.final_phase != "Failed" else 1


def cmd_batch(args: argparse.Namespace, settings: dict, out: Callable[[str], None]) -> int:
    stories = load_stories(args.dataset)
    config = _make_config(args, settings)
    out_dir = Path(args.out)
    trace_dir = out_dir / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)

    def one(story: EnablerStory) -> CaseResult:
        gateway = build_gateway(args, settings)
        result, _ = run_case(
            story,
            config,
            gateway,
            search_provider=build_search(args, settings),
            trace_path=str(trace_dir / f"{story.id}.jsonl"),
        )
        return result

    results: list[CaseResult] = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=args.pool) as pool:
        for result in pool.map(one, stories):
            results.append(result)
            out(f"case {result.case_id}: {result.final_phase}")
    write_jsonl(out_dir / "results.jsonl", (r.to_dict() for r in results))
    failed = sum(1 for r in results if r.final_phase == "Failed")
    out(f"{len(results)} cases, {failed} failed -> {out_dir / 'results.jsonl'}")
    return 0


def cmd_replay(args: argparse.Namespace, settings: dict, out: Callable[[str], None]) -> int:
    trace = read_trace(args.trace)
    result = replay(trace)
    digest = hashlib.sha256(dumps_canonical(result.to_dict()).encode("utf-8")).hexdigest()
    out(f"replayed {result.case_id}: {result.final_phase} (result sha256 {digest[:16]})")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(
            dumps_canonical(result.to_dict()) + "\n", encoding="utf-8"
        )
        out(f"wrote {args.out}")
    return 0


def _load_results(results_dir: str) -> list[CaseResult]:
    root = Path(results_dir)
    results: list[CaseResult] = []
    for path in sorted(root.glob("*.jsonl")):
        results.extend(CaseResult.from_dict(d) for d in read_jsonl(path))
    for path in sorted(root.glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        rows = data if isinstance(data, list) else [data]
        results.extend(CaseResult.from_dict(d) for d in rows)
    if not results:
        raise UsageError(f"no CaseResult files (*.jsonl / *.json) under {results_dir}")
    return results


def cmd_eval(args: argparse.Namespace, settings: dict, out: Callable[[str], None]) -> int:
    results = _load_results(args.results_dir)
    ratings = load_ratings(args.ratings)
    table = evaluate_run(results, ratings, embedder=build_embedder(settings))
    out_dir = Path(args.out or args.results_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    table.to_csv(str(csv_path))
    out(table.to_markdown())
    out(f"wrote {csv_path}")
    for fig in render_eval_figures(table, str(out_dir)):
        out(f"wrote {fig}")
    return 0


def cmd_dataset_build(args: argparse.Namespace, settings: dict, out: Callable[[str], None]) -> int:
    tasks = dataset_mod.load_raw_tasks(args.raw)
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    if not models:
        raise UsageError("--models must name at least one transcription model")
    gateway = build_gateway(args, settings)
    stories, provenance = dataset_mod.build_dataset(tasks, models, args.k, gateway)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset_path = out_dir / "dataset.jsonl"
    save_stories(str(dataset_path), stories)
    sidecar = out_dir / "provenance.json"
    sidecar.write_text(dumps_canonical(provenance) + "\n", encoding="utf-8")
    out(
        f"{len(tasks)} tasks -> {len(stories)} consensus stories "
        f"(k={args.k}, models={','.join(models)})"
    )
    out(f"wrote {dataset_path}")
    out(f"wrote {sidecar}")
    return 0


def cmd_degrade(args: argparse.Namespace, settings: dict, out: Callable[[str], None]) -> int:
    try:
        spec = DegradationSpec(
            ratio=args.ratio, mode=DegradeMode(args.degrade_mode), seed=args.seed
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    stories = load_stories(args.dataset)
    degraded = [degrade_input(s, spec) for s in stories]
    out_path = args.out or str(Path(args.dataset).with_suffix(".degraded.jsonl"))
    save_stories(out_path, degraded)
    out(
        f"degraded {len(degraded)} stories (ratio={spec.ratio}, mode={spec.mode.value}, "
        f"seed={spec.seed}) -> {out_path}"
    )
    return 0


def cmd_ablate(args: argparse.Namespace, settings: dict, out: Callable[[str], None]) -> int:
    config = ablation_config(args.variant, _make_config(args, settings))
    stories = load_stories(args.dataset)
    out_dir = Path(args.out)
    trace_dir = out_dir / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for story in stories:
        gateway = build_gateway(args, settings)
        result, _ = run_case(
            story,
            config,
            gateway,
            search_provider=build_search(args, settings),
            trace_path=str(trace_dir / f"{story.id}.jsonl"),
        )
        results.append(result)
        out(f"case {result.case_id}: {result.final_phase} ({len(result.accepted_uus)} UUs)")
    write_jsonl(out_dir / "results.jsonl", (r.to_dict() for r in results))
    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("case_id,variant,final_phase,accepted_uus,result_chars\n")
        for r in results:
            fh.write(
                f"{r.case_id},{args.variant},{r.final_phase},"
                f"{len(r.accepted_uus)},{len(r.result_text)}\n"
            )
    out(f"wrote {out_dir / 'results.jsonl'}")
    out(f"wrote {summary_path}")
    return 0


def cmd_serve(args: argparse.Namespace, settings: dict, out: Callable[[str], None]) -> int:
    from .service import create_app

    mock_dir = getattr(args, "mock", None)
    if not mock_dir and not settings["gateway_url"][0]:
        raise UsageError(
            "no provider configured: pass --mock <script-dir> or set a gateway URL"
        )

    def gateway_factory(config: RunConfig) -> Gateway:
        return build_gateway(args, settings)

    def search_factory(config: RunConfig) -> SearchProvider | None:
        return build_search(args, settings)

    app = create_app(
        gateway_factory,
        search_factory,
        trace_dir=settings["trace_dir"][0] or None,
    )
    out(f"serving on {args.host}:{args.port}")
    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# --- parser -----------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, mock: bool = True) -> None:
    p.add_argument("--config", help="JSON settings file (flags override it)")
    p.add_argument("--provider-id", dest="provider_id", help="provider id for live runs")
    p.add_argument("--gateway-url", dest="gateway_url", help="chat-completions base URL")
    p.add_argument("--gateway-key", dest="gateway_key", help="API key for the gateway")
    p.add_argument("--trace-dir", dest="trace_dir", help="directory for trace files")
    if mock:
        p.add_argument("--mock", help="directory of scripted mock responses (offline)")


def _add_search(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--search-fixtures",
        dest="search_fixtures",
        help="JSON fixture file serving search results (offline)",
    )
    p.add_argument("--search-url", dest="search_url", help="live search endpoint URL")
    p.add_argument("--no-search", dest="no_search", action="store_true", help="disable search entirely")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="u2f",
        description="Discover unknown unknowns in enabler stories via a staged multi-agent pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one story through the pipeline")
    p_run.add_argument("story_file", help="JSON file holding one enabler story")
    p_run.add_argument(
        "--mode",
        choices=[m.value for m in RunMode],
        default=RunMode.U2F.value,
        help="pipeline or baseline mode",
    )
    p_run.add_argument("--interactive", action="store_true", help="pause for directives at stage boundaries")
    p_run.add_argument("--out", help="write the case result JSON here")
    p_run.add_argument("--trace", help="write the trace JSONL here")
    _add_common(p_run)
    _add_search(p_run)
    p_run.set_defaults(handler=cmd_run)

    p_batch = sub.add_parser("batch", help="run every story in a dataset")
    p_batch.add_argument("dataset", help="JSONL dataset of enabler stories")
    p_batch.add_argument("--out", required=True, help="output directory for results and traces")
    p_batch.add_argument(
        "--mode",
        choices=[m.value for m in RunMode],
        default=RunMode.U2F.value,
        help="pipeline or baseline mode",
    )
    p_batch.add_argument("--pool", type=int, default=4, help="concurrent case workers")
    _add_common(p_batch)
    _add_search(p_batch)
    p_batch.set_defaults(handler=cmd_batch)

    p_replay = sub.add_parser("replay", help="re-execute a recorded trace offline")
    p_replay.add_argument("trace", help="trace JSONL file")
    p_replay.add_argument("--out", help="write the replayed case result JSON here")
    _add_common(p_replay, mock=False)
    p_replay.set_defaults(handler=cmd_replay)

    p_eval = sub.add_parser("eval", help="aggregate results and ratings into a report")
    p_eval.add_argument("results_dir", help="directory of case result files")
    p_eval.add_argument("--ratings", required=True, help="ratings file (.csv or .jsonl)")
    p_eval.add_argument("--out", help="report output directory (default: results dir)")
    p_eval.add_argument("--embed-url", dest="embed_url", help="remote embeddings endpoint")
    p_eval.add_argument("--embed-model", dest="embed_model", help="remote embedding model id")
    _add_common(p_eval, mock=False)
    p_eval.set_defaults(handler=cmd_eval)

    p_dataset = sub.add_parser("dataset", help="dataset construction workflows")
    dataset_sub = p_dataset.add_subparsers(dest="dataset_command", required=True)
    p_build = dataset_sub.add_parser("build", help="extract, transcribe, and rank raw tasks")
    p_build.add_argument("raw", help="JSONL file of raw tasks")
    p_build.add_argument("--k", type=int, required=True, help="per-model top-k cutoff")
    p_build.add_argument(
        "--models",
        default="mock",
        help="comma-separated transcription model ids (consensus requires 2+)",
    )
    p_build.add_argument("--out", default=".", help="output directory")
    _add_common(p_build)
    p_build.set_defaults(handler=cmd_dataset_build)

    p_degrade = sub.add_parser("degrade", help="corrupt a dataset for robustness runs")
    p_degrade.add_argument("dataset", help="JSONL dataset of enabler stories")
    p_degrade.add_argument("--ratio", type=float, required=True, help="corruption ratio: 0 or within [0.25, 0.60]")
    p_degrade.add_argument("--seed", type=int, default=0, help="permutation seed")
    p_degrade.add_argument(
        "--mode",
        dest="degrade_mode",
        choices=["remove", "obscure", "mixed"],
        default="mixed",
        help="corruption action",
    )
    p_degrade.add_argument("--out", help="output JSONL path (default: <dataset>.degraded.jsonl)")
    p_degrade.add_argument("--config", help="JSON settings file (flags override it)")
    p_degrade.set_defaults(handler=cmd_degrade)

    p_ablate = sub.add_parser("ablate", help="run a dataset under an ablation variant")
    p_ablate.add_argument("variant", choices=list(ABLATION_VARIANTS), help="ablation variant")
    p_ablate.add_argument("dataset", help="JSONL dataset of enabler stories")
    p_ablate.add_argument("--out", default="ablation", help="output directory")
    _add_common(p_ablate)
    _add_search(p_ablate)
    p_ablate.set_defaults(handler=cmd_ablate)

    p_serve = sub.add_parser("serve", help="serve the steering-console HTTP API")
    p_serve.add_argument("--port", type=int, default=8765, help="listen port")
    p_serve.add_argument("--host", default="127.0.0.1", help="listen address")
    _add_common(p_serve)
    _add_search(p_serve)
    p_serve.set_defaults(handler=cmd_serve)

    return parser


def main(argv: Sequence[str] | None = None, out: Callable[[str], None] = print) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        settings = resolve_settings(args)
        print_settings(settings, out)
        return args.handler(args, settings, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"usage error: malformed JSON in input file: {exc}", file=sys.stderr)
        return 2
    except U2FError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
