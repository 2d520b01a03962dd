"""Command-line entry point.

One subcommand per pipeline stage, all driven by a TOML config file. Stages
write into the configured run directory and can be re-invoked to resume.

Exit codes: 0 on success, 2 for configuration errors (all collected errors
go to stderr as JSON), 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .classgen import ClassgenError
from .config import ConfigError, load_config
from .corpus import CorpusError, ingest
from .evalmetrics import MetricsError, metrics_table
from .gateway.backends import BackendError
from .gateway.templates import TemplateError
from .pipeline import Pipeline, PipelineError, run_replay
from .review.registry import ReviewError
from .review.server import ReviewService, serve
from .runstore import RunStoreError

KNOWN_ERRORS = (
    PipelineError,
    RunStoreError,
    MetricsError,
    ReviewError,
    BackendError,
    CorpusError,
    TemplateError,
    ClassgenError,
    OSError,
    json.JSONDecodeError,
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"errors": exc.errors}), file=sys.stderr)
        return 2
    except KNOWN_ERRORS as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="constructpipe",
        description="Staged text classification with model-generated class sets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str, config_required: bool = True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=config_required, help="path to the TOML config")
        p.set_defaults(func=func)
        return p

    add("ingest", cmd_ingest, "parse the corpus and report document counts")
    add("segment", stage_command("segment"), "split documents into units")
    add("detect", stage_command("detect"), "run the two-step presence detection")
    add("summarize", stage_command("summarize"), "write short summaries for detected units")
    add("genclasses", stage_command("genclasses"), "generate and merge candidate classes")
    add("classify", stage_command("classify"), "rate units against the final classes")
    add("eval", cmd_eval, "score results against human codings")

    p = add("review-serve", cmd_review_serve, "serve the review API", config_required=False)
    p.add_argument("--registry", help="serve this registry file instead of the run directory's")
    p.add_argument("--decisions", help="decision log path (defaults beside the registry)")
    p.add_argument("--final", help="final class set path (defaults beside the registry)")
    p.add_argument("--units", help="units file for resolving example texts")
    p.add_argument("--port", type=int, default=0, help="port to bind; 0 picks a free one")
    p.add_argument("--ui-dir", help="directory of static UI files to serve")
    p.add_argument("--apply", help="apply a scripted decision file before listening")
    p.add_argument("--no-listen", action="store_true", help="exit after --apply instead of serving")

    p = add("replay", cmd_replay, "re-execute a run from its event log")
    p.add_argument("--from", dest="from_dir", required=True, help="source run directory")
    p.add_argument("--to", dest="to_dir", help="destination run directory (defaults to [run] dir)")

    return parser


def stage_command(stage: str):
    def run(args) -> int:
        cfg = load_config(args.config)
        pipe = Pipeline(cfg)
        try:
            stats = getattr(pipe, f"run_{stage}")()
        finally:
            pipe.close()
        print(json.dumps(stats.as_dict()))
        return 0

    return run


def cmd_ingest(args) -> int:
    cfg = load_config(args.config)
    docs = ingest(cfg.corpus_input, cfg.corpus_format)
    print(json.dumps({"documents": len(docs)}))
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    pipe = Pipeline(cfg)
    try:
        metrics = pipe.run_eval()
    finally:
        pipe.close()
    table = {k: metrics[k] for k in ("units", "covered", "accuracy_strict", "accuracy_lenient")}
    table["alpha"] = metrics.get("alpha")
    print(json.dumps(table))
    print(metrics_table(metrics), end="")
    return 0


def cmd_review_serve(args) -> int:
    if args.registry:
        registry_path = Path(args.registry)
        decisions = Path(args.decisions) if args.decisions else registry_path.parent / "decisions.jsonl"
        final = Path(args.final) if args.final else registry_path.parent / "final.json"
        units = Path(args.units) if args.units else None
    elif args.config:
        cfg = load_config(args.config)
        run_dir = Path(cfg.run_dir)
        registry_path = run_dir / "registry.json"
        decisions = Path(args.decisions) if args.decisions else run_dir / "decisions.jsonl"
        final = Path(args.final) if args.final else run_dir / "final.json"
        units = Path(args.units) if args.units else run_dir / "units.jsonl"
    else:
        raise PipelineError("review-serve needs --config or --registry")
    if not registry_path.exists():
        raise PipelineError(f"{registry_path} missing; run genclasses first")
    if units is not None and not units.exists():
        units = None
    service = ReviewService.open(registry_path, decisions, final, units)
    if args.apply:
        applied = service.apply_file(args.apply)
        print(json.dumps({"applied": applied, "finalized": service.state.finalized}), flush=True)
    if args.no_listen:
        return 0
    serve(service, args.port, args.ui_dir)
    return 0


def cmd_replay(args) -> int:
    cfg = load_config(args.config)
    to_dir = Path(args.to_dir) if args.to_dir else Path(cfg.run_dir)
    if to_dir.resolve() == Path(args.from_dir).resolve():
        raise PipelineError("replay destination equals the source run; pass --to")
    cfg = dataclasses.replace(cfg, run_dir=to_dir)
    stats = run_replay(cfg, args.from_dir)
    print(json.dumps({"stages": stats}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
