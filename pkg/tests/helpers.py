"""Shared scaffolding for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent / "fixtures"

PLANTED_CLASSES = [
    "Economic Growth",
    "Privacy Risks",
    "Public Health",
    "Environmental Impact",
    "Education Access",
]


class ScriptedBackend:
    """Serves canned replies in order; an Exception instance is raised instead.

    Keeps every call so tests can assert on stages and rendered prompts.
    """

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls: list[tuple[str, list]] = []

    def complete(self, stage, messages, params):
        self.calls.append((stage, messages))
        if not self.replies:
            raise AssertionError(f"no scripted reply left for stage {stage!r}")
        item = self.replies.pop(0)
        if isinstance(item, Exception):
            raise item
        return item, {}


def write_planted_config(
    tmp_path: Path,
    run_dir: Path | None = None,
    name: str = "config.toml",
    extra: str = "",
) -> Path:
    run_dir = run_dir or tmp_path / "run"
    text = f"""\
[run]
pipeline_kind = "frames_sentence"
dir = "{run_dir}"
seed = 7

[corpus]
input = "{FIXTURES / 'planted' / 'corpus.csv'}"
format = "delimited_table"

[endpoint]
profile = "mock"
mock_fixtures = "{FIXTURES / 'planted' / 'mock_fixtures.json'}"
backoff_base = 0.01

[eval]
gold = "{FIXTURES / 'planted' / 'gold.csv'}"
{extra}"""
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def read_jsonl(path: Path) -> list[dict]:
    return [
        json.loads(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


def run_planted_pipeline(config_path: Path):
    """Drive every stage of the planted corpus end to end in-process.

    Returns the metrics dict. Review decisions come from the scripted
    decision file, applied the same way the headless CLI applies them.
    """
    from constructpipe.config import load_config
    from constructpipe.pipeline import Pipeline
    from constructpipe.review.server import ReviewService

    cfg = load_config(config_path)
    pipe = Pipeline(cfg)
    try:
        pipe.run_segment()
        pipe.run_detect()
        pipe.run_summarize()
        pipe.run_genclasses()
    finally:
        pipe.close()

    run_dir = Path(cfg.run_dir)
    service = ReviewService.open(
        run_dir / "registry.json",
        run_dir / "decisions.jsonl",
        run_dir / "final.json",
        run_dir / "units.jsonl",
    )
    service.apply_file(FIXTURES / "planted" / "decisions.jsonl")

    pipe = Pipeline(cfg)
    try:
        pipe.run_classify()
        metrics = pipe.run_eval()
    finally:
        pipe.close()
    return metrics


DERIVED_FILES = [
    "units.jsonl",
    "detections.jsonl",
    "summaries.jsonl",
    "batches.json",
    "registry.json",
    "decisions.jsonl",
    "final.json",
    "results.jsonl",
    "metrics.json",
    "metrics.txt",
]


def derived_bytes(run_dir: Path) -> dict[str, bytes]:
    return {name: (run_dir / name).read_bytes() for name in DERIVED_FILES if (run_dir / name).exists()}
