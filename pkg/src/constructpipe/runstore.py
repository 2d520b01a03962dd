"""Append-only run store: an event log plus JSON-lines stage output files.

The event log (events.jsonl) records every request/response with timestamps
and hashes; it is the only file allowed to differ between two otherwise
identical runs. Stage output files are derived data: they carry a schema
header with the config hash, no timestamps, and stable field order, so a
rerun with the same config, seed, and fixtures reproduces them byte for byte.

A process killed mid-write leaves a partial trailing line; files are repaired
by truncating to the last complete line before appending resumes.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Any, Callable, Iterator


class RunStoreError(Exception):
    pass


class ConfigHashMismatch(RunStoreError):
    pass


def repair_trailing_partial_line(path: Path) -> None:
    """Truncate a text file to its last newline (crash-interrupted append)."""
    if not path.exists():
        return
    size = path.stat().st_size
    if size == 0:
        return
    with open(path, "rb+") as fh:
        fh.seek(-1, os.SEEK_END)
        if fh.read(1) == b"\n":
            return
        # walk back to the previous newline
        pos = size - 1
        while pos > 0:
            fh.seek(pos - 1)
            if fh.read(1) == b"\n":
                break
            pos -= 1
        fh.truncate(pos)


def _read_jsonl(path: Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                # partial trailing line from an interrupted run; ignore
                break
    return records


def dump_line(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False) + "\n"


class RunStore:
    """One per run directory; serializes appends from any number of workers."""

    def __init__(self, run_dir: str | Path):
        self.dir = Path(run_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.events_path = self.dir / "events.jsonl"
        repair_trailing_partial_line(self.events_path)
        self._lock = threading.Lock()
        self._fh = open(self.events_path, "a", encoding="utf-8")

    def append_event(self, record: dict) -> None:
        line = dump_line(record)
        with self._lock:
            self._fh.write(line)
            self._fh.flush()

    def iter_events(self) -> Iterator[dict]:
        if not self.events_path.exists():
            return iter(())
        return iter(_read_jsonl(self.events_path))

    def mock_counters(self) -> dict[int, int]:
        """Per-fixture-entry serve counts from prior events, for resume priming."""
        counters: dict[int, int] = {}
        for ev in self.iter_events():
            idx = ev.get("mock_entry")
            if idx is not None:
                counters[idx] = counters.get(idx, 0) + 1
        return counters

    def path(self, name: str) -> Path:
        return self.dir / name

    def ensure_run_manifest(self, pipeline_kind: str, config_hash: str) -> None:
        """Create run.json on first use; reject resume under a different config."""
        manifest_path = self.dir / "run.json"
        manifest = {"schema": "run/v1", "pipeline_kind": pipeline_kind, "config_hash": config_hash}
        if manifest_path.exists():
            existing = json.loads(manifest_path.read_text("utf-8"))
            if existing.get("config_hash") != config_hash:
                raise ConfigHashMismatch(
                    f"run store at {self.dir} was created with config hash "
                    f"{existing.get('config_hash')!r}, current config hashes to {config_hash!r}"
                )
            return
        manifest_path.write_text(json.dumps(manifest, ensure_ascii=False) + "\n", encoding="utf-8")

    def close(self) -> None:
        with self._lock:
            self._fh.close()


class StageFile:
    """A JSON-lines derived file: header line with schema + config hash, then
    one record per line. Opening an existing file validates the header and
    exposes prior records so a resumed stage can skip completed units.
    """

    def __init__(self, path: str | Path, schema: str, config_hash: str):
        self.path = Path(path)
        self.schema = schema
        self.config_hash = config_hash
        self._lock = threading.Lock()
        self._existing: list[dict] = []
        if self.path.exists() and self.path.stat().st_size > 0:
            repair_trailing_partial_line(self.path)
            records = _read_jsonl(self.path)
            if not records:
                raise RunStoreError(f"{self.path}: unreadable stage file")
            header = records[0]
            if header.get("schema") != schema:
                raise RunStoreError(
                    f"{self.path}: schema {header.get('schema')!r}, expected {schema!r}"
                )
            if header.get("config_hash") != config_hash:
                raise ConfigHashMismatch(
                    f"{self.path}: written under config hash {header.get('config_hash')!r}, "
                    f"current config hashes to {config_hash!r}"
                )
            self._existing = records[1:]
            self._fh = open(self.path, "a", encoding="utf-8")
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")
            self._fh.write(dump_line({"schema": schema, "config_hash": config_hash}))
            self._fh.flush()

    @property
    def existing_records(self) -> list[dict]:
        return list(self._existing)

    def done_keys(self, key_fn: Callable[[dict], Any]) -> set:
        return {key_fn(r) for r in self._existing}

    def append(self, record: dict) -> None:
        line = dump_line(record)
        with self._lock:
            self._fh.write(line)
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            self._fh.close()


def read_stage_file(path: str | Path, schema: str | None = None) -> tuple[dict, list[dict]]:
    """Read a completed stage file, returning (header, records)."""
    path = Path(path)
    if not path.exists():
        raise RunStoreError(f"missing stage file: {path}")
    records = _read_jsonl(path)
    if not records:
        raise RunStoreError(f"empty stage file: {path}")
    header, rows = records[0], records[1:]
    if schema is not None and header.get("schema") != schema:
        raise RunStoreError(f"{path}: schema {header.get('schema')!r}, expected {schema!r}")
    return header, rows
