"""Stage orchestration over a run directory.

Every stage writes a JSON-lines file whose header carries the schema name
and the run's config hash; re-running a stage appends only what is missing,
and a changed configuration is refused rather than silently mixed into old
output. Derived files carry no timestamps, so two runs of the same
configuration against a deterministic backend are byte-identical.

Replay re-executes a finished run from its event log: responses are served
from the recorded exchanges instead of a live endpoint, and the source run's
config hash is stamped verbatim so the derived files can be compared
byte-for-byte.
"""

from __future__ import annotations

import json
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .classgen import ClassgenError, generate_classes, merge_registry, plan_batches
from .classify import (
    ClassifyResult,
    FitRating,
    final_set_hash,
    fit_profile,
    load_final_classes,
    rate_unit,
    run_means,
    select_labels,
)
from .config import RunConfig, compute_config_hash
from .corpus import CorpusUnit, default_abbreviations, ingest, load_abbreviations, segment, token_guard
from .detect import detect_unit
from .evalmetrics import (
    MetricsError,
    agreement_filter,
    load_codings_csv,
    metrics_table,
    score,
)
from .gateway import (
    CompletionParams,
    GatewayClient,
    HttpBackend,
    MockBackend,
    ReplayBackend,
)
from .gateway.templates import STAGES, load_stage_templates
from .review.registry import final_payload, fold
from .runstore import ConfigHashMismatch, RunStore, StageFile, read_stage_file
from .summarize import LONG_KIND, SHORT_KIND, summarize_unit

UNITS_SCHEMA = "units/v1"
DETECTIONS_SCHEMA = "detections/v1"
SUMMARIES_SCHEMA = "summaries/v1"
BATCHES_SCHEMA = "batches/v1"
RESULTS_SCHEMA = "results/v1"
METRICS_SCHEMA = "metrics/v1"


class PipelineError(Exception):
    pass


def write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


@dataclass
class StageStats:
    stage: str
    total: int = 0
    done_before: int = 0
    processed: int = 0
    failed: int = 0
    notes: list[str] | None = None

    def as_dict(self) -> dict:
        obj = {
            "stage": self.stage,
            "total": self.total,
            "done_before": self.done_before,
            "processed": self.processed,
            "failed": self.failed,
        }
        if self.notes:
            obj["notes"] = self.notes
        return obj


class Pipeline:
    def __init__(
        self,
        cfg: RunConfig,
        config_hash_override: str | None = None,
        backend=None,
    ):
        self.cfg = cfg
        self.kind = cfg.kind
        self.templates = load_stage_templates(cfg.pipeline_kind, cfg.templates_dir)
        hashes = {s: t.content_hash for s, t in self.templates.items()}
        self.config_hash = config_hash_override or compute_config_hash(cfg, hashes)
        self.store = RunStore(cfg.run_dir)
        self.store.ensure_run_manifest(cfg.pipeline_kind, self.config_hash)
        self._backend = backend
        self._client: GatewayClient | None = None

    def close(self) -> None:
        self.store.close()

    @property
    def client(self) -> GatewayClient:
        if self._client is None:
            backend = self._backend if self._backend is not None else self._build_backend()
            params = {
                stage: CompletionParams(
                    temperature=self.cfg.temperature_for(stage),
                    max_output_tokens=self.cfg.max_output_tokens,
                    seed=self.cfg.seed,
                    endpoint_profile=self.cfg.profile,
                )
                for stage in STAGES
            }
            self._client = GatewayClient(
                backend,
                self.store,
                params,
                transport_attempts=self.cfg.transport_attempts,
                backoff_base=self.cfg.backoff_base,
            )
        return self._client

    def _build_backend(self):
        cfg = self.cfg
        if cfg.profile == "mock":
            backend = MockBackend.from_file(cfg.mock_fixtures)
            backend.prime(self.store.mock_counters())
            return backend
        if cfg.profile == "http":
            return HttpBackend(cfg.base_url, cfg.model, cfg.api_key(), cfg.timeout)
        if cfg.profile == "replay":
            if not cfg.replay_from:
                raise PipelineError("replay profile needs replay_from")
            return ReplayBackend(load_events(cfg.replay_from))
        raise PipelineError(f"unknown endpoint profile {cfg.profile!r}")

    # ---- segment ----------------------------------------------------------

    def run_segment(self) -> StageStats:
        cfg = self.cfg
        abbreviations = (
            load_abbreviations(cfg.abbreviations)
            if cfg.abbreviations
            else default_abbreviations()
        )
        docs = ingest(cfg.corpus_input, cfg.corpus_format)
        stats = StageStats("segment")
        sf = StageFile(self.store.path("units.jsonl"), UNITS_SCHEMA, self.config_hash)
        try:
            done = sf.done_keys(lambda r: r["unit_id"])
            stats.done_before = len(done)
            for doc in docs:
                for unit in segment(doc, self.kind.granularity, abbreviations):
                    stats.total += 1
                    if unit.unit_id in done:
                        continue
                    guard = token_guard(unit, cfg.token_limit, cfg.chars_per_token)
                    if guard != "ok":
                        stats.failed += 1
                    sf.append(
                        {
                            "unit_id": unit.unit_id,
                            "doc_id": unit.doc_id,
                            "ordinal": unit.ordinal,
                            "granularity": unit.granularity,
                            "title": unit.title,
                            "text": unit.text,
                            "guard": guard,
                        }
                    )
                    stats.processed += 1
        finally:
            sf.close()
        return stats

    def _load_units(self) -> list[dict]:
        path = self.store.path("units.jsonl")
        if not path.exists():
            raise PipelineError("units.jsonl missing; run segment first")
        header, rows = read_stage_file(path, UNITS_SCHEMA)
        if header.get("config_hash") != self.config_hash:
            raise ConfigHashMismatch(
                f"units.jsonl written under config hash {header.get('config_hash')!r}"
            )
        return rows

    def _ok_units(self) -> list[CorpusUnit]:
        return [row_to_unit(r) for r in self._load_units() if r["guard"] == "ok"]

    # ---- detect -----------------------------------------------------------

    def run_detect(self) -> StageStats:
        if not self.kind.has_detect:
            raise PipelineError(f"pipeline kind {self.kind.name!r} has no detection stage")
        units = self._ok_units()
        stats = StageStats("detect", total=len(units))
        sf = StageFile(self.store.path("detections.jsonl"), DETECTIONS_SCHEMA, self.config_hash)
        try:
            done = sf.done_keys(lambda r: r["unit_id"])
            stats.done_before = len(done)
            pending = [u for u in units if u.unit_id not in done]
            t_one, t_two = self.templates["detect_1"], self.templates["detect_2"]

            def work(unit: CorpusUnit):
                return detect_unit(self.client, t_one, t_two, unit, self.cfg.max_attempts)

            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                for record in pool.map(work, pending):
                    sf.append(record.to_json())
                    stats.processed += 1
                    if record.status == "failed":
                        stats.failed += 1
        finally:
            sf.close()
        return stats

    def _detection_status(self) -> dict[str, str]:
        path = self.store.path("detections.jsonl")
        if not path.exists():
            raise PipelineError("detections.jsonl missing; run detect first")
        header, rows = read_stage_file(path, DETECTIONS_SCHEMA)
        if header.get("config_hash") != self.config_hash:
            raise ConfigHashMismatch("detections.jsonl written under a different config hash")
        return {r["unit_id"]: r["status"] for r in rows}

    # ---- summarize --------------------------------------------------------

    def _summary_candidates(self) -> list[CorpusUnit]:
        """Units owed a short summary: detection hits for detecting kinds,
        every guarded-ok unit otherwise."""
        units = self._ok_units()
        if not self.kind.has_detect:
            return units
        status = self._detection_status()
        return [u for u in units if status.get(u.unit_id) == "yes"]

    def run_summarize(self) -> StageStats:
        units = self._summary_candidates()
        stats = StageStats("summarize", total=len(units))
        template = self.templates["summarize"]
        sf = StageFile(self.store.path("summaries.jsonl"), SUMMARIES_SCHEMA, self.config_hash)
        try:
            done = sf.done_keys(lambda r: (r["unit_id"], r["kind"]))
            stats.done_before = sum(1 for k in done if k[1] == SHORT_KIND)
            pending = [u for u in units if (u.unit_id, SHORT_KIND) not in done]

            def work(unit: CorpusUnit):
                return summarize_unit(
                    self.client,
                    template,
                    unit,
                    SHORT_KIND,
                    self.kind.short_summary_spec,
                    "summarize",
                    self.cfg.max_attempts,
                )

            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                for record in pool.map(work, pending):
                    sf.append(record.to_json())
                    stats.processed += 1
                    if record.failed:
                        stats.failed += 1
        finally:
            sf.close()
        return stats

    def _short_summaries(self) -> tuple[list[str], dict[str, str]]:
        path = self.store.path("summaries.jsonl")
        if not path.exists():
            raise PipelineError("summaries.jsonl missing; run summarize first")
        header, rows = read_stage_file(path, SUMMARIES_SCHEMA)
        if header.get("config_hash") != self.config_hash:
            raise ConfigHashMismatch("summaries.jsonl written under a different config hash")
        ids: list[str] = []
        texts: dict[str, str] = {}
        for row in rows:
            if row["kind"] == SHORT_KIND and not row.get("failed") and row["unit_id"] not in texts:
                ids.append(row["unit_id"])
                texts[row["unit_id"]] = row["text"]
        return ids, texts

    # ---- class generation -------------------------------------------------

    def run_genclasses(self) -> StageStats:
        stats = StageStats("genclasses")
        registry_path = self.store.path("registry.json")
        if registry_path.exists():
            registry = json.loads(registry_path.read_text(encoding="utf-8"))
            if registry.get("config_hash") != self.config_hash:
                raise ConfigHashMismatch("registry.json written under a different config hash")
            stats.done_before = len(registry["classes"])
            stats.notes = ["registry already generated; skipped"]
            return stats

        ids, texts = self._short_summaries()
        plan = plan_batches(ids, self.cfg.batch_size, self.cfg.carryover_fraction, self.cfg.seed)
        write_json(
            self.store.path("batches.json"),
            {
                "schema": BATCHES_SCHEMA,
                "config_hash": self.config_hash,
                "batch_size": plan.batch_size,
                "carryover_fraction": plan.carryover_fraction,
                "rng_seed": plan.rng_seed,
                "batches": [
                    {"index": b.index, "carried": b.carried, "fresh": b.fresh}
                    for b in plan.batches
                ],
            },
        )
        template = self.templates["classgen"]
        candidates: list = []
        warnings: list[str] = []
        failed_batches: list[int] = []
        for batch in plan.batches:
            stats.total += 1
            try:
                classes, batch_warnings = generate_classes(
                    self.client,
                    template,
                    batch,
                    texts,
                    self.kind,
                    self.cfg.classes_per_call_cap,
                    self.cfg.max_attempts,
                )
            except ClassgenError as exc:
                failed_batches.append(batch.index)
                warnings.append(str(exc))
                stats.failed += 1
                continue
            candidates.extend(classes)
            warnings.extend(batch_warnings)
            stats.processed += 1
        if not candidates:
            raise PipelineError("every class-generation batch failed")
        registry = merge_registry(
            candidates, self.kind, self.config_hash, self.cfg.strip_name_prefixes
        )
        registry["warnings"] = warnings + registry["warnings"]
        registry["failed_batches"] = failed_batches
        write_json(registry_path, registry)
        stats.notes = [f"{len(registry['classes'])} classes in registry"]
        return stats

    # ---- classify ---------------------------------------------------------

    def run_classify(self) -> StageStats:
        final_path = self.store.path("final.json")
        if not final_path.exists():
            raise PipelineError("final.json missing; finalize the review first")
        final = json.loads(final_path.read_text(encoding="utf-8"))
        if final.get("config_hash") != self.config_hash:
            raise ConfigHashMismatch("final.json written under a different config hash")
        classes = load_final_classes(final)
        none_class = final["none_class"]
        set_hash = final_set_hash(final)
        allowed = {c.name for c in classes} | {none_class}

        unit_rows = self._load_units()
        detection = self._detection_status() if self.kind.has_detect else {}
        stats = StageStats("classify", total=len(unit_rows))

        results_sf = StageFile(self.store.path("results.jsonl"), RESULTS_SCHEMA, self.config_hash)
        summaries_sf = StageFile(
            self.store.path("summaries.jsonl"), SUMMARIES_SCHEMA, self.config_hash
        )
        try:
            done = results_sf.done_keys(lambda r: r["unit_id"])
            stats.done_before = len(done)
            prior_ratings = [
                [
                    FitRating(
                        class_name=r["class"],
                        fit=r["fit"],
                        rationale=r.get("rationale", ""),
                        failed=bool(r.get("failed")),
                    )
                    for r in row.get("ratings", [])
                ]
                for row in results_sf.existing_records
            ]
            long_texts = {
                row["unit_id"]: row["text"]
                for row in summaries_sf.existing_records
                if row["kind"] == LONG_KIND and not row.get("failed")
            }

            pending: list[tuple[CorpusUnit, str]] = []
            for row in unit_rows:
                if row["unit_id"] in done:
                    continue
                unit = row_to_unit(row)
                if row["guard"] != "ok":
                    pending.append((unit, "guard"))
                elif self.kind.has_detect and detection.get(unit.unit_id) != "yes":
                    status = detection.get(unit.unit_id)
                    pending.append((unit, "detect_no" if status == "no" else "detect_failed"))
                else:
                    pending.append((unit, "rate"))

            profiles: dict[str, object] = {}
            fresh_ratings: list[list[FitRating]] = []

            def rate(unit: CorpusUnit):
                long_text = long_texts.get(unit.unit_id)
                if long_text is None:
                    record = summarize_unit(
                        self.client,
                        self.templates["classify_summarize"],
                        unit,
                        LONG_KIND,
                        self.kind.long_summary_spec,
                        "classify_summarize",
                        self.cfg.max_attempts,
                    )
                    summaries_sf.append(record.to_json())
                    if record.failed:
                        return unit.unit_id, None, record.error
                    long_text = record.text
                ratings = rate_unit(
                    self.client,
                    self.templates["classify_fit"],
                    self.kind,
                    unit,
                    long_text,
                    classes,
                    self.cfg.max_attempts,
                )
                return unit.unit_id, ratings, None

            to_rate = [u for u, how in pending if how == "rate"]
            errors: dict[str, str] = {}
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                for unit_id, ratings, error in pool.map(rate, to_rate):
                    if ratings is None:
                        errors[unit_id] = f"long summary failed: {error}"
                        continue
                    fresh_ratings.append(ratings)
                    profiles[unit_id] = fit_profile(ratings)

            class_means = run_means(prior_ratings + fresh_ratings)

            for unit, how in pending:
                if how == "guard":
                    result = ClassifyResult(
                        unit_id=unit.unit_id, labels=[], source="failed",
                        error="token guard: over_limit",
                    )
                elif how == "detect_no":
                    result = ClassifyResult(
                        unit_id=unit.unit_id, labels=[none_class], source="detection_no"
                    )
                elif how == "detect_failed":
                    result = ClassifyResult(
                        unit_id=unit.unit_id, labels=[], source="failed",
                        error="detection failed or missing; unit not classified",
                    )
                elif unit.unit_id in errors:
                    result = ClassifyResult(
                        unit_id=unit.unit_id, labels=[], source="failed",
                        error=errors[unit.unit_id],
                    )
                else:
                    result = select_labels(
                        self.client,
                        self.templates["classify_final"],
                        self.kind,
                        unit,
                        profiles[unit.unit_id],
                        class_means,
                        self.cfg.tie_cap,
                        self.cfg.max_attempts,
                    )
                if not set(result.labels) <= allowed:
                    raise PipelineError(
                        f"labels {result.labels!r} for {unit.unit_id} fall outside the final set"
                    )
                results_sf.append(result.to_json(set_hash))
                stats.processed += 1
                if result.source == "failed":
                    stats.failed += 1
        finally:
            summaries_sf.close()
            results_sf.close()
        return stats

    # ---- eval -------------------------------------------------------------

    def run_eval(self) -> dict:
        cfg = self.cfg
        results_path = self.store.path("results.jsonl")
        if not results_path.exists():
            raise PipelineError("results.jsonl missing; run classify first")
        header, rows = read_stage_file(results_path, RESULTS_SCHEMA)
        if header.get("config_hash") != self.config_hash:
            raise ConfigHashMismatch("results.jsonl written under a different config hash")
        predictions = {r["unit_id"]: r["labels"] for r in rows if r["labels"]}

        agreement_stats = None
        if cfg.eval_coder_a and cfg.eval_coder_b:
            coder_a = single_coder(load_codings_csv(cfg.eval_coder_a), cfg.eval_coder_a)
            coder_b = single_coder(load_codings_csv(cfg.eval_coder_b), cfg.eval_coder_b)
            gold, agreement_stats = agreement_filter(coder_a, coder_b, cfg.eval_agreement)
        elif cfg.eval_gold:
            gold = single_coder(load_codings_csv(cfg.eval_gold), cfg.eval_gold)
        else:
            raise PipelineError("no gold codings configured; set [eval] gold or coder_a/coder_b")
        if not gold:
            raise PipelineError("agreement filtering left no gold units")

        result = score(predictions, gold)
        metrics = {"schema": METRICS_SCHEMA, "config_hash": self.config_hash}
        if agreement_stats:
            metrics["agreement"] = agreement_stats
        metrics.update(result)
        write_json(self.store.path("metrics.json"), metrics)
        self.store.path("metrics.txt").write_text(metrics_table(result), encoding="utf-8")
        return metrics


def row_to_unit(row: dict) -> CorpusUnit:
    return CorpusUnit(
        unit_id=row["unit_id"],
        doc_id=row["doc_id"],
        ordinal=row["ordinal"],
        granularity=row["granularity"],
        text=row["text"],
        title=row["title"],
    )


def single_coder(coders: dict[str, dict[str, list[str]]], path) -> dict[str, list[str]]:
    if len(coders) != 1:
        raise MetricsError(f"{path}: expected exactly one coder, found {sorted(coders)}")
    return next(iter(coders.values()))


def load_events(run_dir: str | Path) -> list[dict]:
    path = Path(run_dir) / "events.jsonl"
    if not path.exists():
        raise PipelineError(f"{path} missing; nothing to replay")
    events = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError:
                break
    return events


def run_replay(cfg: RunConfig, from_dir: str | Path) -> list[dict]:
    """Re-execute a finished run from its event log into cfg.run_dir.

    The source run's config hash is copied, not recomputed, because the
    endpoint profile necessarily differs; everything else about the
    configuration must match or the re-rendered prompts will miss the
    recorded exchanges and fail loudly.
    """
    src = Path(from_dir)
    manifest_path = src / "run.json"
    if not manifest_path.exists():
        raise PipelineError(f"{manifest_path} missing; not a run directory")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("pipeline_kind") != cfg.pipeline_kind:
        raise PipelineError(
            f"source run is {manifest.get('pipeline_kind')!r}, config says {cfg.pipeline_kind!r}"
        )
    backend = ReplayBackend(load_events(src))
    pipe = Pipeline(cfg, config_hash_override=manifest["config_hash"], backend=backend)
    stats: list[dict] = []
    try:
        stats.append(pipe.run_segment().as_dict())
        if pipe.kind.has_detect:
            stats.append(pipe.run_detect().as_dict())
        stats.append(pipe.run_summarize().as_dict())
        stats.append(pipe.run_genclasses().as_dict())

        src_decisions = src / "decisions.jsonl"
        if src_decisions.exists():
            dst_decisions = pipe.store.path("decisions.jsonl")
            shutil.copyfile(src_decisions, dst_decisions)
            registry = json.loads(
                pipe.store.path("registry.json").read_text(encoding="utf-8")
            )
            decisions = [
                json.loads(line)
                for line in dst_decisions.read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
            state = fold(registry, decisions)
            if state.finalized:
                write_json(pipe.store.path("final.json"), final_payload(state))
                stats.append(pipe.run_classify().as_dict())
                if cfg.eval_gold or (cfg.eval_coder_a and cfg.eval_coder_b):
                    pipe.run_eval()
                    stats.append({"stage": "eval"})
    finally:
        pipe.close()
    return stats
