"""Candidate class generation: overlap-sampled batches of summaries go to the
model, which proposes named classes with classifier prompts; all batches merge
into one deduplicated candidate registry.

Batch plan: after a seeded shuffle, the first batch takes the first
batch_size ids; every later batch carries round(batch_size x carryover)
ids sampled (seeded) from the previous batch and fills up with fresh ids,
until the fresh pool is empty. Every id is fresh exactly once.

Counts: the model reports a Count per class, but the stored authoritative
count is the number of example ids it attributed; model numbers are kept
only as model_count.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .gateway import GatewayClient, ParseFailure, PromptTemplate, extract_json, render
from .gateway.jsonrepair import JsonExtractionError
from .kinds import PipelineKind

JSON_REASK_TEXT = "Please respond with valid JSON only."

REGISTRY_SCHEMA = "registry/v1"

NORMALIZATION_RULES = "trim, casefold, collapse internal whitespace"


class ClassgenError(Exception):
    pass


@dataclass
class Batch:
    index: int
    carried: list[str]
    fresh: list[str]

    @property
    def ids(self) -> list[str]:
        return self.carried + self.fresh


@dataclass
class BatchPlan:
    batch_size: int
    carryover_fraction: float
    rng_seed: int
    batches: list[Batch]


@dataclass
class CandidateClass:
    class_id: str
    name: str
    prompt: str
    count: int
    example_unit_ids: list[str]
    source_batches: list[int]
    status: str = "proposed"  # proposed | kept | discarded | merged | reserved
    merged_into: str | None = None
    model_count: int | None = None
    merged_from: list[str] = field(default_factory=list)
    final_rank: int | None = None

    def to_json(self) -> dict:
        return {
            "class_id": self.class_id,
            "name": self.name,
            "prompt": self.prompt,
            "count": self.count,
            "example_unit_ids": self.example_unit_ids,
            "source_batches": self.source_batches,
            "status": self.status,
            "merged_into": self.merged_into,
            "model_count": self.model_count,
            "merged_from": self.merged_from,
            "final_rank": self.final_rank,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CandidateClass":
        return cls(
            class_id=obj["class_id"],
            name=obj["name"],
            prompt=obj["prompt"],
            count=obj["count"],
            example_unit_ids=list(obj.get("example_unit_ids", [])),
            source_batches=list(obj.get("source_batches", [])),
            status=obj.get("status", "proposed"),
            merged_into=obj.get("merged_into"),
            model_count=obj.get("model_count"),
            merged_from=list(obj.get("merged_from", [])),
            final_rank=obj.get("final_rank"),
        )


def plan_batches(
    summary_ids: list[str], batch_size: int, carryover_fraction: float, seed: int
) -> BatchPlan:
    if not summary_ids:
        raise ClassgenError("no summaries to batch")
    if batch_size < 1:
        raise ClassgenError("batch_size must be at least 1")
    if not (0 <= carryover_fraction < 1):
        raise ClassgenError("carryover_fraction must be in [0, 1)")
    if len(set(summary_ids)) != len(summary_ids):
        raise ClassgenError("summary ids must be unique")

    rng = random.Random(seed)
    order = list(summary_ids)
    rng.shuffle(order)

    batches = [Batch(index=0, carried=[], fresh=order[:batch_size])]
    pos = len(batches[0].fresh)
    # capped below batch_size so every later batch takes at least one fresh id
    carry_n = min(round(batch_size * carryover_fraction), batch_size - 1)
    while pos < len(order):
        prev = batches[-1].ids
        k = min(carry_n, len(prev))
        carried = rng.sample(prev, k) if k else []
        fresh = order[pos : pos + batch_size - k]
        batches.append(Batch(index=len(batches), carried=carried, fresh=fresh))
        pos += len(fresh)
    return BatchPlan(
        batch_size=batch_size,
        carryover_fraction=carryover_fraction,
        rng_seed=seed,
        batches=batches,
    )


def parse_class_reply(obj: dict, kind: PipelineKind, cap: int, batch_index: int) -> tuple[list[CandidateClass], list[str]]:
    """Validate a generation reply against the mandated schema.

    The array lives under "frame-categories" for every pipeline kind (the
    topic prompt reuses the key); entries name the class under kind.class_key.
    Entries missing the name or prompt are dropped with a warning; entries
    beyond the per-call cap are dropped with a warning.
    """
    warnings: list[str] = []
    if "frame-categories" not in obj:
        raise ParseFailure('reply JSON lacks the "frame-categories" key')
    entries = obj["frame-categories"]
    if not isinstance(entries, list):
        raise ParseFailure('"frame-categories" is not a list')

    if len(entries) > cap:
        warnings.append(
            f"batch {batch_index}: reply proposed {len(entries)} classes, cap is {cap}; extras dropped"
        )
        entries = entries[:cap]

    classes: list[CandidateClass] = []
    for slot, entry in enumerate(entries):
        if not isinstance(entry, dict):
            warnings.append(f"batch {batch_index} entry {slot}: not an object; dropped")
            continue
        name = entry.get(kind.class_key)
        prompt = entry.get("prompt")
        if not isinstance(name, str) or not name.strip():
            warnings.append(f"batch {batch_index} entry {slot}: missing {kind.class_key!r}; dropped")
            continue
        if not isinstance(prompt, str) or not prompt.strip():
            warnings.append(f"batch {batch_index} entry {slot}: missing prompt; dropped")
            continue
        example_ids = _parse_example_ids(entry.get("Example IDs"))
        classes.append(
            CandidateClass(
                class_id=f"cls-{batch_index:03d}-{slot:02d}",
                name=name.strip(),
                prompt=prompt.strip(),
                count=len(example_ids),
                example_unit_ids=example_ids,
                source_batches=[batch_index],
                model_count=_parse_count(entry.get("Count")),
            )
        )
    if not classes:
        raise ParseFailure("no valid class entries in reply")
    return classes, warnings


def _parse_example_ids(value) -> list[str]:
    if value is None:
        return []
    if isinstance(value, list):
        parts = [str(v).strip() for v in value]
    else:
        parts = [p.strip() for p in str(value).split(",")]
    seen = []
    for p in parts:
        if p and p not in seen:
            seen.append(p)
    return seen


def _parse_count(value) -> int | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            return None
    return None


def format_batch_summaries(batch: Batch, summaries_by_id: dict[str, str]) -> str:
    return "\n".join(f"{uid}: {summaries_by_id[uid]}" for uid in batch.ids)


def generate_classes(
    client: GatewayClient,
    template: PromptTemplate,
    batch: Batch,
    summaries_by_id: dict[str, str],
    kind: PipelineKind,
    cap: int,
    max_attempts: int,
) -> tuple[list[CandidateClass], list[str]]:
    """Run one generation call; returns (classes, warnings).

    A reply that stays unusable after the re-ask cap fails this batch only;
    the caller proceeds with the remaining batches.
    """
    bindings = {kind.summaries_placeholder: format_batch_summaries(batch, summaries_by_id)}
    messages = render(template, bindings)

    collected_warnings: list[str] = []

    def parse(raw: str):
        try:
            obj = extract_json(raw)
        except JsonExtractionError as exc:
            raise ParseFailure(str(exc)) from exc
        classes, warnings = parse_class_reply(obj, kind, cap, batch.index)
        collected_warnings.extend(warnings)
        return classes

    result = client.ask_parsed("classgen", messages, parse, JSON_REASK_TEXT, max_attempts)
    if not result.ok:
        raise ClassgenError(f"batch {batch.index} failed after {result.attempts} attempts: {result.error}")
    return result.value, collected_warnings


def normalize_name(name: str, strip_prefixes: list[str] | None = None) -> str:
    text = " ".join(name.split()).casefold()
    for prefix in strip_prefixes or []:
        p = " ".join(prefix.split()).casefold()
        if p and text.startswith(p):
            text = text[len(p) :].lstrip()
            break
    return text


def merge_registry(
    candidates: list[CandidateClass],
    kind: PipelineKind,
    config_hash: str,
    strip_prefixes: list[str] | None = None,
) -> dict:
    """Fold all proposed classes into a registry, merging equal normalized names.

    Merged classes sum counts, union example ids and source batches, and keep
    the longest prompt variant. The topic pipeline's reserved MISCELLANEOUS
    class is appended (with a warning) if no batch proposed one, so the
    registry invariant holds regardless of model behavior.
    """
    warnings: list[str] = []
    merged: dict[str, CandidateClass] = {}
    order: list[str] = []
    for cand in candidates:
        key = normalize_name(cand.name, strip_prefixes)
        if key not in merged:
            merged[key] = CandidateClass(
                class_id=cand.class_id,
                name=cand.name,
                prompt=cand.prompt,
                count=cand.count,
                example_unit_ids=list(cand.example_unit_ids),
                source_batches=list(cand.source_batches),
                model_count=cand.model_count,
                merged_from=[],
            )
            order.append(key)
            continue
        target = merged[key]
        if not target.merged_from:
            target.merged_from = [target.class_id]
        target.merged_from.append(cand.class_id)
        target.count += cand.count
        for uid in cand.example_unit_ids:
            if uid not in target.example_unit_ids:
                target.example_unit_ids.append(uid)
        for b in cand.source_batches:
            if b not in target.source_batches:
                target.source_batches.append(b)
        if len(cand.prompt) > len(target.prompt):
            target.prompt = cand.prompt

    classes = [merged[k] for k in order]

    reserved = {"name": kind.none_class, "rated": kind.none_class_rated}
    if kind.none_class_rated:
        none_key = normalize_name(kind.none_class, strip_prefixes)
        if none_key not in merged:
            warnings.append(
                f"no batch proposed a {kind.none_class} class; appended one with a generic prompt"
            )
            classes.append(
                CandidateClass(
                    class_id="cls-reserved-00",
                    name=kind.none_class,
                    prompt=(
                        f"Decide if the text fits none of the other categories; "
                        f"if so it belongs to {kind.none_class}."
                    ),
                    count=0,
                    example_unit_ids=[],
                    source_batches=[],
                )
            )

    for c in classes:
        c.source_batches = sorted(c.source_batches)

    return {
        "schema": REGISTRY_SCHEMA,
        "config_hash": config_hash,
        "pipeline_kind": kind.name,
        "normalization_rules": NORMALIZATION_RULES
        + (f"; strip leading prefixes {strip_prefixes}" if strip_prefixes else ""),
        "reserved_none_class": reserved,
        "warnings": warnings,
        "classes": [c.to_json() for c in classes],
    }


def registry_to_text(registry: dict) -> str:
    return json.dumps(registry, ensure_ascii=False, indent=2) + "\n"
