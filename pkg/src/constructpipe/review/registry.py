"""Decision-log fold over a candidate-class registry.

Decisions are dicts:
    {"decision_id", "actor", "timestamp", "action", "subject"?, "target"?, "value"?}

Rules enforced here (the HTTP layer rejects what this module raises on):
  - no decision of any kind is accepted after finalize
  - keep/discard/rename/edit_prompt need a live (non-merged) subject
  - merge needs live subject and target; the target absorbs counts and ids
  - rename must not collide with another live class under normalization
  - finalize needs at least one kept class

Merging conserves the total count over live classes: the target gains
exactly what the subject held.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from ..classgen import CandidateClass, normalize_name
from ..kinds import PipelineKind, get_kind

FINAL_SCHEMA = "final/v1"

ACTIONS = ("keep", "discard", "merge", "rename", "edit_prompt", "finalize")

RESERVED_CLASS_ID = "cls-reserved-00"


class ReviewError(Exception):
    pass


@dataclass
class ReviewState:
    kind: PipelineKind
    registry: dict
    classes: dict[str, CandidateClass]
    order: list[str]
    decisions: list[dict] = field(default_factory=list)
    finalize_decision: dict | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def finalized(self) -> bool:
        return self.finalize_decision is not None

    def live_classes(self) -> list[CandidateClass]:
        return [self.classes[cid] for cid in self.order if self.classes[cid].status != "merged"]

    def kept_classes(self) -> list[CandidateClass]:
        return [c for c in self.live_classes() if c.status == "kept"]

    def get(self, class_id: str) -> CandidateClass:
        try:
            return self.classes[class_id]
        except KeyError:
            raise ReviewError(f"unknown class_id {class_id!r}") from None


def load_state(registry: dict) -> ReviewState:
    kind = get_kind(registry["pipeline_kind"])
    classes: dict[str, CandidateClass] = {}
    order: list[str] = []
    for obj in registry["classes"]:
        cand = CandidateClass.from_json(obj)
        if cand.class_id in classes:
            raise ReviewError(f"duplicate class_id {cand.class_id!r} in registry")
        classes[cand.class_id] = cand
        order.append(cand.class_id)
    if not classes:
        raise ReviewError("registry holds no classes")
    return ReviewState(kind=kind, registry=registry, classes=classes, order=order)


def _require_live(state: ReviewState, class_id: str, role: str) -> CandidateClass:
    cand = state.get(class_id)
    if cand.status == "merged":
        raise ReviewError(f"{role} {class_id!r} was merged into {cand.merged_into!r}")
    return cand


def apply_decision(state: ReviewState, decision: dict) -> None:
    action = decision.get("action")
    if action not in ACTIONS:
        raise ReviewError(f"unknown action {action!r}")
    if state.finalized:
        raise ReviewError("review is finalized; no further decisions are accepted")
    did = decision.get("decision_id")
    if not did or any(d.get("decision_id") == did for d in state.decisions):
        raise ReviewError(f"missing or duplicate decision_id {did!r}")

    if action == "finalize":
        kept = state.kept_classes()
        if not kept:
            raise ReviewError("cannot finalize with no kept classes")
        state.decisions.append(decision)
        state.finalize_decision = decision
        _assign_final_ranks(state)
        return

    subject = _require_live(state, _required(decision, "subject"), "subject")

    if action == "keep":
        subject.status = "kept"
    elif action == "discard":
        subject.status = "discarded"
    elif action == "merge":
        target_id = _required(decision, "target")
        if target_id == subject.class_id:
            raise ReviewError("cannot merge a class into itself")
        target = _require_live(state, target_id, "target")
        if not target.merged_from:
            target.merged_from = [target.class_id]
        target.merged_from.append(subject.class_id)
        target.count += subject.count
        for uid in subject.example_unit_ids:
            if uid not in target.example_unit_ids:
                target.example_unit_ids.append(uid)
        for b in subject.source_batches:
            if b not in target.source_batches:
                target.source_batches.append(b)
        target.source_batches.sort()
        if len(subject.prompt) > len(target.prompt):
            target.prompt = subject.prompt
        subject.status = "merged"
        subject.merged_into = target.class_id
    elif action == "rename":
        value = _required(decision, "value")
        if not value.strip():
            raise ReviewError("rename needs a non-empty name")
        new_key = normalize_name(value)
        for other in state.live_classes():
            if other.class_id != subject.class_id and normalize_name(other.name) == new_key:
                raise ReviewError(
                    f"rename collides with live class {other.class_id!r} ({other.name!r})"
                )
        subject.name = value.strip()
    elif action == "edit_prompt":
        value = _required(decision, "value")
        if not value.strip():
            raise ReviewError("edit_prompt needs a non-empty prompt")
        subject.prompt = value.strip()

    state.decisions.append(decision)


def _required(decision: dict, key: str) -> str:
    value = decision.get(key)
    if not isinstance(value, str) or not value:
        raise ReviewError(f"decision {decision.get('action')!r} needs {key!r}")
    return value


def _assign_final_ranks(state: ReviewState) -> None:
    kept = state.kept_classes()
    if state.kind.none_class_rated:
        none_key = normalize_name(state.kind.none_class)
        if not any(normalize_name(c.name) == none_key for c in kept):
            reserved = next(
                (c for c in state.live_classes() if normalize_name(c.name) == none_key),
                None,
            )
            if reserved is None:
                reserved = CandidateClass(
                    class_id=RESERVED_CLASS_ID,
                    name=state.kind.none_class,
                    prompt=(
                        "Decide if the text fits none of the other categories; "
                        f"if so it belongs to {state.kind.none_class}."
                    ),
                    count=0,
                    example_unit_ids=[],
                    source_batches=[],
                )
                state.classes[reserved.class_id] = reserved
                state.order.append(reserved.class_id)
            reserved.status = "kept"
            kept.append(reserved)
            state.warnings.append(
                f"{state.kind.none_class} was not kept by the reviewer; added automatically"
            )
    ranked = sorted(kept, key=lambda c: (-c.count, c.name))
    for rank, cand in enumerate(ranked, start=1):
        cand.final_rank = rank


def fold(registry: dict, decisions: list[dict]) -> ReviewState:
    state = load_state(registry)
    for decision in decisions:
        apply_decision(state, decision)
    return state


def registry_hash(registry: dict, decisions: list[dict]) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(registry, ensure_ascii=False, sort_keys=True).encode("utf-8"))
    for decision in decisions:
        h.update(json.dumps(decision, ensure_ascii=False, sort_keys=True).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def final_payload(state: ReviewState) -> dict:
    if not state.finalized:
        raise ReviewError("review is not finalized")
    ranked = sorted(
        (c for c in state.classes.values() if c.final_rank is not None),
        key=lambda c: c.final_rank,
    )
    names = {c.name for c in ranked}
    return {
        "schema": FINAL_SCHEMA,
        "config_hash": state.registry.get("config_hash", ""),
        "pipeline_kind": state.kind.name,
        "classes": [
            {
                "name": c.name,
                "prompt": c.prompt,
                "final_rank": c.final_rank,
                "source_class_id": c.class_id,
                "count": c.count,
            }
            for c in ranked
        ],
        "none_class": state.kind.none_class,
        "includes_none_class": state.kind.none_class in names,
        "finalized_at": state.finalize_decision.get("timestamp", ""),
        "registry_hash": registry_hash(state.registry, state.decisions),
        "warnings": state.warnings,
    }


def sort_candidates(classes: list[CandidateClass], sort: str) -> list[CandidateClass]:
    if sort == "count_desc":
        return sorted(classes, key=lambda c: (-c.count, c.name))
    if sort == "name":
        return sorted(classes, key=lambda c: (normalize_name(c.name), c.class_id))
    if sort == "batch":
        return sorted(
            classes,
            key=lambda c: (c.source_batches[0] if c.source_batches else -1, c.class_id),
        )
    raise ReviewError(f"unknown sort {sort!r}")
