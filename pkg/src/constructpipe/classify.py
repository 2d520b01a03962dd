"""Per-unit classification against the finalized class set.

Three steps per unit:
  1. a fresh long summary of the unit,
  2. one Likert fit rating (1..7) per finalized class,
  3. label selection among the classes tied at the maximum fit.

Step three is skipped entirely when the argmax is a single class: the label
is taken directly with no model call. Ties are broken by presenting the tied
classes (capped, best run-wide mean first) and asking for one or two names.

Units whose detection stage said "no" never reach fit rating; they get the
reserved none-class label with source "detection_no".
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .corpus import CorpusUnit
from .detect import unit_context
from .gateway import (
    GatewayClient,
    ParseFailure,
    PromptTemplate,
    extract_json,
    render,
)
from .gateway.jsonrepair import JsonExtractionError
from .kinds import PipelineKind

JSON_REASK_TEXT = "Please respond with valid JSON only."

FIT_MIN = 1
FIT_MAX = 7


class ClassifyError(Exception):
    pass


@dataclass(frozen=True)
class FinalClass:
    name: str
    prompt: str
    final_rank: int


def load_final_classes(final: dict) -> list[FinalClass]:
    classes = [
        FinalClass(name=c["name"], prompt=c["prompt"], final_rank=c["final_rank"])
        for c in final["classes"]
    ]
    return sorted(classes, key=lambda c: c.final_rank)


def final_set_hash(final: dict) -> str:
    names = [c["name"] for c in sorted(final["classes"], key=lambda c: c["final_rank"])]
    payload = {"names": names, "none_class": final["none_class"]}
    return hashlib.sha256(json.dumps(payload, ensure_ascii=False).encode("utf-8")).hexdigest()


@dataclass
class FitRating:
    class_name: str
    fit: int | None
    rationale: str = ""
    failed: bool = False
    error: str | None = None
    attempts: int = 0

    def to_json(self) -> dict:
        obj = {"class": self.class_name, "fit": self.fit, "rationale": self.rationale}
        if self.failed:
            obj["failed"] = True
            obj["error"] = self.error
        return obj


@dataclass
class FitProfile:
    ratings: list[FitRating]
    m: int
    mean_fit: float | None
    max_fit: int | None
    argmax: list[str]
    partial: bool


def fit_profile(ratings: list[FitRating]) -> FitProfile:
    """Aggregate one unit's ratings: mean over the m successful ratings,
    max, and the argmax set in class-presentation order."""
    ok = [r for r in ratings if not r.failed and r.fit is not None]
    m = len(ok)
    if m == 0:
        return FitProfile(ratings, 0, None, None, [], partial=bool(ratings))
    total = sum(r.fit for r in ok)
    max_fit = max(r.fit for r in ok)
    argmax = [r.class_name for r in ok if r.fit == max_fit]
    return FitProfile(
        ratings=ratings,
        m=m,
        mean_fit=total / m,
        max_fit=max_fit,
        argmax=argmax,
        partial=m < len(ratings),
    )


def parse_fit_reply(raw: str, expected_range: tuple[int, int] = (FIT_MIN, FIT_MAX)) -> tuple[int, str]:
    try:
        obj = extract_json(raw)
    except JsonExtractionError as exc:
        raise ParseFailure(str(exc)) from exc
    if "Fit" not in obj:
        raise ParseFailure('reply JSON lacks the "Fit" key')
    value = obj["Fit"]
    if isinstance(value, bool):
        raise ParseFailure(f"fit value {value!r} is not a number")
    if isinstance(value, str):
        try:
            value = int(value.strip())
        except ValueError:
            raise ParseFailure(f"fit value {obj['Fit']!r} is not a number") from None
    if not isinstance(value, int):
        raise ParseFailure(f"fit value {obj['Fit']!r} is not a number")
    lo, hi = expected_range
    if not (lo <= value <= hi):
        raise ParseFailure(f"fit value {value} is outside {lo}..{hi}")
    rationale = obj.get("Rationale")
    if not isinstance(rationale, str):
        rationale = ""
    return value, rationale.strip()


def rate_unit(
    client: GatewayClient,
    template: PromptTemplate,
    kind: PipelineKind,
    unit: CorpusUnit,
    long_summary: str,
    classes: list[FinalClass],
    max_attempts: int,
) -> list[FitRating]:
    """Step two: one independent fit call per finalized class."""
    ratings: list[FitRating] = []
    for cls in classes:
        extra = {
            "FRAME SUMMARY": long_summary,
            f"{kind.fit_name_key.upper()} CATEGORY": cls.name,
            f"{kind.fit_name_key.upper()} CATEGORY PROMPT": cls.prompt,
        }
        messages = render(template, unit_context(unit, template, extra))
        result = client.ask_parsed(
            "classify_fit",
            messages,
            lambda raw: parse_fit_reply(raw),
            JSON_REASK_TEXT,
            max_attempts,
        )
        if result.ok:
            fit, rationale = result.value
            ratings.append(
                FitRating(cls.name, fit, rationale, attempts=result.attempts)
            )
        else:
            ratings.append(
                FitRating(
                    cls.name,
                    None,
                    failed=True,
                    error=result.error,
                    attempts=result.attempts,
                )
            )
    return ratings


def run_means(all_ratings: list[list[FitRating]]) -> dict[str, float]:
    """Mean fit each class received across every successful rating in the run."""
    totals: dict[str, int] = {}
    counts: dict[str, int] = {}
    for ratings in all_ratings:
        for r in ratings:
            if not r.failed and r.fit is not None:
                totals[r.class_name] = totals.get(r.class_name, 0) + r.fit
                counts[r.class_name] = counts.get(r.class_name, 0) + 1
    return {name: totals[name] / counts[name] for name in totals}


def step_three_candidates(
    argmax: list[str], class_run_means: dict[str, float], tie_cap: int
) -> list[str]:
    """Order tied classes by run-wide mean (best first), name as tiebreak,
    and cap how many are presented."""
    ordered = sorted(argmax, key=lambda n: (-class_run_means.get(n, 0.0), n))
    return ordered[: max(1, tie_cap)]


def final_reask_text(kind: PipelineKind) -> str:
    key = kind.fit_name_key.upper()
    return (
        f"Please respond with only the {kind.class_key} name(s) "
        f"in the format <{key}> or <{key} 1 | {key} 2>."
    )


def parse_final_labels(raw: str, presented: list[str]) -> list[str]:
    """Accept one or two of the presented names, case-insensitively, with or
    without angle brackets, separated by '|'."""
    text = raw.strip()
    if not text:
        raise ParseFailure("empty selection")
    lookup = {name.casefold(): name for name in presented}
    labels: list[str] = []
    for part in text.split("|"):
        cleaned = part.strip().strip("<>").strip()
        if not cleaned:
            raise ParseFailure("empty label in selection")
        canon = lookup.get(cleaned.casefold())
        if canon is None:
            raise ParseFailure(f"label {cleaned!r} is not among the presented classes")
        if canon not in labels:
            labels.append(canon)
    if len(labels) > 2:
        raise ParseFailure(f"expected one or two labels, got {len(labels)}")
    return labels


def run_step_three(
    client: GatewayClient,
    template: PromptTemplate,
    kind: PipelineKind,
    unit: CorpusUnit,
    candidates: list[str],
    rationales: dict[str, str],
    max_attempts: int,
) -> tuple[list[str] | None, dict]:
    """Step three tie-break call; returns (labels or None, log record)."""
    key = kind.fit_name_key.upper()
    extra = {
        f"FINAL {key} CATEGORIES": ", ".join(candidates),
        f"FINAL {key} RATIONALE SENTENCES": "\n".join(
            f"{name}: {rationales.get(name, '')}".rstrip() for name in candidates
        ),
    }
    messages = render(template, unit_context(unit, template, extra))
    result = client.ask_parsed(
        "classify_final",
        messages,
        lambda raw: parse_final_labels(raw, candidates),
        final_reask_text(kind),
        max_attempts,
    )
    record = {
        "candidates": candidates,
        "attempts": result.attempts,
        "raw": result.raw,
    }
    if not result.ok:
        record["error"] = result.error
        return None, record
    return result.value, record


@dataclass
class ClassifyResult:
    unit_id: str
    labels: list[str]
    source: str  # detection_no | singleton | step_three | failed
    mean_fit: float | None = None
    max_fit: int | None = None
    argmax: list[str] = field(default_factory=list)
    m: int = 0
    partial: bool = False
    ratings: list[FitRating] = field(default_factory=list)
    step_three: dict | None = None
    error: str | None = None

    def to_json(self, set_hash: str) -> dict:
        obj = {
            "unit_id": self.unit_id,
            "labels": self.labels,
            "source": self.source,
            "mean_fit": self.mean_fit,
            "max_fit": self.max_fit,
            "argmax": self.argmax,
            "m": self.m,
            "partial": self.partial,
            "ratings": [r.to_json() for r in self.ratings],
            "final_set_hash": set_hash,
        }
        if self.step_three is not None:
            obj["step_three"] = self.step_three
        if self.error is not None:
            obj["error"] = self.error
        return obj


def select_labels(
    client: GatewayClient,
    template: PromptTemplate,
    kind: PipelineKind,
    unit: CorpusUnit,
    profile: FitProfile,
    class_run_means: dict[str, float],
    tie_cap: int,
    max_attempts: int,
) -> ClassifyResult:
    """Turn one unit's fit profile into labels, calling the model only on ties."""
    if profile.m == 0:
        return ClassifyResult(
            unit_id=unit.unit_id,
            labels=[],
            source="failed",
            ratings=profile.ratings,
            error="every fit rating failed",
        )
    base = dict(
        unit_id=unit.unit_id,
        mean_fit=profile.mean_fit,
        max_fit=profile.max_fit,
        argmax=profile.argmax,
        m=profile.m,
        partial=profile.partial,
        ratings=profile.ratings,
    )
    if len(profile.argmax) == 1:
        return ClassifyResult(labels=list(profile.argmax), source="singleton", **base)
    candidates = step_three_candidates(profile.argmax, class_run_means, tie_cap)
    rationales = {r.class_name: r.rationale for r in profile.ratings if not r.failed}
    labels, record = run_step_three(
        client, template, kind, unit, candidates, rationales, max_attempts
    )
    if labels is None:
        return ClassifyResult(
            labels=[],
            source="failed",
            step_three=record,
            error=f"step three failed: {record.get('error')}",
            **base,
        )
    return ClassifyResult(labels=labels, source="step_three", step_three=record, **base)
