"""End-to-end guarantees: one test per shipping criterion.

Run with -v for one pass/fail line each. Everything here drives the public
surface only; nothing reaches into module internals.
"""

import json
import math
import random
import time
from fractions import Fraction

import pytest

from constructpipe.classgen import plan_batches, parse_class_reply
from constructpipe.classify import FitRating, fit_profile, parse_fit_reply
from constructpipe.config import load_config
from constructpipe.evalmetrics import (
    MetricsError,
    agreement_filter,
    krippendorff_alpha,
    load_codings_csv,
)
from constructpipe.gateway import JsonExtractionError, ParseFailure, extract_json
from constructpipe.kinds import get_kind
from constructpipe.pipeline import Pipeline
from constructpipe.review.server import ReviewService

from helpers import (
    DERIVED_FILES,
    FIXTURES,
    PLANTED_CLASSES,
    derived_bytes,
    read_jsonl,
    run_planted_pipeline,
    write_planted_config,
)


def test_planted_corpus_end_to_end_recovers_all_classes(tmp_path):
    """200 planted units, 5 planted classes: registry names match exactly,
    strict accuracy against the planted gold labels is 1.0, under 30 s."""
    started = time.monotonic()
    config_path = write_planted_config(tmp_path)
    metrics = run_planted_pipeline(config_path)
    elapsed = time.monotonic() - started

    registry = json.loads((tmp_path / "run" / "registry.json").read_text())
    names = sorted(c["name"] for c in registry["classes"])
    assert names == sorted(PLANTED_CLASSES)

    assert metrics["units"] == 200
    assert metrics["covered"] == 200
    assert metrics["accuracy_strict"] == 1.0
    assert metrics["accuracy_lenient"] == 1.0
    assert elapsed < 30.0, f"end-to-end run took {elapsed:.1f}s"


def test_batch_plan_sampling_invariants():
    """Hand-derived 130/50/0.2 plan, then 1,000 random plans: every id goes
    out fresh exactly once, carried ids come from the previous batch, and
    non-terminal batches carry exactly round(batch_size * carryover)."""
    plan = plan_batches([f"u{i:03d}" for i in range(130)], 50, 0.2, seed=11)
    assert [b.index for b in plan.batches] == [0, 1, 2]
    assert [len(b.carried) for b in plan.batches] == [0, 10, 10]
    assert [len(b.fresh) for b in plan.batches] == [50, 40, 40]

    rng = random.Random(0xACCE55)
    for case in range(1000):
        batch_size = rng.randint(5, 200)
        n = rng.randint(1, 600)
        carryover = rng.uniform(0.0, 0.4999)
        ids = [f"u{i:04d}" for i in range(n)]
        plan = plan_batches(ids, batch_size, carryover, seed=rng.randrange(10**6))
        batches = plan.batches

        fresh = [uid for b in batches for uid in b.fresh]
        assert sorted(fresh) == sorted(ids), f"case {case}: fresh is not a partition"
        assert batches[0].carried == []

        carry_n = round(batch_size * carryover)
        for prev, cur in zip(batches, batches[1:]):
            assert set(cur.carried) <= set(prev.ids), f"case {case}: carry origin"
            assert len(cur.ids) <= batch_size
        for cur in batches[1:-1]:
            assert len(cur.carried) == carry_n, f"case {case}: non-terminal carry size"
        if len(batches) > 1:
            terminal = batches[-1]
            assert len(terminal.carried) == min(carry_n, len(batches[-2].ids))


def test_interrater_alpha_fixtures_and_permutation_invariance():
    """Perfect agreement gives exactly 1; the 4-item fixture gives the
    hand-computed 1/8; relabeling categories never moves the value."""
    perfect = krippendorff_alpha([["x", "x"], ["y", "y"], ["x", "x"]])
    assert perfect == Fraction(1)
    assert float(perfect) == 1.0

    fixture = krippendorff_alpha([["a", "a"], ["a", "b"], ["b", "b"], ["b", "a"]])
    assert fixture == Fraction(1, 8)
    assert abs(float(fixture) - 0.125) <= 1e-9

    rng = random.Random(20251103)
    labels_pool = ["a", "b", "c", "d"]
    checked = 0
    while checked < 100:
        width = rng.randint(2, 4)
        labels = labels_pool[:width]
        table = [
            [rng.choice(labels) for _ in range(rng.randint(2, 3))]
            for _ in range(rng.randint(4, 8))
        ]
        try:
            before = krippendorff_alpha(table)
        except MetricsError:
            continue  # all-same-value table; alpha undefined either way
        shuffled = labels[:]
        rng.shuffle(shuffled)
        mapping = dict(zip(labels, shuffled))
        after = krippendorff_alpha([[mapping[v] for v in unit] for unit in table])
        assert after == before
        checked += 1


def test_fit_aggregation_properties(planted_run):
    """mean_fit is the exact arithmetic mean (1 ulp); the argmax set ignores
    constant in-range shifts; a lone top-rated class never triggers the
    tie-break call."""
    rng = random.Random(0xF17)
    for _ in range(10_000):
        values = [rng.randint(1, 7) for _ in range(rng.randint(1, 10))]
        ratings = [FitRating(class_name=f"c{i}", fit=v) for i, v in enumerate(values)]
        profile = fit_profile(ratings)
        expected = sum(values) / len(values)
        assert abs(profile.mean_fit - expected) <= math.ulp(expected)
        assert profile.m == len(values)

        low, high = min(values), max(values)
        deltas = [d for d in range(1 - low, 7 - high + 1) if d != 0]
        if deltas:
            delta = rng.choice(deltas)
            shifted = fit_profile(
                [FitRating(class_name=f"c{i}", fit=v + delta) for i, v in enumerate(values)]
            )
            assert shifted.argmax == profile.argmax
            assert shifted.max_fit == profile.max_fit + delta

    _, run_dir, _ = planted_run
    events = read_jsonl(run_dir / "events.jsonl")
    assert not any(e.get("stage") == "classify_final" for e in events)
    rows = read_jsonl(run_dir / "results.jsonl")[1:]
    assert rows and not any("step_three" in r for r in rows)


def test_malformed_reply_corpus_parses_or_fails_cleanly():
    """All 25 bundled malformed-reply cases either produce the pinned value
    or raise the designated parse error; nothing else escapes."""
    cases = json.loads((FIXTURES / "malformed_json.json").read_text(encoding="utf-8"))
    assert len(cases) == 25
    kind = get_kind("frames_sentence")

    for case in cases:
        name, raw = case["name"], case["raw"]
        try:
            if case["kind"] == "extract":
                got = extract_json(raw)
                assert not case.get("error"), f"{name}: expected a parse error"
                assert got == case["expect"], name
            elif case["kind"] == "fit":
                fit, rationale = parse_fit_reply(raw)
                assert not case.get("error"), f"{name}: expected a parse error"
                assert fit == case["fit"] and rationale == case["rationale"], name
            else:
                classes, _ = parse_class_reply(extract_json(raw), kind, 9, 0)
                assert not case.get("error"), f"{name}: expected a parse error"
                assert len(classes) == case["classes"], name
        except (JsonExtractionError, ParseFailure):
            assert case.get("error"), f"{name}: unexpected parse error"


def test_identical_configs_reproduce_bytes_and_resume_matches(tmp_path, planted_run):
    """Two fresh runs agree byte-for-byte on every derived file, and a run
    stopped after every stage boundary converges to the same bytes."""
    _, reference_run, _ = planted_run

    (tmp_path / "second").mkdir()
    second_cfg = write_planted_config(tmp_path / "second")
    run_planted_pipeline(second_cfg)
    second = derived_bytes(tmp_path / "second" / "run")

    reference = derived_bytes(reference_run)
    assert sorted(reference) == sorted(DERIVED_FILES) == sorted(second)
    for name in DERIVED_FILES:
        assert second[name] == reference[name], f"{name} differs between fresh runs"

    # restart the process at every stage boundary
    (tmp_path / "stopped").mkdir()
    stop_cfg_path = write_planted_config(tmp_path / "stopped")
    stop_cfg = load_config(stop_cfg_path)
    for stage in ("segment", "detect", "summarize", "genclasses"):
        pipe = Pipeline(stop_cfg)
        try:
            getattr(pipe, f"run_{stage}")()
        finally:
            pipe.close()

    run_dir = tmp_path / "stopped" / "run"
    service = ReviewService.open(
        run_dir / "registry.json",
        run_dir / "decisions.jsonl",
        run_dir / "final.json",
        run_dir / "units.jsonl",
    )
    service.apply_file(FIXTURES / "planted" / "decisions.jsonl")

    for stage in ("classify", "eval"):
        pipe = Pipeline(stop_cfg)
        try:
            getattr(pipe, f"run_{stage}")()
        finally:
            pipe.close()

    stopped = derived_bytes(run_dir)
    assert sorted(stopped) == sorted(DERIVED_FILES)
    for name in DERIVED_FILES:
        assert stopped[name] == reference[name], f"{name} differs after stage restarts"


def test_two_coder_agreement_filter_retains_expected_units():
    """The bundled coder pair shares 1,250 units; lenient filtering keeps
    exactly 996 of them as gold."""
    coder_a = load_codings_csv(FIXTURES / "coders" / "coder_a.csv")["coder_a"]
    coder_b = load_codings_csv(FIXTURES / "coders" / "coder_b.csv")["coder_b"]
    gold, stats = agreement_filter(coder_a, coder_b, "lenient")
    assert stats["shared_units"] == 1250
    assert stats["retained"] == 996
    assert len(gold) == 996
    assert all(gold.values())
