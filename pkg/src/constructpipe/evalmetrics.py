"""Scoring classified output against human codings.

Agreement filtering reduces a two-coder file pair to the units the coders
agree on; scoring compares predictions to that gold standard with accuracy
(strict set equality and lenient overlap), label-level precision/recall/F1
(macro and micro), and Krippendorff's alpha (nominal level).

Alpha is computed over exact rationals so permuting the unit order can never
change the result; only the final value is floated.
"""

from __future__ import annotations

import csv
from collections import Counter
from fractions import Fraction
from pathlib import Path


class MetricsError(Exception):
    pass


def krippendorff_alpha(units: list[list[str]]) -> Fraction:
    """Nominal-level alpha from one list of coded values per unit.

    Units with fewer than two codings cannot enter the coincidence matrix;
    at least two pairable units are required.
    """
    pairable = [u for u in units if len(u) >= 2]
    if len(pairable) < 2:
        raise MetricsError("fewer than two pairable units; alpha is undefined")

    coincidence: dict[tuple[str, str], Fraction] = {}
    margins: Counter[str] = Counter()
    n = Fraction(0)
    for values in pairable:
        weight = Fraction(1, len(values) - 1)
        for i, vi in enumerate(values):
            for j, vj in enumerate(values):
                if i == j:
                    continue
                key = (vi, vj)
                coincidence[key] = coincidence.get(key, Fraction(0)) + weight
        n += len(values)

    for (vi, _), count in coincidence.items():
        margins[vi] += count

    disagreement = sum(
        (count for (vi, vj), count in coincidence.items() if vi != vj),
        Fraction(0),
    )
    d_observed = disagreement / n

    d_expected = Fraction(0)
    values = sorted(margins)
    for vi in values:
        for vj in values:
            if vi != vj:
                d_expected += margins[vi] * margins[vj]
    d_expected /= n * (n - 1)

    if d_expected == 0:
        raise MetricsError(
            "degenerate margin: every coding is the same value, alpha is undefined"
        )
    return 1 - d_observed / d_expected


def alpha_for_label_sets(
    a: dict[str, list[str]], b: dict[str, list[str]]
) -> Fraction:
    """Alpha between two coders of label sets; a set becomes one nominal
    value by joining its sorted labels. Units coded by only one side drop."""
    units = []
    for unit_id in a.keys() & b.keys():
        va, vb = a[unit_id], b[unit_id]
        if va and vb:
            units.append(["|".join(sorted(va)), "|".join(sorted(vb))])
    return krippendorff_alpha(units)


def load_codings_csv(path: str | Path) -> dict[str, dict[str, list[str]]]:
    """Read a codings CSV (unit_id, coder_id, label1[, label2]) into
    coder -> unit -> labels."""
    coders: dict[str, dict[str, list[str]]] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"unit_id", "coder_id", "label1"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise MetricsError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            unit_id = (row.get("unit_id") or "").strip()
            coder_id = (row.get("coder_id") or "").strip()
            if not unit_id or not coder_id:
                raise MetricsError(f"{path}: row with empty unit_id or coder_id")
            labels = []
            for key in ("label1", "label2"):
                value = (row.get(key) or "").strip()
                if value and value not in labels:
                    labels.append(value)
            if not labels:
                raise MetricsError(f"{path}: unit {unit_id!r} has no labels")
            per_unit = coders.setdefault(coder_id, {})
            if unit_id in per_unit:
                raise MetricsError(f"{path}: coder {coder_id!r} coded {unit_id!r} twice")
            per_unit[unit_id] = labels
    if not coders:
        raise MetricsError(f"{path}: no codings")
    return coders


def agreement_filter(
    coder_a: dict[str, list[str]],
    coder_b: dict[str, list[str]],
    mode: str = "lenient",
) -> tuple[dict[str, list[str]], dict]:
    """Reduce two coders to an agreed gold standard.

    lenient: keep units whose label sets overlap; gold is the intersection.
    strict:  keep units whose label sets are equal; gold is that set.
    Units coded by only one coder are dropped and counted.
    """
    if mode not in ("lenient", "strict"):
        raise MetricsError(f"unknown agreement mode {mode!r}")
    shared = sorted(coder_a.keys() & coder_b.keys())
    gold: dict[str, list[str]] = {}
    disagreements = 0
    for unit_id in shared:
        sa, sb = set(coder_a[unit_id]), set(coder_b[unit_id])
        if mode == "strict":
            if sa == sb:
                gold[unit_id] = sorted(sa)
            else:
                disagreements += 1
        else:
            common = sa & sb
            if common:
                gold[unit_id] = sorted(common)
            else:
                disagreements += 1
    stats = {
        "mode": mode,
        "coder_a_units": len(coder_a),
        "coder_b_units": len(coder_b),
        "shared_units": len(shared),
        "dropped_unshared": len(coder_a) + len(coder_b) - 2 * len(shared),
        "dropped_disagreement": disagreements,
        "retained": len(gold),
    }
    return gold, stats


def _rate(num: int, den: int) -> float:
    return num / den if den else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def score(
    predictions: dict[str, list[str]], gold: dict[str, list[str]]
) -> dict:
    """Score predicted label sets against gold label sets.

    Precision/recall/F1 are label-level (a true positive is one label on one
    unit present in both sets), so they are shared by the strict and lenient
    views; only accuracy differs between the two.
    """
    if not gold:
        raise MetricsError("gold standard is empty")

    tp: Counter[str] = Counter()
    fp: Counter[str] = Counter()
    fn: Counter[str] = Counter()
    strict_hits = 0
    lenient_hits = 0
    covered = 0
    for unit_id, gold_labels in gold.items():
        pred_labels = predictions.get(unit_id, [])
        if pred_labels:
            covered += 1
        ps, gs = set(pred_labels), set(gold_labels)
        for label in ps | gs:
            if label in ps and label in gs:
                tp[label] += 1
            elif label in ps:
                fp[label] += 1
            else:
                fn[label] += 1
        if ps == gs:
            strict_hits += 1
        if ps & gs:
            lenient_hits += 1

    classes = sorted(set(tp) | set(fp) | set(fn))
    per_class = {}
    for label in classes:
        p = _rate(tp[label], tp[label] + fp[label])
        r = _rate(tp[label], tp[label] + fn[label])
        per_class[label] = {
            "tp": tp[label],
            "fp": fp[label],
            "fn": fn[label],
            "precision": p,
            "recall": r,
            "f1": _f1(p, r),
        }

    macro = {
        "precision": _mean([per_class[c]["precision"] for c in classes]),
        "recall": _mean([per_class[c]["recall"] for c in classes]),
        "f1": _mean([per_class[c]["f1"] for c in classes]),
    }
    tp_all, fp_all, fn_all = sum(tp.values()), sum(fp.values()), sum(fn.values())
    micro_p = _rate(tp_all, tp_all + fp_all)
    micro_r = _rate(tp_all, tp_all + fn_all)
    micro = {"precision": micro_p, "recall": micro_r, "f1": _f1(micro_p, micro_r)}

    try:
        alpha = alpha_for_label_sets(predictions, gold)
        alpha_value = float(alpha)
        alpha_ratio = [alpha.numerator, alpha.denominator]
        alpha_error = None
    except MetricsError as exc:
        alpha_value = None
        alpha_ratio = None
        alpha_error = str(exc)

    result = {
        "units": len(gold),
        "covered": covered,
        "accuracy_strict": strict_hits / len(gold),
        "accuracy_lenient": lenient_hits / len(gold),
        "macro": macro,
        "micro": micro,
        "per_class": per_class,
        "alpha": alpha_value,
        "alpha_ratio": alpha_ratio,
    }
    if alpha_error:
        result["alpha_error"] = alpha_error
    return result


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def metrics_table(result: dict) -> str:
    """Fixed-width summary; one row per (matching, averaging) pair."""
    header = f"{'':<16}{'accuracy':>10}{'f1':>10}{'precision':>11}{'recall':>10}"
    rows = [header]
    for match in ("strict", "lenient"):
        acc = result[f"accuracy_{match}"]
        for avg in ("macro", "micro"):
            stats = result[avg]
            rows.append(
                f"{match + '/' + avg:<16}"
                f"{acc:>10.4f}{stats['f1']:>10.4f}"
                f"{stats['precision']:>11.4f}{stats['recall']:>10.4f}"
            )
    alpha = result.get("alpha")
    rows.append(f"{'alpha':<16}{alpha:>10.4f}" if alpha is not None else f"{'alpha':<16}{'n/a':>10}")
    return "\n".join(rows) + "\n"
