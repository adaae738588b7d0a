"""Scoring machine annotations against a human gold standard.

For each cascade attribute, only expressions where the gold cascade makes
that attribute applicable enter the denominator; a machine value that is
absent where gold carries one counts as an error. F1 treats value=true as
the positive class. Landmark agreement for grounded expressions compares
side-neutral id sets, with micro scores over individual set elements
(default) or over whole sets as atomic labels (alternative convention).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .annotation import (
    ATTRIBUTE_NAMES,
    AnnotationRecord,
    RecordParseError,
    record_from_dict,
    record_to_dict,
    applicable_attributes,
)
from .landmarks import LandmarkRefSet

GROUNDED_ID_CONVENTIONS = ("elements", "sets")


class EvalInputError(ValueError):
    pass


@dataclass(frozen=True)
class GoldRecord:
    record: AnnotationRecord
    annotator_id: str
    note: str = ""

    @property
    def re_id(self) -> str:
        return self.record.re_id


def gold_to_dict(gold: GoldRecord) -> dict[str, Any]:
    payload = record_to_dict(gold.record)
    payload["annotator_id"] = gold.annotator_id
    payload["note"] = gold.note
    return payload


def gold_from_dict(payload: Mapping[str, Any]) -> GoldRecord:
    record = record_from_dict(payload)
    return GoldRecord(
        record=record,
        annotator_id=str(payload.get("annotator_id", "")),
        note=str(payload.get("note", "")),
    )


@dataclass(frozen=True)
class AttributeMetrics:
    attribute: str
    n: int
    accuracy: float
    f1: float
    error_count: int


@dataclass(frozen=True)
class GroundedIdMetrics:
    convention: str
    n: int
    accuracy: float
    micro_precision: float
    micro_recall: float
    micro_f1: float


@dataclass(frozen=True)
class EvalReport:
    attributes: tuple[AttributeMetrics, ...]
    res_with_errors: int
    total_res: int
    total_attribute_errors: int
    grounded_id: GroundedIdMetrics
    grounded_id_alt: GroundedIdMetrics

    def to_dict(self) -> dict[str, Any]:
        return {
            "attributes": [
                {
                    "attribute": m.attribute,
                    "n": m.n,
                    "accuracy": round(m.accuracy, 6),
                    "f1": round(m.f1, 6),
                    "errors": m.error_count,
                }
                for m in self.attributes
            ],
            "re_level": {
                "res_with_errors": self.res_with_errors,
                "total_res": self.total_res,
                "total_attribute_errors": self.total_attribute_errors,
            },
            "grounded_id": _grounded_dict(self.grounded_id),
            "grounded_id_alt": _grounded_dict(self.grounded_id_alt),
        }


def _grounded_dict(metrics: GroundedIdMetrics) -> dict[str, Any]:
    return {
        "convention": metrics.convention,
        "n": metrics.n,
        "accuracy": round(metrics.accuracy, 6),
        "micro_precision": round(metrics.micro_precision, 6),
        "micro_recall": round(metrics.micro_recall, 6),
        "micro_f1": round(metrics.micro_f1, 6),
    }


def _keyed(records: Iterable[AnnotationRecord], label: str) -> dict[str, AnnotationRecord]:
    out: dict[str, AnnotationRecord] = {}
    for record in records:
        if record.re_id in out:
            raise EvalInputError(f"duplicate re_id {record.re_id!r} in {label} records")
        out[record.re_id] = record
    return out


def _paired(
    machine: Iterable[AnnotationRecord], gold: Iterable[AnnotationRecord]
) -> list[tuple[AnnotationRecord, AnnotationRecord]]:
    machine_by_id = _keyed(machine, "machine")
    gold_by_id = _keyed(gold, "gold")
    only_machine = sorted(set(machine_by_id) - set(gold_by_id))
    only_gold = sorted(set(gold_by_id) - set(machine_by_id))
    if only_machine or only_gold:
        raise EvalInputError(
            f"record sets differ: machine-only {only_machine[:5]}, gold-only {only_gold[:5]}"
        )
    return [(machine_by_id[re_id], gold_by_id[re_id]) for re_id in sorted(gold_by_id)]


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def attribute_metrics(
    machine: Iterable[AnnotationRecord], gold: Iterable[AnnotationRecord]
) -> list[AttributeMetrics]:
    """Per-attribute accuracy, true-positive-class micro F1, and error count."""
    pairs = _paired(machine, gold)
    out = []
    for attribute in ATTRIBUTE_NAMES:
        n = 0
        matches = 0
        tp = fp = fn = 0
        for machine_record, gold_record in pairs:
            if attribute not in applicable_attributes(gold_record.cascade):
                continue
            n += 1
            gold_value = gold_record.attribute(attribute)
            machine_value = machine_record.attribute(attribute)
            if machine_value == gold_value:
                matches += 1
            if gold_value is True and machine_value is True:
                tp += 1
            elif gold_value is not True and machine_value is True:
                fp += 1
            elif gold_value is True and machine_value is not True:
                fn += 1
        accuracy = matches / n if n else 1.0
        out.append(
            AttributeMetrics(
                attribute=attribute,
                n=n,
                accuracy=accuracy,
                f1=_f1_from_counts(tp, fp, fn),
                error_count=n - matches,
            )
        )
    return out


def _side_neutral(ref_set: LandmarkRefSet | None) -> frozenset[tuple[str, str, int]]:
    if ref_set is None:
        return frozenset()
    return frozenset((i.map_pair_id, i.name, i.ordinal) for i in ref_set.ids)


def grounded_id_metrics(
    machine: Iterable[AnnotationRecord],
    gold: Iterable[AnnotationRecord],
    convention: str = "elements",
) -> GroundedIdMetrics:
    """Landmark-id agreement over expressions gold marks as grounded.

    Accuracy is the exact side-neutral set match rate. With the "elements"
    convention, micro precision/recall/F1 count individual landmark ids;
    with "sets", each expression contributes its whole set as one atomic
    prediction.
    """
    if convention not in GROUNDED_ID_CONVENTIONS:
        raise ValueError(f"convention must be one of {GROUNDED_ID_CONVENTIONS}")
    pairs = _paired(machine, gold)
    n = 0
    exact = 0
    tp = fp = fn = 0
    for machine_record, gold_record in pairs:
        if gold_record.cascade.is_grounded is not True:
            continue
        n += 1
        gold_set = _side_neutral(gold_record.addressee_landmark)
        machine_set = (
            _side_neutral(machine_record.addressee_landmark)
            if machine_record.cascade.is_grounded is True
            else frozenset()
        )
        if machine_set == gold_set:
            exact += 1
        if convention == "elements":
            tp += len(machine_set & gold_set)
            fp += len(machine_set - gold_set)
            fn += len(gold_set - machine_set)
        else:
            if machine_set and machine_set == gold_set:
                tp += 1
            else:
                if machine_set:
                    fp += 1
                fn += 1
    precision = tp / (tp + fp) if (tp + fp) else 1.0
    recall = tp / (tp + fn) if (tp + fn) else 1.0
    return GroundedIdMetrics(
        convention=convention,
        n=n,
        accuracy=exact / n if n else 1.0,
        micro_precision=precision,
        micro_recall=recall,
        micro_f1=_f1_from_counts(tp, fp, fn),
    )


def re_level_errors(
    machine: Iterable[AnnotationRecord], gold: Iterable[AnnotationRecord]
) -> tuple[int, int]:
    """(expressions with at least one attribute mismatch, total mismatches)."""
    pairs = _paired(machine, gold)
    res_with_errors = 0
    total_errors = 0
    for machine_record, gold_record in pairs:
        mismatches = sum(
            1
            for attribute in applicable_attributes(gold_record.cascade)
            if machine_record.attribute(attribute) != gold_record.attribute(attribute)
        )
        total_errors += mismatches
        if mismatches:
            res_with_errors += 1
    return res_with_errors, total_errors


def evaluate(
    machine: Sequence[AnnotationRecord], gold: Sequence[AnnotationRecord]
) -> EvalReport:
    """Full comparison report of machine records against gold."""
    machine = list(machine)
    gold = list(gold)
    attributes = tuple(attribute_metrics(machine, gold))
    res_with_errors, total_errors = re_level_errors(machine, gold)
    return EvalReport(
        attributes=attributes,
        res_with_errors=res_with_errors,
        total_res=len(gold),
        total_attribute_errors=total_errors,
        grounded_id=grounded_id_metrics(machine, gold, "elements"),
        grounded_id_alt=grounded_id_metrics(machine, gold, "sets"),
    )


def disagreement_rows(
    machine: Sequence[AnnotationRecord], gold: Sequence[AnnotationRecord]
) -> list[dict[str, Any]]:
    """Per-expression field disagreements, for adjudication export."""
    rows = []
    for machine_record, gold_record in _paired(machine, gold):
        machine_dict = record_to_dict(machine_record)
        gold_dict = record_to_dict(gold_record)
        for field_name in machine_dict:
            if field_name == "reason":
                continue
            if machine_dict[field_name] != gold_dict[field_name]:
                rows.append(
                    {
                        "re_id": machine_record.re_id,
                        "field": field_name,
                        "machine": machine_dict[field_name],
                        "gold": gold_dict[field_name],
                    }
                )
    return rows


def load_gold_jsonl(path: str | Path) -> list[GoldRecord]:
    """Read a gold log, last write per re_id winning."""
    latest: dict[str, GoldRecord] = {}
    with Path(path).open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
                gold = gold_from_dict(payload)
            except (json.JSONDecodeError, RecordParseError) as exc:
                raise EvalInputError(f"{path}:{lineno}: {exc}") from None
            latest[gold.re_id] = gold
    return [latest[re_id] for re_id in sorted(latest)]


def write_eval_report(path: str | Path, report: EvalReport) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
