"""Per-expression annotation records and the five-attribute decision cascade.

An annotation captures both participants' readings of one reference
expression: the landmark set the speaker intends, five gated yes/no
attributes describing how far the addressee's interpretation progressed,
and the landmark set the addressee settled on. Later attributes apply only
while every earlier gate stays open:

    is_quantificational  (true closes everything downstream)
    is_specified         (false closes everything downstream)
    is_accommodated      (false closes everything downstream)
    is_grounded          (false closes everything downstream)
    is_imagined

Validation rules carry stable identifiers from RULE_CATALOGUE so that
clients and tests can assert on specific failures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any, Mapping

from .corpus import SpeakerRole
from .landmarks import (
    LandmarkIdError,
    LandmarkRefSet,
    MapPairIndex,
    REF_SET_PATTERN,
    format_ref_set,
    parse_ref_set,
)

ATTRIBUTE_NAMES = (
    "is_quantificational",
    "is_specified",
    "is_accommodated",
    "is_grounded",
    "is_imagined",
)

#: Serialization field order for annotation records.
RECORD_FIELDS = (
    "re_id",
    "speaker",
    "addressee",
    "speaker_landmark",
    "is_quantificational",
    "is_specified",
    "is_accommodated",
    "is_grounded",
    "is_imagined",
    "addressee_landmark",
    "reason",
)

RULE_CATALOGUE: dict[str, str] = {
    "gate_specified": "is_specified must be present exactly when is_quantificational is false",
    "gate_accommodated": "is_accommodated must be present exactly when is_specified is true",
    "gate_grounded": "is_grounded must be present exactly when is_accommodated is true",
    "gate_imagined": "is_imagined must be present exactly when is_grounded is true",
    "addressee_role": "addressee must be the opposite role of the speaker",
    "speaker_landmark_missing": "speaker landmark set required for this record",
    "speaker_landmark_side": "speaker landmark set must sit on the speaker's map side",
    "addressee_landmark_missing": "addressee landmark set required when is_grounded is true",
    "addressee_landmark_forbidden": "addressee landmark set only allowed when is_grounded is true",
    "addressee_landmark_side": "addressee landmark set must sit on the addressee's side unless imagined",
    "imagined_copy": "when is_imagined is true the addressee set must repeat the speaker set verbatim",
    "map_pair_mismatch": "speaker and addressee landmark sets must come from one map pair",
    "unknown_landmark": "landmark id does not exist in the map pair index",
    "reason_length": "reason should stay under 50 words",
}

REASON_WORD_LIMIT = 50


class InvalidCascadeError(ValueError):
    """Attribute shape unreachable under the gating order."""


class RecordParseError(ValueError):
    """Serialized record that cannot be decoded into an AnnotationRecord."""


@dataclass(frozen=True)
class AttributeCascade:
    """Values of the five gated attributes; None marks a closed gate."""

    is_quantificational: bool
    is_specified: bool | None = None
    is_accommodated: bool | None = None
    is_grounded: bool | None = None
    is_imagined: bool | None = None

    def value(self, attribute: str) -> bool | None:
        return getattr(self, attribute)


def cascade_gating_violations(cascade: AttributeCascade) -> list[tuple[str, str]]:
    """All (rule_id, message) pairs violated by the cascade's shape."""
    violations = []
    expectations = (
        ("gate_specified", cascade.is_specified, cascade.is_quantificational is False),
        ("gate_accommodated", cascade.is_accommodated, cascade.is_specified is True),
        ("gate_grounded", cascade.is_grounded, cascade.is_accommodated is True),
        ("gate_imagined", cascade.is_imagined, cascade.is_grounded is True),
    )
    for rule_id, actual, should_be_present in expectations:
        if should_be_present and actual is None:
            violations.append((rule_id, f"{RULE_CATALOGUE[rule_id]} (value missing)"))
        elif not should_be_present and actual is not None:
            violations.append((rule_id, f"{RULE_CATALOGUE[rule_id]} (value must be null)"))
    return violations


def applicable_attributes(cascade: AttributeCascade) -> list[str]:
    """Attribute names applicable under the cascade, in decision order.

    The returned list is a prefix of ATTRIBUTE_NAMES and includes the gate
    that closed. Raises InvalidCascadeError for unreachable shapes.
    """
    violations = cascade_gating_violations(cascade)
    if violations:
        raise InvalidCascadeError("; ".join(message for _, message in violations))
    names = ["is_quantificational"]
    if cascade.is_quantificational:
        return names
    names.append("is_specified")
    if not cascade.is_specified:
        return names
    names.append("is_accommodated")
    if not cascade.is_accommodated:
        return names
    names.append("is_grounded")
    if not cascade.is_grounded:
        return names
    names.append("is_imagined")
    return names


@dataclass(frozen=True)
class AnnotationRecord:
    re_id: str
    speaker: SpeakerRole
    addressee: SpeakerRole
    speaker_landmark: LandmarkRefSet | None
    cascade: AttributeCascade
    addressee_landmark: LandmarkRefSet | None
    reason: str

    def attribute(self, name: str) -> bool | None:
        return self.cascade.value(name)


@dataclass(frozen=True)
class ValidationDiagnostic:
    re_id: str
    rule_id: str
    severity: str  # "error" | "warning"
    message: str

    @property
    def is_error(self) -> bool:
        return self.severity == "error"


def validate_record(
    record: AnnotationRecord,
    index: MapPairIndex | None = None,
    *,
    quantificational_speaker_id: str = "optional",
) -> list[ValidationDiagnostic]:
    """Check gating, side, copy, and id-resolution rules for one record.

    Id resolution only runs when an index is supplied. The
    quantificational_speaker_id policy decides whether expressions that only
    query existence still need a speaker landmark ("required") or may omit
    it ("optional").
    """
    if quantificational_speaker_id not in ("required", "optional"):
        raise ValueError(
            f"quantificational_speaker_id must be 'required' or 'optional', "
            f"got {quantificational_speaker_id!r}"
        )
    out: list[ValidationDiagnostic] = []

    def fail(rule_id: str, message: str | None = None) -> None:
        out.append(
            ValidationDiagnostic(
                record.re_id, rule_id, "error", message or RULE_CATALOGUE[rule_id]
            )
        )

    if record.addressee is not record.speaker.opposite:
        fail("addressee_role")

    for rule_id, message in cascade_gating_violations(record.cascade):
        out.append(ValidationDiagnostic(record.re_id, rule_id, "error", message))

    cascade = record.cascade
    speaker_needed = (
        not cascade.is_quantificational or quantificational_speaker_id == "required"
    )
    if speaker_needed and record.speaker_landmark is None:
        fail("speaker_landmark_missing")
    if record.speaker_landmark is not None and record.speaker_landmark.side is not record.speaker:
        fail("speaker_landmark_side")

    grounded = cascade.is_grounded is True
    if grounded and record.addressee_landmark is None:
        fail("addressee_landmark_missing")
    if not grounded and record.addressee_landmark is not None:
        fail("addressee_landmark_forbidden")

    if cascade.is_imagined is True and record.addressee_landmark is not None:
        if record.addressee_landmark != record.speaker_landmark:
            fail("imagined_copy")
    if (
        cascade.is_imagined is not True
        and record.addressee_landmark is not None
        and record.addressee_landmark.side is not record.addressee
    ):
        fail("addressee_landmark_side")

    if (
        record.speaker_landmark is not None
        and record.addressee_landmark is not None
        and record.speaker_landmark.map_pair_id != record.addressee_landmark.map_pair_id
    ):
        fail("map_pair_mismatch")

    if index is not None:
        for ref_set in (record.speaker_landmark, record.addressee_landmark):
            if ref_set is None:
                continue
            for umlm in ref_set.ids:
                if umlm.map_pair_id != index.map_pair_id or not index.has(umlm):
                    fail("unknown_landmark", f"{umlm} does not exist in map pair index")

    if len(record.reason.split()) > REASON_WORD_LIMIT:
        out.append(
            ValidationDiagnostic(
                record.re_id, "reason_length", "warning", RULE_CATALOGUE["reason_length"]
            )
        )
    return out


def record_to_dict(record: AnnotationRecord) -> dict[str, Any]:
    """Serialize in the canonical interchange field order."""
    return {
        "re_id": record.re_id,
        "speaker": record.speaker.value,
        "addressee": record.addressee.value,
        "speaker_landmark": (
            None if record.speaker_landmark is None else format_ref_set(record.speaker_landmark)
        ),
        "is_quantificational": record.cascade.is_quantificational,
        "is_specified": record.cascade.is_specified,
        "is_accommodated": record.cascade.is_accommodated,
        "is_grounded": record.cascade.is_grounded,
        "is_imagined": record.cascade.is_imagined,
        "addressee_landmark": (
            None
            if record.addressee_landmark is None
            else format_ref_set(record.addressee_landmark)
        ),
        "reason": record.reason,
    }


def record_from_dict(payload: Mapping[str, Any]) -> AnnotationRecord:
    """Decode one serialized record; raises RecordParseError on bad shape."""
    missing = [key for key in RECORD_FIELDS if key not in payload]
    if missing:
        raise RecordParseError(f"missing fields: {', '.join(missing)}")

    def ref_set(key: str) -> LandmarkRefSet | None:
        raw = payload[key]
        if raw is None:
            return None
        if not isinstance(raw, str):
            raise RecordParseError(f"{key} must be a string or null")
        try:
            return parse_ref_set(raw)
        except LandmarkIdError as exc:
            raise RecordParseError(f"{key}: {exc}") from None

    def attr(key: str) -> bool | None:
        raw = payload[key]
        if raw is not None and not isinstance(raw, bool):
            raise RecordParseError(f"{key} must be a boolean or null")
        return raw

    quantificational = payload["is_quantificational"]
    if not isinstance(quantificational, bool):
        raise RecordParseError("is_quantificational must be a boolean")
    try:
        speaker = SpeakerRole.from_text(str(payload["speaker"]))
        addressee = SpeakerRole.from_text(str(payload["addressee"]))
    except ValueError as exc:
        raise RecordParseError(str(exc)) from None
    re_id = payload["re_id"]
    if not isinstance(re_id, str) or not re_id:
        raise RecordParseError("re_id must be a non-empty string")

    return AnnotationRecord(
        re_id=re_id,
        speaker=speaker,
        addressee=addressee,
        speaker_landmark=ref_set("speaker_landmark"),
        cascade=AttributeCascade(
            is_quantificational=quantificational,
            is_specified=attr("is_specified"),
            is_accommodated=attr("is_accommodated"),
            is_grounded=attr("is_grounded"),
            is_imagined=attr("is_imagined"),
        ),
        addressee_landmark=ref_set("addressee_landmark"),
        reason=str(payload["reason"]),
    )


def with_re_id(record: AnnotationRecord, re_id: str) -> AnnotationRecord:
    return replace(record, re_id=re_id)


def _nullable_bool() -> dict[str, Any]:
    return {"type": ["boolean", "null"]}


def _ref_set_pattern(side: str | None = None) -> str:
    token = "[gf]" if side is None else side
    element = rf"[a-z0-9]+_[a-z0-9_]+#(?:0|[1-9][0-9]*)@{token}"
    return rf"^{element}(?:\+{element})*$"


def _nullable_ref_set(side: str | None = None) -> dict[str, Any]:
    return {
        "anyOf": [
            {"type": "null"},
            {"type": "string", "pattern": _ref_set_pattern(side)},
        ]
    }


def output_schema_dict() -> dict[str, Any]:
    """The machine-readable contract for generated annotation arrays."""
    gate = lambda opener, value, target: {  # noqa: E731 - tiny table builder
        "if": {"properties": {opener: {"const": value}}},
        "then": {"properties": {target: {"type": "boolean"}}},
        "else": {"properties": {target: {"const": None}}},
    }
    record_schema = {
        "type": "object",
        "additionalProperties": False,
        "required": list(RECORD_FIELDS),
        "properties": {
            "re_id": {"type": "string", "minLength": 1},
            "speaker": {"enum": ["giver", "follower"]},
            "addressee": {"enum": ["giver", "follower"]},
            "speaker_landmark": _nullable_ref_set(),
            "is_quantificational": {"type": "boolean"},
            "is_specified": _nullable_bool(),
            "is_accommodated": _nullable_bool(),
            "is_grounded": _nullable_bool(),
            "is_imagined": _nullable_bool(),
            "addressee_landmark": _nullable_ref_set(),
            "reason": {"type": "string"},
        },
        "allOf": [
            gate("is_quantificational", False, "is_specified"),
            gate("is_specified", True, "is_accommodated"),
            gate("is_accommodated", True, "is_grounded"),
            gate("is_grounded", True, "is_imagined"),
            {
                "if": {"properties": {"is_grounded": {"const": True}}},
                "then": {
                    "properties": {
                        "addressee_landmark": {"type": "string", "pattern": REF_SET_PATTERN}
                    }
                },
                "else": {"properties": {"addressee_landmark": {"const": None}}},
            },
            {
                "anyOf": [
                    {
                        "properties": {
                            "speaker": {"const": "giver"},
                            "addressee": {"const": "follower"},
                        }
                    },
                    {
                        "properties": {
                            "speaker": {"const": "follower"},
                            "addressee": {"const": "giver"},
                        }
                    },
                ]
            },
            # Side agreement: the speaker set sits on the speaker's side; a
            # grounded, non-imagined addressee set sits on the addressee's
            # side; an imagined one copies the speaker's side.
            *(
                {
                    "if": {"properties": {"speaker": {"const": role}}},
                    "then": {"properties": {"speaker_landmark": _nullable_ref_set(side)}},
                }
                for role, side in (("giver", "g"), ("follower", "f"))
            ),
            *(
                {
                    "if": {
                        "properties": {
                            "is_grounded": {"const": True},
                            "is_imagined": {"const": False},
                            "addressee": {"const": role},
                        }
                    },
                    "then": {
                        "properties": {
                            "addressee_landmark": {
                                "type": "string",
                                "pattern": _ref_set_pattern(side),
                            }
                        }
                    },
                }
                for role, side in (("giver", "g"), ("follower", "f"))
            ),
            *(
                {
                    "if": {
                        "properties": {
                            "is_imagined": {"const": True},
                            "speaker": {"const": role},
                        }
                    },
                    "then": {
                        "properties": {
                            "addressee_landmark": {
                                "type": "string",
                                "pattern": _ref_set_pattern(side),
                            }
                        }
                    },
                }
                for role, side in (("giver", "g"), ("follower", "f"))
            ),
        ],
    }
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "reference expression annotation batch",
        "type": "array",
        "items": record_schema,
    }


def emit_output_schema() -> str:
    """Byte-stable JSON Schema text for an array of annotation records."""
    return json.dumps(output_schema_dict(), indent=2, sort_keys=True) + "\n"
