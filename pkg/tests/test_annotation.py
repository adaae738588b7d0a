from __future__ import annotations

import itertools
import json
import random

import jsonschema
import pytest

from recordgen import make_record, random_records, refset, umlm
from refground.annotation import (
    ATTRIBUTE_NAMES,
    AnnotationRecord,
    AttributeCascade,
    InvalidCascadeError,
    RULE_CATALOGUE,
    RecordParseError,
    applicable_attributes,
    cascade_gating_violations,
    emit_output_schema,
    record_from_dict,
    record_to_dict,
    validate_record,
)
from refground.client import MockPolicy, MockProvider, build_requests, submit_batch
from refground.corpus import SpeakerRole

G = SpeakerRole.GIVER
F = SpeakerRole.FOLLOWER

REACHABLE_SHAPES = {
    (True, None, None, None, None),
    (False, False, None, None, None),
    (False, True, False, None, None),
    (False, True, True, False, None),
    (False, True, True, True, False),
    (False, True, True, True, True),
}


def all_shapes():
    return itertools.product([True, False], *([[True, False, None]] * 4))


def test_exactly_six_shapes_are_reachable():
    accepted = {
        shape for shape in all_shapes() if not cascade_gating_violations(AttributeCascade(*shape))
    }
    assert accepted == REACHABLE_SHAPES


def test_rejected_shapes_carry_documented_gate_rules():
    for shape in all_shapes():
        violations = cascade_gating_violations(AttributeCascade(*shape))
        if shape in REACHABLE_SHAPES:
            assert violations == []
        else:
            assert violations
            for rule_id, _ in violations:
                assert rule_id in RULE_CATALOGUE
                assert rule_id.startswith("gate_")


def test_applicable_attributes_quantificational():
    assert applicable_attributes(AttributeCascade(True)) == ["is_quantificational"]


def test_applicable_attributes_fully_open():
    cascade = AttributeCascade(False, True, True, True, True)
    assert applicable_attributes(cascade) == list(ATTRIBUTE_NAMES)


def test_applicable_attributes_stops_at_closed_gate():
    cascade = AttributeCascade(False, False)
    assert applicable_attributes(cascade) == ["is_quantificational", "is_specified"]


def test_applicable_attributes_rejects_invalid():
    with pytest.raises(InvalidCascadeError):
        applicable_attributes(AttributeCascade(True, is_specified=True))


# ----------------------------------------------------------- validate_record

def test_minimal_quantificational_record_valid():
    record = make_record("q1", shape=1, speaker_set=None)
    assert validate_record(record) == []


def test_grounded_without_addressee_set_is_error():
    record = AnnotationRecord(
        re_id="x",
        speaker=G,
        addressee=F,
        speaker_landmark=refset(umlm("alpha", 0, G)),
        cascade=AttributeCascade(False, True, True, True, False),
        addressee_landmark=None,
        reason="",
    )
    rules = [d.rule_id for d in validate_record(record)]
    assert rules == ["addressee_landmark_missing"]


def test_imagined_record_must_copy_speaker_set():
    speaker_set = refset(umlm("alpha", 0, G))
    bad = AnnotationRecord(
        re_id="x",
        speaker=G,
        addressee=F,
        speaker_landmark=speaker_set,
        cascade=AttributeCascade(False, True, True, True, True),
        addressee_landmark=refset(umlm("alpha", 1, G)),
        reason="",
    )
    assert [d.rule_id for d in validate_record(bad)] == ["imagined_copy"]
    good = make_record("x", shape=6, speaker_set=speaker_set)
    assert validate_record(good) == []
    # The copied set keeps the speaker's side on purpose.
    assert good.addressee_landmark.side is G


def test_addressee_set_side_must_match_addressee():
    record = AnnotationRecord(
        re_id="x",
        speaker=G,
        addressee=F,
        speaker_landmark=refset(umlm("alpha", 0, G)),
        cascade=AttributeCascade(False, True, True, True, False),
        addressee_landmark=refset(umlm("alpha", 0, G)),
        reason="",
    )
    assert [d.rule_id for d in validate_record(record)] == ["addressee_landmark_side"]


def test_speaker_set_side_must_match_speaker():
    record = make_record("x", shape=4, speaker_set=refset(umlm("alpha", 0, F)))
    assert [d.rule_id for d in validate_record(record)] == ["speaker_landmark_side"]


def test_not_grounded_with_addressee_set_is_error():
    record = AnnotationRecord(
        re_id="x",
        speaker=G,
        addressee=F,
        speaker_landmark=refset(umlm("alpha", 0, G)),
        cascade=AttributeCascade(False, True, True, False),
        addressee_landmark=refset(umlm("alpha", 0, F)),
        reason="",
    )
    assert [d.rule_id for d in validate_record(record)] == ["addressee_landmark_forbidden"]


def test_addressee_must_be_opposite_role():
    record = AnnotationRecord(
        re_id="x",
        speaker=G,
        addressee=G,
        speaker_landmark=refset(umlm("alpha", 0, G)),
        cascade=AttributeCascade(True),
        addressee_landmark=None,
        reason="",
    )
    assert [d.rule_id for d in validate_record(record)] == ["addressee_role"]


def test_speaker_landmark_required_unless_quantificational():
    record = AnnotationRecord(
        re_id="x",
        speaker=G,
        addressee=F,
        speaker_landmark=None,
        cascade=AttributeCascade(False, False),
        addressee_landmark=None,
        reason="",
    )
    assert [d.rule_id for d in validate_record(record)] == ["speaker_landmark_missing"]


def test_quantificational_speaker_id_policy():
    record = make_record("q", shape=1, speaker_set=None)
    assert validate_record(record) == []
    strict = validate_record(record, quantificational_speaker_id="required")
    assert [d.rule_id for d in strict] == ["speaker_landmark_missing"]
    with pytest.raises(ValueError):
        validate_record(record, quantificational_speaker_id="sometimes")


def test_unknown_landmark_against_index(mini_indexes):
    index = mini_indexes["m0"]
    record = make_record(
        "x", shape=4, speaker_set=refset(umlm("parked_van", 0, G, map_pair="m0"))
    )
    assert validate_record(record, index) == []
    ghost = make_record(
        "x", shape=4, speaker_set=refset(umlm("ghost", 0, G, map_pair="m0"))
    )
    assert [d.rule_id for d in validate_record(ghost, index)] == ["unknown_landmark"]


def test_long_reason_is_a_warning_only():
    record = make_record("x", shape=1, speaker_set=None, reason="word " * 51)
    diagnostics = validate_record(record)
    assert [d.rule_id for d in diagnostics] == ["reason_length"]
    assert not diagnostics[0].is_error


# ------------------------------------------------------------- serialization

def test_record_dict_round_trip():
    for record in random_records(seed=11, count=50):
        assert record_from_dict(record_to_dict(record)) == record


def test_record_field_order_is_fixed():
    record = make_record("x", shape=5)
    assert list(record_to_dict(record)) == [
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
    ]


def test_record_from_dict_rejects_bad_payloads():
    base = record_to_dict(make_record("x", shape=5))
    missing = dict(base)
    del missing["speaker_landmark"]
    with pytest.raises(RecordParseError, match="missing"):
        record_from_dict(missing)
    bad_bool = dict(base)
    bad_bool["is_specified"] = "yes"
    with pytest.raises(RecordParseError, match="boolean"):
        record_from_dict(bad_bool)
    bad_set = dict(base)
    bad_set["speaker_landmark"] = "not an id"
    with pytest.raises(RecordParseError, match="speaker_landmark"):
        record_from_dict(bad_set)


# -------------------------------------------------------------------- schema

def test_schema_is_byte_stable():
    assert emit_output_schema() == emit_output_schema()
    parsed = json.loads(emit_output_schema())
    assert parsed["$schema"] == "https://json-schema.org/draft/2020-12/schema"


def _validator():
    return jsonschema.Draft202012Validator(json.loads(emit_output_schema()))


def test_schema_accepts_mock_provider_output(mini_corpus, mini_indexes, mini_registry):
    provider = MockProvider(
        mini_corpus, mini_indexes, mini_registry, MockPolicy("nearest_instance")
    )
    requests = build_requests(mini_corpus, mini_indexes)
    responses = submit_batch(provider, requests)
    validator = _validator()
    for response in responses:
        validator.validate(json.loads(response.raw_text))


def test_schema_rejects_missing_speaker_landmark():
    payload = record_to_dict(make_record("x", shape=5))
    del payload["speaker_landmark"]
    assert list(_validator().iter_errors([payload]))


def test_schema_rejects_bad_side_token():
    payload = record_to_dict(make_record("x", shape=5))
    payload["speaker_landmark"] = "t0_alpha#0@x"
    assert list(_validator().iter_errors([payload]))


def test_schema_rejects_gating_violations():
    payload = record_to_dict(make_record("x", shape=1, speaker_set=None))
    payload["is_specified"] = True
    assert list(_validator().iter_errors([payload]))
    payload2 = record_to_dict(make_record("x", shape=5))
    payload2["addressee_landmark"] = None
    assert list(_validator().iter_errors([payload2]))


def test_schema_rejects_same_role_speaker_addressee():
    payload = record_to_dict(make_record("x", shape=5))
    payload["addressee"] = payload["speaker"]
    assert list(_validator().iter_errors([payload]))


def test_schema_rejects_wrong_side_sets():
    payload = record_to_dict(make_record("x", shape=5))
    assert payload["speaker"] == "giver"
    payload["speaker_landmark"] = "t0_alpha#0@f"
    assert list(_validator().iter_errors([payload]))
    payload2 = record_to_dict(make_record("x", shape=5))
    payload2["addressee_landmark"] = "t0_alpha#0@g"  # addressee is the follower
    assert list(_validator().iter_errors([payload2]))


def test_schema_accepted_records_pass_cascade_validation():
    # Everything the schema admits also passes validate_record, except for
    # rules a schema cannot express: id existence needs the map pair index,
    # and imagined-copy equality compares two fields.
    validator = _validator()
    rng = random.Random(23)
    checked = 0
    for record in random_records(seed=23, count=300):
        payload = record_to_dict(record)
        # Random surface mutations that keep schema validity interesting.
        if rng.random() < 0.2:
            payload["reason"] = ""
        if not list(validator.iter_errors([payload])):
            parsed = record_from_dict(payload)
            errors = [
                d
                for d in validate_record(parsed)
                if d.is_error and d.rule_id not in ("unknown_landmark", "imagined_copy")
            ]
            assert errors == []
            checked += 1
    assert checked > 250
