from __future__ import annotations

import csv
import json
import random

import pytest

from recordgen import (
    MAP,
    REGISTRY,
    VARIANT_A,
    VARIANT_B,
    make_record,
    random_records,
    refset,
    umlm,
)
from refground.analysis import (
    ALIGNED,
    MISUNDERSTOOD,
    ChainRecord,
    InvalidRecordError,
    chain_stats,
    derive_state,
    distribution,
    extract_chains,
    misunderstanding_by_type,
    pending,
    side_neutral_key,
    ttg_cdf,
    turns_to_ground,
    write_report_bundle,
)
from refground.annotation import AnnotationRecord, AttributeCascade
from refground.client import MockPolicy, MockProvider, run_annotation
from refground.corpus import (
    Corpus,
    Dialogue,
    DialogueMove,
    MapLandmarkInstance,
    MoveType,
    MtlmKey,
    ReferenceExpressionSpan,
    SpeakerRole,
    TimedUnit,
)
from refground.landmarks import (
    DiscrepancyType,
    LexicalVariantRegistry,
    assign_unified_ids,
    parse_ref_set,
)

G = SpeakerRole.GIVER
F = SpeakerRole.FOLLOWER


# ------------------------------------------------------------ side neutrality

def test_side_neutral_key_erases_side():
    left = side_neutral_key(parse_ref_set("m0_parked_van#1@g"), REGISTRY)
    right = side_neutral_key(parse_ref_set("m0_parked_van#1@f"), REGISTRY)
    assert left == right


def test_side_neutral_key_keeps_ordinal():
    left = side_neutral_key(parse_ref_set("m0_parked_van#0@g"), REGISTRY)
    right = side_neutral_key(parse_ref_set("m0_parked_van#1@f"), REGISTRY)
    assert left != right


def test_side_neutral_key_unified_folds_variants():
    left = parse_ref_set(f"{MAP}_{VARIANT_A}#0@g")
    right = parse_ref_set(f"{MAP}_{VARIANT_B}#0@f")
    assert side_neutral_key(left, REGISTRY, "raw") != side_neutral_key(right, REGISTRY, "raw")
    assert side_neutral_key(left, REGISTRY, "unified") == side_neutral_key(
        right, REGISTRY, "unified"
    )


def test_side_neutral_key_rejects_unknown_mode():
    with pytest.raises(ValueError):
        side_neutral_key(parse_ref_set("m0_a#0@g"), REGISTRY, "both")


# ------------------------------------------------------------- state deriving

def test_quantificational_is_pending():
    record = make_record("q", shape=1, speaker_set=None)
    assert derive_state(record, REGISTRY) == pending("quantificational")


def test_pending_subtypes_follow_gates():
    assert derive_state(make_record("a", shape=2), REGISTRY) == pending("unspecified")
    assert derive_state(make_record("b", shape=3), REGISTRY) == pending("not_accommodated")
    assert derive_state(make_record("c", shape=4), REGISTRY) == pending("not_grounded")


def test_imagined_record_is_aligned():
    record = make_record("i", shape=6)
    assert derive_state(record, REGISTRY) is ALIGNED or derive_state(record, REGISTRY) == ALIGNED


def test_grounded_match_vs_mismatch():
    speaker_set = refset(umlm("alpha", 0, G))
    match = make_record("m", shape=5, speaker_set=speaker_set,
                        addressee_set=refset(umlm("alpha", 0, F)))
    mismatch = make_record("n", shape=5, speaker_set=speaker_set,
                           addressee_set=refset(umlm("alpha", 1, F)))
    assert derive_state(match, REGISTRY) == ALIGNED
    assert derive_state(mismatch, REGISTRY) == MISUNDERSTOOD


def test_invalid_record_rejected():
    broken = AnnotationRecord(
        re_id="x",
        speaker=G,
        addressee=F,
        speaker_landmark=refset(umlm("alpha", 0, G)),
        cascade=AttributeCascade(True, is_specified=True),
        addressee_landmark=None,
        reason="",
    )
    with pytest.raises(InvalidRecordError):
        derive_state(broken, REGISTRY)


# -------------------------------------------------------------- distributions

def _table3_style_records():
    """Five records: two aligned, one quantificational, one unspecified, one
    lexical mismatch that unification converts to aligned."""
    return [
        make_record("a1", shape=5, speaker_set=refset(umlm("alpha", 0, G)),
                    addressee_set=refset(umlm("alpha", 0, F))),
        make_record("a2", shape=6, speaker_set=refset(umlm("beta", 1, G))),
        make_record("p1", shape=1, speaker_set=None),
        make_record("p2", shape=2),
        make_record("m1", shape=5,
                    speaker_set=refset(umlm(VARIANT_A, 0, G)),
                    addressee_set=refset(umlm(VARIANT_B, 0, F))),
    ]


def test_distribution_raw_and_unified_counts():
    records = _table3_style_records()
    raw = distribution(records, REGISTRY, "raw")
    unified = distribution(records, REGISTRY, "unified")
    assert (raw.aligned, raw.pending_total, raw.misunderstood) == (2, 2, 1)
    assert (unified.aligned, unified.pending_total, unified.misunderstood) == (3, 2, 0)
    assert raw.total == unified.total == 5
    assert raw.pending_by_subtype["quantificational"] == 1
    assert raw.pending_by_subtype["unspecified"] == 1


def test_distribution_percentages_sum_to_100():
    records = _table3_style_records()
    dist = distribution(records, REGISTRY, "raw")
    assert sum(dist.percent(s) for s in ("aligned", "pending", "misunderstood")) == pytest.approx(100.0)


def test_distribution_empty_set():
    dist = distribution([], REGISTRY, "raw")
    assert dist.total == 0
    assert dist.percent("aligned") == 0.0


def test_unification_only_moves_misunderstood_to_aligned():
    records = random_records(seed=5, count=400)
    for record in records:
        raw_state = derive_state(record, REGISTRY, "raw")
        unified_state = derive_state(record, REGISTRY, "unified")
        if raw_state != unified_state:
            assert raw_state == MISUNDERSTOOD
            assert unified_state == ALIGNED


def test_unification_arithmetic_identity():
    records = random_records(seed=6, count=500)
    raw = distribution(records, REGISTRY, "raw")
    unified = distribution(records, REGISTRY, "unified")
    assert raw.pending_total == unified.pending_total
    assert raw.pending_by_subtype == unified.pending_by_subtype
    assert unified.aligned - raw.aligned == raw.misunderstood - unified.misunderstood


# ------------------------------------------------------------------- by type

def test_misunderstanding_by_type_mini(mini_corpus, mini_indexes, mini_registry):
    provider = MockProvider(
        mini_corpus, mini_indexes, mini_registry, MockPolicy("nearest_instance")
    )
    result = run_annotation(
        mini_corpus, mini_indexes, mini_registry, provider, run_id="r"
    )
    table = misunderstanding_by_type(result.records, mini_indexes, mini_registry)
    assert table[DiscrepancyType.MULTIPLICITY].total_res == 3
    assert table[DiscrepancyType.MULTIPLICITY].misunderstandings == 3
    assert table[DiscrepancyType.IDENTICAL].misunderstandings == 0
    assert table[DiscrepancyType.LEXICAL].misunderstandings == 0
    assert table[DiscrepancyType.EXISTENCE].misunderstandings == 0
    assert table[DiscrepancyType.MULTIPLICITY].rate > table[DiscrepancyType.IDENTICAL].rate


def test_by_type_skips_records_without_speaker_landmark(mini_indexes, mini_registry):
    records = [make_record("q", shape=1, speaker_set=None)]
    table = misunderstanding_by_type(records, mini_indexes, mini_registry)
    assert all(bucket.total_res == 0 for bucket in table.values())


def test_by_type_unknown_map_pair_raises(mini_registry, mini_indexes):
    records = [make_record("x", shape=4, speaker_set=refset(umlm("alpha", 0, G, map_pair="zz")))]
    with pytest.raises(KeyError):
        misunderstanding_by_type(records, mini_indexes, mini_registry)


# -------------------------------------------------------------------- chains

def _chain_corpus():
    """One dialogue, nine alternating moves, each with a single unit."""
    units = []
    moves = []
    for n in range(1, 10):
        role = G if n % 2 else F
        units.append(
            TimedUnit(f"u{n}", "dx", role, float(n), float(n) + 0.5, f"tok{n}")
        )
        moves.append(
            DialogueMove(f"m{n}", "dx", role, MoveType.INSTRUCT if n % 2 else MoveType.ACKNOWLEDGE, n, (f"u{n}",))
        )
    from refground.corpus import Transaction

    transactions = (Transaction(0, "dx", tuple(f"m{n}" for n in range(1, 10))),)
    res = tuple(
        ReferenceExpressionSpan(
            re_id=f"x{n}",
            dialogue_id="dx",
            role=G if n % 2 else F,
            unit_span=(f"u{n}",),
            surface_text=f"tok{n}",
            original_mtlm=MtlmKey(MAP, "alpha"),
            transaction_index=0,
        )
        for n in (1, 4, 9)
    )
    dialogue = Dialogue("dx", MAP, tuple(units), tuple(moves), transactions, res)
    landmarks = tuple(
        MapLandmarkInstance(MAP, side, name, float(i), float(i))
        for i, name in enumerate(("alpha", "beta", VARIANT_A))
        for side in (G, F)
    )
    return Corpus({"dx": dialogue}, {MAP: landmarks}, provenance="test")


def test_single_re_yields_single_chain():
    corpus = _chain_corpus()
    records = [
        make_record("x1", shape=5, speaker_set=refset(umlm("alpha", 0, G)),
                    addressee_set=refset(umlm("alpha", 0, F)))
    ]
    chains = extract_chains(records, corpus, REGISTRY)
    assert len(chains) == 1
    assert chains[0].length == 1
    assert chains[0].turns_to_ground == 0


def test_chain_of_three_mentions():
    corpus = _chain_corpus()
    records = [
        make_record("x1", shape=2, speaker_set=refset(umlm("alpha", 0, G))),
        make_record("x4", shape=4, speaker_set=refset(umlm("alpha", 0, F)), speaker=F),
        make_record("x9", shape=5, speaker_set=refset(umlm("alpha", 0, G)),
                    addressee_set=refset(umlm("alpha", 0, F))),
    ]
    chains = extract_chains(records, corpus, REGISTRY)
    assert len(chains) == 1
    chain = chains[0]
    assert chain.re_ids == ("x1", "x4", "x9")
    assert chain.first_aligned_pos == 2
    assert chain.utterance_indexes == (1, 4, 9)


def test_turns_to_ground_difference():
    # First mention at utterance 4, first aligned mention at utterance 9.
    corpus = _chain_corpus()
    records = [
        make_record("x4", shape=4, speaker_set=refset(umlm("alpha", 0, F)), speaker=F),
        make_record("x9", shape=5, speaker_set=refset(umlm("alpha", 0, G)),
                    addressee_set=refset(umlm("alpha", 0, F))),
    ]
    chain = extract_chains(records, corpus, REGISTRY)[0]
    assert chain.turns_to_ground == 5
    assert turns_to_ground(chain, corpus) == 5


def test_chain_without_alignment_has_no_ttg():
    corpus = _chain_corpus()
    records = [make_record("x1", shape=2, speaker_set=refset(umlm("alpha", 0, G)))]
    chain = extract_chains(records, corpus, REGISTRY)[0]
    assert chain.first_aligned_pos is None
    assert chain.turns_to_ground is None
    assert turns_to_ground(chain, corpus) is None


def test_multi_id_sets_fan_out_to_each_chain():
    corpus = _chain_corpus()
    records = [
        make_record(
            "x1",
            shape=5,
            speaker_set=refset(umlm("alpha", 0, G), umlm("beta", 0, G)),
            addressee_set=refset(umlm("alpha", 0, F), umlm("beta", 0, F)),
        )
    ]
    chains = extract_chains(records, corpus, REGISTRY)
    assert sorted(c.chain_key.name for c in chains) == ["alpha", "beta"]


def test_variant_names_share_one_chain():
    corpus = _chain_corpus()
    records = [
        make_record("x1", shape=4, speaker_set=refset(umlm(VARIANT_A, 0, G))),
        make_record("x4", shape=4, speaker_set=refset(umlm(VARIANT_B, 0, F)), speaker=F),
    ]
    chains = extract_chains(records, corpus, REGISTRY)
    assert len(chains) == 1
    assert chains[0].chain_key == MtlmKey(MAP, VARIANT_A)


def test_chains_partition_records_by_distinct_keys():
    corpus = _chain_corpus()
    records = [
        make_record(
            "x1",
            shape=5,
            speaker_set=refset(umlm("alpha", 0, G), umlm("alpha", 1, G)),
            addressee_set=refset(umlm("alpha", 0, F)),
        )
    ]
    # Two ids, one distinct name-level key: exactly one chain.
    chains = extract_chains(records, corpus, REGISTRY)
    assert len(chains) == 1


# ------------------------------------------------------------------ stats/cdf

def _stats_index():
    landmarks = [
        MapLandmarkInstance(MAP, side, name, float(i), float(i))
        for i, name in enumerate(("alpha", "beta"))
        for side in (G, F)
    ]
    return assign_unified_ids(landmarks, epsilon=0.1)


def _chain(key_name, length, ttg, dialogue="dx"):
    states = [pending("unspecified")] * length
    first_aligned = None
    if ttg is not None:
        states[-1] = ALIGNED
        first_aligned = length - 1
    return ChainRecord(
        dialogue_id=dialogue,
        chain_key=MtlmKey(MAP, key_name),
        re_ids=tuple(f"r{i}" for i in range(length)),
        states=tuple(states),
        utterance_indexes=tuple(range(1, length + 1)),
        first_aligned_pos=first_aligned,
        turns_to_ground=ttg,
    )


def test_chain_stats_mean_median_max():
    chains = [_chain("alpha", 2, None), _chain("alpha", 4, None, dialogue="dy")]
    stats = chain_stats(chains, _stats_index(), LexicalVariantRegistry())
    bucket = stats[DiscrepancyType.IDENTICAL]
    assert bucket.count == 2
    assert bucket.mean_length == 3
    assert bucket.median_length == 3
    assert bucket.max_length == 4


def test_ttg_cdf_single_point():
    chains = [_chain("alpha", 1, 0), _chain("alpha", 2, 0, dialogue="dy")]
    cdf = ttg_cdf(chains, _stats_index(), LexicalVariantRegistry())
    assert cdf[DiscrepancyType.IDENTICAL] == [(0, 1.0)]


def test_ttg_cdf_fixture_points():
    ttgs = [0, 2, 2, 5]
    chains = [
        _chain("alpha", 3, value, dialogue=f"d{i}") for i, value in enumerate(ttgs)
    ]
    cdf = ttg_cdf(chains, _stats_index(), LexicalVariantRegistry())
    assert cdf[DiscrepancyType.IDENTICAL] == [(0, 0.25), (2, 0.75), (5, 1.0)]


def test_ttg_cdf_fractions_nondecreasing_to_one():
    rng = random.Random(3)
    chains = [
        _chain("alpha", 1, rng.randint(0, 6), dialogue=f"d{i}") for i in range(40)
    ]
    cdf = ttg_cdf(chains, _stats_index(), LexicalVariantRegistry())
    points = cdf[DiscrepancyType.IDENTICAL]
    fractions = [f for _, f in points]
    assert fractions == sorted(fractions)
    assert fractions[-1] == pytest.approx(1.0)


# ------------------------------------------------------------- report bundle

def test_report_bundle_files_and_shapes(
    mini_corpus, mini_indexes, mini_registry, tmp_path
):
    provider = MockProvider(
        mini_corpus, mini_indexes, mini_registry, MockPolicy("nearest_instance")
    )
    result = run_annotation(mini_corpus, mini_indexes, mini_registry, provider, run_id="r")
    paths = write_report_bundle(
        tmp_path, result.records, mini_corpus, mini_indexes, mini_registry
    )
    assert set(paths) == {"states", "by_type", "chains", "ttg_cdf", "summary"}

    with paths["states"].open() as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 6
    raw_misunderstood = next(
        r for r in rows if r["mode"] == "raw" and r["state"] == "misunderstood"
    )
    assert raw_misunderstood["count"] == "5"
    assert raw_misunderstood["percent"] == "62.50"
    raw_aligned = next(r for r in rows if r["mode"] == "raw" and r["state"] == "aligned")
    assert raw_aligned["percent"] == "25.0"

    with paths["by_type"].open() as handle:
        by_type = {r["discrepancy_type"]: r for r in csv.DictReader(handle)}
    assert by_type["multiplicity"]["misunderstandings"] == "3"
    assert float(by_type["multiplicity"]["rate_pct"]) > float(
        by_type["identical"]["rate_pct"]
    )
    assert by_type["total"]["total_res"] == "8"

    summary = json.loads(paths["summary"].read_text())
    assert summary["states"]["unified"]["aligned"] == 4
    assert summary["chains"]["count"] == 6
    assert summary["chains"]["reached_alignment"] == 3
    assert summary["chains"]["never_aligned"] == 3


def test_chain_membership_matches_distinct_speaker_keys(
    mini_corpus, mini_indexes, mini_registry
):
    # Every record with a speaker landmark joins exactly one chain per
    # distinct canonical name-level key of its set.
    provider = MockProvider(
        mini_corpus, mini_indexes, mini_registry, MockPolicy("nearest_instance")
    )
    result = run_annotation(mini_corpus, mini_indexes, mini_registry, provider, run_id="r")
    chains = extract_chains(result.records, mini_corpus, mini_registry)
    membership: dict[str, int] = {}
    for chain in chains:
        for re_id in chain.re_ids:
            membership[re_id] = membership.get(re_id, 0) + 1
    from refground.landmarks import canonical_name
    from refground.corpus import MtlmKey

    for record in result.records:
        if record.speaker_landmark is None:
            assert record.re_id not in membership
            continue
        distinct = {
            canonical_name(mini_registry, MtlmKey(i.map_pair_id, i.name))
            for i in record.speaker_landmark.ids
        }
        assert membership[record.re_id] == len(distinct)
