"""Understanding-state derivation and corpus statistics.

Derives one understanding state per annotated reference expression (aligned,
misunderstood, or pending at one of the four cascade gates), optionally
unifying registered lexical name variants, and computes the downstream
statistics: state distributions, misunderstanding rates per landmark
discrepancy type, reference chains with turns-to-ground, and the
turns-to-ground cumulative distribution. All computations are pure and
deterministic.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .annotation import AnnotationRecord, validate_record
from .corpus import Corpus, MtlmKey
from .landmarks import (
    DiscrepancyType,
    LandmarkRefSet,
    LexicalVariantRegistry,
    MapPairIndex,
    canonical_name,
    classify_discrepancy,
)

MODES = ("raw", "unified")

PENDING_SUBTYPES = (
    "quantificational",
    "unspecified",
    "not_accommodated",
    "not_grounded",
)


class InvalidRecordError(ValueError):
    pass


@dataclass(frozen=True)
class UnderstandingState:
    kind: str  # "aligned" | "misunderstood" | "pending"
    subtype: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("aligned", "misunderstood", "pending"):
            raise ValueError(f"unknown state kind {self.kind!r}")
        if (self.kind == "pending") != (self.subtype is not None):
            raise ValueError("pending states and only pending states carry a subtype")
        if self.subtype is not None and self.subtype not in PENDING_SUBTYPES:
            raise ValueError(f"unknown pending subtype {self.subtype!r}")

    @property
    def label(self) -> str:
        return self.kind if self.subtype is None else f"{self.kind}:{self.subtype}"


ALIGNED = UnderstandingState("aligned")
MISUNDERSTOOD = UnderstandingState("misunderstood")


def pending(subtype: str) -> UnderstandingState:
    return UnderstandingState("pending", subtype)


def side_neutral_key(
    ref_set: LandmarkRefSet,
    registry: LexicalVariantRegistry,
    mode: str = "raw",
) -> frozenset[tuple[str, str, int]]:
    """Order- and side-insensitive comparison key for a landmark set.

    Each id reduces to (map pair, name, ordinal); unified mode first folds
    registered variant names onto their canonical member.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    keys = set()
    for umlm in ref_set.ids:
        name = umlm.name
        if mode == "unified":
            name = canonical_name(registry, MtlmKey(umlm.map_pair_id, name)).name
        keys.add((umlm.map_pair_id, name, umlm.ordinal))
    return frozenset(keys)


def derive_state(
    record: AnnotationRecord,
    registry: LexicalVariantRegistry,
    mode: str = "raw",
) -> UnderstandingState:
    """Map one validated record onto its understanding state."""
    errors = [d for d in validate_record(record) if d.is_error]
    if errors:
        raise InvalidRecordError(
            f"{record.re_id}: " + "; ".join(d.message for d in errors)
        )
    cascade = record.cascade
    if cascade.is_quantificational:
        return pending("quantificational")
    if not cascade.is_specified:
        return pending("unspecified")
    if not cascade.is_accommodated:
        return pending("not_accommodated")
    if not cascade.is_grounded:
        return pending("not_grounded")
    if cascade.is_imagined:
        return ALIGNED
    speaker_key = side_neutral_key(record.speaker_landmark, registry, mode)
    addressee_key = side_neutral_key(record.addressee_landmark, registry, mode)
    return ALIGNED if speaker_key == addressee_key else MISUNDERSTOOD


@dataclass(frozen=True)
class StateDistribution:
    mode: str
    total: int
    aligned: int
    pending_total: int
    misunderstood: int
    pending_by_subtype: Mapping[str, int]

    def count(self, state: str) -> int:
        return {
            "aligned": self.aligned,
            "pending": self.pending_total,
            "misunderstood": self.misunderstood,
        }[state]

    def percent(self, state: str) -> float:
        if self.total == 0:
            return 0.0
        return 100.0 * self.count(state) / self.total


def distribution(
    records: Iterable[AnnotationRecord],
    registry: LexicalVariantRegistry,
    mode: str = "raw",
) -> StateDistribution:
    """Count understanding states over a record set."""
    counts = {"aligned": 0, "misunderstood": 0, "pending": 0}
    subtypes = {name: 0 for name in PENDING_SUBTYPES}
    total = 0
    for record in records:
        state = derive_state(record, registry, mode)
        counts[state.kind] += 1
        if state.subtype is not None:
            subtypes[state.subtype] += 1
        total += 1
    return StateDistribution(
        mode=mode,
        total=total,
        aligned=counts["aligned"],
        pending_total=counts["pending"],
        misunderstood=counts["misunderstood"],
        pending_by_subtype=subtypes,
    )


@dataclass(frozen=True)
class TypeBucket:
    total_res: int
    misunderstandings: int

    @property
    def rate(self) -> float:
        return 0.0 if self.total_res == 0 else self.misunderstandings / self.total_res


def _as_index_map(
    index: MapPairIndex | Mapping[str, MapPairIndex],
) -> Mapping[str, MapPairIndex]:
    if isinstance(index, MapPairIndex):
        return {index.map_pair_id: index}
    return index


def _classifier(
    index: MapPairIndex | Mapping[str, MapPairIndex],
    registry: LexicalVariantRegistry,
) -> Callable[[MtlmKey], DiscrepancyType]:
    indexes = _as_index_map(index)

    def classify(key: MtlmKey) -> DiscrepancyType:
        if key.map_pair_id not in indexes:
            raise KeyError(f"no index for map pair {key.map_pair_id!r}")
        return classify_discrepancy(indexes[key.map_pair_id], registry, key)

    return classify


def _speaker_keys(
    record: AnnotationRecord, registry: LexicalVariantRegistry
) -> list[MtlmKey]:
    """Distinct canonical name-level keys of the speaker's intended set."""
    if record.speaker_landmark is None:
        return []
    seen = []
    for umlm in record.speaker_landmark.ids:
        key = canonical_name(registry, MtlmKey(umlm.map_pair_id, umlm.name))
        if key not in seen:
            seen.append(key)
    return seen


def misunderstanding_by_type(
    records: Iterable[AnnotationRecord],
    index: MapPairIndex | Mapping[str, MapPairIndex],
    registry: LexicalVariantRegistry,
) -> dict[DiscrepancyType, TypeBucket]:
    """Bucket expressions by the discrepancy type of the intended landmark.

    Misunderstandings count in unified mode. Records without a speaker
    landmark are invisible here; multi-landmark sets count once per distinct
    canonical name.
    """
    classify = _classifier(index, registry)
    totals = {t: 0 for t in DiscrepancyType}
    misses = {t: 0 for t in DiscrepancyType}
    for record in records:
        keys = _speaker_keys(record, registry)
        if not keys:
            continue
        state = derive_state(record, registry, "unified")
        for key in keys:
            bucket = classify(key)
            totals[bucket] += 1
            if state.kind == "misunderstood":
                misses[bucket] += 1
    return {t: TypeBucket(totals[t], misses[t]) for t in DiscrepancyType}


@dataclass(frozen=True)
class ChainRecord:
    dialogue_id: str
    chain_key: MtlmKey
    re_ids: tuple[str, ...]
    states: tuple[UnderstandingState, ...]
    utterance_indexes: tuple[int, ...]
    first_aligned_pos: int | None
    turns_to_ground: int | None

    @property
    def length(self) -> int:
        return len(self.re_ids)

    @property
    def reached_alignment(self) -> bool:
        return self.first_aligned_pos is not None


def turns_to_ground(chain: ChainRecord, corpus: Corpus) -> int | None:
    """Utterance gap between a chain's first expression and its first aligned one."""
    if chain.first_aligned_pos is None:
        return None
    first = corpus.re_span(chain.re_ids[0])[0].utterance_index_of_re(
        corpus.re_span(chain.re_ids[0])[1]
    )
    aligned_re = chain.re_ids[chain.first_aligned_pos]
    aligned = corpus.re_span(aligned_re)[0].utterance_index_of_re(
        corpus.re_span(aligned_re)[1]
    )
    if first is None or aligned is None:
        return None
    return aligned - first


def extract_chains(
    records: Iterable[AnnotationRecord],
    corpus: Corpus,
    registry: LexicalVariantRegistry,
) -> list[ChainRecord]:
    """Group expressions into per-dialogue chains over canonical landmark names.

    One chain per (dialogue, canonical name-level key) with at least one
    expression; expressions carrying several distinct landmarks join every
    member's chain. States are derived in unified mode, which also fixes
    first_aligned_pos and turns_to_ground.
    """
    grouped: dict[tuple[str, MtlmKey], list[tuple[int, tuple, str, UnderstandingState]]] = {}
    for record in records:
        keys = _speaker_keys(record, registry)
        if not keys:
            continue
        dialogue, re_span = corpus.re_span(record.re_id)
        utterance = dialogue.utterance_index_of_re(re_span)
        if utterance is None:
            raise InvalidRecordError(
                f"{record.re_id}: first unit resolves to no move, cannot order chain"
            )
        unit = dialogue.unit(re_span.unit_span[0])
        time_key = unit.sort_key if unit is not None else (float("inf"), "")
        state = derive_state(record, registry, "unified")
        for key in keys:
            grouped.setdefault((dialogue.dialogue_id, key), []).append(
                (utterance, time_key, record.re_id, state)
            )

    chains = []
    for (dialogue_id, key), entries in sorted(
        grouped.items(), key=lambda item: (item[0][0], item[0][1].map_pair_id, item[0][1].name)
    ):
        entries.sort(key=lambda e: (e[0], e[1], e[2]))
        states = tuple(e[3] for e in entries)
        first_aligned = next(
            (pos for pos, state in enumerate(states) if state.kind == "aligned"), None
        )
        utterances = tuple(e[0] for e in entries)
        ttg = None if first_aligned is None else utterances[first_aligned] - utterances[0]
        chains.append(
            ChainRecord(
                dialogue_id=dialogue_id,
                chain_key=key,
                re_ids=tuple(e[2] for e in entries),
                states=states,
                utterance_indexes=utterances,
                first_aligned_pos=first_aligned,
                turns_to_ground=ttg,
            )
        )
    return chains


@dataclass(frozen=True)
class ChainTypeStats:
    count: int
    mean_length: float
    max_length: int
    median_length: float


def chain_stats(
    chains: Sequence[ChainRecord],
    index: MapPairIndex | Mapping[str, MapPairIndex],
    registry: LexicalVariantRegistry,
) -> dict[DiscrepancyType, ChainTypeStats]:
    """Chain count and length statistics per discrepancy type."""
    classify = _classifier(index, registry)
    grouped: dict[DiscrepancyType, list[int]] = {t: [] for t in DiscrepancyType}
    for chain in chains:
        grouped[classify(chain.chain_key)].append(chain.length)
    out = {}
    for bucket, lengths in grouped.items():
        if lengths:
            out[bucket] = ChainTypeStats(
                count=len(lengths),
                mean_length=sum(lengths) / len(lengths),
                max_length=max(lengths),
                median_length=float(statistics.median(lengths)),
            )
        else:
            out[bucket] = ChainTypeStats(count=0, mean_length=0.0, max_length=0, median_length=0.0)
    return out


def ttg_cdf(
    chains: Sequence[ChainRecord],
    index: MapPairIndex | Mapping[str, MapPairIndex],
    registry: LexicalVariantRegistry,
) -> dict[DiscrepancyType, list[tuple[int, float]]]:
    """Cumulative turns-to-ground distribution over grounded chains, per type."""
    classify = _classifier(index, registry)
    grouped: dict[DiscrepancyType, list[int]] = {t: [] for t in DiscrepancyType}
    for chain in chains:
        if chain.turns_to_ground is not None:
            grouped[classify(chain.chain_key)].append(chain.turns_to_ground)
    out: dict[DiscrepancyType, list[tuple[int, float]]] = {}
    for bucket, turns in grouped.items():
        points: list[tuple[int, float]] = []
        if turns:
            turns.sort()
            total = len(turns)
            running = 0
            for value in sorted(set(turns)):
                running += turns.count(value)
                points.append((value, running / total))
        out[bucket] = points
    return out


def _fmt_percent(state: str, value: float) -> str:
    # Misunderstanding shares carry two decimals, the rest one.
    return f"{value:.2f}" if state == "misunderstood" else f"{value:.1f}"


def write_report_bundle(
    out_dir: str | Path,
    records: Sequence[AnnotationRecord],
    corpus: Corpus,
    indexes: Mapping[str, MapPairIndex],
    registry: LexicalVariantRegistry,
) -> dict[str, Path]:
    """Emit states.csv, by_type.csv, chains.csv, ttg_cdf.csv, summary.json."""
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    paths = {}

    distributions = {mode: distribution(records, registry, mode) for mode in MODES}
    states_path = out_path / "states.csv"
    with states_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["mode", "state", "count", "percent"])
        for mode in MODES:
            dist = distributions[mode]
            for state in ("aligned", "pending", "misunderstood"):
                writer.writerow(
                    [mode, state, dist.count(state), _fmt_percent(state, dist.percent(state))]
                )
    paths["states"] = states_path

    by_type = misunderstanding_by_type(records, indexes, registry)
    by_type_path = out_path / "by_type.csv"
    with by_type_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["discrepancy_type", "total_res", "misunderstandings", "rate_pct"])
        total = TypeBucket(
            sum(b.total_res for b in by_type.values()),
            sum(b.misunderstandings for b in by_type.values()),
        )
        for bucket_type in DiscrepancyType:
            bucket = by_type[bucket_type]
            writer.writerow(
                [
                    bucket_type.value,
                    bucket.total_res,
                    bucket.misunderstandings,
                    f"{100 * bucket.rate:.1f}",
                ]
            )
        writer.writerow(["total", total.total_res, total.misunderstandings, f"{100 * total.rate:.1f}"])
    paths["by_type"] = by_type_path

    chains = extract_chains(records, corpus, registry)
    classify = _classifier(indexes, registry)
    chains_path = out_path / "chains.csv"
    with chains_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "dialogue_id",
                "map_pair_id",
                "landmark_name",
                "discrepancy_type",
                "length",
                "first_utterance",
                "first_aligned_pos",
                "turns_to_ground",
            ]
        )
        for chain in chains:
            writer.writerow(
                [
                    chain.dialogue_id,
                    chain.chain_key.map_pair_id,
                    chain.chain_key.name,
                    classify(chain.chain_key).value,
                    chain.length,
                    chain.utterance_indexes[0],
                    "" if chain.first_aligned_pos is None else chain.first_aligned_pos,
                    "" if chain.turns_to_ground is None else chain.turns_to_ground,
                ]
            )
    paths["chains"] = chains_path

    cdf = ttg_cdf(chains, indexes, registry)
    ttg_path = out_path / "ttg_cdf.csv"
    with ttg_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["discrepancy_type", "turns", "cumulative_fraction"])
        for bucket_type in DiscrepancyType:
            for turns, fraction in cdf[bucket_type]:
                writer.writerow([bucket_type.value, turns, f"{fraction:.4f}"])
    paths["ttg_cdf"] = ttg_path

    stats = chain_stats(chains, indexes, registry)
    summary = {
        "total_records": len(records),
        "states": {
            mode: {
                "aligned": distributions[mode].aligned,
                "pending": distributions[mode].pending_total,
                "misunderstood": distributions[mode].misunderstood,
                "pending_by_subtype": dict(distributions[mode].pending_by_subtype),
            }
            for mode in MODES
        },
        "misunderstanding_by_type": {
            t.value: {
                "total_res": by_type[t].total_res,
                "misunderstandings": by_type[t].misunderstandings,
                "rate_pct": round(100 * by_type[t].rate, 2),
            }
            for t in DiscrepancyType
        },
        "chains": {
            "count": len(chains),
            "mean_length": round(
                sum(c.length for c in chains) / len(chains), 4
            )
            if chains
            else 0.0,
            "reached_alignment": sum(1 for c in chains if c.reached_alignment),
            "never_aligned": sum(1 for c in chains if not c.reached_alignment),
            "by_type": {
                t.value: {
                    "count": stats[t].count,
                    "mean_length": round(stats[t].mean_length, 4),
                    "max_length": stats[t].max_length,
                    "median_length": stats[t].median_length,
                }
                for t in DiscrepancyType
            },
        },
    }
    summary_path = out_path / "summary.json"
    summary_path.write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    paths["summary"] = summary_path
    return paths
