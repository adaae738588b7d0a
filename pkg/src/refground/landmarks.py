"""Unified landmark identifiers for dual-map dialogue corpora.

Implements the id grammar ``<map-id>_<landmark-name>#<ordinal>@<side>``, the
``+``-joined multi-landmark sets, bottom-to-top ordinal assignment with
cross-side instance matching, discrepancy classification of landmark names
(lexical / existence / multiplicity / identical), and the registry of
lexical name variants.

Everything here is immutable after construction and safe for concurrent
reads.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import (
    Corpus,
    MapLandmarkInstance,
    MtlmKey,
    SpeakerRole,
)

# Map ids carry no underscore, so the first underscore always separates the
# map id from the landmark name. Ordinals reject leading zeros to keep
# parse/format a bijection on canonical strings.
UMLM_PATTERN = r"[a-z0-9]+_[a-z0-9_]+#(?:0|[1-9][0-9]*)@[gf]"
REF_SET_PATTERN = rf"^{UMLM_PATTERN}(?:\+{UMLM_PATTERN})*$"

_UMLM_RE = re.compile(
    r"^(?P<map>[a-z0-9]+)_(?P<name>[a-z0-9_]+)#(?P<ordinal>0|[1-9][0-9]*)@(?P<side>[gf])$"
)

#: Fraction of the map-pair bounding-box diagonal used as the default
#: distance tolerance when pairing same-named instances across sides.
DEFAULT_EPSILON_FRACTION = 0.02

_SIDE_BY_TOKEN = {"g": SpeakerRole.GIVER, "f": SpeakerRole.FOLLOWER}


class LandmarkIdError(ValueError):
    """Text that does not parse under the landmark id grammar."""


class IndexBuildError(ValueError):
    """Inconsistent landmark inventory or registry during index assembly."""


class UnknownLandmarkKeyError(KeyError):
    """Name-level key absent from both sides of a map pair."""


@dataclass(frozen=True)
class UnifiedLandmarkId:
    map_pair_id: str
    name: str
    ordinal: int
    side: SpeakerRole

    def __post_init__(self) -> None:
        if not re.match(r"^[a-z0-9]+$", self.map_pair_id):
            raise LandmarkIdError(f"bad map pair id: {self.map_pair_id!r}")
        if not re.match(r"^[a-z0-9_]+$", self.name):
            raise LandmarkIdError(f"bad landmark name: {self.name!r}")
        if self.ordinal < 0:
            raise LandmarkIdError(f"negative ordinal: {self.ordinal}")

    @property
    def mtlm(self) -> MtlmKey:
        return MtlmKey(self.map_pair_id, self.name)

    def __str__(self) -> str:
        return format_umlm(self)


def parse_umlm(text: str) -> UnifiedLandmarkId:
    """Parse one unified landmark id; the exact inverse of format_umlm."""
    if not text:
        raise LandmarkIdError("empty landmark id")
    if text != text.strip():
        raise LandmarkIdError(f"surrounding whitespace in landmark id {text!r}")
    match = _UMLM_RE.match(text)
    if match is None:
        raise LandmarkIdError(_describe_umlm_failure(text))
    return UnifiedLandmarkId(
        map_pair_id=match.group("map"),
        name=match.group("name"),
        ordinal=int(match.group("ordinal")),
        side=_SIDE_BY_TOKEN[match.group("side")],
    )


def _describe_umlm_failure(text: str) -> str:
    if "#" not in text:
        return f"missing '#' ordinal separator in {text!r}"
    if "@" not in text:
        return f"missing '@' side separator in {text!r}"
    head, _, side = text.rpartition("@")
    if side not in _SIDE_BY_TOKEN:
        return f"side must be 'g' or 'f', got {side!r} in {text!r}"
    base, _, ordinal = head.rpartition("#")
    if not re.match(r"^(?:0|[1-9][0-9]*)$", ordinal):
        return f"malformed ordinal {ordinal!r} in {text!r}"
    if "_" not in base or not base.split("_", 1)[1]:
        return f"missing landmark name in {text!r}"
    return f"malformed landmark id {text!r}"


def format_umlm(umlm: UnifiedLandmarkId) -> str:
    """Canonical serialization of a unified landmark id."""
    return f"{umlm.map_pair_id}_{umlm.name}#{umlm.ordinal}@{umlm.side.side_token}"


@dataclass(frozen=True)
class LandmarkRefSet:
    """A non-empty set of same-side, same-map landmark ids.

    Construction normalizes to the canonical ascending (name, ordinal) order
    and rejects duplicates and mixed sides or map pairs.
    """

    ids: tuple[UnifiedLandmarkId, ...]

    def __post_init__(self) -> None:
        if not self.ids:
            raise LandmarkIdError("empty landmark set")
        if len({(i.name, i.ordinal) for i in self.ids}) != len(self.ids):
            raise LandmarkIdError(f"duplicate id in landmark set {self.ids}")
        if len({i.side for i in self.ids}) != 1:
            raise LandmarkIdError("landmark set mixes map sides")
        if len({i.map_pair_id for i in self.ids}) != 1:
            raise LandmarkIdError("landmark set mixes map pairs")
        ordered = tuple(sorted(self.ids, key=lambda i: (i.name, i.ordinal)))
        object.__setattr__(self, "ids", ordered)

    @classmethod
    def of(cls, ids: Iterable[UnifiedLandmarkId]) -> "LandmarkRefSet":
        return cls(tuple(ids))

    @property
    def side(self) -> SpeakerRole:
        return self.ids[0].side

    @property
    def map_pair_id(self) -> str:
        return self.ids[0].map_pair_id

    def __str__(self) -> str:
        return format_ref_set(self)


def parse_ref_set(text: str) -> LandmarkRefSet:
    """Parse a ``+``-joined landmark set."""
    if not text:
        raise LandmarkIdError("empty landmark set")
    parts = text.split("+")
    if any(not part for part in parts):
        raise LandmarkIdError(f"empty element in landmark set {text!r}")
    return LandmarkRefSet.of(parse_umlm(part) for part in parts)


def format_ref_set(ref_set: LandmarkRefSet) -> str:
    return "+".join(format_umlm(i) for i in ref_set.ids)


def mtlm_key(umlm: UnifiedLandmarkId) -> MtlmKey:
    """Project a unified id down to its name-level identity."""
    return MtlmKey(umlm.map_pair_id, umlm.name)


class DiscrepancyType(Enum):
    LEXICAL = "lexical"
    EXISTENCE = "existence"
    MULTIPLICITY = "multiplicity"
    IDENTICAL = "identical"


@dataclass(frozen=True)
class VariantPair:
    map_pair_id: str
    name_a: str
    name_b: str
    canonical_name: str

    def __post_init__(self) -> None:
        if self.name_a == self.name_b:
            raise IndexBuildError(f"variant pair repeats name {self.name_a!r}")
        if self.canonical_name not in (self.name_a, self.name_b):
            raise IndexBuildError(
                f"canonical name {self.canonical_name!r} not a member of "
                f"({self.name_a!r}, {self.name_b!r})"
            )

    @property
    def names(self) -> tuple[str, str]:
        return (self.name_a, self.name_b)


class LexicalVariantRegistry:
    """Configured pairs of alternative names for the same landmark."""

    def __init__(self, pairs: Iterable[VariantPair] = ()):
        self.pairs: tuple[VariantPair, ...] = tuple(pairs)
        members: dict[tuple[str, str], VariantPair] = {}
        for pair in self.pairs:
            for name in pair.names:
                key = (pair.map_pair_id, name)
                if key in members:
                    raise IndexBuildError(
                        f"name {name!r} appears in more than one variant pair on "
                        f"map {pair.map_pair_id!r}"
                    )
                members[key] = pair
        self._members = members

    def __len__(self) -> int:
        return len(self.pairs)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LexicalVariantRegistry) and self.pairs == other.pairs

    def pair_for(self, key: MtlmKey) -> VariantPair | None:
        return self._members.get((key.map_pair_id, key.name))

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "LexicalVariantRegistry":
        pairs = []
        with Path(path).open("r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise IndexBuildError(f"{path}:{lineno}: malformed JSON ({exc.msg})")
                pairs.append(
                    VariantPair(
                        map_pair_id=str(record["map_pair_id"]),
                        name_a=str(record["name_a"]),
                        name_b=str(record["name_b"]),
                        canonical_name=str(record["canonical_name"]),
                    )
                )
        return cls(pairs)


EMPTY_REGISTRY = LexicalVariantRegistry(())


def canonical_name(registry: LexicalVariantRegistry, key: MtlmKey) -> MtlmKey:
    """Map registered variant names onto their canonical member; idempotent."""
    pair = registry.pair_for(key)
    if pair is None:
        return key
    return MtlmKey(key.map_pair_id, pair.canonical_name)


@dataclass(frozen=True)
class AssignedInstance:
    umlm: UnifiedLandmarkId
    x: float
    y: float
    shared_with: UnifiedLandmarkId | None = None

    @property
    def is_shared(self) -> bool:
        return self.shared_with is not None


class MapPairIndex:
    """All unified ids of one map pair, with positions and share links."""

    def __init__(self, map_pair_id: str, epsilon: float, instances: Sequence[AssignedInstance]):
        self.map_pair_id = map_pair_id
        self.epsilon = epsilon
        self.instances: tuple[AssignedInstance, ...] = tuple(
            sorted(instances, key=lambda a: _candidate_sort_key(a.umlm))
        )
        self._by_id = {format_umlm(a.umlm): a for a in self.instances}
        by_name_side: dict[tuple[str, SpeakerRole], list[AssignedInstance]] = {}
        for inst in self.instances:
            by_name_side.setdefault((inst.umlm.name, inst.umlm.side), []).append(inst)
        self._by_name_side = {
            key: tuple(sorted(group, key=lambda a: a.umlm.ordinal))
            for key, group in by_name_side.items()
        }

    def ids(self) -> tuple[UnifiedLandmarkId, ...]:
        return tuple(a.umlm for a in self.instances)

    def has(self, umlm: UnifiedLandmarkId) -> bool:
        return format_umlm(umlm) in self._by_id

    def lookup(self, umlm: UnifiedLandmarkId) -> AssignedInstance | None:
        return self._by_id.get(format_umlm(umlm))

    def instances_for(self, name: str, side: SpeakerRole) -> tuple[AssignedInstance, ...]:
        return self._by_name_side.get((name, side), ())

    def names(self) -> tuple[str, ...]:
        return tuple(sorted({a.umlm.name for a in self.instances}))

    def shared_count(self, name: str) -> int:
        return sum(
            1
            for inst in self.instances_for(name, SpeakerRole.GIVER)
            if inst.is_shared
        )


def _distance(ax: float, ay: float, bx: float, by: float) -> float:
    return math.hypot(ax - bx, ay - by)


def _default_epsilon(landmarks: Sequence[MapLandmarkInstance]) -> float:
    xs = [i.x for i in landmarks]
    ys = [i.y for i in landmarks]
    diagonal = _distance(min(xs), min(ys), max(xs), max(ys))
    return DEFAULT_EPSILON_FRACTION * diagonal


def assign_unified_ids(
    landmarks: Sequence[MapLandmarkInstance],
    epsilon: float | None = None,
    registry: LexicalVariantRegistry | None = None,
) -> MapPairIndex:
    """Assign ordinals and share links to one map pair's landmark inventory.

    Same-named instances on opposite sides within ``epsilon`` of each other
    are paired and share one ordinal. Within a name, ordinals ascend with y
    (bottom of the map first) over the giver's instances plus any unpaired
    follower instances; ties break by ascending x, then giver before
    follower. Ambiguous pairings (an instance within epsilon of two
    counterparts) are an error, as are registry pairs whose members do not
    form a clean one-instance-per-side match.
    """
    if not landmarks:
        raise IndexBuildError("no landmarks given")
    map_ids = {i.map_pair_id for i in landmarks}
    if len(map_ids) != 1:
        raise IndexBuildError(f"landmarks span several map pairs: {sorted(map_ids)}")
    map_pair_id = landmarks[0].map_pair_id
    if epsilon is None:
        epsilon = _default_epsilon(landmarks)

    seen_positions: dict[tuple[SpeakerRole, str, float, float], MapLandmarkInstance] = {}
    for inst in landmarks:
        key = (inst.side, inst.name, inst.x, inst.y)
        if key in seen_positions:
            raise IndexBuildError(
                f"duplicate instance of {inst.name!r} at ({inst.x}, {inst.y}) "
                f"on the {inst.side.value} side"
            )
        seen_positions[key] = inst

    assigned: list[AssignedInstance] = []
    names = sorted({i.name for i in landmarks})
    for name in names:
        givers = sorted(
            (i for i in landmarks if i.name == name and i.side is SpeakerRole.GIVER),
            key=lambda i: (i.y, i.x),
        )
        followers = sorted(
            (i for i in landmarks if i.name == name and i.side is SpeakerRole.FOLLOWER),
            key=lambda i: (i.y, i.x),
        )

        edges = [
            (gi, fi)
            for gi, g in enumerate(givers)
            for fi, f in enumerate(followers)
            if _distance(g.x, g.y, f.x, f.y) <= epsilon
        ]
        for side_index, label in ((0, "giver"), (1, "follower")):
            degree: dict[int, int] = {}
            for edge in edges:
                degree[edge[side_index]] = degree.get(edge[side_index], 0) + 1
            if any(count > 1 for count in degree.values()):
                raise IndexBuildError(
                    f"ambiguous cross-side match for {name!r}: a {label} instance "
                    f"lies within epsilon of several counterparts"
                )
        partner_of_giver = {gi: fi for gi, fi in edges}
        partner_of_follower = {fi: gi for gi, fi in edges}

        ordering = [("g", i, inst) for i, inst in enumerate(givers)]
        ordering.extend(
            ("f", i, inst)
            for i, inst in enumerate(followers)
            if i not in partner_of_follower
        )
        ordering.sort(key=lambda item: (item[2].y, item[2].x, item[0] != "g"))

        ordinal_of: dict[tuple[str, int], int] = {}
        for ordinal, (tag, i, _inst) in enumerate(ordering):
            ordinal_of[(tag, i)] = ordinal
        for gi, fi in edges:
            ordinal_of[("f", fi)] = ordinal_of[("g", gi)]

        used: dict[tuple[SpeakerRole, int], tuple[str, int]] = {}
        for (tag, i), ordinal in ordinal_of.items():
            side = SpeakerRole.GIVER if tag == "g" else SpeakerRole.FOLLOWER
            slot = (side, ordinal)
            if slot in used and used[slot] != (tag, i):
                raise IndexBuildError(
                    f"duplicate resolved ordinal {ordinal} for {name!r} on the {side.value} side"
                )
            used[slot] = (tag, i)

        for gi, inst in enumerate(givers):
            ordinal = ordinal_of[("g", gi)]
            partner = None
            if gi in partner_of_giver:
                partner = UnifiedLandmarkId(map_pair_id, name, ordinal, SpeakerRole.FOLLOWER)
            assigned.append(
                AssignedInstance(
                    umlm=UnifiedLandmarkId(map_pair_id, name, ordinal, SpeakerRole.GIVER),
                    x=inst.x,
                    y=inst.y,
                    shared_with=partner,
                )
            )
        for fi, inst in enumerate(followers):
            ordinal = ordinal_of[("f", fi)]
            partner = None
            if fi in partner_of_follower:
                partner = UnifiedLandmarkId(map_pair_id, name, ordinal, SpeakerRole.GIVER)
            assigned.append(
                AssignedInstance(
                    umlm=UnifiedLandmarkId(map_pair_id, name, ordinal, SpeakerRole.FOLLOWER),
                    x=inst.x,
                    y=inst.y,
                    shared_with=partner,
                )
            )

    index = MapPairIndex(map_pair_id, epsilon, assigned)
    if registry is not None:
        _check_registry_consistency(index, registry)
    return index


def _variant_pair_match(index: MapPairIndex, pair: VariantPair) -> bool:
    """True when the pair's two names sit once each on opposite sides, close by."""
    if pair.map_pair_id != index.map_pair_id:
        return False
    placements = {}
    for name in pair.names:
        g = index.instances_for(name, SpeakerRole.GIVER)
        f = index.instances_for(name, SpeakerRole.FOLLOWER)
        if len(g) + len(f) != 1:
            return False
        placements[name] = g[0] if g else f[0]
    a, b = (placements[name] for name in pair.names)
    if a.umlm.side is b.umlm.side:
        return False
    return _distance(a.x, a.y, b.x, b.y) <= index.epsilon


def _check_registry_consistency(index: MapPairIndex, registry: LexicalVariantRegistry) -> None:
    for pair in registry.pairs:
        if pair.map_pair_id != index.map_pair_id:
            continue
        present = [
            name
            for name in pair.names
            if index.instances_for(name, SpeakerRole.GIVER)
            or index.instances_for(name, SpeakerRole.FOLLOWER)
        ]
        if not present:
            continue
        if not _variant_pair_match(index, pair):
            raise IndexBuildError(
                f"variant pair ({pair.name_a!r}, {pair.name_b!r}) on map "
                f"{pair.map_pair_id!r} does not form a single cross-side match; "
                f"a name may be absent, duplicated, or placed too far from its partner"
            )


def classify_discrepancy(
    index: MapPairIndex, registry: LexicalVariantRegistry, key: MtlmKey
) -> DiscrepancyType:
    """Classify one landmark name's cross-map relationship.

    Outcomes are mutually exclusive and total over names present in the
    index: lexical (registered variant pair matched across sides), existence
    (one side only), multiplicity (unequal counts with a shared instance),
    identical (everything else).
    """
    if key.map_pair_id != index.map_pair_id:
        raise UnknownLandmarkKeyError(f"{key} is not on map pair {index.map_pair_id!r}")
    giver_count = len(index.instances_for(key.name, SpeakerRole.GIVER))
    follower_count = len(index.instances_for(key.name, SpeakerRole.FOLLOWER))
    if giver_count == 0 and follower_count == 0:
        raise UnknownLandmarkKeyError(f"landmark name {key.name!r} unknown to the index")

    pair = registry.pair_for(key)
    if pair is not None and _variant_pair_match(index, pair):
        return DiscrepancyType.LEXICAL
    if (giver_count == 0) != (follower_count == 0):
        return DiscrepancyType.EXISTENCE
    if giver_count != follower_count and index.shared_count(key.name) >= 1:
        return DiscrepancyType.MULTIPLICITY
    return DiscrepancyType.IDENTICAL


def _candidate_sort_key(umlm: UnifiedLandmarkId) -> tuple:
    # Giver side listed before follower side.
    return (umlm.side is not SpeakerRole.GIVER, umlm.name, umlm.ordinal)


def landmark_candidates(index: MapPairIndex) -> str:
    """Deterministic one-id-per-line listing of both sides' landmark ids."""
    ordered = sorted(index.ids(), key=_candidate_sort_key)
    return "\n".join(format_umlm(i) for i in ordered)


def build_indexes(
    corpus: Corpus,
    epsilon: float | None = None,
    registry: LexicalVariantRegistry | None = None,
) -> dict[str, MapPairIndex]:
    """Assign unified ids for every map pair in a corpus."""
    return {
        map_pair_id: assign_unified_ids(instances, epsilon=epsilon, registry=registry)
        for map_pair_id, instances in corpus.map_pairs.items()
    }
