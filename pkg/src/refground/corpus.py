"""Corpus model for asymmetric map-pair dialogue data.

Holds the in-memory representation of a MapTask-style corpus (timed units,
moves, transactions, reference expressions, per-map landmark inventories),
plus ingestion from the canonical JSONL interchange files and structural
validation. Corpora are immutable after ingestion and safe to read from
multiple threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Mapping, Protocol, Sequence

LANDMARK_NAME_RE = re.compile(r"^[a-z0-9_]+$")
MAP_PAIR_ID_RE = re.compile(r"^[a-z0-9]+$")

INTERCHANGE_FILES = (
    "dialogues.jsonl",
    "units.jsonl",
    "moves.jsonl",
    "transactions.jsonl",
    "res.jsonl",
    "landmarks.jsonl",
)


class CorpusError(ValueError):
    """Malformed corpus input that cannot be represented at all."""


class IngestError(CorpusError):
    """Raised by strict ingestion when error diagnostics are present."""

    def __init__(self, diagnostics: Sequence["Diagnostic"]):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(f"{d.locus}: {d.message}" for d in self.diagnostics[:5])
        extra = "" if len(self.diagnostics) <= 5 else f" (+{len(self.diagnostics) - 5} more)"
        super().__init__(f"{len(self.diagnostics)} ingest error(s): {lines}{extra}")


class UnknownDialogueError(KeyError):
    pass


class UnknownTransactionError(KeyError):
    pass


class SpeakerRole(Enum):
    GIVER = "giver"
    FOLLOWER = "follower"

    @property
    def opposite(self) -> "SpeakerRole":
        return SpeakerRole.FOLLOWER if self is SpeakerRole.GIVER else SpeakerRole.GIVER

    @property
    def side_token(self) -> str:
        """Single-letter map-side tag used inside landmark ids."""
        return "g" if self is SpeakerRole.GIVER else "f"

    @classmethod
    def from_text(cls, text: str) -> "SpeakerRole":
        table = {"giver": cls.GIVER, "g": cls.GIVER, "follower": cls.FOLLOWER, "f": cls.FOLLOWER}
        try:
            return table[text]
        except KeyError:
            raise CorpusError(f"unknown speaker role: {text!r}") from None


class MoveType(Enum):
    INSTRUCT = "instruct"
    EXPLAIN = "explain"
    CHECK = "check"
    ALIGN = "align"
    QUERY_YN = "query_yn"
    QUERY_W = "query_w"
    ACKNOWLEDGE = "acknowledge"
    REPLY_Y = "reply_y"
    REPLY_N = "reply_n"
    REPLY_W = "reply_w"
    CLARIFY = "clarify"
    READY = "ready"
    OTHER = "other"

    @classmethod
    def from_text(cls, text: str) -> "MoveType":
        try:
            return cls(text)
        except ValueError:
            raise CorpusError(f"unknown move type: {text!r}") from None


@dataclass(frozen=True)
class MtlmKey:
    """Name-level landmark identity: map pair plus landmark name.

    Blind to map side and instance ordinal, matching the identity scheme of
    the source corpus annotations.
    """

    map_pair_id: str
    name: str

    def __post_init__(self) -> None:
        if not MAP_PAIR_ID_RE.match(self.map_pair_id):
            raise CorpusError(f"bad map pair id: {self.map_pair_id!r}")
        if not LANDMARK_NAME_RE.match(self.name):
            raise CorpusError(f"bad landmark name: {self.name!r}")


@dataclass(frozen=True)
class TimedUnit:
    unit_id: str
    dialogue_id: str
    role: SpeakerRole
    start_s: float
    end_s: float
    token: str

    def __post_init__(self) -> None:
        if self.start_s < 0:
            raise CorpusError(f"unit {self.unit_id}: negative start time")
        if self.end_s < self.start_s:
            raise CorpusError(f"unit {self.unit_id}: end before start")

    @property
    def sort_key(self) -> tuple[float, str]:
        return (self.start_s, self.unit_id)


@dataclass(frozen=True)
class DialogueMove:
    move_id: str
    dialogue_id: str
    role: SpeakerRole
    move_type: MoveType
    utterance_index: int
    unit_span: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.utterance_index < 1:
            raise CorpusError(f"move {self.move_id}: utterance_index must be >= 1")
        if not self.unit_span:
            raise CorpusError(f"move {self.move_id}: empty unit span")


@dataclass(frozen=True)
class Transaction:
    transaction_index: int
    dialogue_id: str
    move_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.transaction_index < 0:
            raise CorpusError(
                f"dialogue {self.dialogue_id}: negative transaction index"
            )


@dataclass(frozen=True)
class ReferenceExpressionSpan:
    re_id: str
    dialogue_id: str
    role: SpeakerRole
    unit_span: tuple[str, ...]
    surface_text: str
    original_mtlm: MtlmKey
    transaction_index: int

    def __post_init__(self) -> None:
        if not self.unit_span:
            raise CorpusError(f"re {self.re_id}: empty unit span")


@dataclass(frozen=True)
class MapLandmarkInstance:
    map_pair_id: str
    side: SpeakerRole
    name: str
    x: float
    y: float

    def __post_init__(self) -> None:
        if not MAP_PAIR_ID_RE.match(self.map_pair_id):
            raise CorpusError(f"bad map pair id: {self.map_pair_id!r}")
        if not LANDMARK_NAME_RE.match(self.name):
            raise CorpusError(f"bad landmark name: {self.name!r}")


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    locus: str
    message: str

    @property
    def is_error(self) -> bool:
        return self.severity == "error"


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    map_pair_id: str
    units: tuple[TimedUnit, ...]
    moves: tuple[DialogueMove, ...]
    transactions: tuple[Transaction, ...]
    res: tuple[ReferenceExpressionSpan, ...]
    _unit_by_id: dict = field(init=False, compare=False, repr=False)
    _move_of_unit: dict = field(init=False, compare=False, repr=False)
    _transaction_of_move: dict = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_unit_by_id", {u.unit_id: u for u in self.units})
        move_of_unit: dict[str, DialogueMove] = {}
        for move in self.moves:
            for unit_id in move.unit_span:
                move_of_unit.setdefault(unit_id, move)
        object.__setattr__(self, "_move_of_unit", move_of_unit)
        txn_of_move = {
            move_id: txn.transaction_index
            for txn in self.transactions
            for move_id in txn.move_ids
        }
        object.__setattr__(self, "_transaction_of_move", txn_of_move)

    def unit(self, unit_id: str) -> TimedUnit | None:
        return self._unit_by_id.get(unit_id)

    def move_for_unit(self, unit_id: str) -> DialogueMove | None:
        return self._move_of_unit.get(unit_id)

    def transaction_of_move(self, move_id: str) -> int | None:
        return self._transaction_of_move.get(move_id)

    def transaction_of_unit(self, unit_id: str) -> int | None:
        move = self.move_for_unit(unit_id)
        return None if move is None else self.transaction_of_move(move.move_id)

    def utterance_index_of_re(self, re_span: ReferenceExpressionSpan) -> int | None:
        """Utterance index of the move holding the expression's first unit."""
        move = self.move_for_unit(re_span.unit_span[0])
        return None if move is None else move.utterance_index


@dataclass(frozen=True, eq=True)
class Corpus:
    dialogues: dict[str, Dialogue]
    map_pairs: dict[str, tuple[MapLandmarkInstance, ...]]
    provenance: str
    _re_index: dict = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        index: dict[str, tuple[Dialogue, ReferenceExpressionSpan]] = {}
        for dialogue in self.dialogues.values():
            for re_span in dialogue.res:
                index[re_span.re_id] = (dialogue, re_span)
        object.__setattr__(self, "_re_index", index)

    def dialogue(self, dialogue_id: str) -> Dialogue:
        try:
            return self.dialogues[dialogue_id]
        except KeyError:
            raise UnknownDialogueError(dialogue_id) from None

    def re_span(self, re_id: str) -> tuple[Dialogue, ReferenceExpressionSpan]:
        try:
            return self._re_index[re_id]
        except KeyError:
            raise KeyError(f"unknown reference expression: {re_id}") from None

    def has_re(self, re_id: str) -> bool:
        return re_id in self._re_index

    def iter_res(self) -> Iterator[ReferenceExpressionSpan]:
        for dialogue in self.dialogues.values():
            yield from dialogue.res


@dataclass(frozen=True)
class ResolvedMove:
    """A dialogue move with its timed units resolved to tokens."""

    move: DialogueMove
    units: tuple[TimedUnit, ...]

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(u.token for u in self.units)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class IngestOptions:
    strict: bool = True
    provenance: str = ""


class CorpusSource(Protocol):
    """Adapter contract: streams of (record, locus) pairs per collection."""

    def describe(self) -> str: ...

    def iter_records(self, collection: str) -> Iterator[tuple[dict, str]]: ...


class JsonlDirectorySource:
    """Reads the canonical interchange files from a directory.

    Missing individual files are treated as empty streams; a directory with
    none of the interchange files at all is rejected.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def describe(self) -> str:
        return str(self.root)

    def iter_records(self, collection: str) -> Iterator[tuple[dict, str]]:
        path = self.root / f"{collection}.jsonl"
        if not path.exists():
            return
        with path.open("r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                locus = f"{path.name}:{lineno}"
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{locus}: malformed JSON ({exc.msg})") from None
                if not isinstance(record, dict):
                    raise CorpusError(f"{locus}: expected a JSON object")
                yield record, locus


def _require(record: Mapping, key: str, locus: str):
    if key not in record or record[key] is None:
        raise CorpusError(f"{locus}: missing required field {key!r}")
    return record[key]


def _parse_unit(record: Mapping, locus: str) -> TimedUnit:
    return TimedUnit(
        unit_id=str(_require(record, "unit_id", locus)),
        dialogue_id=str(_require(record, "dialogue_id", locus)),
        role=SpeakerRole.from_text(str(_require(record, "role", locus))),
        start_s=float(_require(record, "start_s", locus)),
        end_s=float(_require(record, "end_s", locus)),
        token=str(_require(record, "token", locus)),
    )


def _parse_move(record: Mapping, locus: str) -> DialogueMove:
    return DialogueMove(
        move_id=str(_require(record, "move_id", locus)),
        dialogue_id=str(_require(record, "dialogue_id", locus)),
        role=SpeakerRole.from_text(str(_require(record, "role", locus))),
        move_type=MoveType.from_text(str(_require(record, "move_type", locus))),
        utterance_index=int(_require(record, "utterance_index", locus)),
        unit_span=tuple(str(u) for u in _require(record, "unit_span", locus)),
    )


def _parse_transaction(record: Mapping, locus: str) -> Transaction:
    return Transaction(
        transaction_index=int(_require(record, "transaction_index", locus)),
        dialogue_id=str(_require(record, "dialogue_id", locus)),
        move_ids=tuple(str(m) for m in record.get("move_ids", ())),
    )


def _parse_re(record: Mapping, locus: str) -> tuple[dict, str]:
    mtlm = _require(record, "original_mtlm", locus)
    if not isinstance(mtlm, Mapping):
        raise CorpusError(f"{locus}: original_mtlm must be an object")
    parsed = {
        "re_id": str(_require(record, "re_id", locus)),
        "dialogue_id": str(_require(record, "dialogue_id", locus)),
        "role": SpeakerRole.from_text(str(_require(record, "role", locus))),
        "unit_span": tuple(str(u) for u in _require(record, "unit_span", locus)),
        "surface_text": str(record.get("surface_text", "")),
        "original_mtlm": MtlmKey(
            map_pair_id=str(_require(mtlm, "map_pair_id", locus)),
            name=str(_require(mtlm, "name", locus)),
        ),
        # Resolved against the unit timeline during assembly when absent.
        "transaction_index": record.get("transaction_index"),
    }
    return parsed, locus


def _parse_landmark(record: Mapping, locus: str) -> MapLandmarkInstance:
    return MapLandmarkInstance(
        map_pair_id=str(_require(record, "map_pair_id", locus)),
        side=SpeakerRole.from_text(str(_require(record, "side", locus))),
        name=str(_require(record, "name", locus)),
        x=float(_require(record, "x", locus)),
        y=float(_require(record, "y", locus)),
    )


def ingest_with_diagnostics(
    source: str | Path | CorpusSource,
    options: IngestOptions | None = None,
) -> tuple[Corpus, list[Diagnostic]]:
    """Build a corpus from an interchange source, returning all diagnostics.

    Structural problems that leave a record representable (dangling
    references, ordering violations) surface as diagnostics; problems that do
    not (malformed JSON, duplicate primary ids, bad field values) raise
    CorpusError immediately.
    """
    options = options or IngestOptions()
    if not isinstance(source, (str, Path)):
        adapter: CorpusSource = source
    else:
        root = Path(source)
        if not any((root / name).exists() for name in INTERCHANGE_FILES):
            raise CorpusError(f"{root}: no interchange files found")
        adapter = JsonlDirectorySource(root)

    dialogue_rows: dict[str, tuple[dict, str]] = {}
    for record, locus in adapter.iter_records("dialogues"):
        did = str(_require(record, "dialogue_id", locus))
        if did in dialogue_rows:
            raise CorpusError(f"{locus}: duplicate dialogue id {did!r}")
        dialogue_rows[did] = (record, locus)

    units: dict[str, dict[str, TimedUnit]] = {}
    for record, locus in adapter.iter_records("units"):
        unit = _parse_unit(record, locus)
        per_dialogue = units.setdefault(unit.dialogue_id, {})
        if unit.unit_id in per_dialogue:
            raise CorpusError(f"{locus}: duplicate unit id {unit.unit_id!r}")
        per_dialogue[unit.unit_id] = unit

    moves: dict[str, dict[str, DialogueMove]] = {}
    for record, locus in adapter.iter_records("moves"):
        move = _parse_move(record, locus)
        per_dialogue = moves.setdefault(move.dialogue_id, {})
        if move.move_id in per_dialogue:
            raise CorpusError(f"{locus}: duplicate move id {move.move_id!r}")
        per_dialogue[move.move_id] = move

    transactions: dict[str, list[Transaction]] = {}
    for record, locus in adapter.iter_records("transactions"):
        txn = _parse_transaction(record, locus)
        transactions.setdefault(txn.dialogue_id, []).append(txn)

    re_rows: dict[str, tuple[dict, str]] = {}
    for record, locus in adapter.iter_records("res"):
        parsed, locus = _parse_re(record, locus)
        rid = parsed["re_id"]
        if rid in re_rows:
            raise CorpusError(f"{locus}: duplicate reference expression id {rid!r}")
        re_rows[rid] = (parsed, locus)

    landmarks: dict[str, list[MapLandmarkInstance]] = {}
    for record, locus in adapter.iter_records("landmarks"):
        instance = _parse_landmark(record, locus)
        landmarks.setdefault(instance.map_pair_id, []).append(instance)

    diagnostics: list[Diagnostic] = []

    dialogues: dict[str, Dialogue] = {}
    for did in sorted(dialogue_rows):
        record, locus = dialogue_rows[did]
        map_pair_id = str(_require(record, "map_pair_id", locus))
        d_units = tuple(sorted(units.get(did, {}).values(), key=lambda u: u.sort_key))
        d_moves = tuple(
            sorted(moves.get(did, {}).values(), key=lambda m: (m.utterance_index, m.move_id))
        )
        d_txns = tuple(
            sorted(transactions.get(did, []), key=lambda t: t.transaction_index)
        )
        d_res = [parsed for parsed, _ in re_rows.values() if parsed["dialogue_id"] == did]

        draft = Dialogue(
            dialogue_id=did,
            map_pair_id=map_pair_id,
            units=d_units,
            moves=d_moves,
            transactions=d_txns,
            res=(),
        )
        resolved_res = []
        for parsed in d_res:
            txn_index = parsed["transaction_index"]
            first_unit = parsed["unit_span"][0]
            derived = draft.transaction_of_unit(first_unit)
            if txn_index is None:
                txn_index = derived if derived is not None else -1
            resolved_res.append(
                ReferenceExpressionSpan(
                    re_id=parsed["re_id"],
                    dialogue_id=did,
                    role=parsed["role"],
                    unit_span=parsed["unit_span"],
                    surface_text=parsed["surface_text"],
                    original_mtlm=parsed["original_mtlm"],
                    transaction_index=int(txn_index),
                )
            )

        def _re_sort_key(span: ReferenceExpressionSpan) -> tuple:
            unit = draft.unit(span.unit_span[0])
            time_key = unit.sort_key if unit is not None else (float("inf"), "")
            return (*time_key, span.re_id)

        dialogues[did] = Dialogue(
            dialogue_id=did,
            map_pair_id=map_pair_id,
            units=d_units,
            moves=d_moves,
            transactions=d_txns,
            res=tuple(sorted(resolved_res, key=_re_sort_key)),
        )

    for did in sorted(set(units) | set(moves) | set(transactions)):
        if did not in dialogues:
            diagnostics.append(
                Diagnostic(
                    "error",
                    "dialogue_unresolved",
                    "dialogues.jsonl",
                    f"records reference dialogue {did!r} absent from dialogues.jsonl",
                )
            )
    orphans = {parsed["dialogue_id"] for parsed, _ in re_rows.values()} - set(dialogues)
    for did in sorted(orphans):
        diagnostics.append(
            Diagnostic(
                "error",
                "dialogue_unresolved",
                "res.jsonl",
                f"reference expressions cite unknown dialogue {did!r}",
            )
        )

    map_pairs = {
        mp: tuple(sorted(instances, key=lambda i: (i.side.side_token, i.name, i.y, i.x)))
        for mp, instances in sorted(landmarks.items())
    }
    corpus = Corpus(
        dialogues=dialogues,
        map_pairs=map_pairs,
        provenance=options.provenance or adapter.describe(),
    )
    diagnostics.extend(validate_corpus(corpus))
    return corpus, diagnostics


def ingest_corpus(
    source: str | Path | CorpusSource,
    options: IngestOptions | None = None,
) -> Corpus:
    """Ingest and validate a corpus; raise IngestError on error diagnostics."""
    options = options or IngestOptions()
    corpus, diagnostics = ingest_with_diagnostics(source, options)
    errors = [d for d in diagnostics if d.is_error]
    if options.strict and errors:
        raise IngestError(errors)
    return corpus


def validate_corpus(corpus: Corpus) -> list[Diagnostic]:
    """Check every structural invariant; empty result means a clean corpus."""
    out: list[Diagnostic] = []

    def err(code: str, locus: str, message: str) -> None:
        out.append(Diagnostic("error", code, locus, message))

    def warn(code: str, locus: str, message: str) -> None:
        out.append(Diagnostic("warning", code, locus, message))

    for mp, instances in corpus.map_pairs.items():
        seen = set()
        for inst in instances:
            key = (inst.side, inst.name, inst.x, inst.y)
            if key in seen:
                err(
                    "landmark_duplicate",
                    f"landmarks:{mp}",
                    f"duplicate landmark row {inst.name!r} at ({inst.x}, {inst.y}) on {inst.side.value} side",
                )
            seen.add(key)

    for dialogue in corpus.dialogues.values():
        did = dialogue.dialogue_id
        if dialogue.map_pair_id not in corpus.map_pairs:
            err(
                "map_pair_unresolved",
                f"dialogue:{did}",
                f"map pair {dialogue.map_pair_id!r} has no landmark inventory",
            )

        claimed: dict[str, str] = {}
        last_utt = 0
        for move in dialogue.moves:
            locus = f"move:{move.move_id}"
            for unit_id in move.unit_span:
                if dialogue.unit(unit_id) is None:
                    err("move_units_unresolved", locus, f"unit {unit_id!r} not found")
                elif unit_id in claimed:
                    err(
                        "unit_multiply_claimed",
                        locus,
                        f"unit {unit_id!r} already claimed by move {claimed[unit_id]!r}",
                    )
                claimed[unit_id] = move.move_id
            if move.utterance_index <= last_utt:
                err(
                    "utterance_order",
                    locus,
                    f"utterance_index {move.utterance_index} not strictly increasing",
                )
            last_utt = max(last_utt, move.utterance_index)

        move_ids = {m.move_id for m in dialogue.moves}
        assigned: dict[str, int] = {}
        for position, txn in enumerate(dialogue.transactions):
            locus = f"transaction:{did}:{txn.transaction_index}"
            if txn.transaction_index != position:
                err(
                    "transaction_indices",
                    locus,
                    f"indices not contiguous from 0 (found {txn.transaction_index} at position {position})",
                )
            for move_id in txn.move_ids:
                if move_id not in move_ids:
                    err("transaction_moves_unresolved", locus, f"move {move_id!r} not found")
                elif move_id in assigned:
                    err(
                        "transaction_partition",
                        locus,
                        f"move {move_id!r} already in transaction {assigned[move_id]}",
                    )
                assigned[move_id] = txn.transaction_index
        for move in dialogue.moves:
            if move.move_id not in assigned:
                err(
                    "transaction_partition",
                    f"move:{move.move_id}",
                    "move not covered by any transaction",
                )

        role_positions: dict[SpeakerRole, dict[str, int]] = {}
        for role in SpeakerRole:
            role_positions[role] = {
                u.unit_id: i
                for i, u in enumerate(u for u in dialogue.units if u.role is role)
            }

        for re_span in dialogue.res:
            locus = f"re:{re_span.re_id}"
            span_units = []
            for unit_id in re_span.unit_span:
                unit = dialogue.unit(unit_id)
                if unit is None:
                    err("re_units_unresolved", locus, f"unit {unit_id!r} not found")
                else:
                    span_units.append(unit)
            if len(span_units) != len(re_span.unit_span):
                continue

            for unit in span_units:
                if unit.role is not re_span.role:
                    err(
                        "re_role_mismatch",
                        locus,
                        f"unit {unit.unit_id!r} spoken by {unit.role.value}, not {re_span.role.value}",
                    )
                    break

            positions = role_positions[re_span.role]
            indexes = [positions[u.unit_id] for u in span_units if u.unit_id in positions]
            if indexes and indexes != list(range(indexes[0], indexes[0] + len(indexes))):
                err(
                    "re_span_gap",
                    locus,
                    "unit span is not contiguous in the speaker's time order",
                )

            touched_txns = {
                dialogue.transaction_of_unit(u.unit_id)
                for u in span_units
                if dialogue.transaction_of_unit(u.unit_id) is not None
            }
            first_txn = dialogue.transaction_of_unit(re_span.unit_span[0])
            if first_txn is None:
                err(
                    "re_units_unclaimed",
                    locus,
                    "first unit does not belong to any move/transaction",
                )
            else:
                if len(touched_txns) > 1:
                    warn(
                        "re_crosses_transactions",
                        locus,
                        f"span crosses transactions {sorted(touched_txns)}; assigned to first",
                    )
                if re_span.transaction_index != first_txn:
                    err(
                        "re_transaction_index",
                        locus,
                        f"transaction_index {re_span.transaction_index} does not match "
                        f"first unit's transaction {first_txn}",
                    )

            if re_span.original_mtlm.map_pair_id != dialogue.map_pair_id:
                err(
                    "re_map_mismatch",
                    locus,
                    f"original_mtlm map {re_span.original_mtlm.map_pair_id!r} differs from "
                    f"dialogue map {dialogue.map_pair_id!r}",
                )
            else:
                inventory = corpus.map_pairs.get(dialogue.map_pair_id, ())
                if not any(inst.name == re_span.original_mtlm.name for inst in inventory):
                    warn(
                        "re_mtlm_unknown",
                        locus,
                        f"landmark name {re_span.original_mtlm.name!r} not on either map",
                    )
    return out


def context_slice(
    corpus: Corpus, dialogue_id: str, transaction_index: int
) -> list[ResolvedMove]:
    """All moves of transactions 0..=transaction_index, in utterance order."""
    dialogue = corpus.dialogue(dialogue_id)
    known = {t.transaction_index for t in dialogue.transactions}
    if transaction_index not in known:
        raise UnknownTransactionError(
            f"{dialogue_id} has no transaction {transaction_index}"
        )
    wanted_moves = {
        move_id
        for txn in dialogue.transactions
        if txn.transaction_index <= transaction_index
        for move_id in txn.move_ids
    }
    resolved = []
    for move in dialogue.moves:
        if move.move_id not in wanted_moves:
            continue
        units = tuple(dialogue.unit(uid) for uid in move.unit_span)
        if any(u is None for u in units):
            raise CorpusError(f"move {move.move_id}: unresolved units in span")
        resolved.append(ResolvedMove(move=move, units=units))
    return resolved
