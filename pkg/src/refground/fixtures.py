"""Bundled synthetic mini-corpus.

Two short dialogues over one map pair that exercise every discrepancy type:
a duplicated giver-side landmark (parked_van), a cross-side name variant
(cliffs / sandstone_cliffs), one-side-only landmarks (stone_circle,
white_cottage), and a shared landmark (caravan_park). Lets the whole
pipeline run and be tested without any licensed corpus data.
"""

from __future__ import annotations

import json
from pathlib import Path

MAP_PAIR = "m0"

LANDMARKS = [
    {"map_pair_id": MAP_PAIR, "side": "giver", "name": "parked_van", "x": 3.0, "y": 1.0},
    {"map_pair_id": MAP_PAIR, "side": "giver", "name": "parked_van", "x": 3.0, "y": 5.0},
    {"map_pair_id": MAP_PAIR, "side": "giver", "name": "caravan_park", "x": 1.0, "y": 8.0},
    {"map_pair_id": MAP_PAIR, "side": "giver", "name": "cliffs", "x": 6.0, "y": 2.0},
    {"map_pair_id": MAP_PAIR, "side": "giver", "name": "stone_circle", "x": 7.0, "y": 7.0},
    {"map_pair_id": MAP_PAIR, "side": "follower", "name": "parked_van", "x": 3.0, "y": 5.0},
    {"map_pair_id": MAP_PAIR, "side": "follower", "name": "caravan_park", "x": 1.0, "y": 8.0},
    {"map_pair_id": MAP_PAIR, "side": "follower", "name": "sandstone_cliffs", "x": 6.0, "y": 2.0},
    {"map_pair_id": MAP_PAIR, "side": "follower", "name": "white_cottage", "x": 9.0, "y": 9.0},
]

REGISTRY = [
    {
        "map_pair_id": MAP_PAIR,
        "name_a": "cliffs",
        "name_b": "sandstone_cliffs",
        "canonical_name": "cliffs",
    }
]


def _units(dialogue_id: str, specs: list[tuple[str, float, list[str]]]) -> list[dict]:
    """specs: (role, start, tokens); tokens get 0.2s each, ids are sequential."""
    units = []
    counter = 1
    for role, start, tokens in specs:
        clock = start
        for token in tokens:
            units.append(
                {
                    "unit_id": f"{dialogue_id}-u{counter}",
                    "dialogue_id": dialogue_id,
                    "role": role,
                    "start_s": round(clock, 2),
                    "end_s": round(clock + 0.2, 2),
                    "token": token,
                }
            )
            counter += 1
            clock += 0.2
    return units


def _span(dialogue_id: str, first: int, last: int) -> list[str]:
    return [f"{dialogue_id}-u{n}" for n in range(first, last + 1)]


def _dialogue_d0() -> tuple[list[dict], list[dict], list[dict], list[dict]]:
    d = "d0"
    units = _units(
        d,
        [
            ("giver", 0.0, ["starting", "off", "we", "are", "above", "a", "caravan", "park"]),
            ("follower", 2.0, ["mmhmm"]),
            ("giver", 3.0, ["go", "to", "the", "parked", "van"]),
            ("follower", 4.5, ["okay", "right"]),
            ("giver", 6.0, ["head", "past", "the", "cliffs"]),
            ("follower", 7.5, ["yeah", "i", "see", "the", "sandstone", "cliffs"]),
            ("giver", 9.0, ["do", "you", "have", "a", "stone", "circle"]),
            ("follower", 10.5, ["no", "i", "do", "not"]),
        ],
    )
    moves = [
        {"move_id": f"{d}-m1", "dialogue_id": d, "role": "giver", "move_type": "instruct", "utterance_index": 1, "unit_span": _span(d, 1, 8)},
        {"move_id": f"{d}-m2", "dialogue_id": d, "role": "follower", "move_type": "acknowledge", "utterance_index": 2, "unit_span": _span(d, 9, 9)},
        {"move_id": f"{d}-m3", "dialogue_id": d, "role": "giver", "move_type": "instruct", "utterance_index": 3, "unit_span": _span(d, 10, 14)},
        {"move_id": f"{d}-m4", "dialogue_id": d, "role": "follower", "move_type": "acknowledge", "utterance_index": 4, "unit_span": _span(d, 15, 16)},
        {"move_id": f"{d}-m5", "dialogue_id": d, "role": "giver", "move_type": "instruct", "utterance_index": 5, "unit_span": _span(d, 17, 20)},
        {"move_id": f"{d}-m6", "dialogue_id": d, "role": "follower", "move_type": "reply_y", "utterance_index": 6, "unit_span": _span(d, 21, 26)},
        {"move_id": f"{d}-m7", "dialogue_id": d, "role": "giver", "move_type": "query_yn", "utterance_index": 7, "unit_span": _span(d, 27, 32)},
        {"move_id": f"{d}-m8", "dialogue_id": d, "role": "follower", "move_type": "reply_n", "utterance_index": 8, "unit_span": _span(d, 33, 36)},
    ]
    transactions = [
        {"dialogue_id": d, "transaction_index": 0, "move_ids": [f"{d}-m1", f"{d}-m2"]},
        {"dialogue_id": d, "transaction_index": 1, "move_ids": [f"{d}-m3", f"{d}-m4"]},
        {"dialogue_id": d, "transaction_index": 2, "move_ids": [f"{d}-m5", f"{d}-m6", f"{d}-m7", f"{d}-m8"]},
    ]
    res = [
        {"re_id": "re0", "dialogue_id": d, "role": "giver", "unit_span": _span(d, 6, 8), "surface_text": "a caravan park", "original_mtlm": {"map_pair_id": MAP_PAIR, "name": "caravan_park"}, "transaction_index": 0},
        {"re_id": "re1", "dialogue_id": d, "role": "giver", "unit_span": _span(d, 12, 14), "surface_text": "the parked van", "original_mtlm": {"map_pair_id": MAP_PAIR, "name": "parked_van"}, "transaction_index": 1},
        {"re_id": "re2", "dialogue_id": d, "role": "giver", "unit_span": _span(d, 19, 20), "surface_text": "the cliffs", "original_mtlm": {"map_pair_id": MAP_PAIR, "name": "cliffs"}, "transaction_index": 2},
        {"re_id": "re3", "dialogue_id": d, "role": "follower", "unit_span": _span(d, 24, 26), "surface_text": "the sandstone cliffs", "original_mtlm": {"map_pair_id": MAP_PAIR, "name": "sandstone_cliffs"}, "transaction_index": 2},
        {"re_id": "re4", "dialogue_id": d, "role": "giver", "unit_span": _span(d, 30, 32), "surface_text": "a stone circle", "original_mtlm": {"map_pair_id": MAP_PAIR, "name": "stone_circle"}, "transaction_index": 2},
    ]
    return units, moves, transactions, res


def _dialogue_d1() -> tuple[list[dict], list[dict], list[dict], list[dict]]:
    d = "d1"
    units = _units(
        d,
        [
            ("giver", 0.0, ["go", "below", "the", "caravan", "park"]),
            ("follower", 1.5, ["got", "it"]),
            ("giver", 3.0, ["stop", "beside", "the", "parked", "van"]),
            ("follower", 4.5, ["the", "van", "at", "the", "top"]),
            ("giver", 6.0, ["yes", "that", "one"]),
        ],
    )
    moves = [
        {"move_id": f"{d}-m1", "dialogue_id": d, "role": "giver", "move_type": "instruct", "utterance_index": 1, "unit_span": _span(d, 1, 5)},
        {"move_id": f"{d}-m2", "dialogue_id": d, "role": "follower", "move_type": "acknowledge", "utterance_index": 2, "unit_span": _span(d, 6, 7)},
        {"move_id": f"{d}-m3", "dialogue_id": d, "role": "giver", "move_type": "instruct", "utterance_index": 3, "unit_span": _span(d, 8, 12)},
        {"move_id": f"{d}-m4", "dialogue_id": d, "role": "follower", "move_type": "check", "utterance_index": 4, "unit_span": _span(d, 13, 17)},
        {"move_id": f"{d}-m5", "dialogue_id": d, "role": "giver", "move_type": "reply_y", "utterance_index": 5, "unit_span": _span(d, 18, 20)},
    ]
    transactions = [
        {"dialogue_id": d, "transaction_index": 0, "move_ids": [f"{d}-m1", f"{d}-m2"]},
        {"dialogue_id": d, "transaction_index": 1, "move_ids": [f"{d}-m3", f"{d}-m4", f"{d}-m5"]},
    ]
    res = [
        {"re_id": "re5", "dialogue_id": d, "role": "giver", "unit_span": _span(d, 3, 5), "surface_text": "the caravan park", "original_mtlm": {"map_pair_id": MAP_PAIR, "name": "caravan_park"}, "transaction_index": 0},
        {"re_id": "re6", "dialogue_id": d, "role": "giver", "unit_span": _span(d, 10, 12), "surface_text": "the parked van", "original_mtlm": {"map_pair_id": MAP_PAIR, "name": "parked_van"}, "transaction_index": 1},
        {"re_id": "re7", "dialogue_id": d, "role": "follower", "unit_span": _span(d, 13, 14), "surface_text": "the van", "original_mtlm": {"map_pair_id": MAP_PAIR, "name": "parked_van"}, "transaction_index": 1},
    ]
    return units, moves, transactions, res


def mini_corpus_records() -> dict[str, list[dict]]:
    """All interchange records of the bundled mini corpus, keyed by file stem."""
    units0, moves0, txns0, res0 = _dialogue_d0()
    units1, moves1, txns1, res1 = _dialogue_d1()
    return {
        "dialogues": [
            {"dialogue_id": "d0", "map_pair_id": MAP_PAIR},
            {"dialogue_id": "d1", "map_pair_id": MAP_PAIR},
        ],
        "units": units0 + units1,
        "moves": moves0 + moves1,
        "transactions": txns0 + txns1,
        "res": res0 + res1,
        "landmarks": LANDMARKS,
    }


def write_mini_corpus(target_dir: str | Path, include_registry: bool = True) -> Path:
    """Write the mini corpus interchange files into target_dir."""
    target = Path(target_dir)
    target.mkdir(parents=True, exist_ok=True)
    for stem, records in mini_corpus_records().items():
        with (target / f"{stem}.jsonl").open("w", encoding="utf-8") as handle:
            for record in records:
                handle.write(json.dumps(record) + "\n")
    if include_registry:
        with (target / "registry.jsonl").open("w", encoding="utf-8") as handle:
            for record in REGISTRY:
                handle.write(json.dumps(record) + "\n")
    return target
