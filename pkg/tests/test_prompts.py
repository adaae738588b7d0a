from __future__ import annotations

import json
import re

import pytest

from refground.corpus import context_slice
from refground.prompts import (
    OverlappingSpanError,
    PromptBuildError,
    PromptConfig,
    PromptTooLargeError,
    SECTION_TAGS,
    bracket_references,
    build_prompt,
    render_dialogue_acts,
    write_prompt_files,
)


def _slice_res(corpus, dialogue_id, k):
    dialogue = corpus.dialogue(dialogue_id)
    return [r for r in dialogue.res if r.transaction_index <= k]


def test_bracket_single_re(mini_corpus):
    dialogue = mini_corpus.dialogue("d0")
    moves = [m for m in context_slice(mini_corpus, "d0", 1) if m.move.move_id == "d0-m3"]
    re1 = next(r for r in dialogue.res if r.re_id == "re1")
    assert bracket_references(moves, [re1]) == "go to [rid=re1| the parked van ]"


def test_bracket_no_res_leaves_text_unchanged(mini_corpus):
    moves = context_slice(mini_corpus, "d0", 0)
    text = bracket_references(moves, [])
    assert text == "starting off we are above a caravan park\nmmhmm"


def test_bracket_two_disjoint_res_in_order(mini_corpus):
    moves = context_slice(mini_corpus, "d0", 2)
    res = [r for r in mini_corpus.dialogue("d0").res if r.re_id in ("re2", "re3")]
    text = bracket_references(moves, res)
    assert text.index("[rid=re2|") < text.index("[rid=re3|")
    assert text.count("[rid=") == 2
    assert "head past [rid=re2| the cliffs ]" in text


def test_bracket_rejects_overlapping_spans(mini_corpus):
    dialogue = mini_corpus.dialogue("d0")
    moves = context_slice(mini_corpus, "d0", 1)
    re1 = next(r for r in dialogue.res if r.re_id == "re1")
    clone = type(re1)(
        re_id="re1b",
        dialogue_id=re1.dialogue_id,
        role=re1.role,
        unit_span=re1.unit_span[1:],
        surface_text="parked van",
        original_mtlm=re1.original_mtlm,
        transaction_index=1,
    )
    with pytest.raises(OverlappingSpanError):
        bracket_references(moves, [re1, clone])


def test_bracket_requires_units_in_slice(mini_corpus):
    dialogue = mini_corpus.dialogue("d0")
    moves = context_slice(mini_corpus, "d0", 0)
    re1 = next(r for r in dialogue.res if r.re_id == "re1")
    with pytest.raises(PromptBuildError, match="not present"):
        bracket_references(moves, [re1])


def test_dialogue_acts_two_segment_shape(mini_corpus):
    moves = context_slice(mini_corpus, "d0", 0)
    acts = render_dialogue_acts(moves)
    assert acts == (
        "[g utt:1 move:instruct] starting off we are above a caravan park\n"
        "[f utt:2 move:acknowledge] mmhmm"
    )


def test_dialogue_acts_empty_slice():
    assert render_dialogue_acts([]) == ""


def test_dialogue_acts_five_moves(mini_corpus):
    moves = context_slice(mini_corpus, "d1", 1)
    acts = render_dialogue_acts(moves)
    assert len(acts.splitlines()) == 5
    assert [int(n) for n in re.findall(r"utt:(\d+)", acts)] == [1, 2, 3, 4, 5]


# ---------------------------------------------------------------- build_prompt

def test_build_prompt_sections_and_targets(mini_corpus, mini_indexes):
    document = build_prompt(mini_corpus, "d0", 2, mini_indexes["m0"])
    assert tuple(tag for tag, _ in document.sections) == SECTION_TAGS
    assert document.section("target_ref_ids").splitlines() == ["re2", "re3", "re4"]
    context = document.section("context_dialogue")
    for re_id in ("re0", "re1", "re2", "re3", "re4"):
        assert context.count(f"[rid={re_id}|") == 1
    assert document.section("landmark_candidates").splitlines()[0] == "m0_caravan_park#0@g"


def test_build_prompt_first_transaction_context(mini_corpus, mini_indexes):
    document = build_prompt(mini_corpus, "d0", 0, mini_indexes["m0"])
    context = document.section("context_dialogue")
    assert "parked van" not in context
    assert document.section("target_ref_ids") == "re0"


def test_build_prompt_deterministic(mini_corpus, mini_indexes):
    first = build_prompt(mini_corpus, "d0", 1, mini_indexes["m0"]).rendered
    second = build_prompt(mini_corpus, "d0", 1, mini_indexes["m0"]).rendered
    assert first == second


def test_context_is_prefix_of_next_transaction(mini_corpus, mini_indexes):
    for k in (0, 1):
        shorter = build_prompt(mini_corpus, "d0", k, mini_indexes["m0"]).section(
            "context_dialogue"
        )
        longer = build_prompt(mini_corpus, "d0", k + 1, mini_indexes["m0"]).section(
            "context_dialogue"
        )
        assert longer.startswith(shorter + "\n")


def test_prompt_length_monotone(mini_corpus, mini_indexes):
    lengths = [
        len(build_prompt(mini_corpus, "d0", k, mini_indexes["m0"]).rendered)
        for k in (0, 1, 2)
    ]
    assert lengths == sorted(lengths)


def test_prompt_size_limit(mini_corpus, mini_indexes):
    config = PromptConfig(max_context_chars=500)
    with pytest.raises(PromptTooLargeError):
        build_prompt(mini_corpus, "d0", 2, mini_indexes["m0"], config)


def test_rendered_uses_tagged_blocks(mini_corpus, mini_indexes):
    rendered = build_prompt(mini_corpus, "d0", 0, mini_indexes["m0"]).rendered
    for tag in SECTION_TAGS:
        assert f"<{tag}>" in rendered and f"</{tag}>" in rendered
    assert rendered.index("<background>") < rendered.index("<landmark_candidates>")


def test_prompt_config_requires_eight_steps():
    with pytest.raises(PromptBuildError, match="Step 0 through Step 7"):
        PromptConfig(rule_steps=("only one",))


def test_prompt_config_load_overrides(tmp_path):
    path = tmp_path / "prompt.json"
    payload = {
        "version": "2",
        "background": "custom background",
        "rule_steps": [f"Step {i}: do thing {i}" for i in range(8)],
    }
    path.write_text(json.dumps(payload), encoding="utf-8")
    config = PromptConfig.load(path)
    assert config.version == "2"
    assert config.background == "custom background"
    assert len(config.rule_steps) == 8
    assert config.annotation_rule.count("Step") == 8


def test_write_prompt_files(mini_corpus, mini_indexes, tmp_path):
    manifest = write_prompt_files(mini_corpus, mini_indexes, tmp_path / "p1")
    assert [m["file"] for m in manifest] == [
        "d0_0.prompt.txt",
        "d0_1.prompt.txt",
        "d0_2.prompt.txt",
        "d1_0.prompt.txt",
        "d1_1.prompt.txt",
    ]
    entry = next(m for m in manifest if m["file"] == "d0_2.prompt.txt")
    assert entry["target_re_ids"] == ["re2", "re3", "re4"]
    write_prompt_files(mini_corpus, mini_indexes, tmp_path / "p2")
    for m in manifest:
        first = (tmp_path / "p1" / m["file"]).read_bytes()
        second = (tmp_path / "p2" / m["file"]).read_bytes()
        assert first == second
    manifest_lines = (tmp_path / "p1" / "manifest.jsonl").read_text().splitlines()
    assert len(manifest_lines) == 5
