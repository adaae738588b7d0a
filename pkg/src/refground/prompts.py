"""Deterministic prompt assembly for transaction-level annotation requests.

Each prompt concatenates nine tagged sections: five static scheme sections
(background, task description, id format, workflow steps, output format)
followed by the per-transaction parts (target expression ids, bracketed
dialogue context, dialogue-act listing, landmark candidates). Rendering is
pure: identical inputs give identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .annotation import emit_output_schema
from .corpus import (
    Corpus,
    ReferenceExpressionSpan,
    ResolvedMove,
    context_slice,
)
from .landmarks import MapPairIndex, landmark_candidates

SECTION_TAGS = (
    "background",
    "task_description",
    "landmark_id_explanation",
    "annotation_rule",
    "output_format",
    "target_ref_ids",
    "context_dialogue",
    "context_dialogue_acts",
    "landmark_candidates",
)

DEFAULT_BACKGROUND = (
    "Two participants each hold a printed map of the same area. The giver's map "
    "shows a route; the follower has to reproduce that route on their own map "
    "through talk alone. The maps deliberately differ: some landmarks exist on "
    "only one map, some appear twice on the giver's map but once on the "
    "follower's, and some carry different names for the same spot. Neither "
    "participant can see the other's map, so references to landmarks can "
    "succeed, stall, or silently diverge."
)

DEFAULT_TASK_DESCRIPTION = (
    "For every target reference expression, record which landmark the speaker "
    "intends and, separately, which landmark the addressee takes the expression "
    "to pick out. Five yes/no attributes describe how far the addressee's "
    "interpretation progressed; each attribute applies only while every "
    "earlier gate stayed open, and closed gates are filled with null."
)

DEFAULT_ID_EXPLANATION = (
    "Landmark ids use the form <map-id>_<landmark-name>#<ordinal>@<side>. The "
    "ordinal numbers same-named instances from the bottom of the map upward, "
    "and instances sitting at the same location on both maps share one "
    "ordinal, so a side may start at an ordinal above zero. The side suffix "
    "is @g for the giver's map and @f for the follower's. Join several ids "
    "with + when one expression refers to several landmarks at once."
)

DEFAULT_RULE_STEPS = (
    "Step 0: Identify the speaker and the addressee of the expression, match "
    "them to giver and follower, and fill in the landmark id of the speaker's "
    "intended referent first.",
    "Step 1: is_quantificational is true when the expression only asks whether "
    "such a landmark exists instead of picking a specific one out.",
    "Step 2: is_specified is true when the surrounding dialogue gives enough "
    "evidence to infer how the addressee interpreted the expression.",
    "Step 3: is_accommodated is true when the addressee takes the expression up "
    "without signalling a hearing or comprehension failure.",
    "Step 4: is_grounded is true when the addressee links the expression to a "
    "concrete landmark.",
    "Step 5: is_imagined is true when the addressee accepts a landmark that "
    "their own map does not show; in that case copy the speaker's landmark id "
    "into the addressee field unchanged.",
    "Step 6: If is_grounded is true, fill in the landmark id of the "
    "addressee's interpretation.",
    "Step 7: Give a concise (under 50 words) evidence-based reason for the "
    "judgement in the reason field.",
)

DEFAULT_OUTPUT_FORMAT = (
    "Return a JSON array with exactly one object per target reference "
    "expression, valid under this schema. Closed-gate attributes are null.\n\n"
    + emit_output_schema().rstrip("\n")
)


class PromptBuildError(ValueError):
    pass


class OverlappingSpanError(PromptBuildError):
    """Two reference expressions claim the same timed unit."""


class PromptTooLargeError(PromptBuildError):
    """Rendered prompt exceeded the configured safety limit."""


@dataclass(frozen=True)
class PromptConfig:
    """Versioned static prompt sections plus rendering policy."""

    version: str = "1"
    background: str = DEFAULT_BACKGROUND
    task_description: str = DEFAULT_TASK_DESCRIPTION
    landmark_id_explanation: str = DEFAULT_ID_EXPLANATION
    rule_steps: tuple[str, ...] = DEFAULT_RULE_STEPS
    output_format: str = DEFAULT_OUTPUT_FORMAT
    bracket_open: str = "[rid={re_id}|"
    bracket_close: str = "]"
    max_context_chars: int = 200_000

    def __post_init__(self) -> None:
        if len(self.rule_steps) != 8:
            raise PromptBuildError("rule_steps must enumerate Step 0 through Step 7")

    @property
    def annotation_rule(self) -> str:
        intro = "Work through the annotation workflow for each reference expression step by step:"
        return "\n".join((intro, *self.rule_steps))

    @classmethod
    def load(cls, path: str | Path) -> "PromptConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if "rule_steps" in raw:
            raw["rule_steps"] = tuple(raw["rule_steps"])
        return cls(**raw)

    def digest_payload(self) -> dict:
        return {
            "version": self.version,
            "background": self.background,
            "task_description": self.task_description,
            "landmark_id_explanation": self.landmark_id_explanation,
            "rule_steps": list(self.rule_steps),
            "output_format": self.output_format,
            "bracket_open": self.bracket_open,
            "bracket_close": self.bracket_close,
        }


@dataclass(frozen=True)
class PromptDocument:
    sections: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        tags = tuple(tag for tag, _ in self.sections)
        if tags != SECTION_TAGS:
            raise PromptBuildError(f"section order must be {SECTION_TAGS}, got {tags}")

    @property
    def rendered(self) -> str:
        blocks = [f"<{tag}>\n{body}\n</{tag}>" for tag, body in self.sections]
        return "\n\n".join(blocks) + "\n"

    def section(self, tag: str) -> str:
        for candidate, body in self.sections:
            if candidate == tag:
                return body
        raise KeyError(tag)


def bracket_references(
    moves: Sequence[ResolvedMove],
    res: Iterable[ReferenceExpressionSpan],
    config: PromptConfig | None = None,
) -> str:
    """Render a context slice with reference expression spans bracketed.

    Every expression's unit span must fall inside the slice; overlapping
    spans are rejected. Moves render one per line, tokens joined by single
    spaces.
    """
    config = config or PromptConfig()
    slice_units = {unit.unit_id for move in moves for unit in move.units}
    opens: dict[str, ReferenceExpressionSpan] = {}
    closes: dict[str, ReferenceExpressionSpan] = {}
    claimed: dict[str, str] = {}
    for re_span in res:
        missing = [uid for uid in re_span.unit_span if uid not in slice_units]
        if missing:
            raise PromptBuildError(
                f"re {re_span.re_id}: units {missing} not present in the context slice"
            )
        for uid in re_span.unit_span:
            if uid in claimed:
                raise OverlappingSpanError(
                    f"unit {uid} claimed by both {claimed[uid]} and {re_span.re_id}"
                )
            claimed[uid] = re_span.re_id
        opens[re_span.unit_span[0]] = re_span
        closes[re_span.unit_span[-1]] = re_span

    lines = []
    for move in moves:
        parts: list[str] = []
        for unit in move.units:
            if unit.unit_id in opens:
                parts.append(config.bracket_open.format(re_id=opens[unit.unit_id].re_id))
            parts.append(unit.token)
            if unit.unit_id in closes:
                parts.append(config.bracket_close)
        lines.append(" ".join(parts))
    return "\n".join(lines)


def render_dialogue_acts(moves: Sequence[ResolvedMove]) -> str:
    """One ``[<side> utt:<n> move:<type>] <tokens>`` segment per move."""
    segments = [
        f"[{m.move.role.side_token} utt:{m.move.utterance_index} "
        f"move:{m.move.move_type.value}] {m.text}"
        for m in moves
    ]
    return "\n".join(segments)


def build_prompt(
    corpus: Corpus,
    dialogue_id: str,
    transaction_index: int,
    index: MapPairIndex,
    config: PromptConfig | None = None,
) -> PromptDocument:
    """Assemble the full prompt for one dialogue transaction."""
    config = config or PromptConfig()
    dialogue = corpus.dialogue(dialogue_id)
    moves = context_slice(corpus, dialogue_id, transaction_index)
    res_in_slice = [
        re_span for re_span in dialogue.res if re_span.transaction_index <= transaction_index
    ]
    targets = [
        re_span for re_span in dialogue.res if re_span.transaction_index == transaction_index
    ]
    sections = (
        ("background", config.background),
        ("task_description", config.task_description),
        ("landmark_id_explanation", config.landmark_id_explanation),
        ("annotation_rule", config.annotation_rule),
        ("output_format", config.output_format),
        ("target_ref_ids", "\n".join(t.re_id for t in targets)),
        ("context_dialogue", bracket_references(moves, res_in_slice, config)),
        ("context_dialogue_acts", render_dialogue_acts(moves)),
        ("landmark_candidates", landmark_candidates(index)),
    )
    document = PromptDocument(sections)
    if len(document.rendered) > config.max_context_chars:
        raise PromptTooLargeError(
            f"{dialogue_id}[{transaction_index}]: prompt of {len(document.rendered)} "
            f"characters exceeds the {config.max_context_chars} character limit"
        )
    return document


def target_res(
    corpus: Corpus, dialogue_id: str, transaction_index: int
) -> list[ReferenceExpressionSpan]:
    dialogue = corpus.dialogue(dialogue_id)
    return [r for r in dialogue.res if r.transaction_index == transaction_index]


def write_prompt_files(
    corpus: Corpus,
    indexes: dict[str, MapPairIndex],
    out_dir: str | Path,
    config: PromptConfig | None = None,
) -> list[dict]:
    """Serialize one prompt file per transaction that has target expressions.

    Returns the manifest entries, which are also written to manifest.jsonl
    next to the prompt files.
    """
    config = config or PromptConfig()
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    manifest = []
    for dialogue_id in sorted(corpus.dialogues):
        dialogue = corpus.dialogues[dialogue_id]
        for txn in dialogue.transactions:
            targets = target_res(corpus, dialogue_id, txn.transaction_index)
            if not targets:
                continue
            document = build_prompt(
                corpus,
                dialogue_id,
                txn.transaction_index,
                indexes[dialogue.map_pair_id],
                config,
            )
            filename = f"{dialogue_id}_{txn.transaction_index}.prompt.txt"
            (out_path / filename).write_text(document.rendered, encoding="utf-8")
            manifest.append(
                {
                    "file": filename,
                    "dialogue_id": dialogue_id,
                    "transaction_index": txn.transaction_index,
                    "target_re_ids": [t.re_id for t in targets],
                }
            )
    with (out_path / "manifest.jsonl").open("w", encoding="utf-8") as handle:
        for entry in manifest:
            handle.write(json.dumps(entry, sort_keys=True) + "\n")
    return manifest
