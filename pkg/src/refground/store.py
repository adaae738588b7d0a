"""On-disk layout for corpora, prompts, annotation runs, gold, and reports.

Flat JSONL plus JSON manifests, no database. Run directories are append
only: a new run always gets a fresh directory and nothing rewrites a
finalized one. The gold store is an append-only log with last-write-wins
per expression id and a per-expression revision counter for optimistic
concurrency.
"""

from __future__ import annotations

import json
import re
import threading
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from .annotation import AnnotationRecord, record_from_dict, record_to_dict
from .client import MissingReDiagnostic, RunResult
from .corpus import Corpus, IngestOptions, ingest_corpus
from .evaluation import GoldRecord, gold_from_dict, gold_to_dict
from .landmarks import (
    LexicalVariantRegistry,
    MapPairIndex,
    build_indexes,
    format_umlm,
)

_RUN_ID_RE = re.compile(r"^run-(\d{4})$")


class StoreError(RuntimeError):
    pass


def write_jsonl(path: Path, records: Iterable[Mapping[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=False) + "\n")


def read_jsonl(path: Path) -> Iterator[dict]:
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield json.loads(line)


class StoreLayout:
    """Fixed directory layout rooted at one working directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def corpus_dir(self) -> Path:
        return self.root / "corpus"

    @property
    def prompts_dir(self) -> Path:
        return self.root / "prompts"

    @property
    def runs_dir(self) -> Path:
        return self.root / "runs"

    @property
    def gold_dir(self) -> Path:
        return self.root / "gold"

    @property
    def gold_path(self) -> Path:
        return self.gold_dir / "gold.jsonl"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def registry_path(self) -> Path:
        return self.corpus_dir / "registry.jsonl"

    @property
    def index_config_path(self) -> Path:
        return self.corpus_dir / "index_config.json"

    @property
    def unified_ids_path(self) -> Path:
        return self.corpus_dir / "unified_ids.jsonl"

    def initialize(self) -> None:
        for directory in (
            self.corpus_dir,
            self.prompts_dir,
            self.runs_dir,
            self.gold_dir,
            self.reports_dir,
        ):
            directory.mkdir(parents=True, exist_ok=True)

    # -- runs ------------------------------------------------------------

    def run_ids(self) -> list[str]:
        if not self.runs_dir.exists():
            return []
        return sorted(
            p.name for p in self.runs_dir.iterdir() if _RUN_ID_RE.match(p.name)
        )

    def new_run_id(self) -> str:
        existing = self.run_ids()
        next_number = 1
        if existing:
            next_number = int(_RUN_ID_RE.match(existing[-1]).group(1)) + 1
        return f"run-{next_number:04d}"

    def latest_run_id(self) -> str | None:
        ids = self.run_ids()
        return ids[-1] if ids else None

    def run_dir(self, run_id: str) -> Path:
        return self.runs_dir / run_id

    def save_run(self, result: RunResult) -> Path:
        run_dir = self.run_dir(result.run_id)
        if run_dir.exists():
            raise StoreError(f"run directory {run_dir} already exists; runs are append only")
        run_dir.mkdir(parents=True)
        write_jsonl(
            run_dir / "records.jsonl", (record_to_dict(r) for r in result.records)
        )
        write_jsonl(
            run_dir / "missing.jsonl",
            (
                {
                    "run_id": m.run_id,
                    "re_id": m.re_id,
                    "dialogue_id": m.dialogue_id,
                    "reason_hint": m.reason_hint,
                }
                for m in result.missing
            ),
        )
        if result.quarantined:
            write_jsonl(
                run_dir / "quarantined.jsonl",
                (record_to_dict(r) for r in result.quarantined),
            )
        (run_dir / "manifest.json").write_text(
            json.dumps(result.manifest.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return run_dir

    def load_records(self, run_id: str) -> list[AnnotationRecord]:
        path = self.run_dir(run_id) / "records.jsonl"
        if not path.exists():
            raise StoreError(f"no records at {path}")
        return [record_from_dict(payload) for payload in read_jsonl(path)]

    def load_missing(self, run_id: str) -> list[MissingReDiagnostic]:
        path = self.run_dir(run_id) / "missing.jsonl"
        if not path.exists():
            return []
        return [
            MissingReDiagnostic(
                run_id=payload.get("run_id", run_id),
                re_id=payload["re_id"],
                dialogue_id=payload.get("dialogue_id", ""),
                reason_hint=payload.get("reason_hint", ""),
            )
            for payload in read_jsonl(path)
        ]

    # -- corpus ----------------------------------------------------------

    def load_corpus(self, strict: bool = True) -> Corpus:
        return ingest_corpus(self.corpus_dir, IngestOptions(strict=strict))

    def load_registry(self) -> LexicalVariantRegistry:
        if self.registry_path.exists():
            return LexicalVariantRegistry.from_jsonl(self.registry_path)
        return LexicalVariantRegistry(())

    def save_index_config(self, epsilon: float | None) -> None:
        self.index_config_path.write_text(
            json.dumps({"epsilon": epsilon}, sort_keys=True) + "\n", encoding="utf-8"
        )

    def load_index_config(self) -> float | None:
        if not self.index_config_path.exists():
            raise StoreError(
                "unified ids not assigned yet; run the assign-ids command first"
            )
        return json.loads(self.index_config_path.read_text(encoding="utf-8"))["epsilon"]

    def build_indexes(self, corpus: Corpus) -> dict[str, MapPairIndex]:
        epsilon = self.load_index_config()
        return build_indexes(corpus, epsilon=epsilon, registry=self.load_registry())

    def save_unified_ids(self, indexes: Mapping[str, MapPairIndex]) -> None:
        rows = []
        for map_pair_id in sorted(indexes):
            for inst in indexes[map_pair_id].instances:
                rows.append(
                    {
                        "map_pair_id": map_pair_id,
                        "side": inst.umlm.side.value,
                        "name": inst.umlm.name,
                        "x": inst.x,
                        "y": inst.y,
                        "ordinal": inst.umlm.ordinal,
                        "shared": inst.is_shared,
                        "umlm": format_umlm(inst.umlm),
                    }
                )
        write_jsonl(self.unified_ids_path, rows)

    # -- gold ------------------------------------------------------------

    def read_gold_state(self) -> tuple[dict[str, GoldRecord], dict[str, int]]:
        """Replay the gold log into latest records and revision counters."""
        latest: dict[str, GoldRecord] = {}
        revisions: dict[str, int] = {}
        if not self.gold_path.exists():
            return latest, revisions
        for payload in read_jsonl(self.gold_path):
            gold = gold_from_dict(payload)
            latest[gold.re_id] = gold
            revisions[gold.re_id] = int(payload.get("revision", revisions.get(gold.re_id, 0) + 1))
        return latest, revisions

    def append_gold(self, gold: GoldRecord, revision: int) -> None:
        self.gold_dir.mkdir(parents=True, exist_ok=True)
        payload = gold_to_dict(gold)
        payload["revision"] = revision
        with self.gold_path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(payload, sort_keys=False) + "\n")


class GoldWriter:
    """Serialized gold appends with optimistic revision checks."""

    def __init__(self, store: StoreLayout):
        self.store = store
        self._lock = threading.Lock()
        _, self._revisions = store.read_gold_state()

    def current_revision(self, re_id: str) -> int:
        with self._lock:
            return self._revisions.get(re_id, 0)

    def write(self, gold: GoldRecord, expected_revision: int) -> int:
        """Append one gold record; returns the new revision.

        Raises RevisionConflict when expected_revision does not match the
        store's current revision for that expression.
        """
        with self._lock:
            current = self._revisions.get(gold.re_id, 0)
            if expected_revision != current:
                raise RevisionConflict(gold.re_id, current)
            new_revision = current + 1
            self.store.append_gold(gold, new_revision)
            self._revisions[gold.re_id] = new_revision
            return new_revision


class RevisionConflict(RuntimeError):
    def __init__(self, re_id: str, current_revision: int):
        self.re_id = re_id
        self.current_revision = current_revision
        super().__init__(
            f"gold record for {re_id!r} is at revision {current_revision}, not the expected one"
        )
