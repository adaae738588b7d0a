"""HTTP API backing the review workbench.

Serves dialogue context exactly as the annotation prompts rendered it,
exposes per-expression machine records and landmark candidates, accepts
validated gold submissions with optimistic revision checks, and reports
gold coverage. Static UI assets can be mounted alongside the API.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Any

import uvicorn
from fastapi import Body, FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles

from .annotation import RecordParseError, record_from_dict, record_to_dict, validate_record
from .corpus import UnknownTransactionError, context_slice
from .evaluation import GoldRecord
from .landmarks import classify_discrepancy, format_umlm
from .prompts import PromptConfig, bracket_references, render_dialogue_acts
from .store import GoldWriter, RevisionConflict, StoreLayout


def _candidates_payload(index, registry) -> dict[str, list[dict[str, Any]]]:
    out: dict[str, list[dict[str, Any]]] = {"g": [], "f": []}
    for inst in index.instances:
        umlm = inst.umlm
        out[umlm.side.side_token].append(
            {
                "umlm": format_umlm(umlm),
                "name": umlm.name,
                "ordinal": umlm.ordinal,
                "x": inst.x,
                "y": inst.y,
                "shared": inst.is_shared,
                "discrepancy": classify_discrepancy(index, registry, umlm.mtlm).value,
            }
        )
    return out


def create_app(
    store: StoreLayout,
    run_id: str | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    corpus = store.load_corpus()
    registry = store.load_registry()
    indexes = store.build_indexes(corpus)
    prompt_config = PromptConfig()

    run_id = run_id or store.latest_run_id()
    machine_records: dict[str, Any] = {}
    if run_id is not None:
        machine_records = {r.re_id: r for r in store.load_records(run_id)}

    gold_writer = GoldWriter(store)
    gold_state, _ = store.read_gold_state()
    gold_lock = threading.Lock()

    app = FastAPI(title="refground review API")

    def _transaction_payload(dialogue_id: str, transaction_index: int) -> dict[str, Any]:
        dialogue = corpus.dialogues.get(dialogue_id)
        if dialogue is None:
            raise HTTPException(status_code=404, detail=f"unknown dialogue {dialogue_id!r}")
        try:
            moves = context_slice(corpus, dialogue_id, transaction_index)
        except UnknownTransactionError:
            raise HTTPException(
                status_code=404,
                detail=f"dialogue {dialogue_id!r} has no transaction {transaction_index}",
            ) from None
        res_in_slice = [
            r for r in dialogue.res if r.transaction_index <= transaction_index
        ]
        targets = [r for r in dialogue.res if r.transaction_index == transaction_index]
        return {
            "dialogue_id": dialogue_id,
            "transaction_index": transaction_index,
            "context": bracket_references(moves, res_in_slice, prompt_config),
            "acts": render_dialogue_acts(moves),
            "target_re_ids": [r.re_id for r in targets],
        }

    @app.get("/api/dialogues")
    def list_dialogues() -> list[dict[str, Any]]:
        return [
            {
                "dialogue_id": d.dialogue_id,
                "map_pair_id": d.map_pair_id,
                "transactions": len(d.transactions),
                "res": len(d.res),
            }
            for d in corpus.dialogues.values()
        ]

    @app.get("/api/dialogues/{dialogue_id}/transactions/{transaction_index}")
    def get_transaction(dialogue_id: str, transaction_index: int) -> dict[str, Any]:
        return _transaction_payload(dialogue_id, transaction_index)

    @app.get("/api/res/{re_id}")
    def get_re(re_id: str) -> dict[str, Any]:
        if not corpus.has_re(re_id):
            raise HTTPException(status_code=404, detail=f"unknown reference expression {re_id!r}")
        dialogue, re_span = corpus.re_span(re_id)
        index = indexes[dialogue.map_pair_id]
        machine = machine_records.get(re_id)
        with gold_lock:
            gold = gold_state.get(re_id)
            revision = gold_writer.current_revision(re_id)
        return {
            "re_id": re_id,
            "dialogue_id": dialogue.dialogue_id,
            "transaction_index": re_span.transaction_index,
            "speaker": re_span.role.value,
            "surface_text": re_span.surface_text,
            "original_mtlm": {
                "map_pair_id": re_span.original_mtlm.map_pair_id,
                "name": re_span.original_mtlm.name,
            },
            "machine": None if machine is None else record_to_dict(machine),
            "gold": None if gold is None else record_to_dict(gold.record),
            "gold_revision": revision,
            "candidates": _candidates_payload(index, registry),
        }

    @app.put("/api/gold/{re_id}")
    def put_gold(re_id: str, payload: dict = Body(...)) -> dict[str, Any]:
        if not corpus.has_re(re_id):
            raise HTTPException(status_code=404, detail=f"unknown reference expression {re_id!r}")
        body = dict(payload)
        expected_revision = int(body.pop("revision", 0))
        annotator_id = str(body.pop("annotator_id", ""))
        note = str(body.pop("note", ""))
        body.setdefault("re_id", re_id)
        if body["re_id"] != re_id:
            raise HTTPException(
                status_code=422,
                detail={"diagnostics": [{"rule_id": "re_id_mismatch", "message": "body re_id differs from path"}]},
            )
        try:
            record = record_from_dict(body)
        except RecordParseError as exc:
            raise HTTPException(
                status_code=422,
                detail={"diagnostics": [{"rule_id": "payload_parse", "message": str(exc)}]},
            ) from None
        dialogue, _ = corpus.re_span(re_id)
        diagnostics = validate_record(record, indexes[dialogue.map_pair_id])
        errors = [d for d in diagnostics if d.is_error]
        if errors:
            raise HTTPException(
                status_code=422,
                detail={
                    "diagnostics": [
                        {"rule_id": d.rule_id, "message": d.message} for d in errors
                    ]
                },
            )
        gold = GoldRecord(record=record, annotator_id=annotator_id, note=note)
        try:
            new_revision = gold_writer.write(gold, expected_revision)
        except RevisionConflict as exc:
            raise HTTPException(
                status_code=409,
                detail={"re_id": re_id, "current_revision": exc.current_revision},
            ) from None
        with gold_lock:
            gold_state[re_id] = gold
        warnings = [d for d in diagnostics if not d.is_error]
        return {
            "re_id": re_id,
            "revision": new_revision,
            "warnings": [{"rule_id": d.rule_id, "message": d.message} for d in warnings],
        }

    @app.get("/api/diff/{re_id}")
    def get_diff(re_id: str) -> dict[str, Any]:
        if not corpus.has_re(re_id):
            raise HTTPException(status_code=404, detail=f"unknown reference expression {re_id!r}")
        machine = machine_records.get(re_id)
        with gold_lock:
            gold = gold_state.get(re_id)
        if machine is None or gold is None:
            raise HTTPException(
                status_code=404,
                detail=f"need both a machine and a gold record for {re_id!r}",
            )
        machine_dict = record_to_dict(machine)
        gold_dict = record_to_dict(gold.record)
        diff = [
            {"field": name, "machine": machine_dict[name], "gold": gold_dict[name]}
            for name in machine_dict
            if machine_dict[name] != gold_dict[name]
        ]
        return {"re_id": re_id, "diff": diff}

    @app.get("/api/progress")
    def get_progress() -> dict[str, Any]:
        with gold_lock:
            gold_ids = set(gold_state)
        rows = []
        total = 0
        done = 0
        for dialogue in corpus.dialogues.values():
            dialogue_total = len(dialogue.res)
            dialogue_done = sum(1 for r in dialogue.res if r.re_id in gold_ids)
            rows.append(
                {
                    "dialogue_id": dialogue.dialogue_id,
                    "total_res": dialogue_total,
                    "gold_res": dialogue_done,
                }
            )
            total += dialogue_total
            done += dialogue_done
        return {"dialogues": rows, "total_res": total, "gold_res": done}

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


class ServerHandle:
    """A uvicorn server running on a background thread."""

    def __init__(self, server: uvicorn.Server, thread: threading.Thread, port: int):
        self._server = server
        self._thread = thread
        self.port = port
        self.url = f"http://127.0.0.1:{port}"

    def stop(self, timeout_s: float = 5.0) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=timeout_s)


def serve_api(
    store: StoreLayout,
    port: int,
    run_id: str | None = None,
    ui_dir: str | Path | None = None,
    wait_ready_s: float = 10.0,
) -> ServerHandle:
    """Start the API in a background thread and return a stoppable handle."""
    app = create_app(store, run_id=run_id, ui_dir=ui_dir)
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + wait_ready_s
    while not server.started and time.monotonic() < deadline:
        time.sleep(0.02)
    if not server.started:
        raise RuntimeError(f"server failed to start on port {port}")
    return ServerHandle(server, thread, port)
