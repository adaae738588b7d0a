from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from refground.cli import cli
from refground.fixtures import write_mini_corpus
from refground.store import StoreLayout


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def source_dir(tmp_path):
    source = tmp_path / "source"
    write_mini_corpus(source)
    return source


def _run(runner, *args, expect=0):
    result = runner.invoke(cli, [str(a) for a in args])
    if result.exit_code != expect:  # pragma: no cover - debugging aid
        raise AssertionError(
            f"exit {result.exit_code} != {expect} for {args}\n{result.output}\n{result.exception}"
        )
    return result


def _bootstrap(runner, source_dir, tmp_path, policy="nearest_instance"):
    store = tmp_path / "store"
    _run(runner, "ingest", "--source", source_dir, "--store", store)
    _run(runner, "assign-ids", "--store", store)
    _run(runner, "build-prompts", "--store", store)
    _run(runner, "annotate", "--store", store, "--provider", "mock", "--mock-policy", policy)
    return store


def test_full_pipeline(runner, source_dir, tmp_path):
    store_path = _bootstrap(runner, source_dir, tmp_path)
    store = StoreLayout(store_path)
    assert store.run_ids() == ["run-0001"]
    assert (store.run_dir("run-0001") / "records.jsonl").exists()
    assert (store.run_dir("run-0001") / "manifest.json").exists()
    assert len(list((store.prompts_dir).glob("*.prompt.txt"))) == 5

    _run(runner, "derive-states", "--store", store_path, "--mode", "raw")
    _run(runner, "derive-states", "--store", store_path, "--mode", "unified")
    assert (store.reports_dir / "states_raw.jsonl").exists()

    result = _run(runner, "analyze", "--store", store_path)
    assert "by_type" in result.output
    by_type = (store.reports_dir / "by_type.csv").read_text()
    multiplicity_row = next(
        line for line in by_type.splitlines() if line.startswith("multiplicity")
    )
    assert multiplicity_row.split(",")[3] != "0.0"


def test_validate_ok_and_exit_codes(runner, source_dir):
    result = _run(runner, "validate", "--source", source_dir)
    assert "valid" in result.output


def test_validate_reports_errors_with_exit_1(runner, source_dir):
    res_path = source_dir / "res.jsonl"
    rows = [json.loads(line) for line in res_path.read_text().splitlines()]
    rows[0]["unit_span"] = ["missing-unit"]
    res_path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    result = _run(runner, "validate", "--source", source_dir, expect=1)
    assert "re_units_unresolved" in result.output


def test_usage_error_exits_2(runner):
    result = runner.invoke(cli, ["annotate"])  # missing --store
    assert result.exit_code == 2


def test_validate_needs_a_target(runner):
    result = runner.invoke(cli, ["validate"])
    assert result.exit_code == 2


def test_eval_against_own_records_is_perfect(runner, source_dir, tmp_path):
    store_path = _bootstrap(runner, source_dir, tmp_path)
    store = StoreLayout(store_path)
    records = (store.run_dir("run-0001") / "records.jsonl").read_text().splitlines()
    gold_path = tmp_path / "gold.jsonl"
    with gold_path.open("w", encoding="utf-8") as handle:
        for line in records:
            payload = json.loads(line)
            payload["annotator_id"] = "tester"
            handle.write(json.dumps(payload) + "\n")
    result = _run(runner, "eval", "--store", store_path, "--gold", gold_path, "--disagreements")
    assert "errors=0" in result.output
    report = json.loads((store.reports_dir / "eval_report.json").read_text())
    assert report["re_level"]["res_with_errors"] == 0
    assert all(row["accuracy"] == 1.0 for row in report["attributes"])
    assert (store.reports_dir / "disagreements.csv").exists()


def test_repair_fills_missing_res(runner, source_dir, tmp_path):
    store_path = tmp_path / "store"
    _run(runner, "ingest", "--source", source_dir, "--store", store_path)
    _run(runner, "assign-ids", "--store", store_path)

    # Scripted provider with no records at all: everything goes missing.
    scripted = tmp_path / "scripted.jsonl"
    scripted.write_text("", encoding="utf-8")
    _run(
        runner,
        "annotate",
        "--store", store_path,
        "--provider", "mock",
        "--mock-policy", "scripted",
        "--scripted", scripted,
        expect=1,
    )
    store = StoreLayout(store_path)
    missing = store.load_missing("run-0001")
    assert len(missing) == 8

    _run(
        runner,
        "repair",
        "--store", store_path,
        "--run", "run-0001",
        "--provider", "mock",
        "--mock-policy", "echo_speaker",
    )
    assert store.run_ids() == ["run-0001", "run-0002"]
    repaired = store.load_records("run-0002")
    assert {r.re_id for r in repaired} == {m.re_id for m in missing}
    # The original run directory is untouched.
    assert store.load_missing("run-0001") and not store.load_missing("run-0002")


def test_repair_without_missing_is_noop(runner, source_dir, tmp_path):
    store_path = _bootstrap(runner, source_dir, tmp_path)
    result = _run(runner, "repair", "--store", store_path)
    assert "nothing to repair" in result.output


def test_mini_corpus_command(runner, tmp_path):
    target = tmp_path / "fixture"
    _run(runner, "mini-corpus", "--target", target)
    assert (target / "dialogues.jsonl").exists()
    _run(runner, "validate", "--source", target)


def test_schema_command(runner):
    result = _run(runner, "schema")
    assert json.loads(result.output)["type"] == "array"


def test_store_run_dirs_are_append_only(runner, source_dir, tmp_path):
    store_path = _bootstrap(runner, source_dir, tmp_path)
    store = StoreLayout(store_path)
    before = (store.run_dir("run-0001") / "records.jsonl").read_bytes()
    _run(runner, "annotate", "--store", store_path, "--provider", "mock",
         "--mock-policy", "echo_speaker")
    assert store.run_ids() == ["run-0001", "run-0002"]
    assert (store.run_dir("run-0001") / "records.jsonl").read_bytes() == before


def test_analyze_depends_only_on_records(runner, source_dir, tmp_path):
    first_store = _bootstrap(runner, source_dir, tmp_path)
    _run(runner, "analyze", "--store", first_store)
    reports = StoreLayout(first_store).reports_dir
    snapshots = {
        name: (reports / name).read_bytes()
        for name in ("states.csv", "by_type.csv", "chains.csv", "ttg_cdf.csv", "summary.json")
    }
    # Annotating again with a different parallelism and re-analyzing the
    # same records changes nothing.
    _run(runner, "annotate", "--store", first_store, "--provider", "mock",
         "--mock-policy", "nearest_instance", "--parallelism", "4")
    _run(runner, "analyze", "--store", first_store, "--run", "run-0001")
    for name, payload in snapshots.items():
        assert (reports / name).read_bytes() == payload
