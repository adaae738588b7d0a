"""Command-line entry point for the annotation pipeline.

Typical flow: ingest -> assign-ids -> build-prompts -> annotate ->
derive-states / analyze -> eval, with serve hosting the review API. Exit
codes: 0 on success, 1 when diagnostics contain errors, 2 on usage errors.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import fixtures
from .analysis import MODES, derive_state, distribution, write_report_bundle
from .annotation import emit_output_schema
from .client import (
    HttpProvider,
    MockPolicy,
    MockProvider,
    RetryPolicy,
    run_annotation,
)
from .corpus import IngestOptions, ingest_with_diagnostics
from .evaluation import (
    EvalInputError,
    disagreement_rows,
    evaluate,
    load_gold_jsonl,
    write_eval_report,
)
from .landmarks import build_indexes
from .prompts import PromptConfig, write_prompt_files
from .store import StoreLayout, read_jsonl, write_jsonl


def _echo_diagnostics(diagnostics) -> int:
    errors = 0
    for diag in diagnostics:
        if diag.is_error:
            errors += 1
        click.echo(f"{diag.severity}: [{diag.code}] {diag.locus}: {diag.message}")
    return errors


def _store(path: str) -> StoreLayout:
    store = StoreLayout(path)
    store.initialize()
    return store


def _load_prompt_config(path: str | None) -> PromptConfig:
    return PromptConfig.load(path) if path else PromptConfig()


@click.group()
def cli() -> None:
    """Reference-grounding annotation pipeline."""


@cli.command()
@click.option("--source", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--store", "store_path", required=True, type=click.Path(file_okay=False))
def ingest(source: str, store_path: str) -> None:
    """Validate interchange files and normalize them into the store."""
    corpus, diagnostics = ingest_with_diagnostics(source, IngestOptions(strict=False))
    errors = _echo_diagnostics(diagnostics)
    if errors:
        click.echo(f"ingest failed with {errors} error(s)", err=True)
        sys.exit(1)
    store = _store(store_path)
    source_dir = Path(source)
    for name in (
        "dialogues.jsonl",
        "units.jsonl",
        "moves.jsonl",
        "transactions.jsonl",
        "res.jsonl",
        "landmarks.jsonl",
        "registry.jsonl",
    ):
        source_file = source_dir / name
        if source_file.exists():
            rows = list(read_jsonl(source_file))
            write_jsonl(store.corpus_dir / name, rows)
    click.echo(
        f"ingested {len(corpus.dialogues)} dialogue(s), "
        f"{sum(len(d.res) for d in corpus.dialogues.values())} reference expression(s), "
        f"{len(corpus.map_pairs)} map pair(s) into {store.root}"
    )


@cli.command("assign-ids")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--epsilon", type=float, default=None, help="Cross-side match tolerance in map units.")
def assign_ids(store_path: str, epsilon: float | None) -> None:
    """Assign unified landmark ids and persist the assignment."""
    store = _store(store_path)
    corpus = store.load_corpus()
    registry = store.load_registry()
    indexes = build_indexes(corpus, epsilon=epsilon, registry=registry)
    store.save_index_config(epsilon)
    store.save_unified_ids(indexes)
    total = sum(len(ix.instances) for ix in indexes.values())
    click.echo(f"assigned {total} unified id(s) across {len(indexes)} map pair(s)")


@cli.command("build-prompts")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--prompt-config", "prompt_config_path", type=click.Path(exists=True, dir_okay=False))
def build_prompts(store_path: str, prompt_config_path: str | None) -> None:
    """Render one prompt file per transaction with target expressions."""
    store = _store(store_path)
    corpus = store.load_corpus()
    indexes = store.build_indexes(corpus)
    config = _load_prompt_config(prompt_config_path)
    manifest = write_prompt_files(corpus, indexes, store.prompts_dir, config)
    click.echo(f"wrote {len(manifest)} prompt file(s) to {store.prompts_dir}")


def _make_provider(store, corpus, indexes, registry, provider_name, mock_policy, scripted, model):
    if provider_name == "mock":
        scripted_records = None
        if scripted:
            scripted_records = {row["re_id"]: row for row in read_jsonl(Path(scripted))}
        policy = MockPolicy(kind=mock_policy, scripted=scripted_records)
        return MockProvider(corpus, indexes, registry, policy)
    if provider_name == "http":
        return HttpProvider(model=model)
    raise click.UsageError(f"unknown provider {provider_name!r}")


@cli.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--provider", default="mock", type=click.Choice(["mock", "http"]))
@click.option("--mock-policy", default="echo_speaker", type=click.Choice(["echo_speaker", "nearest_instance", "scripted"]))
@click.option("--scripted", type=click.Path(exists=True, dir_okay=False), help="JSONL of scripted mock records.")
@click.option("--model", default="mock-annotator")
@click.option("--parallelism", default=1, type=int)
@click.option("--max-attempts", default=3, type=int)
@click.option("--prompt-config", "prompt_config_path", type=click.Path(exists=True, dir_okay=False))
def annotate(
    store_path: str,
    provider: str,
    mock_policy: str,
    scripted: str | None,
    model: str,
    parallelism: int,
    max_attempts: int,
    prompt_config_path: str | None,
) -> None:
    """Run an annotation pass over every transaction and persist the run."""
    store = _store(store_path)
    corpus = store.load_corpus()
    registry = store.load_registry()
    indexes = store.build_indexes(corpus)
    provider_impl = _make_provider(
        store, corpus, indexes, registry, provider, mock_policy, scripted, model
    )
    run_id = store.new_run_id()
    result = run_annotation(
        corpus,
        indexes,
        registry,
        provider_impl,
        run_id=run_id,
        policy=RetryPolicy(max_attempts=max_attempts, parallelism=parallelism),
        prompt_config=_load_prompt_config(prompt_config_path),
    )
    run_dir = store.save_run(result)
    click.echo(
        f"run {run_id}: {len(result.records)} record(s), "
        f"{len(result.missing)} missing, saved to {run_dir}"
    )
    if result.missing:
        sys.exit(1)


@cli.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--run", "run_id", default=None, help="Run with missing expressions; defaults to latest.")
@click.option("--provider", default="mock", type=click.Choice(["mock", "http"]))
@click.option("--mock-policy", default="echo_speaker", type=click.Choice(["echo_speaker", "nearest_instance", "scripted"]))
@click.option("--scripted", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", default="mock-annotator")
def repair(
    store_path: str,
    run_id: str | None,
    provider: str,
    mock_policy: str,
    scripted: str | None,
    model: str,
) -> None:
    """Re-annotate only the expressions a previous run left missing."""
    store = _store(store_path)
    run_id = run_id or store.latest_run_id()
    if run_id is None:
        raise click.UsageError("no prior run to repair")
    missing = store.load_missing(run_id)
    if not missing:
        click.echo(f"run {run_id}: nothing to repair")
        return
    corpus = store.load_corpus()
    registry = store.load_registry()
    indexes = store.build_indexes(corpus)
    provider_impl = _make_provider(
        store, corpus, indexes, registry, provider, mock_policy, scripted, model
    )
    new_run_id = store.new_run_id()
    result = run_annotation(
        corpus,
        indexes,
        registry,
        provider_impl,
        run_id=new_run_id,
        only_re_ids={m.re_id for m in missing},
    )
    run_dir = store.save_run(result)
    click.echo(
        f"repair run {new_run_id}: {len(result.records)} record(s), "
        f"{len(result.missing)} still missing, saved to {run_dir}"
    )
    if result.missing:
        sys.exit(1)


@cli.command()
@click.option("--source", type=click.Path(exists=True, file_okay=False), help="Interchange directory; defaults to the store corpus.")
@click.option("--store", "store_path", type=click.Path(exists=True, file_okay=False))
def validate(source: str | None, store_path: str | None) -> None:
    """Report corpus diagnostics without writing anything."""
    if source is None and store_path is None:
        raise click.UsageError("give --source or --store")
    target = Path(source) if source else StoreLayout(store_path).corpus_dir
    _, diagnostics = ingest_with_diagnostics(target, IngestOptions(strict=False))
    errors = _echo_diagnostics(diagnostics)
    if errors:
        click.echo(f"{errors} error(s)", err=True)
        sys.exit(1)
    click.echo("corpus is valid")


@cli.command()
def schema() -> None:
    """Print the machine annotation output schema."""
    click.echo(emit_output_schema(), nl=False)


@cli.command("mini-corpus")
@click.option("--target", required=True, type=click.Path(file_okay=False))
def mini_corpus(target: str) -> None:
    """Write the bundled synthetic mini corpus to a directory."""
    fixtures.write_mini_corpus(target)
    click.echo(f"wrote mini corpus to {target}")


def _load_run_records(store: StoreLayout, run_id: str | None):
    run_id = run_id or store.latest_run_id()
    if run_id is None:
        raise click.UsageError("no annotation runs in the store yet")
    return run_id, store.load_records(run_id)


@cli.command("derive-states")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--run", "run_id", default=None)
@click.option("--mode", default="unified", type=click.Choice(list(MODES)))
def derive_states(store_path: str, run_id: str | None, mode: str) -> None:
    """Write per-expression understanding states for one run."""
    store = _store(store_path)
    registry = store.load_registry()
    run_id, records = _load_run_records(store, run_id)
    rows = []
    for record in records:
        state = derive_state(record, registry, mode)
        rows.append(
            {
                "re_id": record.re_id,
                "mode": mode,
                "state": state.kind,
                "subtype": state.subtype,
            }
        )
    out_path = store.reports_dir / f"states_{mode}.jsonl"
    write_jsonl(out_path, rows)
    dist = distribution(records, registry, mode)
    click.echo(
        f"{mode}: aligned {dist.aligned}, pending {dist.pending_total}, "
        f"misunderstood {dist.misunderstood} -> {out_path}"
    )


@cli.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--run", "run_id", default=None)
def analyze(store_path: str, run_id: str | None) -> None:
    """Emit the full report bundle for one run."""
    store = _store(store_path)
    corpus = store.load_corpus()
    registry = store.load_registry()
    indexes = store.build_indexes(corpus)
    run_id, records = _load_run_records(store, run_id)
    paths = write_report_bundle(store.reports_dir, records, corpus, indexes, registry)
    for name, path in sorted(paths.items()):
        click.echo(f"{name}: {path}")


@cli.command("eval")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--run", "run_id", default=None)
@click.option("--disagreements/--no-disagreements", default=False, help="Also write a per-expression disagreement CSV.")
def eval_command(store_path: str, gold_path: str, run_id: str | None, disagreements: bool) -> None:
    """Score run records against a gold JSONL file."""
    store = _store(store_path)
    run_id, records = _load_run_records(store, run_id)
    gold = load_gold_jsonl(gold_path)
    gold_ids = {g.re_id for g in gold}
    machine = [r for r in records if r.re_id in gold_ids]
    try:
        report = evaluate(machine, [g.record for g in gold])
    except EvalInputError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    out_path = store.reports_dir / "eval_report.json"
    write_eval_report(out_path, report)
    for metrics in report.attributes:
        click.echo(
            f"{metrics.attribute}: N={metrics.n} acc={metrics.accuracy:.4f} "
            f"f1={metrics.f1:.3f} errors={metrics.error_count}"
        )
    click.echo(
        f"re_level: {report.res_with_errors}/{report.total_res} with errors, "
        f"{report.total_attribute_errors} attribute errors"
    )
    grounded = report.grounded_id
    click.echo(
        f"grounded_id[{grounded.convention}]: acc={grounded.accuracy:.4f} "
        f"micro_f1={grounded.micro_f1:.4f} (n={grounded.n})"
    )
    if disagreements:
        rows = disagreement_rows(machine, [g.record for g in gold])
        diff_path = store.reports_dir / "disagreements.csv"
        import csv

        with diff_path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=["re_id", "field", "machine", "gold"])
            writer.writeheader()
            writer.writerows(rows)
        click.echo(f"disagreements: {diff_path}")
    click.echo(f"report: {out_path}")


@cli.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--port", default=8000, type=int)
@click.option("--run", "run_id", default=None)
@click.option("--ui-dir", type=click.Path(exists=True, file_okay=False), help="Static UI assets to serve at /.")
def serve(store_path: str, port: int, run_id: str | None, ui_dir: str | None) -> None:
    """Host the review API (and optionally the built UI)."""
    import uvicorn

    from .server import create_app

    app = create_app(StoreLayout(store_path), run_id=run_id, ui_dir=ui_dir)
    uvicorn.run(app, host="127.0.0.1", port=port)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
