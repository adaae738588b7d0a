"""Annotation providers, batch submission with retries, and reconciliation.

A provider exposes two methods: submit (hand over a batch of requests,
receive a token) and collect (exchange the token for per-request results).
Batch-file services and synchronous HTTP services both fit behind that
contract. The bundled mock provider produces deterministic, schema-valid
annotations from the corpus itself and is the reference oracle for
end-to-end tests.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Mapping, Protocol, Sequence

import httpx
import jsonschema

from .annotation import (
    AnnotationRecord,
    RecordParseError,
    ValidationDiagnostic,
    emit_output_schema,
    record_from_dict,
    validate_record,
)
from .corpus import Corpus, MoveType, ReferenceExpressionSpan
from .landmarks import (
    LexicalVariantRegistry,
    MapPairIndex,
    canonical_name,
)
from .prompts import PromptConfig, PromptDocument, build_prompt, target_res

MOCK_POLICIES = ("echo_speaker", "nearest_instance", "scripted")

REQUEST_STATUSES = ("ok", "parse_error", "schema_error", "missing_res", "transport_error")


@dataclass(frozen=True)
class AnnotationRequest:
    request_id: str
    dialogue_id: str
    transaction_index: int
    prompt: PromptDocument
    target_re_ids: tuple[str, ...]


@dataclass(frozen=True)
class ProviderResult:
    """What a provider hands back for a single request."""

    raw_text: str | None
    error: str | None = None
    model_name: str = ""


@dataclass(frozen=True)
class ProviderResponse:
    request_id: str
    raw_text: str | None
    latency_s: float
    provider_name: str
    model_name: str
    attempts: int = 1
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class MissingReDiagnostic:
    run_id: str
    re_id: str
    dialogue_id: str
    reason_hint: str


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base_s: float = 1.0
    jitter: float = 0.2
    parallelism: int = 1

    def delay(self, attempt: int, rng: random.Random) -> float:
        base = self.backoff_base_s * (2**attempt)
        return base * (1 + rng.uniform(-self.jitter, self.jitter))


class Provider(Protocol):
    name: str
    model: str

    def submit(self, requests: Sequence[AnnotationRequest]) -> str: ...

    def collect(self, token: str) -> dict[str, ProviderResult]: ...


@dataclass
class RunManifest:
    run_id: str
    provider_name: str
    model_name: str
    config_digest: str
    statuses: dict[str, str]
    parameters: dict[str, Any]
    started_at: str
    finished_at: str

    def to_dict(self) -> dict[str, Any]:
        counts: dict[str, int] = {}
        for status in self.statuses.values():
            counts[status] = counts.get(status, 0) + 1
        return {
            "run_id": self.run_id,
            "provider_name": self.provider_name,
            "model_name": self.model_name,
            "config_digest": self.config_digest,
            "statuses": dict(sorted(self.statuses.items())),
            "status_counts": counts,
            "parameters": self.parameters,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


def config_digest(payload: Mapping[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def submit_batch(
    provider: Provider,
    requests: Sequence[AnnotationRequest],
    policy: RetryPolicy | None = None,
) -> list[ProviderResponse]:
    """Drive a provider over a batch, retrying failures with backoff.

    Every request ends in exactly one response: successful raw text or a
    terminal transport error after the attempt budget runs out. Responses
    come back ordered by request_id regardless of completion order.
    """
    if not requests:
        raise ValueError("empty request batch")
    policy = policy or RetryPolicy()
    rng = random.Random(0xA11CE)
    finished: dict[str, ProviderResponse] = {}
    attempts: dict[str, int] = {r.request_id: 0 for r in requests}
    pending = list(requests)
    last_errors: dict[str, str] = {}

    for attempt in range(policy.max_attempts):
        if not pending:
            break
        if attempt > 0:
            delay = policy.delay(attempt - 1, rng)
            if delay > 0:
                time.sleep(delay)
        started = time.monotonic()
        results = _run_round(provider, pending, policy.parallelism)
        elapsed = time.monotonic() - started
        still_pending = []
        for request in pending:
            attempts[request.request_id] += 1
            result = results.get(request.request_id)
            if result is None:
                result = ProviderResult(raw_text=None, error="provider returned no result")
            if result.error is None:
                finished[request.request_id] = ProviderResponse(
                    request_id=request.request_id,
                    raw_text=result.raw_text,
                    latency_s=elapsed,
                    provider_name=provider.name,
                    model_name=result.model_name or provider.model,
                    attempts=attempts[request.request_id],
                    error=None,
                )
            else:
                still_pending.append((request, result.error))
        pending = [request for request, _ in still_pending]
        last_errors.update({request.request_id: err for request, err in still_pending})

    for request in pending:
        finished[request.request_id] = ProviderResponse(
            request_id=request.request_id,
            raw_text=None,
            latency_s=0.0,
            provider_name=provider.name,
            model_name=provider.model,
            attempts=attempts[request.request_id],
            error=last_errors.get(request.request_id, "transport failure"),
        )
    return [finished[rid] for rid in sorted(finished)]


def _run_round(
    provider: Provider,
    requests: Sequence[AnnotationRequest],
    parallelism: int,
) -> dict[str, ProviderResult]:
    def one_shard(shard: Sequence[AnnotationRequest]) -> dict[str, ProviderResult]:
        try:
            token = provider.submit(shard)
            return provider.collect(token)
        except Exception as exc:  # transport failure for the whole shard
            return {r.request_id: ProviderResult(None, error=str(exc)) for r in shard}

    if parallelism <= 1 or len(requests) == 1:
        return one_shard(requests)
    shards = [[r] for r in requests]
    merged: dict[str, ProviderResult] = {}
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        for result in pool.map(one_shard, shards):
            merged.update(result)
    return merged


def parse_response(
    response: ProviderResponse, schema: str
) -> tuple[list[AnnotationRecord], list[ValidationDiagnostic]]:
    """Decode and validate one provider payload.

    Returns the records that survived the schema plus cascade validation,
    and diagnostics for everything that did not. Malformed payloads yield a
    single payload-level parse diagnostic.
    """
    diagnostics: list[ValidationDiagnostic] = []
    if response.raw_text is None:
        return [], [
            ValidationDiagnostic("", "payload_parse", "error", response.error or "empty payload")
        ]
    try:
        payload = json.loads(response.raw_text)
    except json.JSONDecodeError as exc:
        return [], [
            ValidationDiagnostic("", "payload_parse", "error", f"payload is not JSON: {exc.msg}")
        ]
    if not isinstance(payload, list):
        return [], [
            ValidationDiagnostic("", "payload_parse", "error", "payload is not a JSON array")
        ]

    validator = jsonschema.Draft202012Validator(json.loads(schema))
    bad_items: set[int] = set()
    for error in validator.iter_errors(payload):
        item_index = error.absolute_path[0] if error.absolute_path else None
        re_id = ""
        if isinstance(item_index, int):
            bad_items.add(item_index)
            item = payload[item_index]
            if isinstance(item, Mapping):
                re_id = str(item.get("re_id", ""))
        diagnostics.append(
            ValidationDiagnostic(re_id, "payload_schema", "error", error.message)
        )

    records: list[AnnotationRecord] = []
    for position, item in enumerate(payload):
        if position in bad_items:
            continue
        try:
            record = record_from_dict(item)
        except RecordParseError as exc:
            re_id = str(item.get("re_id", "")) if isinstance(item, Mapping) else ""
            diagnostics.append(
                ValidationDiagnostic(re_id, "payload_schema", "error", str(exc))
            )
            continue
        record_diags = validate_record(record)
        errors = [d for d in record_diags if d.is_error]
        if errors:
            diagnostics.extend(errors)
        else:
            diagnostics.extend(d for d in record_diags if not d.is_error)
            records.append(record)
    return records, diagnostics


@dataclass(frozen=True)
class ReconcileResult:
    missing: tuple[MissingReDiagnostic, ...]
    extra_warnings: tuple[ValidationDiagnostic, ...]
    accepted: tuple[AnnotationRecord, ...]
    quarantined: tuple[AnnotationRecord, ...]


def reconcile(
    requests: Sequence[AnnotationRequest],
    records: Sequence[AnnotationRecord],
    run_id: str = "",
    reason_hint: str = "no record returned by provider",
) -> ReconcileResult:
    """Match returned records against requested expression ids.

    Requested ids with no record become missing diagnostics; records for ids
    nobody asked about are quarantined with a warning. Accepted records come
    back in requested order.
    """
    requested: dict[str, str] = {}
    for request in requests:
        for re_id in request.target_re_ids:
            requested[re_id] = request.dialogue_id
    by_re: dict[str, AnnotationRecord] = {}
    quarantined = []
    extra_warnings = []
    for record in records:
        if record.re_id not in requested:
            quarantined.append(record)
            extra_warnings.append(
                ValidationDiagnostic(
                    record.re_id,
                    "unrequested_re",
                    "warning",
                    f"record for {record.re_id!r} was never requested; quarantined",
                )
            )
        elif record.re_id in by_re:
            quarantined.append(record)
            extra_warnings.append(
                ValidationDiagnostic(
                    record.re_id,
                    "duplicate_re",
                    "warning",
                    f"second record for {record.re_id!r}; keeping the first",
                )
            )
        else:
            by_re[record.re_id] = record

    missing = []
    accepted = []
    for request in requests:
        for re_id in request.target_re_ids:
            if re_id in by_re:
                accepted.append(by_re[re_id])
            else:
                missing.append(
                    MissingReDiagnostic(
                        run_id=run_id,
                        re_id=re_id,
                        dialogue_id=requested[re_id],
                        reason_hint=reason_hint,
                    )
                )
    return ReconcileResult(
        missing=tuple(missing),
        extra_warnings=tuple(extra_warnings),
        accepted=tuple(accepted),
        quarantined=tuple(quarantined),
    )


@dataclass(frozen=True)
class MockPolicy:
    kind: str = "echo_speaker"
    scripted: Mapping[str, Mapping[str, Any]] | None = None

    def __post_init__(self) -> None:
        if self.kind not in MOCK_POLICIES:
            raise ValueError(f"mock policy must be one of {MOCK_POLICIES}, got {self.kind!r}")
        if self.kind == "scripted" and self.scripted is None:
            raise ValueError("scripted mock policy needs a re_id -> record mapping")


def _mock_record(
    re_span: ReferenceExpressionSpan,
    corpus: Corpus,
    index: MapPairIndex,
    registry: LexicalVariantRegistry,
    policy: MockPolicy,
) -> dict[str, Any] | None:
    if policy.kind == "scripted":
        # Unscripted ids are skipped, surfacing downstream as missing
        # expressions for a repair run.
        scripted = policy.scripted.get(re_span.re_id)
        return None if scripted is None else dict(scripted)

    speaker = re_span.role
    addressee = speaker.opposite
    dialogue = corpus.dialogue(re_span.dialogue_id)
    move = dialogue.move_for_unit(re_span.unit_span[0])
    name = re_span.original_mtlm.name
    speaker_instances = index.instances_for(name, speaker)

    base = {
        "re_id": re_span.re_id,
        "speaker": speaker.value,
        "addressee": addressee.value,
        "speaker_landmark": None,
        "is_quantificational": False,
        "is_specified": None,
        "is_accommodated": None,
        "is_grounded": None,
        "is_imagined": None,
        "addressee_landmark": None,
        "reason": "",
    }

    is_query = move is not None and move.move_type in (MoveType.QUERY_YN, MoveType.QUERY_W)
    if is_query or not speaker_instances:
        base["is_quantificational"] = True
        if speaker_instances:
            base["speaker_landmark"] = str(speaker_instances[0].umlm)
        base["reason"] = f"mock {policy.kind}: treated {name!r} as an existence query"
        return base

    intended = speaker_instances[0].umlm
    base["speaker_landmark"] = str(intended)
    base["is_specified"] = True
    base["is_accommodated"] = True

    if policy.kind == "echo_speaker":
        mirrored = [
            inst.umlm
            for inst in index.instances_for(name, addressee)
            if inst.umlm.ordinal == intended.ordinal
        ]
        target = mirrored[0] if mirrored else None
        detail = "mirrored the speaker's instance on the addressee side"
    else:  # nearest_instance
        wanted = canonical_name(registry, re_span.original_mtlm)
        candidates = [
            inst.umlm
            for candidate_name in index.names()
            for inst in index.instances_for(candidate_name, addressee)
            if canonical_name(registry, inst.umlm.mtlm) == wanted
        ]
        candidates.sort(key=lambda u: (u.ordinal, u.name))
        target = candidates[0] if candidates else None
        detail = "grounded to the lowest-ordinal addressee-side instance"

    if target is None:
        base["is_grounded"] = False
        base["reason"] = f"mock {policy.kind}: no addressee-side instance of {name!r}"
    else:
        base["is_grounded"] = True
        base["is_imagined"] = False
        base["addressee_landmark"] = str(target)
        base["reason"] = f"mock {policy.kind}: {detail}"
    return base


def mock_annotate(
    request: AnnotationRequest,
    corpus: Corpus,
    indexes: Mapping[str, MapPairIndex],
    registry: LexicalVariantRegistry,
    policy: MockPolicy,
) -> ProviderResponse:
    """Deterministic, schema-valid annotation of one request."""
    dialogue = corpus.dialogue(request.dialogue_id)
    index = indexes[dialogue.map_pair_id]
    payload = []
    for re_id in request.target_re_ids:
        _, re_span = corpus.re_span(re_id)
        record = _mock_record(re_span, corpus, index, registry, policy)
        if record is not None:
            payload.append(record)
    return ProviderResponse(
        request_id=request.request_id,
        raw_text=json.dumps(payload, sort_keys=True),
        latency_s=0.0,
        provider_name="mock",
        model_name="mock-annotator",
    )


class MockProvider:
    """Provider backed by mock_annotate; infallible and deterministic."""

    name = "mock"
    model = "mock-annotator"

    def __init__(
        self,
        corpus: Corpus,
        indexes: Mapping[str, MapPairIndex],
        registry: LexicalVariantRegistry,
        policy: MockPolicy,
    ):
        self.corpus = corpus
        self.indexes = indexes
        self.registry = registry
        self.policy = policy
        self._batches: dict[str, Sequence[AnnotationRequest]] = {}

    def submit(self, requests: Sequence[AnnotationRequest]) -> str:
        token = f"mock-batch-{len(self._batches)}"
        self._batches[token] = tuple(requests)
        return token

    def collect(self, token: str) -> dict[str, ProviderResult]:
        out = {}
        for request in self._batches.pop(token):
            response = mock_annotate(
                request, self.corpus, self.indexes, self.registry, self.policy
            )
            out[request.request_id] = ProviderResult(
                raw_text=response.raw_text, model_name=self.model
            )
        return out


class HttpProvider:
    """Minimal chat-completions style HTTP adapter.

    Reads PROVIDER_API_KEY and PROVIDER_BASE_URL from the environment unless
    given explicitly. Each request posts the rendered prompt as a single
    user message and returns the first choice's content.
    """

    name = "http"

    def __init__(
        self,
        model: str,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout_s: float = 120.0,
        client: httpx.Client | None = None,
    ):
        self.model = model
        self.base_url = (base_url or os.environ.get("PROVIDER_BASE_URL", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("PROVIDER_API_KEY", "")
        if not self.base_url:
            raise ValueError("HttpProvider needs a base URL (PROVIDER_BASE_URL)")
        self._client = client or httpx.Client(timeout=timeout_s)
        self._batches: dict[str, Sequence[AnnotationRequest]] = {}

    def submit(self, requests: Sequence[AnnotationRequest]) -> str:
        token = f"http-batch-{len(self._batches)}"
        self._batches[token] = tuple(requests)
        return token

    def collect(self, token: str) -> dict[str, ProviderResult]:
        out = {}
        for request in self._batches.pop(token):
            out[request.request_id] = self._one(request)
        return out

    def _one(self, request: AnnotationRequest) -> ProviderResult:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt.rendered}],
        }
        try:
            response = self._client.post(
                f"{self.base_url}/chat/completions", json=body, headers=headers
            )
            response.raise_for_status()
            content = response.json()["choices"][0]["message"]["content"]
        except Exception as exc:
            return ProviderResult(raw_text=None, error=str(exc))
        return ProviderResult(raw_text=content, model_name=self.model)


def build_requests(
    corpus: Corpus,
    indexes: Mapping[str, MapPairIndex],
    config: PromptConfig | None = None,
    only_re_ids: set[str] | None = None,
) -> list[AnnotationRequest]:
    """One request per transaction carrying target expressions.

    When only_re_ids is given (repair runs), targets are restricted to that
    set and empty transactions are skipped.
    """
    config = config or PromptConfig()
    requests = []
    for dialogue_id in sorted(corpus.dialogues):
        dialogue = corpus.dialogues[dialogue_id]
        for txn in dialogue.transactions:
            targets = target_res(corpus, dialogue_id, txn.transaction_index)
            if only_re_ids is not None:
                targets = [t for t in targets if t.re_id in only_re_ids]
            if not targets:
                continue
            prompt = build_prompt(
                corpus,
                dialogue_id,
                txn.transaction_index,
                indexes[dialogue.map_pair_id],
                config,
            )
            requests.append(
                AnnotationRequest(
                    request_id=f"{dialogue_id}:{txn.transaction_index:04d}",
                    dialogue_id=dialogue_id,
                    transaction_index=txn.transaction_index,
                    prompt=prompt,
                    target_re_ids=tuple(t.re_id for t in targets),
                )
            )
    return requests


@dataclass(frozen=True)
class RunResult:
    run_id: str
    manifest: RunManifest
    records: tuple[AnnotationRecord, ...]
    missing: tuple[MissingReDiagnostic, ...]
    quarantined: tuple[AnnotationRecord, ...]
    diagnostics: tuple[ValidationDiagnostic, ...]


def run_annotation(
    corpus: Corpus,
    indexes: Mapping[str, MapPairIndex],
    registry: LexicalVariantRegistry,
    provider: Provider,
    run_id: str,
    policy: RetryPolicy | None = None,
    prompt_config: PromptConfig | None = None,
    only_re_ids: set[str] | None = None,
) -> RunResult:
    """Submit, parse, validate, and reconcile one full annotation run."""
    policy = policy or RetryPolicy()
    prompt_config = prompt_config or PromptConfig()
    started_at = datetime.now(timezone.utc).isoformat()
    requests = build_requests(corpus, indexes, prompt_config, only_re_ids)
    if not requests:
        raise ValueError("nothing to annotate: no transactions carry target expressions")

    schema = emit_output_schema()
    responses = submit_batch(provider, requests, policy)
    by_request = {r.request_id: r for r in responses}

    statuses: dict[str, str] = {}
    all_records: list[AnnotationRecord] = []
    all_missing: list[MissingReDiagnostic] = []
    all_quarantined: list[AnnotationRecord] = []
    all_diagnostics: list[ValidationDiagnostic] = []

    for request in requests:
        response = by_request[request.request_id]
        if not response.ok:
            statuses[request.request_id] = "transport_error"
            all_missing.extend(
                MissingReDiagnostic(
                    run_id, re_id, request.dialogue_id, f"transport error: {response.error}"
                )
                for re_id in request.target_re_ids
            )
            continue
        records, diagnostics = parse_response(response, schema)
        all_diagnostics.extend(diagnostics)
        parse_failed = any(d.rule_id == "payload_parse" for d in diagnostics)
        schema_failed = any(
            d.is_error and d.rule_id != "payload_parse" for d in diagnostics
        )

        dialogue = corpus.dialogue(request.dialogue_id)
        index = indexes[dialogue.map_pair_id]
        resolved = []
        for record in records:
            id_diags = [
                d
                for d in validate_record(record, index)
                if d.is_error and d.rule_id in ("unknown_landmark", "map_pair_mismatch")
            ]
            if id_diags:
                all_diagnostics.extend(id_diags)
                schema_failed = True
            else:
                resolved.append(record)

        result = reconcile([request], resolved, run_id=run_id)
        all_records.extend(result.accepted)
        all_missing.extend(result.missing)
        all_quarantined.extend(result.quarantined)
        all_diagnostics.extend(result.extra_warnings)

        if parse_failed:
            statuses[request.request_id] = "parse_error"
        elif schema_failed:
            statuses[request.request_id] = "schema_error"
        elif result.missing:
            statuses[request.request_id] = "missing_res"
        else:
            statuses[request.request_id] = "ok"

    digest = config_digest(
        {
            "provider": provider.name,
            "model": provider.model,
            "policy": {
                "max_attempts": policy.max_attempts,
                "backoff_base_s": policy.backoff_base_s,
                "jitter": policy.jitter,
                "parallelism": policy.parallelism,
            },
            "prompt_config": prompt_config.digest_payload(),
        }
    )
    manifest = RunManifest(
        run_id=run_id,
        provider_name=provider.name,
        model_name=provider.model,
        config_digest=digest,
        statuses=statuses,
        parameters={
            "max_attempts": policy.max_attempts,
            "parallelism": policy.parallelism,
            "prompt_config_version": prompt_config.version,
        },
        started_at=started_at,
        finished_at=datetime.now(timezone.utc).isoformat(),
    )
    return RunResult(
        run_id=run_id,
        manifest=manifest,
        records=tuple(all_records),
        missing=tuple(all_missing),
        quarantined=tuple(all_quarantined),
        diagnostics=tuple(all_diagnostics),
    )
