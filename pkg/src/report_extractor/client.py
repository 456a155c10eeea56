"""Client for any OpenAI-compatible endpoint: model discovery, batched
schema-constrained extraction with validation-driven retries, and cost
accounting from endpoint-reported token usage.

Privacy contract: report text and extracted values never appear in log
output; logging is limited to counts, statuses, and identifiers.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Mapping

import requests

from .schema import (
    STATUS_ABSENT,
    STATUS_FAILED,
    STATUS_OK,
    ExtractionRecord,
    ExtractionSchema,
    FeatureSpec,
    Violation,
    batch_features,
    property_document,
    subschema,
    validate_record,
)

log = logging.getLogger(__name__)

REPORT_DELIMITER = "### REPORT"


class TransportError(Exception):
    """The endpoint could not be reached (connection, timeout)."""


class ApiError(Exception):
    """The endpoint answered with a non-2xx status."""

    def __init__(self, status: int, body_excerpt: str):
        super().__init__(f"API error {status}: {body_excerpt}")
        self.status = status
        self.body_excerpt = body_excerpt


class UnknownModelError(KeyError):
    """compute_cost was asked about a model missing from the price table."""


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    api_key: str = ""
    model_id: str = ""
    request_timeout: float = 120.0
    max_retries: int = 2
    max_parallel_requests: int = 4

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_parallel_requests < 1:
            raise ValueError("max_parallel_requests must be >= 1")

    def url(self, path: str) -> str:
        return self.base_url.rstrip("/") + path

    def headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            prompt_tokens=self.prompt_tokens + other.prompt_tokens,
            completion_tokens=self.completion_tokens + other.completion_tokens,
        )

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class PriceTable:
    """USD per 1M prompt/completion tokens, by model id."""

    prices: Mapping[str, tuple[Decimal, Decimal]]

    def __post_init__(self):
        for model, (p_in, p_out) in self.prices.items():
            if p_in < 0 or p_out < 0:
                raise ValueError(f"negative price for model {model!r}")

    @classmethod
    def from_file(cls, path: str) -> "PriceTable":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(
            prices={
                model: (Decimal(str(pair[0])), Decimal(str(pair[1])))
                for model, pair in raw.items()
            }
        )


def compute_cost(usage: TokenUsage, model_id: str, prices: PriceTable) -> Decimal:
    """Exact-decimal cost in USD, quantized to 4 decimal places."""
    if model_id not in prices.prices:
        raise UnknownModelError(f"unknown_model: {model_id!r} not in price table")
    p_in, p_out = prices.prices[model_id]
    million = Decimal(1_000_000)
    cost = (usage.prompt_tokens * p_in + usage.completion_tokens * p_out) / million
    return cost.quantize(Decimal("0.0001"))


def _request(
    endpoint: EndpointConfig, method: str, path: str, payload: dict | None = None
) -> dict:
    try:
        response = requests.request(
            method,
            endpoint.url(path),
            headers=endpoint.headers(),
            json=payload,
            timeout=endpoint.request_timeout,
        )
    except requests.RequestException as exc:
        raise TransportError(f"{method} {path}: {exc.__class__.__name__}") from exc
    if not 200 <= response.status_code < 300:
        raise ApiError(response.status_code, response.text[:200])
    try:
        return response.json()
    except ValueError as exc:
        raise ApiError(response.status_code, "response body is not JSON") from exc


def list_models(endpoint: EndpointConfig) -> list[str]:
    """Model ids advertised by GET /models, in the order the endpoint returned."""
    body = _request(endpoint, "GET", "/models")
    data = body.get("data", body if isinstance(body, list) else [])
    return [item["id"] for item in data]


def chat_completion(
    endpoint: EndpointConfig, messages: list[dict[str, str]]
) -> tuple[str, TokenUsage]:
    """One chat-completions call; returns the assistant text and reported usage."""
    payload = {
        "model": endpoint.model_id,
        "messages": messages,
        "temperature": 0,
        "response_format": {"type": "json_object"},
    }
    body = _request(endpoint, "POST", "/chat/completions", payload)
    try:
        content = body["choices"][0]["message"]["content"]
        usage_raw = body.get("usage", {})
    except (KeyError, IndexError, TypeError) as exc:
        raise ApiError(200, "malformed chat completion envelope") from exc
    usage = TokenUsage(
        prompt_tokens=int(usage_raw.get("prompt_tokens", 0)),
        completion_tokens=int(usage_raw.get("completion_tokens", 0)),
    )
    return content, usage


def batch_fragment(batch: list[FeatureSpec]) -> dict[str, Any]:
    """JSON Schema fragment containing only the batch's properties."""
    return {
        "type": "object",
        "properties": {spec.name: property_document(spec) for spec in batch},
    }


def build_prompt(
    instructions: str, batch: list[FeatureSpec], report_text: str
) -> list[dict[str, str]]:
    """System message carries the task instructions; the user message carries
    the batch's schema fragment followed by the verbatim report."""
    if not batch:
        raise ValueError("batch must be non-empty")
    fragment = json.dumps(batch_fragment(batch), indent=2, ensure_ascii=False)
    user = f"{fragment}\n\n{REPORT_DELIMITER}\n{report_text}"
    return [
        {"role": "system", "content": instructions},
        {"role": "user", "content": user},
    ]


def _batch_violations(
    parsed: Any, batch: list[FeatureSpec], batch_schema: ExtractionSchema
) -> list[Violation]:
    if not isinstance(parsed, dict):
        return [Violation("", "wrong_type", "response is not a JSON object")]
    probe = ExtractionRecord(report_id="", values=parsed)
    violations = validate_record(probe, batch_schema)
    present = set(parsed)
    violations.extend(
        Violation(spec.name, "missing_feature", "absent from response")
        for spec in batch
        if spec.name not in present
    )
    return violations


def _corrective_message(violations: list[Violation]) -> str:
    lines = [f"- {v.feature or '(response)'}: {v.kind} {v.detail}".rstrip() for v in violations]
    return (
        "The previous response did not satisfy the schema:\n"
        + "\n".join(lines)
        + "\nRespond again with a single JSON object containing exactly the "
        "requested fields with conforming values."
    )


@dataclass
class BatchResult:
    values: dict[str, Any] = field(default_factory=dict)
    statuses: dict[str, str] = field(default_factory=dict)
    usage: TokenUsage = TokenUsage()
    attempts: int = 0
    transport_failed: bool = False


def extract_batch(
    endpoint: EndpointConfig,
    instructions: str,
    batch: list[FeatureSpec],
    report_text: str,
    schema: ExtractionSchema,
) -> BatchResult:
    """Extract one batch of features, retrying invalid output with the
    validator's violation list appended as a corrective follow-up message."""
    result = BatchResult()
    batch_schema = subschema(schema, batch)
    messages = build_prompt(instructions, batch, report_text)
    last_parsed: Any = None

    for attempt in range(endpoint.max_retries + 1):
        result.attempts = attempt + 1
        try:
            content, usage = chat_completion(endpoint, messages)
        except (TransportError, ApiError) as exc:
            # 4xx will not improve on retry; 5xx and network errors might
            retriable = not (isinstance(exc, ApiError) and exc.status < 500)
            log.debug("batch attempt %d transport failure", attempt + 1)
            if not retriable or attempt == endpoint.max_retries:
                result.transport_failed = True
                for spec in batch:
                    result.statuses[spec.name] = STATUS_ABSENT
                return result
            continue
        result.usage = result.usage + usage

        try:
            parsed = json.loads(content)
            parse_problem = None
        except ValueError as exc:
            parsed = None
            parse_problem = [Violation("", "parse_error", f"not valid JSON: {exc}")]

        violations = parse_problem or _batch_violations(parsed, batch, batch_schema)
        if not violations:
            for spec in batch:
                result.values[spec.name] = parsed[spec.name]
                result.statuses[spec.name] = STATUS_OK
            return result
        last_parsed = parsed
        log.debug(
            "batch attempt %d: %d violations, %s",
            attempt + 1,
            len(violations),
            "retrying" if attempt < endpoint.max_retries else "giving up",
        )
        messages = messages + [
            {"role": "assistant", "content": content},
            {"role": "user", "content": _corrective_message(violations)},
        ]

    final = last_parsed if isinstance(last_parsed, dict) else {}
    for spec in batch:
        if spec.name in final and _batch_violations(
            {spec.name: final[spec.name]}, [spec], batch_schema
        ) == []:
            result.values[spec.name] = final[spec.name]
            result.statuses[spec.name] = STATUS_OK
        else:
            result.statuses[spec.name] = STATUS_FAILED
    return result


def extract_report(
    endpoint: EndpointConfig,
    schema: ExtractionSchema,
    report_text: str,
    report_id: str = "",
) -> ExtractionRecord:
    """Run every batch (concurrently up to max_parallel_requests) and merge.

    Batches that fail at the transport level mark their features absent and
    flag the record incomplete; everything else lands as ok or
    failed_after_retries.
    """
    batches = [b for b in batch_features(schema) if b]
    if not batches:
        raise ValueError("schema has no batches")

    def run(batch: list[FeatureSpec]) -> BatchResult:
        return extract_batch(endpoint, schema.task_instructions, batch, report_text, schema)

    if endpoint.max_parallel_requests == 1 or len(batches) == 1:
        results = [run(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=endpoint.max_parallel_requests) as pool:
            results = list(pool.map(run, batches))

    merged_values: dict[str, Any] = {}
    merged_statuses: dict[str, str] = {}
    usage = TokenUsage()
    complete = True
    for result in results:
        usage = usage + result.usage
        merged_statuses.update(result.statuses)
        merged_values.update(result.values)
        if result.transport_failed:
            complete = False

    record = ExtractionRecord(report_id=report_id, usage=usage, complete=complete)
    for spec in schema.features:
        status = merged_statuses.get(spec.name, STATUS_ABSENT)
        record.statuses[spec.name] = status
        if status == STATUS_OK:
            record.values[spec.name] = merged_values[spec.name]
    log.info(
        "report %s: %d/%d features ok, usage %d+%d tokens",
        report_id or "<unnamed>",
        sum(1 for s in record.statuses.values() if s == STATUS_OK),
        len(schema.features),
        usage.prompt_tokens,
        usage.completion_tokens,
    )
    return record
