"""Data-dictionary handling: parse a JSON Schema document into feature specs,
validate extracted records against it, and group features into request batches.

The supported JSON Schema subset is deliberately small (type, enum, minimum,
maximum, description, properties). Extension keywords carry metadata the
standard vocabulary cannot express:

* ``x-unit`` -- measurement unit label.
* ``x-enum-labels`` -- human-readable labels parallel to ``enum``.
* ``x-no-mention-code`` -- the code (possibly ``null``) meaning the feature
  was not mentioned in the report.
* ``x-negative-code`` -- the code meaning an explicit negative finding.

Any other unknown keyword is preserved verbatim and ignored for validation.
Batch assignment lives outside the schema document, in a sidecar JSON map of
feature name to batch number; unassigned features default to batch 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, TYPE_CHECKING

if TYPE_CHECKING:
    from .client import TokenUsage

FEATURE_KINDS = ("categorical", "integer", "decimal", "free-text", "boolean-coded")

STATUS_OK = "ok"
STATUS_FAILED = "failed_after_retries"
STATUS_ABSENT = "absent"

_KNOWN_KEYWORDS = {
    "type",
    "enum",
    "minimum",
    "maximum",
    "description",
    "x-unit",
    "x-enum-labels",
    "x-no-mention-code",
    "x-negative-code",
}


class _Unset:
    """Marker distinguishing 'keyword absent' from an explicit null code."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNSET"

    def __bool__(self):
        return False


UNSET = _Unset()


class SchemaError(ValueError):
    """The schema document violates a structural constraint."""


class SchemaParseError(SchemaError):
    """The schema document is not well-formed JSON."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(message)
        self.byte_offset = byte_offset


@dataclass(frozen=True, eq=True)
class FeatureSpec:
    """One extractable feature and its formatting constraints."""

    name: str
    kind: str
    description: str = ""
    allowed_codes: tuple[tuple[Any, str], ...] | None = None
    unit: str | None = None
    range: tuple[float, float] | None = None
    batch_id: int = 1
    nullable: bool = False
    no_mention_code: Any = UNSET
    negative_code: Any = UNSET
    extra: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and not self.allowed_codes:
            raise SchemaError(f"feature {self.name!r}: categorical without codes")
        if self.range is not None:
            lo, hi = self.range
            if lo > hi:
                raise SchemaError(
                    f"feature {self.name!r}: range minimum {lo} exceeds maximum {hi}"
                )
        if self.batch_id < 1:
            raise SchemaError(f"feature {self.name!r}: batch_id must be >= 1")

    @property
    def codes(self) -> tuple[Any, ...]:
        return tuple(code for code, _ in self.allowed_codes) if self.allowed_codes else ()

    @property
    def has_no_mention_code(self) -> bool:
        return self.no_mention_code is not UNSET

    @property
    def has_negative_code(self) -> bool:
        return self.negative_code is not UNSET


@dataclass(frozen=True, eq=True)
class ExtractionSchema:
    """An ordered, immutable collection of feature specs plus task instructions."""

    features: tuple[FeatureSpec, ...]
    task_instructions: str = ""
    batch_count: int = 1
    extra: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        names = [f.name for f in self.features]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SchemaError(f"duplicate feature names: {sorted(dupes)}")
        used = {f.batch_id for f in self.features}
        if self.features and used != set(range(1, self.batch_count + 1)):
            missing = sorted(set(range(1, self.batch_count + 1)) - used)
            raise SchemaError(
                f"batch ids must cover 1..{self.batch_count}; unused: {missing}"
            )

    def __getitem__(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(f.name == name for f in self.features)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)


@dataclass
class ExtractionRecord:
    """One report's extracted values plus per-feature status and usage totals.

    ``values`` only ever holds values whose status is ``ok``; features that
    failed validation after retries or whose batch never completed are absent
    from ``values`` and carry status ``failed_after_retries`` / ``absent``.
    """

    report_id: str
    values: dict[str, Any] = field(default_factory=dict)
    statuses: dict[str, str] = field(default_factory=dict)
    usage: "TokenUsage | None" = None
    complete: bool = True


@dataclass(frozen=True)
class Violation:
    feature: str
    kind: str
    detail: str = ""


ValidationReport = list


def _json_loads_strict(text: str) -> Any:
    """json.loads that rejects duplicate object keys and reports byte offsets."""

    def hook(pairs):
        obj = {}
        for key, value in pairs:
            if key in obj:
                raise SchemaError(f"duplicate property name: {key!r}")
            obj[key] = value
        return obj

    try:
        return json.loads(text, object_pairs_hook=hook)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise SchemaParseError(
            f"malformed JSON at byte {offset}: {exc.msg}", byte_offset=offset
        ) from exc


def _infer_kind(prop: Mapping[str, Any], name: str) -> tuple[str, bool]:
    """Map a property object's type/enum declaration to (kind, nullable)."""
    declared = prop.get("type")
    types = declared if isinstance(declared, list) else ([declared] if declared else [])
    nullable = "null" in types
    types = [t for t in types if t != "null"]
    enum = prop.get("enum")
    if enum is not None:
        if None in enum:
            nullable = True
        if types == ["boolean"]:
            return "boolean-coded", nullable
        return "categorical", nullable
    if not types:
        return "free-text", nullable
    if len(types) > 1:
        raise SchemaError(f"feature {name!r}: multiple non-null types {types}")
    t = types[0]
    if t == "integer":
        return "integer", nullable
    if t == "number":
        return "decimal", nullable
    if t == "string":
        return "free-text", nullable
    if t == "boolean":
        return "boolean-coded", nullable
    raise SchemaError(f"feature {name!r}: unsupported type {t!r}")


def _parse_feature(name: str, prop: Any, batch_id: int) -> FeatureSpec:
    if not isinstance(prop, Mapping):
        raise SchemaError(f"feature {name!r}: property definition must be an object")
    kind, nullable = _infer_kind(prop, name)

    allowed_codes = None
    enum = prop.get("enum")
    if enum is not None:
        codes = [c for c in enum if c is not None]
        if not codes:
            raise SchemaError(f"feature {name!r}: empty enumeration")
        labels = prop.get("x-enum-labels")
        if labels is not None and len(labels) != len(codes):
            raise SchemaError(f"feature {name!r}: x-enum-labels length mismatch")
        if labels is None:
            labels = [str(c) for c in codes]
        allowed_codes = tuple(zip(codes, labels))

    rng = None
    if "minimum" in prop or "maximum" in prop:
        lo = prop.get("minimum", -math.inf)
        hi = prop.get("maximum", math.inf)
        rng = (lo, hi)

    extra = tuple(
        (k, v) for k, v in prop.items() if k not in _KNOWN_KEYWORDS
    )
    return FeatureSpec(
        name=name,
        kind=kind,
        description=prop.get("description", ""),
        allowed_codes=allowed_codes,
        unit=prop.get("x-unit"),
        range=rng,
        batch_id=batch_id,
        nullable=nullable,
        no_mention_code=prop.get("x-no-mention-code", UNSET),
        negative_code=prop.get("x-negative-code", UNSET),
        extra=extra,
    )


def parse_schema(
    schema_document: str,
    instructions: str = "",
    batching: Mapping[str, int] | None = None,
) -> ExtractionSchema:
    """Parse a JSON Schema document plus instructions and a batching sidecar.

    Features listed in ``batching`` get the mapped batch number; the rest get
    batch 1. Batch numbers must form a contiguous range starting at 1.
    """
    doc = _json_loads_strict(schema_document)
    if not isinstance(doc, Mapping):
        raise SchemaError("schema document must be a JSON object")
    props = doc.get("properties")
    if not isinstance(props, Mapping):
        raise SchemaError("schema document lacks an object-valued 'properties'")

    batching = dict(batching or {})
    unknown = sorted(set(batching) - set(props))
    if unknown:
        raise SchemaError(f"batching references unknown features: {unknown}")
    for name, bid in batching.items():
        if not isinstance(bid, int) or isinstance(bid, bool) or bid < 1:
            raise SchemaError(f"batch id for {name!r} must be a positive integer")

    features = tuple(
        _parse_feature(name, prop, batching.get(name, 1))
        for name, prop in props.items()
    )
    batch_count = max((f.batch_id for f in features), default=1)
    extra = tuple((k, v) for k, v in doc.items() if k != "properties")
    return ExtractionSchema(
        features=features,
        task_instructions=instructions,
        batch_count=batch_count,
        extra=extra,
    )


def property_document(spec: FeatureSpec) -> dict[str, Any]:
    """Render one feature back to its JSON Schema property object."""
    prop: dict[str, Any] = {}
    if spec.kind == "integer":
        base = "integer"
    elif spec.kind == "decimal":
        base = "number"
    elif spec.kind == "boolean-coded":
        base = "boolean"
    elif spec.kind == "categorical" and spec.codes:
        # declare the base type the codes actually use
        first = spec.codes[0]
        if isinstance(first, bool):
            base = "boolean"
        elif isinstance(first, int):
            base = "integer"
        elif isinstance(first, float):
            base = "number"
        else:
            base = "string"
    else:
        base = "string"
    prop["type"] = [base, "null"] if spec.nullable else base
    if spec.allowed_codes is not None:
        prop["enum"] = list(spec.codes) + ([None] if spec.nullable else [])
        labels = [label for _, label in spec.allowed_codes]
        if labels != [str(c) for c in spec.codes]:
            prop["x-enum-labels"] = labels
    if spec.range is not None:
        lo, hi = spec.range
        if lo != -math.inf:
            prop["minimum"] = lo
        if hi != math.inf:
            prop["maximum"] = hi
    if spec.description:
        prop["description"] = spec.description
    if spec.unit is not None:
        prop["x-unit"] = spec.unit
    if spec.has_no_mention_code:
        prop["x-no-mention-code"] = spec.no_mention_code
    if spec.has_negative_code:
        prop["x-negative-code"] = spec.negative_code
    prop.update(dict(spec.extra))
    return prop


def schema_document(schema: ExtractionSchema) -> str:
    """Serialize a parsed schema back to JSON Schema text (round-trip safe)."""
    doc = dict(schema.extra)
    doc["properties"] = {f.name: property_document(f) for f in schema.features}
    return json.dumps(doc, indent=2, ensure_ascii=False)


def batching_map(schema: ExtractionSchema) -> dict[str, int]:
    return {f.name: f.batch_id for f in schema.features}


def _codes_equal(code: Any, value: Any) -> bool:
    # bool is an int subclass; True == 1 must not count as a code match.
    if isinstance(code, bool) != isinstance(value, bool):
        return False
    return code == value


def _check_value(spec: FeatureSpec, value: Any) -> Violation | None:
    if value is None:
        if spec.nullable:
            return None
        return Violation(spec.name, "null_not_allowed", "value is null")

    if spec.kind == "categorical":
        if not any(_codes_equal(c, value) for c in spec.codes):
            return Violation(
                spec.name, "out_of_enum", f"{value!r} not among {len(spec.codes)} codes"
            )
        return None

    if spec.kind == "boolean-coded":
        if spec.allowed_codes:
            if not any(_codes_equal(c, value) for c in spec.codes):
                return Violation(spec.name, "out_of_enum", repr(value))
            return None
        if not isinstance(value, bool):
            return Violation(spec.name, "wrong_type", "expected boolean")
        return None

    if spec.kind == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            return Violation(spec.name, "wrong_type", "expected integer")
    elif spec.kind == "decimal":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return Violation(spec.name, "wrong_type", "expected number")
        if not math.isfinite(value):
            return Violation(spec.name, "wrong_type", "non-finite number")
    elif spec.kind == "free-text":
        if not isinstance(value, str):
            return Violation(spec.name, "wrong_type", "expected string")
        return None

    if spec.range is not None:
        lo, hi = spec.range
        if not (lo <= value <= hi):
            return Violation(
                spec.name, "out_of_range", f"{value} outside [{lo}, {hi}]"
            )
    return None


def validate_record(record: ExtractionRecord, schema: ExtractionSchema) -> ValidationReport:
    """Check every value in the record; return all violations, never just the first."""
    report: list[Violation] = []
    for name, value in record.values.items():
        if name not in schema:
            report.append(Violation(name, "unknown_feature", "not in schema"))
            continue
        violation = _check_value(schema[name], value)
        if violation is not None:
            report.append(violation)
    return report


def batch_features(schema: ExtractionSchema) -> list[list[FeatureSpec]]:
    """Group features by batch id, ascending, preserving document order within."""
    batches: list[list[FeatureSpec]] = [[] for _ in range(schema.batch_count)]
    for f in schema.features:
        batches[f.batch_id - 1].append(f)
    return batches


def subschema(schema: ExtractionSchema, features: Iterable[FeatureSpec]) -> ExtractionSchema:
    """A single-batch schema restricted to the given features (for batch validation)."""
    subset = tuple(
        FeatureSpec(
            name=f.name,
            kind=f.kind,
            description=f.description,
            allowed_codes=f.allowed_codes,
            unit=f.unit,
            range=f.range,
            batch_id=1,
            nullable=f.nullable,
            no_mention_code=f.no_mention_code,
            negative_code=f.negative_code,
            extra=f.extra,
        )
        for f in features
    )
    return ExtractionSchema(
        features=subset,
        task_instructions=schema.task_instructions,
        batch_count=1,
    )
