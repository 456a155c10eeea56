"""Schema-driven structured information extraction from text reports, with
OCR layout reconstruction, de-identification, linked-data output, blinded
gold-standard adjudication, and annotator comparison statistics."""

from .client import EndpointConfig, PriceTable, TokenUsage, compute_cost, extract_report
from .evaluation import GlmFit, ReportOutcome, fit_binomial_glm, score_against_gold, two_sided_p
from .goldstandard import (
    AnnotationSet,
    GoldStandard,
    apply_resolutions,
    diff_annotations,
    make_adjudication_queue,
)
from .layout import OcrElement, PlainTextGrid, apply_spans, median_char_size, reassemble, redact_postcodes
from .linked_data import ContextMap, parse_context, to_linked_data
from .schema import (
    ExtractionRecord,
    ExtractionSchema,
    FeatureSpec,
    batch_features,
    parse_schema,
    validate_record,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet",
    "ContextMap",
    "EndpointConfig",
    "ExtractionRecord",
    "ExtractionSchema",
    "FeatureSpec",
    "GlmFit",
    "GoldStandard",
    "OcrElement",
    "PlainTextGrid",
    "PriceTable",
    "ReportOutcome",
    "TokenUsage",
    "apply_resolutions",
    "apply_spans",
    "batch_features",
    "compute_cost",
    "diff_annotations",
    "extract_report",
    "fit_binomial_glm",
    "make_adjudication_queue",
    "median_char_size",
    "parse_context",
    "parse_schema",
    "reassemble",
    "redact_postcodes",
    "score_against_gold",
    "to_linked_data",
    "two_sided_p",
    "validate_record",
]
