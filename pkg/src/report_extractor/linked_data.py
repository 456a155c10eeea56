"""Optional linked-data output: wrap extracted records in a user-supplied
JSON-LD context that binds local feature and value names to standard
terminology IRIs (SNOMED CT in the bundled fixtures).

The record body is emitted unchanged; the context alone carries the mapping,
so stripping ``@context`` from the output recovers the plain JSON record.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Any, Mapping

from .schema import ExtractionRecord

log = logging.getLogger(__name__)

_ABSOLUTE_IRI_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")


class ContextError(ValueError):
    """The supplied document is not a usable JSON-LD context."""


@dataclass(frozen=True)
class ContextMap:
    """Flattened term-to-IRI bindings plus the verbatim context for embedding."""

    term_bindings: Mapping[str, str]
    raw_context: Any


def parse_context(context_document: str) -> ContextMap:
    """Extract flat string-to-IRI bindings from a JSON-LD context document.

    Both spellings are honored: ``"Term": "<iri>"`` and
    ``"Term": {"@id": "<iri>"}``. Relative IRIs are kept but logged as a
    warning; JSON-LD keywords are skipped.
    """
    doc = json.loads(context_document)
    if not isinstance(doc, Mapping) or "@context" not in doc:
        raise ContextError("not_a_context: document lacks a top-level @context")
    context = doc["@context"]
    if not isinstance(context, Mapping):
        raise ContextError("not_a_context: @context must be an object")

    bindings: dict[str, str] = {}
    for term, definition in context.items():
        if term.startswith("@"):
            continue
        iri = None
        if isinstance(definition, str):
            iri = definition
        elif isinstance(definition, Mapping) and isinstance(definition.get("@id"), str):
            iri = definition["@id"]
        if iri is None:
            continue
        if not _ABSOLUTE_IRI_RE.match(iri):
            log.warning("context binds %r to relative IRI %r", term, iri)
        bindings[term] = iri
    return ContextMap(term_bindings=bindings, raw_context=context)


def to_linked_data(
    record: ExtractionRecord, context: ContextMap
) -> tuple[dict[str, Any], list[str]]:
    """Build the JSON-LD document for a record.

    Returns the document and the list of feature names with no binding in the
    context; unmapped features are passed through unchanged rather than
    dropped, so no extracted data is lost.
    """
    document: dict[str, Any] = {"@context": context.raw_context}
    unmapped = []
    for name, value in record.values.items():
        document[name] = value
        if name not in context.term_bindings:
            unmapped.append(name)
    return document, unmapped
