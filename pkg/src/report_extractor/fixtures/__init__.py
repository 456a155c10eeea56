"""Bundled example configuration: a 51-feature breast-pathology schema split
into 13 request batches, task instructions, and a JSON-LD context binding
feature names to terminology IRIs.

The Side feature maps to its standard concept IRI; the remaining bindings use
a placeholder vocabulary pending real terminology mapping.
"""

from __future__ import annotations

import json
from importlib import resources

from ..linked_data import ContextMap, parse_context
from ..schema import ExtractionSchema, parse_schema


def fixture_text(name: str) -> str:
    return resources.files(__package__).joinpath(name).read_text(encoding="utf-8")


def load_schema() -> ExtractionSchema:
    return parse_schema(
        fixture_text("schema.json"),
        instructions=fixture_text("instructions.txt"),
        batching=json.loads(fixture_text("batches.json")),
    )


def load_context() -> ContextMap:
    return parse_context(fixture_text("context.jsonld"))
