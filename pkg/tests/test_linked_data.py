import json

import pytest

from report_extractor.linked_data import ContextError, parse_context, to_linked_data
from report_extractor.schema import ExtractionRecord

from oracles import expand_jsonld

SIDE_IRI = "http://snomed.info/id/384727002"


class TestParseContext:
    def test_simple_binding(self):
        ctx = parse_context(json.dumps({"@context": {"Side": SIDE_IRI}}))
        assert ctx.term_bindings == {"Side": SIDE_IRI}

    def test_empty_context(self):
        ctx = parse_context('{"@context": {}}')
        assert ctx.term_bindings == {}

    def test_expanded_definition_equivalent(self):
        compact = parse_context(json.dumps({"@context": {"Side": SIDE_IRI}}))
        expanded = parse_context(json.dumps({"@context": {"Side": {"@id": SIDE_IRI}}}))
        assert compact.term_bindings == expanded.term_bindings

    def test_missing_context_rejected(self):
        with pytest.raises(ContextError, match="not_a_context"):
            parse_context('{"Side": "x"}')

    def test_relative_iri_kept_with_warning(self, caplog):
        with caplog.at_level("WARNING"):
            ctx = parse_context('{"@context": {"Side": "local/term"}}')
        assert ctx.term_bindings["Side"] == "local/term"
        assert any("relative IRI" in r.message for r in caplog.records)

    def test_keywords_skipped(self):
        ctx = parse_context(
            json.dumps({"@context": {"@version": 1.1, "Side": SIDE_IRI}})
        )
        assert ctx.term_bindings == {"Side": SIDE_IRI}


class TestToLinkedData:
    def test_bound_feature_expands_to_iri(self):
        ctx = parse_context(json.dumps({"@context": {"Side": SIDE_IRI}}))
        record = ExtractionRecord(report_id="r", values={"Side": "right"})
        document, unmapped = to_linked_data(record, ctx)
        assert unmapped == []
        expanded = expand_jsonld(document)
        assert expanded == [{SIDE_IRI: [{"@value": "right"}]}]

    def test_empty_record(self):
        ctx = parse_context(json.dumps({"@context": {"Side": SIDE_IRI}}))
        document, unmapped = to_linked_data(ExtractionRecord(report_id="r"), ctx)
        assert set(document) == {"@context"}
        assert unmapped == []

    def test_unbound_feature_passes_through_with_warning(self):
        ctx = parse_context(json.dumps({"@context": {"Side": SIDE_IRI}}))
        record = ExtractionRecord(
            report_id="r", values={"Side": "left", "CustomNote": "check"}
        )
        document, unmapped = to_linked_data(record, ctx)
        assert document["CustomNote"] == "check"
        assert unmapped == ["CustomNote"]

    def test_stripping_context_recovers_record(self):
        ctx = parse_context(json.dumps({"@context": {"Side": SIDE_IRI}}))
        values = {"Side": "left", "Grade": 2, "Weight": None}
        record = ExtractionRecord(report_id="r", values=values)
        document, _ = to_linked_data(record, ctx)
        body = {k: v for k, v in document.items() if k != "@context"}
        assert body == values

    def test_round_trips_as_json(self):
        ctx = parse_context(json.dumps({"@context": {"Side": SIDE_IRI}}))
        record = ExtractionRecord(report_id="r", values={"Side": "left"})
        document, _ = to_linked_data(record, ctx)
        assert json.loads(json.dumps(document)) == document

    def test_bundled_context_covers_schema(self, bundled_schema, bundled_context):
        values = {spec.name: None for spec in bundled_schema.features}
        record = ExtractionRecord(report_id="r", values=values)
        document, unmapped = to_linked_data(record, bundled_context)
        assert unmapped == []
        expanded = expand_jsonld(document)[0]
        assert SIDE_IRI in expanded
        assert len(expanded) == len(bundled_schema.features)
