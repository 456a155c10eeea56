"""Build a 20-conflict adjudication fixture for the UI session test.

Usage: python3 fixture_setup.py <target-dir>

Writes queue.json, agreements.json, schema.json, a reports/ directory (the
first report is a spaced grid whose exact rendering the test asserts), and
meta.json describing the fixture.
"""

import json
import sys
from pathlib import Path

from report_extractor.goldstandard import (
    AnnotationSet,
    diff_annotations,
    make_adjudication_queue,
    save_agreements,
    save_queue,
)
from report_extractor.schema import parse_schema

HUMAN_ID = "HUMAN_TS_A1"
MODEL_ID = "MODEL_TS_B2"

GRID_TEXT = (
    "Name:          [REDACTED]\n"
    "Hospital No:   [REDACTED]      Lab No:  H1234\n"
    "\n"
    "MACROSCOPY\n"
    "  Specimen:    wide local excision     Weight:  34 g\n"
    "  Margins:     medial 2 mm   lateral 11 mm\n"
    "\n"
    "MICROSCOPY\n"
    "  Margin status conflicting between sections."
)

SCHEMA_DOC = {
    "properties": {
        "Margin": {
            "type": "string",
            "enum": ["clear", "involved", "close"],
            "description": "Margin status after excision.",
        }
    }
}


def main() -> None:
    target = Path(sys.argv[1])
    target.mkdir(parents=True, exist_ok=True)
    reports_dir = target / "reports"
    reports_dir.mkdir(exist_ok=True)

    human = AnnotationSet(HUMAN_ID, {})
    model = AnnotationSet(MODEL_ID, {})
    report_ids = []
    for i in range(20):
        report_id = f"r{i:03d}"
        report_ids.append(report_id)
        human.entries[(report_id, "Margin")] = "clear"
        model.entries[(report_id, "Margin")] = "involved"
        text = GRID_TEXT if i == 0 else f"Report {report_id}\n  Margin note line {i}"
        (reports_dir / f"{report_id}.txt").write_text(text, encoding="utf-8")

    schema_path = target / "schema.json"
    schema_path.write_text(json.dumps(SCHEMA_DOC, indent=2), encoding="utf-8")
    parse_schema(schema_path.read_text())  # sanity

    result = diff_annotations(human, model)
    queue = make_adjudication_queue(result.conflicts, HUMAN_ID, MODEL_ID, seed=314)
    save_agreements(result, str(target / "agreements.json"))
    save_queue(queue, str(target / "queue.json"))

    (target / "meta.json").write_text(
        json.dumps(
            {
                "human_id": HUMAN_ID,
                "model_id": MODEL_ID,
                "report_ids": report_ids,
                "grid_report_id": "r000",
                "grid_text": GRID_TEXT,
                "conflict_count": len(queue),
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    print(f"fixture ready: {len(queue)} conflicts in {target}")


if __name__ == "__main__":
    main()
