import json
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from report_extractor import fixtures
from report_extractor.schema import ExtractionSchema


@pytest.fixture(scope="session")
def bundled_schema() -> ExtractionSchema:
    return fixtures.load_schema()


@pytest.fixture(scope="session")
def bundled_context():
    return fixtures.load_context()


def sample_value(spec, rng: random.Random):
    """A value conforming to the feature spec, drawn deterministically."""
    if spec.nullable and rng.random() < 0.2:
        return None
    if spec.allowed_codes:
        return rng.choice(list(spec.codes))
    if spec.kind == "integer":
        lo, hi = spec.range if spec.range else (0, 100)
        return rng.randint(int(lo), int(hi))
    if spec.kind == "decimal":
        lo, hi = spec.range if spec.range else (0.0, 100.0)
        return round(rng.uniform(float(lo), float(hi)), 1)
    if spec.kind == "boolean-coded":
        return rng.random() < 0.5
    if spec.kind == "free-text":
        return rng.choice(["not otherwise specified", "classical pattern", "focal change"])
    raise AssertionError(spec.kind)


def synthetic_reports(schema, count: int, seed: int):
    """Deterministic (report_id, text, answers) triples for mock-server runs."""
    rng = random.Random(seed)
    out = []
    for i in range(count):
        report_id = f"report-{i:03d}"
        answers = {spec.name: sample_value(spec, rng) for spec in schema.features}
        lines = [
            f"SYNTHETIC PATHOLOGY REPORT {report_id.upper()}",
            "",
            "Clinical details:  specimen received fresh, oriented.",
            f"Macroscopic:       single specimen, token {rng.randrange(10**8):08d}.",
            "Microscopic:       see coded findings.",
            "",
        ]
        for name, value in answers.items():
            lines.append(f"  {name}: {json.dumps(value)}")
        out.append((report_id, "\n".join(lines), answers))
    return out
