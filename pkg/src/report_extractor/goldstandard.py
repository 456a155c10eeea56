"""Build a gold-standard dataset from two annotation sets: agreements are
accepted automatically, disagreements go through a blinded, seeded
adjudication queue, and an adjudicator's decisions (or OCR-error flags) are
folded back into the final dataset with per-entry provenance.
"""

from __future__ import annotations

import csv
import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .schema import ExtractionSchema, FeatureSpec

Key = tuple[str, str]  # (report_id, feature_name)

PROVENANCE_AGREEMENT = "agreement"
PROVENANCE_ALIGNED_HUMAN = "aligned_human"
PROVENANCE_ALIGNED_LLM = "aligned_llm"
PROVENANCE_PHYSICIAN_NEW = "physician_new"
PROVENANCE_OCR_ERROR = "ocr_error_human"

DECISION_A = "choose_a"
DECISION_B = "choose_b"
DECISION_OTHER = "other"


class GoldStandardError(ValueError):
    pass


class UnresolvedConflictsError(GoldStandardError):
    def __init__(self, conflict_ids: list[str]):
        super().__init__(f"unresolved_conflicts: {len(conflict_ids)} conflicts lack a resolution")
        self.conflict_ids = conflict_ids


class UnknownConflictError(GoldStandardError):
    pass


def normalize_value(value: Any, spec: FeatureSpec | None = None) -> Any:
    """Canonical form for agreement comparison.

    Lexical noise must not manufacture conflicts: surrounding whitespace is
    trimmed, values that parse as numbers compare by numeric value (so "05"
    equals 5), and remaining strings compare case-insensitively.
    """
    if value is None:
        return None
    if isinstance(value, bool):
        # distinct from numeric 1/0, but equal to the strings "true"/"false"
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            return float(text)
        except ValueError:
            pass
        if spec is None or spec.kind in ("categorical", "boolean-coded"):
            return text.casefold()
        return text
    return value


def values_agree(a: Any, b: Any, spec: FeatureSpec | None = None) -> bool:
    return normalize_value(a, spec) == normalize_value(b, spec)


@dataclass
class AnnotationSet:
    """One annotator's (report, feature) -> value map."""

    annotator_id: str
    entries: dict[Key, Any] = field(default_factory=dict)


def load_annotation_sets(path: str) -> list[AnnotationSet]:
    """Read annotation rows from CSV or JSON; one AnnotationSet per annotator.

    Expected columns/keys: report_id, feature, value, annotator_id.
    """
    rows: list[dict[str, Any]]
    if str(path).endswith(".csv"):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    else:
        with open(path, encoding="utf-8") as fh:
            rows = json.load(fh)
    sets: dict[str, AnnotationSet] = {}
    for row in rows:
        annotator = row["annotator_id"]
        bucket = sets.setdefault(annotator, AnnotationSet(annotator_id=annotator))
        key = (row["report_id"], row["feature"])
        if key in bucket.entries:
            raise GoldStandardError(
                f"annotator {annotator!r} has duplicate entry for {key}"
            )
        bucket.entries[key] = row["value"]
    return list(sets.values())


def save_annotation_set(annotations: AnnotationSet, path: str) -> None:
    rows = [
        {
            "report_id": report,
            "feature": feature,
            "value": value,
            "annotator_id": annotations.annotator_id,
        }
        for (report, feature), value in annotations.entries.items()
    ]
    if str(path).endswith(".csv"):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["report_id", "feature", "value", "annotator_id"]
            )
            writer.writeheader()
            writer.writerows(rows)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2, ensure_ascii=False)


@dataclass(frozen=True)
class Agreement:
    report_id: str
    feature_name: str
    value_first: Any
    value_second: Any


@dataclass(frozen=True)
class ConflictSeed:
    """A disagreement as produced by diff, before blinding."""

    report_id: str
    feature_name: str
    value_first: Any
    value_second: Any


@dataclass
class DiffResult:
    first_id: str
    second_id: str
    agreements: list[Agreement]
    conflicts: list[ConflictSeed]
    coverage_gaps: list[dict[str, str]]

    @property
    def agreement_rate(self) -> float:
        total = len(self.agreements) + len(self.conflicts)
        return len(self.agreements) / total if total else 1.0


def diff_annotations(
    a: AnnotationSet, b: AnnotationSet, schema: ExtractionSchema | None = None
) -> DiffResult:
    """Split the comparable (report, feature) pairs into agreements and conflicts.

    Entries present in only one set are reported under coverage_gaps rather
    than silently dropped. Pairs are ordered by (report, feature) so the
    result is independent of input file ordering.
    """
    keys_a, keys_b = set(a.entries), set(b.entries)
    gaps = [
        {"report_id": r, "feature": f, "missing_from": b.annotator_id}
        for r, f in sorted(keys_a - keys_b)
    ] + [
        {"report_id": r, "feature": f, "missing_from": a.annotator_id}
        for r, f in sorted(keys_b - keys_a)
    ]

    agreements: list[Agreement] = []
    conflicts: list[ConflictSeed] = []
    for key in sorted(keys_a & keys_b):
        report, feature = key
        spec = schema[feature] if schema is not None and feature in schema else None
        va, vb = a.entries[key], b.entries[key]
        if values_agree(va, vb, spec):
            agreements.append(Agreement(report, feature, va, vb))
        else:
            conflicts.append(ConflictSeed(report, feature, va, vb))
    return DiffResult(
        first_id=a.annotator_id,
        second_id=b.annotator_id,
        agreements=agreements,
        conflicts=conflicts,
        coverage_gaps=gaps,
    )


@dataclass
class Conflict:
    """A queued disagreement with its blinded A/B assignment.

    ``source_a`` / ``source_b`` name the annotator behind each candidate and
    must never reach the presentation layer; use :meth:`presentation_view`.
    """

    conflict_id: str
    report_id: str
    feature_name: str
    candidate_a: Any
    candidate_b: Any
    source_a: str
    source_b: str
    queue_position: int
    version: int = 0

    def presentation_view(self) -> dict[str, Any]:
        return {
            "conflict_id": self.conflict_id,
            "report_id": self.report_id,
            "feature": self.feature_name,
            "candidate_a": self.candidate_a,
            "candidate_b": self.candidate_b,
            "queue_position": self.queue_position,
            "version": self.version,
        }


def _conflict_id(report_id: str, feature_name: str) -> str:
    digest = hashlib.sha1(f"{report_id}\x1f{feature_name}".encode("utf-8")).hexdigest()
    return digest[:12]


def make_adjudication_queue(
    conflicts: list[ConflictSeed], first_id: str, second_id: str, seed: int
) -> list[Conflict]:
    """Shuffle conflicts and blind their A/B assignment, deterministically in seed.

    The queue order is a uniformly random permutation; each conflict's A/B
    assignment is an independent fair coin drawn from the same generator.
    """
    rng = random.Random(seed)
    order = list(conflicts)
    rng.shuffle(order)
    queue = []
    for position, seed_conflict in enumerate(order):
        first_is_a = rng.random() < 0.5
        if first_is_a:
            cand_a, cand_b = seed_conflict.value_first, seed_conflict.value_second
            src_a, src_b = first_id, second_id
        else:
            cand_a, cand_b = seed_conflict.value_second, seed_conflict.value_first
            src_a, src_b = second_id, first_id
        queue.append(
            Conflict(
                conflict_id=_conflict_id(seed_conflict.report_id, seed_conflict.feature_name),
                report_id=seed_conflict.report_id,
                feature_name=seed_conflict.feature_name,
                candidate_a=cand_a,
                candidate_b=cand_b,
                source_a=src_a,
                source_b=src_b,
                queue_position=position,
            )
        )
    return queue


@dataclass
class Resolution:
    conflict_id: str
    decision: str
    other_value: Any = None
    ocr_error_flag: bool = False
    decided_at: str = ""

    def __post_init__(self):
        if self.decision not in (DECISION_A, DECISION_B, DECISION_OTHER):
            raise GoldStandardError(f"unknown decision {self.decision!r}")


def save_resolutions(resolutions: Iterable[Resolution], path: str) -> None:
    """Append-only JSON-lines log; re-submissions simply append another line."""
    with open(path, "a", encoding="utf-8") as fh:
        for r in resolutions:
            fh.write(
                json.dumps(
                    {
                        "conflict_id": r.conflict_id,
                        "decision": r.decision,
                        "other_value": r.other_value,
                        "ocr_error_flag": r.ocr_error_flag,
                        "decided_at": r.decided_at,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_resolutions(path: str) -> dict[str, Resolution]:
    """Replay a JSON-lines resolutions log; the last line per conflict wins."""
    resolved: dict[str, Resolution] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            resolved[row["conflict_id"]] = Resolution(
                conflict_id=row["conflict_id"],
                decision=row["decision"],
                other_value=row.get("other_value"),
                ocr_error_flag=bool(row.get("ocr_error_flag", False)),
                decided_at=row.get("decided_at", ""),
            )
    return resolved


@dataclass
class GoldStandard:
    """Adjudicated reference values with per-entry provenance."""

    entries: dict[Key, Any] = field(default_factory=dict)
    provenance: dict[Key, str] = field(default_factory=dict)

    def composition(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for category in self.provenance.values():
            counts[category] = counts.get(category, 0) + 1
        return counts

    def conflict_composition(self) -> dict[str, dict[str, float]]:
        """Counts and percentages over adjudicated (non-agreement) entries."""
        counts = self.composition()
        conflict_total = sum(
            n for cat, n in counts.items() if cat != PROVENANCE_AGREEMENT
        )
        out = {}
        for category, n in sorted(counts.items()):
            if category == PROVENANCE_AGREEMENT:
                continue
            pct = 100.0 * n / conflict_total if conflict_total else 0.0
            out[category] = {"count": n, "percent_of_conflicts": round(pct, 1)}
        return out


def apply_resolutions(
    agreements: list[Agreement],
    conflicts: list[Conflict],
    resolutions: Mapping[str, Resolution],
    human_set_id: str,
) -> GoldStandard:
    """Assemble the gold standard from agreements plus adjudicated conflicts.

    An OCR-error flag overrides the recorded decision: the human annotator's
    candidate becomes the gold value. Otherwise choose_a/choose_b are
    unblinded against the conflict's hidden sources, and a novel value is
    recorded with physician_new provenance.
    """
    known_ids = {c.conflict_id for c in conflicts}
    unknown = sorted(set(resolutions) - known_ids)
    if unknown:
        raise UnknownConflictError(f"resolutions reference unknown conflicts: {unknown}")
    missing = [c.conflict_id for c in conflicts if c.conflict_id not in resolutions]
    if missing:
        raise UnresolvedConflictsError(missing)

    gold = GoldStandard()
    for agreement in agreements:
        key = (agreement.report_id, agreement.feature_name)
        gold.entries[key] = agreement.value_first
        gold.provenance[key] = PROVENANCE_AGREEMENT

    for conflict in conflicts:
        resolution = resolutions[conflict.conflict_id]
        key = (conflict.report_id, conflict.feature_name)
        if human_set_id == conflict.source_a:
            human_value = conflict.candidate_a
        elif human_set_id == conflict.source_b:
            human_value = conflict.candidate_b
        else:
            raise GoldStandardError(
                f"human set {human_set_id!r} is not a source of conflict {conflict.conflict_id}"
            )

        if resolution.ocr_error_flag:
            gold.entries[key] = human_value
            gold.provenance[key] = PROVENANCE_OCR_ERROR
            continue

        if resolution.decision == DECISION_OTHER:
            value = resolution.other_value
            if values_agree(value, conflict.candidate_a) or values_agree(
                value, conflict.candidate_b
            ):
                raise GoldStandardError(
                    f"conflict {conflict.conflict_id}: novel value equals an existing candidate"
                )
            gold.entries[key] = value
            gold.provenance[key] = PROVENANCE_PHYSICIAN_NEW
            continue

        if resolution.decision == DECISION_A:
            value, source = conflict.candidate_a, conflict.source_a
        else:
            value, source = conflict.candidate_b, conflict.source_b
        gold.entries[key] = value
        gold.provenance[key] = (
            PROVENANCE_ALIGNED_HUMAN if source == human_set_id else PROVENANCE_ALIGNED_LLM
        )
    return gold


def save_gold_standard(gold: GoldStandard, path: str) -> None:
    rows = [
        {
            "report_id": report,
            "feature": feature,
            "value": gold.entries[(report, feature)],
            "provenance": gold.provenance[(report, feature)],
        }
        for report, feature in sorted(gold.entries)
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, ensure_ascii=False)


def load_gold_standard(path: str) -> GoldStandard:
    with open(path, encoding="utf-8") as fh:
        rows = json.load(fh)
    gold = GoldStandard()
    for row in rows:
        key = (row["report_id"], row["feature"])
        gold.entries[key] = row["value"]
        gold.provenance[key] = row["provenance"]
    return gold


def save_queue(queue: list[Conflict], path: str) -> None:
    """Persist server-side queue state (includes hidden sources; not blinded)."""
    rows = [
        {
            "conflict_id": c.conflict_id,
            "report_id": c.report_id,
            "feature": c.feature_name,
            "candidate_a": c.candidate_a,
            "candidate_b": c.candidate_b,
            "source_a": c.source_a,
            "source_b": c.source_b,
            "queue_position": c.queue_position,
            "version": c.version,
        }
        for c in queue
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, ensure_ascii=False)


def load_queue(path: str) -> list[Conflict]:
    with open(path, encoding="utf-8") as fh:
        rows = json.load(fh)
    return [
        Conflict(
            conflict_id=row["conflict_id"],
            report_id=row["report_id"],
            feature_name=row["feature"],
            candidate_a=row["candidate_a"],
            candidate_b=row["candidate_b"],
            source_a=row["source_a"],
            source_b=row["source_b"],
            queue_position=row["queue_position"],
            version=row.get("version", 0),
        )
        for row in rows
    ]


def save_agreements(result: DiffResult, path: str) -> None:
    payload = {
        "first_id": result.first_id,
        "second_id": result.second_id,
        "agreements": [
            {
                "report_id": a.report_id,
                "feature": a.feature_name,
                "value_first": a.value_first,
                "value_second": a.value_second,
            }
            for a in result.agreements
        ],
        "coverage_gaps": result.coverage_gaps,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, ensure_ascii=False)


def load_agreements(path: str) -> tuple[list[Agreement], str, str]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    agreements = [
        Agreement(
            report_id=row["report_id"],
            feature_name=row["feature"],
            value_first=row["value_first"],
            value_second=row["value_second"],
        )
        for row in payload["agreements"]
    ]
    return agreements, payload["first_id"], payload["second_id"]
