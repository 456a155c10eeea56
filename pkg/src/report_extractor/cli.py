"""Command-line surface for the extraction and evaluation pipeline.

Subcommands: layout, redact, extract, diff, adjudicate, gold, evaluate, and
mock-llm (a local OpenAI-compatible test endpoint). Exit codes: 0 success,
1 partial or data failure, 2 configuration error. The API key is read from
the EXTRACTOR_API_KEY environment variable, never from argv.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

from . import adjudication, client, evaluation, goldstandard, layout, linked_data
from . import mock_llm as mock
from .schema import SchemaError, parse_schema

API_KEY_ENV = "EXTRACTOR_API_KEY"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _fail_config(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_CONFIG


def _load_schema_args(args) -> "tuple[int, object] | tuple[None, object]":
    """Parse --schema/--instructions/--batches; (exit_code, None) on failure."""
    try:
        schema_text = Path(args.schema).read_text(encoding="utf-8")
    except OSError as exc:
        return _fail_config(f"cannot read schema: {exc}"), None
    instructions = ""
    if getattr(args, "instructions", None):
        try:
            instructions = Path(args.instructions).read_text(encoding="utf-8")
        except OSError as exc:
            return _fail_config(f"cannot read instructions: {exc}"), None
    batching = None
    if getattr(args, "batches", None):
        try:
            batching = json.loads(Path(args.batches).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            return _fail_config(f"cannot read batching sidecar: {exc}"), None
    try:
        schema = parse_schema(schema_text, instructions=instructions, batching=batching)
    except SchemaError as exc:
        return _fail_config(f"schema: {exc}"), None
    return None, schema


def cmd_layout(args) -> int:
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    if not in_dir.is_dir():
        return _fail_config(f"input directory {in_dir} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    for path in sorted(in_dir.glob("*.json")):
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
            elements = [
                layout.OcrElement(
                    text=item["text"],
                    bbox=tuple(item["bbox"]),
                    confidence=item.get("confidence"),
                )
                for item in raw
            ]
            grid = layout.reassemble(elements)
        except (ValueError, KeyError, TypeError) as exc:
            print(f"{path.name}: {exc}", file=sys.stderr)
            failures += 1
            continue
        (out_dir / (path.stem + ".txt")).write_text(grid.text + "\n", encoding="utf-8")
    return EXIT_FAILURE if failures else EXIT_OK


def cmd_redact(args) -> int:
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    if not in_dir.is_dir():
        return _fail_config(f"input directory {in_dir} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    for path in sorted(in_dir.glob("*.txt")):
        text = path.read_text(encoding="utf-8")
        try:
            if args.spans_dir:
                spans_path = Path(args.spans_dir) / (path.stem + ".json")
                if spans_path.exists():
                    rows = json.loads(spans_path.read_text(encoding="utf-8"))
                    spans = [
                        layout.RedactionSpan(row["start"], row["end"], row["category"])
                        for row in rows
                    ]
                    text = layout.apply_spans(text, spans)
            redacted, found = layout.redact_postcodes(text)
        except (ValueError, KeyError, TypeError) as exc:
            print(f"{path.name}: {exc}", file=sys.stderr)
            failures += 1
            continue
        (out_dir / path.name).write_text(redacted, encoding="utf-8")
        (out_dir / (path.stem + ".spans.json")).write_text(
            json.dumps(
                [
                    {"start": s.start, "end": s.end, "category": s.category}
                    for s in found
                ],
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
    return EXIT_FAILURE if failures else EXIT_OK


def _record_payload(record, schema) -> dict:
    return {spec.name: record.values[spec.name] for spec in schema.features if spec.name in record.values}


def cmd_extract(args) -> int:
    code, schema = _load_schema_args(args)
    if code is not None:
        return code
    context = None
    if args.context:
        try:
            context = linked_data.parse_context(
                Path(args.context).read_text(encoding="utf-8")
            )
        except (OSError, ValueError) as exc:
            return _fail_config(f"cannot read context: {exc}")
    split = None
    if args.split:
        try:
            split = json.loads(Path(args.split).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            return _fail_config(f"cannot read split file: {exc}")
    prices = None
    if args.price_table:
        try:
            prices = client.PriceTable.from_file(args.price_table)
        except (OSError, ValueError) as exc:
            return _fail_config(f"cannot read price table: {exc}")

    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    if not in_dir.is_dir():
        return _fail_config(f"input directory {in_dir} does not exist")
    reports = sorted(in_dir.glob("*.txt"))

    endpoint = client.EndpointConfig(
        base_url=args.base_url,
        api_key=os.environ.get(API_KEY_ENV, ""),
        model_id=args.model,
        request_timeout=args.timeout,
        max_retries=args.max_retries,
        max_parallel_requests=args.parallel,
    )
    try:
        models = client.list_models(endpoint)
    except client.ApiError as exc:
        if exc.status in (401, 403):
            return _fail_config(
                f"endpoint rejected credentials (status {exc.status}); set {API_KEY_ENV}"
            )
        return _fail_config(f"models endpoint failed: {exc}")
    except client.TransportError as exc:
        return _fail_config(f"cannot reach endpoint: {exc}")
    if models and args.model not in models:
        print(
            f"warning: model {args.model!r} not advertised by endpoint", file=sys.stderr
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"model": args.model, "seed": args.seed, "reports": {}}
    all_complete = True
    for path in reports:
        report_id = path.stem
        record = client.extract_report(
            endpoint, schema, path.read_text(encoding="utf-8"), report_id=report_id
        )
        all_complete = all_complete and record.complete
        payload = _record_payload(record, schema)
        (out_dir / f"{report_id}.json").write_text(
            json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        if context is not None:
            document, unmapped = linked_data.to_linked_data(record, context)
            (out_dir / f"{report_id}.jsonld").write_text(
                json.dumps(document, indent=2, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
            if unmapped:
                print(
                    f"warning: {report_id}: {len(unmapped)} features lack context bindings",
                    file=sys.stderr,
                )
        entry = {
            "statuses": record.statuses,
            "usage": {
                "prompt_tokens": record.usage.prompt_tokens,
                "completion_tokens": record.usage.completion_tokens,
            },
            "complete": record.complete,
        }
        if split is not None:
            membership = next(
                (name for name, ids in split.items() if report_id in ids), None
            )
            entry["split"] = membership
        if prices is not None:
            try:
                entry["cost_usd"] = str(
                    client.compute_cost(record.usage, args.model, prices)
                )
            except client.UnknownModelError:
                entry["cost_usd"] = None
        summary["reports"][report_id] = entry
    totals = {
        "prompt_tokens": sum(
            e["usage"]["prompt_tokens"] for e in summary["reports"].values()
        ),
        "completion_tokens": sum(
            e["usage"]["completion_tokens"] for e in summary["reports"].values()
        ),
    }
    summary["totals"] = totals
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    return EXIT_OK if all_complete else EXIT_FAILURE


def _load_single_annotator(path: str) -> "goldstandard.AnnotationSet | None":
    sets = goldstandard.load_annotation_sets(path)
    if len(sets) != 1:
        return None
    return sets[0]


def cmd_diff(args) -> int:
    code, schema = (None, None)
    if args.schema:
        code, schema = _load_schema_args(args)
        if code is not None:
            return code
    try:
        first = _load_single_annotator(args.first)
        second = _load_single_annotator(args.second)
    except (OSError, ValueError, KeyError) as exc:
        return _fail_config(f"cannot read annotations: {exc}")
    if first is None or second is None:
        return _fail_config("each annotation file must contain exactly one annotator")

    result = goldstandard.diff_annotations(first, second, schema)
    queue = goldstandard.make_adjudication_queue(
        result.conflicts, result.first_id, result.second_id, seed=args.seed
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    goldstandard.save_agreements(result, str(out_dir / "agreements.json"))
    goldstandard.save_queue(queue, str(out_dir / "queue.json"))
    rate = 100.0 * result.agreement_rate
    print(
        f"{len(result.agreements)} agreements, {len(result.conflicts)} conflicts "
        f"({rate:.2f}% agreement), {len(result.coverage_gaps)} coverage gaps"
    )
    return EXIT_OK


def cmd_adjudicate(args) -> int:
    try:
        queue = goldstandard.load_queue(args.queue)
    except (OSError, ValueError) as exc:
        return _fail_config(f"cannot read queue: {exc}")
    schema = None
    if args.schema:
        code, schema = _load_schema_args(args)
        if code is not None:
            return code
    reports_dir = Path(args.reports)
    if not reports_dir.is_dir():
        return _fail_config(f"reports directory {reports_dir} does not exist")
    texts = {
        p.stem: p.read_text(encoding="utf-8") for p in sorted(reports_dir.glob("*.txt"))
    }
    assist_endpoint = None
    if args.assist_base_url:
        assist_endpoint = client.EndpointConfig(
            base_url=args.assist_base_url,
            api_key=os.environ.get(API_KEY_ENV, ""),
            model_id=args.assist_model or "",
        )
    state = adjudication.AdjudicationState(
        queue=queue,
        report_texts=texts,
        schema=schema,
        resolutions_path=args.out,
        assist_endpoint=assist_endpoint,
    )
    if args.resume and Path(args.out).exists():
        state.resolutions = goldstandard.load_resolutions(args.out)
    handle = adjudication.serve_adjudication(state, port=args.port, ui_dir=args.ui)
    print(f"adjudication service listening on {handle.base_url}", flush=True)
    try:
        handle.wait_until_done()
        time.sleep(0.5)  # let trailing requests drain before teardown
    except KeyboardInterrupt:
        pass
    finally:
        handle.shutdown()
    remaining = len(queue) - len(state.resolutions)
    print(f"queue complete; {len(state.resolutions)} resolutions recorded")
    return EXIT_OK if remaining == 0 else EXIT_FAILURE


def cmd_gold(args) -> int:
    try:
        agreements, first_id, second_id = goldstandard.load_agreements(args.agreements)
        queue = goldstandard.load_queue(args.queue)
        resolutions = goldstandard.load_resolutions(args.resolutions)
    except (OSError, ValueError) as exc:
        return _fail_config(f"cannot read inputs: {exc}")
    if args.human not in (first_id, second_id):
        return _fail_config(
            f"--human {args.human!r} does not match annotators {first_id!r}/{second_id!r}"
        )
    try:
        gold = goldstandard.apply_resolutions(agreements, queue, resolutions, args.human)
    except goldstandard.GoldStandardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    goldstandard.save_gold_standard(gold, str(out_dir / "gold.json"))
    composition = {
        "counts": gold.composition(),
        "conflicts": gold.conflict_composition(),
    }
    (out_dir / "composition.json").write_text(
        json.dumps(composition, indent=2) + "\n", encoding="utf-8"
    )
    print(json.dumps(composition["counts"]))
    return EXIT_OK


def _check_split(gold, split_path: str, allow_mixed: bool) -> int | None:
    try:
        split = json.loads(Path(split_path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        return _fail_config(f"cannot read split file: {exc}")
    membership = {}
    for name, ids in split.items():
        for report_id in ids:
            membership[report_id] = name
    seen = {membership.get(report) for report, _ in gold.entries}
    seen.discard(None)
    if len(seen) > 1 and not allow_mixed:
        return _fail_config(
            f"gold standard mixes split sets {sorted(seen)}; pass --allow-mixed to override"
        )
    return None


def cmd_evaluate(args) -> int:
    code, schema = (None, None)
    if args.schema:
        code, schema = _load_schema_args(args)
        if code is not None:
            return code
    try:
        gold = goldstandard.load_gold_standard(args.gold)
    except (OSError, ValueError) as exc:
        return _fail_config(f"cannot read gold standard: {exc}")
    if args.split:
        code = _check_split(gold, args.split, args.allow_mixed)
        if code is not None:
            return code

    annotation_sets = []
    for path in args.annotations:
        try:
            annotation_sets.extend(goldstandard.load_annotation_sets(path))
        except (OSError, ValueError, KeyError) as exc:
            return _fail_config(f"cannot read annotations {path}: {exc}")
    ids = [a.annotator_id for a in annotation_sets]
    if args.reference not in ids:
        return _fail_config(f"reference {args.reference!r} not among annotators {ids}")

    outcomes = []
    accuracies = {}
    for annotations in annotation_sets:
        a_outcomes, a_accuracy = evaluation.score_against_gold(annotations, gold, schema)
        outcomes.extend(a_outcomes)
        accuracies[annotations.annotator_id] = a_accuracy
    try:
        fit = evaluation.fit_binomial_glm(outcomes, reference_id=args.reference)
    except evaluation.EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    costs = {}
    if args.costs:
        try:
            costs = json.loads(Path(args.costs).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            return _fail_config(f"cannot read costs file: {exc}")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    mention = evaluation.mention_rates(gold, schema) if schema is not None else {}
    annotator_order = [args.reference] + sorted(a for a in ids if a != args.reference)
    features = sorted({feature for _, feature in gold.entries})
    with open(out_dir / "per_feature_accuracy.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature"] + annotator_order + ["mention"])
        for feature in features:
            row = [feature]
            for annotator in annotator_order:
                value = accuracies.get(annotator, {}).get(feature)
                row.append(f"{100.0 * value:.2f}%" if value is not None else "")
            row.append(f"{100.0 * mention[feature]:.2f}%" if feature in mention else "")
            writer.writerow(row)

    summary_rows = evaluation.performance_cost_summary(fit, costs)
    with open(out_dir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["annotator", "accuracy_percent", "avg_cost_usd", "p_vs_reference"])
        for row in summary_rows:
            writer.writerow(
                [
                    row.annotator_id,
                    f"{row.accuracy_percent:.1f}",
                    "" if row.avg_cost_usd is None else f"{row.avg_cost_usd}",
                    "" if row.p_vs_reference is None else f"{row.p_vs_reference:.6g}",
                ]
            )

    (out_dir / "glm.json").write_text(
        json.dumps(fit.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    histograms = evaluation.agreement_histogram(outcomes, bin_width=args.bin_width)
    histogram_payload = {
        annotator: {
            "bin_edges": data.bin_edges,
            "counts": data.counts,
            "min_percent": data.min_percent,
        }
        for annotator, data in histograms.items()
    }
    (out_dir / "histogram.json").write_text(
        json.dumps(histogram_payload, indent=2) + "\n", encoding="utf-8"
    )
    for row in summary_rows:
        p_text = "reference" if row.p_vs_reference is None else f"p={row.p_vs_reference:.4f}"
        print(f"{row.annotator_id}: {row.accuracy_percent:.1f}% ({p_text})")
    return EXIT_OK


def cmd_mock_llm(args) -> int:
    try:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        return _fail_config(f"cannot read behavior config: {exc}")
    behavior = mock.MockBehavior.from_config(config)
    if args.fault_rate is not None:
        behavior.fault_rate = args.fault_rate
    if args.seed is not None:
        behavior.seed = args.seed
    handle = mock.serve(behavior, port=args.port)
    print(f"mock endpoint listening on {handle.base_url}", flush=True)
    try:
        handle.thread.join()
    except KeyboardInterrupt:
        handle.shutdown()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="report-extractor",
        description="Schema-driven structured information extraction and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("layout", help="reassemble OCR JSON into plaintext grids")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=cmd_layout)

    p = sub.add_parser("redact", help="redact postcodes and supplied PII spans")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--spans", dest="spans_dir", default=None)
    p.set_defaults(func=cmd_redact)

    p = sub.add_parser("extract", help="extract structured data from report texts")
    p.add_argument("--schema", required=True)
    p.add_argument("--instructions", required=True)
    p.add_argument("--batches", default=None)
    p.add_argument("--context", default=None)
    p.add_argument("--base-url", dest="base_url", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default=None)
    p.add_argument("--price-table", dest="price_table", default=None)
    p.add_argument("--max-retries", dest="max_retries", type=int, default=2)
    p.add_argument("--parallel", type=int, default=4)
    p.add_argument("--timeout", type=float, default=120.0)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("diff", help="compare two annotation sets")
    p.add_argument("--a", dest="first", required=True)
    p.add_argument("--b", dest="second", required=True)
    p.add_argument("--schema", default=None)
    p.add_argument("--instructions", default=None)
    p.add_argument("--batches", default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("adjudicate", help="serve the blinded conflict-resolution API/UI")
    p.add_argument("--queue", required=True)
    p.add_argument("--reports", required=True)
    p.add_argument("--schema", default=None)
    p.add_argument("--instructions", default=None)
    p.add_argument("--batches", default=None)
    p.add_argument("--out", required=True, help="resolutions JSON-lines log")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--ui", default=None, help="directory of built UI assets")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--assist-base-url", dest="assist_base_url", default=None)
    p.add_argument("--assist-model", dest="assist_model", default=None)
    p.set_defaults(func=cmd_adjudicate)

    p = sub.add_parser("gold", help="assemble the gold standard from resolutions")
    p.add_argument("--agreements", required=True)
    p.add_argument("--queue", required=True)
    p.add_argument("--resolutions", required=True)
    p.add_argument("--human", required=True, help="annotator id of the human set")
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=cmd_gold)

    p = sub.add_parser("evaluate", help="score annotators and fit the comparison model")
    p.add_argument("--gold", required=True)
    p.add_argument("--annotations", nargs="+", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--schema", default=None)
    p.add_argument("--instructions", default=None)
    p.add_argument("--batches", default=None)
    p.add_argument("--split", default=None)
    p.add_argument("--allow-mixed", dest="allow_mixed", action="store_true")
    p.add_argument("--costs", default=None, help="JSON map annotator -> avg USD per report")
    p.add_argument("--bin-width", dest="bin_width", type=int, default=5)
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("mock-llm", help="serve a deterministic mock endpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--fault-rate", dest="fault_rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_mock_llm)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
