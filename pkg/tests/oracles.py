"""Independent reference implementations used to cross-check the library.

Everything here is deliberately written without reusing the code under test:
the median is a plain sort, the grid oracle paints characters at pixel
coordinates, JSON-LD expansion follows the processing algorithm for flat
term-definition contexts, and the grouped-data regression statistics come
from closed-form log-odds formulas instead of iterative fitting.
"""

from __future__ import annotations

import math
from fractions import Fraction


def sort_median(values):
    ordered = sorted(values)
    n = len(ordered)
    if n % 2 == 1:
        return ordered[n // 2]
    return (ordered[n // 2 - 1] + ordered[n // 2]) / 2


def raster_paint(elements, char_width, char_height):
    """Paint each element's characters at their pixel centers, then read rows.

    Cell indices come from flooring the pixel center, not from rounding the
    origin, so this is an independent arithmetic path for grid-aligned
    fixtures (no collisions, boxes flush with the cell grid).
    """
    painted = {}
    for element in elements:
        x0, y0, _, _ = element.bbox
        row = int((y0 + char_height / 2) // char_height)
        for i, ch in enumerate(element.text):
            col = int((x0 + i * char_width + char_width / 2) // char_width)
            key = (row, col)
            if key in painted:
                raise AssertionError(f"oracle fixture has a collision at {key}")
            painted[key] = ch
    if not painted:
        return []
    max_row = max(r for r, _ in painted)
    lines = []
    for r in range(max_row + 1):
        cols = [c for (row, c) in painted if row == r]
        if not cols:
            lines.append("")
            continue
        line = "".join(painted.get((r, c), " ") for c in range(max(cols) + 1))
        lines.append(line.rstrip())
    return lines


def expand_jsonld(document):
    """Minimal JSON-LD expansion for contexts made of flat term definitions.

    Terms bound in @context become their IRIs; keys with no binding that are
    not themselves IRIs are dropped, as the expansion algorithm specifies.
    Values become @value objects.
    """
    context = document.get("@context", {})
    bindings = {}
    for term, definition in context.items():
        if term.startswith("@"):
            continue
        if isinstance(definition, str):
            bindings[term] = definition
        elif isinstance(definition, dict) and "@id" in definition:
            bindings[term] = definition["@id"]
    expanded = {}
    for key, value in document.items():
        if key == "@context":
            continue
        if key in bindings:
            iri = bindings[key]
        elif ":" in key:
            iri = key
        else:
            continue
        expanded[iri] = [{"@value": value}]
    return [expanded] if expanded else []


def grouped_logodds_stats(k_ref, n_ref, k_other, n_other):
    """Closed-form grouped-data contrast: log-odds difference and its SE.

    beta = logit(k_other/n_other) - logit(k_ref/n_ref)
    var(beta) = 1/k_ref + 1/(n_ref-k_ref) + 1/k_other + 1/(n_other-k_other)
    """
    beta = math.log(k_other / (n_other - k_other)) - math.log(k_ref / (n_ref - k_ref))
    se = math.sqrt(
        1.0 / k_ref + 1.0 / (n_ref - k_ref) + 1.0 / k_other + 1.0 / (n_other - k_other)
    )
    return beta, se


def normal_two_tail(z):
    """2*(1 - Phi(|z|)) via the erf relation, kept separate from the library."""
    return 1.0 - math.erf(abs(z) / math.sqrt(2.0))


def rational_cost(prompt_tokens, completion_tokens, price_in, price_out):
    """Exact cost in USD as a Fraction; prices are USD per 1M tokens."""
    million = Fraction(1_000_000)
    return (
        Fraction(prompt_tokens) * Fraction(str(price_in))
        + Fraction(completion_tokens) * Fraction(str(price_out))
    ) / million
