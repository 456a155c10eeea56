"""Reassemble OCR text fragments into layout-preserving plaintext and redact
identifying strings.

Grid placement maps each fragment to a character cell computed from its
bounding box, with the cell size taken from the median character size across
all fragments. Rounding is half-away-from-zero so placement is identical
across platforms. When two fragments contend for the same cells, the one
later in input order slides right to the first span of free columns, which
keeps every input character present in the output.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass


class LayoutError(ValueError):
    """Raised for empty input where a grid cell size cannot be derived."""


class SpanError(ValueError):
    """Base class for redaction-span problems."""


class OverlappingSpansError(SpanError):
    pass


class SpanOutOfBoundsError(SpanError):
    pass


@dataclass(frozen=True)
class OcrElement:
    """A text fragment with its pixel bounding box, as emitted by OCR."""

    text: str
    bbox: tuple[float, float, float, float]
    confidence: float | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("element text must be non-empty")
        if "\n" in self.text or "\r" in self.text:
            raise ValueError("element text must not contain line breaks")
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate bbox {self.bbox}")
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class PlainTextGrid:
    """Layout-preserving plaintext: one string per grid row, no trailing spaces."""

    lines: tuple[str, ...]
    cell_size: tuple[float, float]

    @property
    def text(self) -> str:
        return "\n".join(self.lines)


@dataclass(frozen=True)
class RedactionSpan:
    """Character offsets (into the original text) of one redacted region."""

    start: int
    end: int
    category: str


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2 == 1:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2.0


def median_char_size(elements: list[OcrElement]) -> tuple[float, float]:
    """Median per-character width and median element height, in pixels."""
    if not elements:
        raise LayoutError("empty_input")
    widths = [(e.bbox[2] - e.bbox[0]) / len(e.text) for e in elements]
    heights = [e.bbox[3] - e.bbox[1] for e in elements]
    return _median(widths), _median(heights)


def _round_half_away(x: float) -> int:
    if x >= 0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


def grid_placements(
    elements: list[OcrElement], char_width: float, char_height: float
) -> list[tuple[int, int]]:
    """(row, col) for each element after collision resolution, in input order."""
    occupied: dict[int, set[int]] = {}
    placements: list[tuple[int, int]] = []
    for element in elements:
        x0, y0, _, _ = element.bbox
        row = max(0, _round_half_away(y0 / char_height))
        col = max(0, _round_half_away(x0 / char_width))
        taken = occupied.setdefault(row, set())
        width = len(element.text)
        while True:
            clash = next((c for c in range(col, col + width) if c in taken), None)
            if clash is None:
                break
            col = clash + 1
        taken.update(range(col, col + width))
        placements.append((row, col))
    return placements


def reassemble(elements: list[OcrElement]) -> PlainTextGrid:
    """Place every fragment on a character grid derived from median char size."""
    if not elements:
        return PlainTextGrid(lines=(), cell_size=(0.0, 0.0))
    char_width, char_height = median_char_size(elements)
    placements = grid_placements(elements, char_width, char_height)

    rows: dict[int, dict[int, str]] = {}
    for element, (row, col) in zip(elements, placements):
        cells = rows.setdefault(row, {})
        for i, ch in enumerate(element.text):
            cells[col + i] = ch

    last_row = max(rows)
    lines = []
    for r in range(last_row + 1):
        cells = rows.get(r)
        if not cells:
            lines.append("")
            continue
        width = max(cells) + 1
        lines.append("".join(cells.get(c, " ") for c in range(width)).rstrip())
    return PlainTextGrid(lines=tuple(lines), cell_size=(char_width, char_height))


# Outward code (1-2 letters, digit, optional alphanumeric), optional single
# space, inward code (digit, 2 letters). Matched only as a standalone token so
# specimen identifiers embedding a postcode-like run are left alone.
POSTCODE_RE = re.compile(
    r"(?<![A-Za-z0-9])[A-Z]{1,2}[0-9][0-9A-Z]? ?[0-9][A-Z]{2}(?![A-Za-z0-9])"
)

POSTCODE_TOKEN = "[POSTCODE]"


def redact_postcodes(text: str) -> tuple[str, list[RedactionSpan]]:
    """Replace UK-postcode-shaped tokens with a fixed marker.

    Span offsets refer to the original text; everything outside the matches is
    returned byte-identical. Applying the function to its own output is a
    no-op, so redaction is safe to repeat.
    """
    spans = [
        RedactionSpan(m.start(), m.end(), "POSTCODE")
        for m in POSTCODE_RE.finditer(text)
    ]
    if not spans:
        return text, []
    pieces = []
    cursor = 0
    for span in spans:
        pieces.append(text[cursor : span.start])
        pieces.append(POSTCODE_TOKEN)
        cursor = span.end
    pieces.append(text[cursor:])
    return "".join(pieces), spans


def apply_spans(text: str, spans: list[RedactionSpan]) -> str:
    """Replace externally supplied spans with ``[<CATEGORY>]`` markers.

    Spans must be non-overlapping and in bounds; they are applied right to
    left so earlier offsets stay valid.
    """
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    for span in ordered:
        if not (0 <= span.start < span.end <= len(text)):
            raise SpanOutOfBoundsError(
                f"span_out_of_bounds: ({span.start}, {span.end}) in text of length {len(text)}"
            )
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            raise OverlappingSpansError(
                f"overlapping_spans: ({prev.start}, {prev.end}) and ({cur.start}, {cur.end})"
            )
    for span in reversed(ordered):
        text = text[: span.start] + f"[{span.category}]" + text[span.end :]
    return text
