"""Tokenization, fuzzy quote localization, and the recall mid-token distance.

The distance for one segment is the mean, over ground-truth sections, of the
absolute difference between each truth section's mid-token index and the
nearest estimated section's mid-token index. With no estimated sections the
distance is infinity. Estimates may serve as the nearest match for several
truth sections; there is no one-to-one assignment.
"""

from __future__ import annotations

import math
import re
import unicodedata
from dataclasses import dataclass
from difflib import SequenceMatcher
from typing import Callable, Iterable, Sequence

DEFAULT_TOKENIZER = "unicode_words"
DEFAULT_MATCH_THRESHOLD = 0.6
HEADLINE_DISTANCE_THRESHOLD = 20.0
DEFAULT_BIN_EDGES = (0.0, 10.0, 20.0, 50.0)


@dataclass(frozen=True)
class Token:
    text: str
    start_char: int
    end_char: int
    index: int


@dataclass(frozen=True)
class LocatedSpan:
    """A [start_char, end_char) range in segment text, with match confidence."""

    start_char: int
    end_char: int
    match_quality: float = 1.0
    exact: bool = True

    def __post_init__(self) -> None:
        if self.start_char >= self.end_char:
            raise ValueError(f"need start_char < end_char, got [{self.start_char}, {self.end_char})")
        if not 0.0 <= self.match_quality <= 1.0:
            raise ValueError(f"match_quality must be in [0, 1], got {self.match_quality}")
        if self.exact != (self.match_quality == 1.0):
            raise ValueError("exact must hold exactly when match_quality == 1")


# Words keep internal apostrophes ("can't" is one token); any other
# non-space character stands alone.
_WORD_RE = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]")


def _tokenize_unicode_words(text: str) -> list[Token]:
    return [
        Token(text=m.group(), start_char=m.start(), end_char=m.end(), index=i)
        for i, m in enumerate(_WORD_RE.finditer(text))
    ]


TOKENIZERS: dict[str, Callable[[str], list[Token]]] = {
    "unicode_words": _tokenize_unicode_words,
}


def tokenize(text: str, strategy: str = DEFAULT_TOKENIZER) -> list[Token]:
    """Deterministic tokenization; the strategy name is recorded in run reports."""
    try:
        fn = TOKENIZERS[strategy]
    except KeyError:
        raise ValueError(f"unknown tokenizer strategy {strategy!r}") from None
    return fn(text)


def mid_token_index(segment_tokens: Sequence[Token], span: LocatedSpan) -> int:
    """Index of the token at the center of the span, flooring on even counts."""
    overlapping = [
        t.index
        for t in segment_tokens
        if t.start_char < span.end_char and t.end_char > span.start_char
    ]
    if not overlapping:
        raise ValueError(
            f"span [{span.start_char}, {span.end_char}) overlaps no token"
        )
    return (overlapping[0] + overlapping[-1]) // 2


# ---------------------------------------------------------------------------
# Quote localization
# ---------------------------------------------------------------------------


def _canonicalize(text: str) -> tuple[str, list[int]]:
    """NFC-normalize and collapse whitespace, keeping a map to source offsets.

    Combining sequences are normalized unit by unit so each output character
    maps to the start of the source unit it came from. Whitespace runs shrink
    to a single space mapped to the run's first character; leading and
    trailing whitespace disappears.
    """
    chars: list[str] = []
    offsets: list[int] = []
    i = 0
    n = len(text)
    while i < n:
        j = i + 1
        while j < n and unicodedata.combining(text[j]):
            j += 1
        for ch in unicodedata.normalize("NFC", text[i:j]):
            chars.append(ch)
            offsets.append(i)
        i = j

    out_chars: list[str] = []
    out_offsets: list[int] = []
    pending_space: int | None = None
    for ch, off in zip(chars, offsets):
        if ch.isspace():
            if pending_space is None:
                pending_space = off
            continue
        if pending_space is not None and out_chars:
            out_chars.append(" ")
            out_offsets.append(pending_space)
        pending_space = None
        out_chars.append(ch)
        out_offsets.append(off)
    return "".join(out_chars), out_offsets


def _map_back(text: str, offsets: list[int], start: int, size: int) -> tuple[int, int]:
    src_start = offsets[start]
    src_end = offsets[start + size - 1] + 1
    # Keep trailing combining marks attached to the last matched character.
    while src_end < len(text) and unicodedata.combining(text[src_end]):
        src_end += 1
    return src_start, src_end


def locate_quoted_span(
    segment_text: str, quote: str, threshold: float = DEFAULT_MATCH_THRESHOLD
) -> LocatedSpan | None:
    """Find where a model-quoted string sits inside the segment text.

    An exact substring match (after NFC normalization and whitespace
    collapsing) wins. Otherwise the best approximate alignment is the longest
    common substring M between quote and segment, scored 2*|M|/(|quote|+|M|);
    it is returned when the score reaches ``threshold``, else None.
    """
    if not quote:
        raise ValueError("quote must be non-empty")

    direct = segment_text.find(quote)
    if direct >= 0:
        return LocatedSpan(direct, direct + len(quote), 1.0, True)

    seg_canon, seg_offsets = _canonicalize(segment_text)
    quote_canon, _ = _canonicalize(quote)
    if not seg_canon or not quote_canon:
        return None

    idx = seg_canon.find(quote_canon)
    if idx >= 0:
        start, end = _map_back(segment_text, seg_offsets, idx, len(quote_canon))
        return LocatedSpan(start, end, 1.0, True)

    matcher = SequenceMatcher(None, seg_canon, quote_canon, autojunk=False)
    block = matcher.find_longest_match(0, len(seg_canon), 0, len(quote_canon))
    if block.size == 0:
        return None
    # block.size < len(quote_canon) here (a full-quote match was caught above),
    # so quality is strictly below 1 and the span is never marked exact.
    quality = 2 * block.size / (len(quote_canon) + block.size)
    if quality < threshold:
        return None
    start, end = _map_back(segment_text, seg_offsets, block.a, block.size)
    return LocatedSpan(start, end, quality, False)


# ---------------------------------------------------------------------------
# Recall mid-token distance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruthMatch:
    truth_mid: int
    estimate_mid: int | None

    @property
    def distance(self) -> float:
        if self.estimate_mid is None:
            return math.inf
        return float(abs(self.truth_mid - self.estimate_mid))


@dataclass(frozen=True)
class DistanceResult:
    per_truth: tuple[TruthMatch, ...]
    d: float


def recall_mid_token_distance(
    segment_tokens: Sequence[Token],
    truth_spans: Sequence[LocatedSpan],
    est_spans: Sequence[LocatedSpan],
) -> DistanceResult:
    """Mean distance from each truth mid-token to the nearest estimate mid-token.

    Defined only for positive segments: raises on empty ``truth_spans``.
    Empty ``est_spans`` yields d = infinity. Ties between equally close
    estimates break toward the smaller mid-token index.
    """
    if not truth_spans:
        raise ValueError("recall mid-token distance is defined only for positive segments")
    truth_mids = [mid_token_index(segment_tokens, s) for s in truth_spans]
    est_mids = sorted(mid_token_index(segment_tokens, s) for s in est_spans)
    matches = []
    for a in truth_mids:
        if not est_mids:
            matches.append(TruthMatch(truth_mid=a, estimate_mid=None))
        else:
            b = min(est_mids, key=lambda m: (abs(a - m), m))
            matches.append(TruthMatch(truth_mid=a, estimate_mid=b))
    d = math.inf if not est_mids else sum(m.distance for m in matches) / len(matches)
    return DistanceResult(per_truth=tuple(matches), d=d)


# ---------------------------------------------------------------------------
# Distance histogram
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistanceHistogram:
    """Counts per distance bin; the final bin is open-ended and holds infinity."""

    bins: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]
    total: int
    under_20: int


def distance_histogram(
    distances: Iterable[float], bin_edges: Sequence[float] = DEFAULT_BIN_EDGES
) -> DistanceHistogram:
    edges = [float(e) for e in bin_edges]
    if not edges:
        raise ValueError("bin_edges must be non-empty")
    if any(math.isinf(e) or math.isnan(e) for e in edges):
        raise ValueError("bin_edges must be finite")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"bin_edges must be strictly increasing, got {edges}")

    bins = tuple(zip(edges, edges[1:] + [math.inf]))
    counts = [0] * len(bins)
    total = 0
    under_20 = 0
    for d in distances:
        if math.isnan(d) or (not math.isinf(d) and d < edges[0]):
            raise ValueError(f"distance {d} is outside the histogram domain (>= {edges[0]})")
        total += 1
        if d < HEADLINE_DISTANCE_THRESHOLD:
            under_20 += 1
        for i, (lo, hi) in enumerate(bins):
            if lo <= d < hi or (math.isinf(d) and math.isinf(hi)):
                counts[i] += 1
                break
    return DistanceHistogram(bins=bins, counts=tuple(counts), total=total, under_20=under_20)
