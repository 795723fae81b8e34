"""Textual repair of code-switched jargon, plus WER and correction scoring.

A :class:`PhraseSet` lists canonical domain terms with the transliterations a
fast recognizer tends to produce for them.  :func:`repair_transcript` scans the
transcript's token n-grams left to right and swaps any n-gram close enough to a
known variant for its canonical term.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

_TOKEN = re.compile(r"\S+")
_PUNCT = re.compile(r"[^\w\s]")
_EDGE_PUNCT = re.compile(r"^([^\w]*)(.*?)([^\w]*)$", re.DOTALL)


@dataclass(frozen=True)
class PhraseEntry:
    canonical: str
    variants: tuple[str, ...]


@dataclass(frozen=True)
class PhraseSet:
    entries: tuple[PhraseEntry, ...] = ()

    def __post_init__(self) -> None:
        seen = set()
        for entry in self.entries:
            if entry.canonical in seen:
                raise ValueError(f"duplicate canonical {entry.canonical!r}")
            seen.add(entry.canonical)
            for v in entry.variants:
                if not v.strip():
                    raise ValueError(f"empty variant for {entry.canonical!r}")
                if v == entry.canonical:
                    raise ValueError(f"variant equals its canonical: {v!r}")

    @classmethod
    def from_records(cls, records) -> PhraseSet:
        """Build from ``[{"canonical": ..., "variants": [...]}, ...]`` or a mapping."""
        if isinstance(records, dict):
            records = [{"canonical": k, "variants": v} for k, v in records.items()]
        return cls(
            tuple(PhraseEntry(r["canonical"], tuple(r["variants"])) for r in records)
        )

    def to_records(self) -> list[dict]:
        return [{"canonical": e.canonical, "variants": list(e.variants)} for e in self.entries]

    @property
    def canonicals(self) -> list[str]:
        return [e.canonical for e in self.entries]

    def longest_variant_tokens(self) -> int:
        return max((len(v.split()) for e in self.entries for v in e.variants), default=0)


@dataclass(frozen=True)
class RepairConfig:
    max_norm_edit_distance: float = 0.2
    latency_ms: float = 623.0
    max_window_tokens: int = 5


@dataclass(frozen=True)
class Substitution:
    start: int  # token index, inclusive
    stop: int  # token index, exclusive
    variant: str
    canonical: str


@dataclass(frozen=True)
class RepairResult:
    corrected: str
    substitutions: list[Substitution] = field(default_factory=list)
    latency_ms: float = 0.0


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Unit-cost Levenshtein distance over any two sequences."""
    # A shared prefix or suffix never changes the distance.
    lo, hi_a, hi_b = 0, len(a), len(b)
    while lo < hi_a and lo < hi_b and a[lo] == b[lo]:
        lo += 1
    while hi_a > lo and hi_b > lo and a[hi_a - 1] == b[hi_b - 1]:
        hi_a, hi_b = hi_a - 1, hi_b - 1
    a, b = a[lo:hi_a], b[lo:hi_b]
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def normalize_words(text: str) -> list[str]:
    return _PUNCT.sub("", text.lower()).split()


def normalized_wer(reference: str, hypothesis: str) -> Fraction:
    """Word edit distance over reference length (uncapped, so it can exceed 1)."""
    ref = normalize_words(reference)
    return Fraction(edit_distance(ref, normalize_words(hypothesis)), max(1, len(ref)))


def _match_key(text: str) -> str:
    return " ".join(text.lower().split())


def repair_transcript(
    text: str, ps: PhraseSet, cfg: RepairConfig = RepairConfig()
) -> RepairResult:
    spans = [m.span() for m in _TOKEN.finditer(text)]
    tokens = [text[a:b] for a, b in spans]
    variants = [
        (_match_key(v), v, entry.canonical, order)
        for order, (entry, v) in enumerate((e, v) for e in ps.entries for v in e.variants)
    ]
    threshold = Fraction(str(cfg.max_norm_edit_distance))
    window = cfg.max_window_tokens
    if window < ps.longest_variant_tokens():
        raise ValueError("max_window_tokens is shorter than the longest variant")

    subs: list[Substitution] = []
    replacements: list[tuple[int, int, str]] = []  # char start, char stop, new text
    i = 0
    while i < len(tokens) and variants:
        best = None  # (-n, distance, order) ranks candidates
        for n in range(1, min(window, len(tokens) - i) + 1):
            lead, core, trail = _EDGE_PUNCT.match(" ".join(tokens[i : i + n])).groups()
            if not core:
                continue
            key = _match_key(core)
            for vkey, variant, canonical, order in variants:
                dist = Fraction(edit_distance(key, vkey), len(vkey))
                if dist > threshold:
                    continue
                rank = (-n, dist, order)
                if best is None or rank < best[0]:
                    best = (rank, n, variant, canonical, lead, trail)
        if best is None:
            i += 1
            continue
        _, n, variant, canonical, lead, trail = best
        subs.append(Substitution(i, i + n, variant, canonical))
        replacements.append((spans[i][0], spans[i + n - 1][1], lead + canonical + trail))
        i += n

    out, pos = [], 0
    for a, b, new in replacements:
        out.append(text[pos:a])
        out.append(new)
        pos = b
    out.append(text[pos:])
    return RepairResult("".join(out), subs, cfg.latency_ms)


def correction_score(
    testset: Sequence[tuple[str, str]], ps: PhraseSet, cfg: RepairConfig = RepairConfig()
) -> Fraction:
    """Share of ``(corrupted, gold)`` items whose repair equals gold after normalization."""
    if not testset:
        raise ValueError("correction_score needs a non-empty test set")
    hits = sum(
        normalize_words(repair_transcript(corrupted, ps, cfg).corrected) == normalize_words(gold)
        for corrupted, gold in testset
    )
    return Fraction(hits, len(testset))
