"""Token-stream aggregation into speakable chunks.

LLM tokens are buffered until one of three things happens:

* a delimiter closes a segment of at least ``min_chars``;
* the buffer reaches ``max_chars`` and is cut at the rightmost safe boundary,
  preferring delimiters, then whitespace, then (for continuous-script text)
  boundaries of a longest-match segmentation over the protected lexicon;
* the oldest buffered character has waited ``max_buffer_wait_ms``.

A cut is never placed strictly inside a protected term, including a term whose
prefix is sitting at the end of the buffer waiting for the rest to arrive.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .timebase import to_ticks

DEFAULT_DELIMITERS = frozenset(".!?;\n")


class OversizeError(ValueError):
    """The buffer is at capacity and holds no boundary that may be cut."""


class ChunkReason(enum.Enum):
    DELIMITER = "Delimiter"
    MAX_SIZE = "MaxSize"
    STALENESS = "Staleness"
    FLUSH = "Flush"


@dataclass(frozen=True)
class TokenEvent:
    t: int
    text: str


@dataclass(frozen=True)
class ChunkPolicy:
    min_chars: int = 12
    max_chars: int = 80
    delimiters: frozenset[str] = DEFAULT_DELIMITERS
    max_buffer_wait_ms: float | None = 400
    protected_lexicon: tuple[str, ...] = ()
    continuous_script: bool = False

    def __post_init__(self) -> None:
        if self.min_chars < 1 or self.max_chars < self.min_chars:
            raise ValueError("need 1 <= min_chars <= max_chars")
        longest = max((len(t) for t in self.protected_lexicon), default=0)
        if longest > self.max_chars:
            raise ValueError("max_chars is shorter than the longest protected term")
        if any(not t for t in self.protected_lexicon):
            raise ValueError("protected terms must be non-empty")


@dataclass(frozen=True)
class SpeechChunk:
    text: str
    t_emitted: int
    reason: ChunkReason


@dataclass(frozen=True)
class BufferState:
    text: str = ""
    arrivals: tuple[int, ...] = ()  # arrival tick of each buffered character

    def __len__(self) -> int:
        return len(self.text)


def _unsafe(buf: str, lexicon: Sequence[str], open_ended: bool) -> set[int]:
    """Cut positions that would land strictly inside a protected occurrence."""
    bad: set[int] = set()
    for term in lexicon:
        start = buf.find(term)
        while start != -1:
            bad.update(range(start + 1, start + len(term)))
            start = buf.find(term, start + 1)
        if open_ended:
            for k in range(1, len(term)):
                if buf.endswith(term[:k]):
                    bad.update(range(len(buf) - k + 1, len(buf) + 1))
    return bad


def _segmentation_bounds(buf: str, lexicon: Sequence[str]) -> set[int]:
    """Word ends of a greedy longest-match segmentation; unknown text is split per character."""
    bounds, i = set(), 0
    by_length = sorted(lexicon, key=len, reverse=True)
    while i < len(buf):
        step = next((len(t) for t in by_length if buf.startswith(t, i)), 1)
        i += step
        bounds.add(i)
    return bounds


def _boundaries(buf: str, policy: ChunkPolicy, open_ended: bool) -> dict[str, list[int]]:
    bad = _unsafe(buf, policy.protected_lexicon, open_ended)
    delim = [p for p in range(1, len(buf) + 1) if buf[p - 1] in policy.delimiters and p not in bad]
    space = [p for p in range(1, len(buf) + 1) if buf[p - 1].isspace() and p not in bad]
    seg: list[int] = []
    if policy.continuous_script:
        seg = sorted(p for p in _segmentation_bounds(buf, policy.protected_lexicon) if p not in bad)
    return {"delimiter": delim, "whitespace": space, "segment": seg, "bad": sorted(bad)}


def _emit(state: BufferState, p: int, now: int, reason: ChunkReason):
    chunk = SpeechChunk(state.text[:p], now, reason)
    return BufferState(state.text[p:], state.arrivals[p:]), chunk


def deadline(state: BufferState, policy: ChunkPolicy) -> int | None:
    """Tick at which the buffer's oldest character turns stale, if any."""
    if not state.text or policy.max_buffer_wait_ms is None:
        return None
    return state.arrivals[0] + to_ticks(policy.max_buffer_wait_ms)


def expire(
    state: BufferState, now: int, policy: ChunkPolicy
) -> tuple[BufferState, list[SpeechChunk]]:
    """Release stale text up to the rightmost safe position.

    Returns no chunk when nothing is stale or when the whole buffer is the
    unfinished prefix of a protected term.
    """
    due = deadline(state, policy)
    if due is None or now < due:
        return state, []
    bad = _unsafe(state.text, policy.protected_lexicon, open_ended=True)
    p = next((p for p in range(len(state.text), 0, -1) if p not in bad), None)
    if p is None:
        return state, []
    state, chunk = _emit(state, p, now, ChunkReason.STALENESS)
    return state, [chunk]


def _cut_full(state: BufferState, policy: ChunkPolicy) -> int:
    b = _boundaries(state.text, policy, open_ended=True)
    lo, hi = policy.min_chars, policy.max_chars
    for kind in ("delimiter", "whitespace", "segment"):
        fits = [p for p in b[kind] if lo <= p <= hi]
        if fits:
            return fits[-1]
    # Nothing inside the size window: take any safe boundary below max_chars.
    below = [p for kind in ("delimiter", "whitespace", "segment") for p in b[kind] if p <= hi]
    if below:
        return max(below)
    raise OversizeError(
        f"no safe boundary within the first {hi} characters of {state.text[: hi + 10]!r}"
    )


def _drain(
    state: BufferState, now: int, policy: ChunkPolicy
) -> tuple[BufferState, list[SpeechChunk]]:
    chunks = []
    while state.text:
        if len(state.text) >= policy.max_chars:
            state, chunk = _emit(state, _cut_full(state, policy), now, ChunkReason.MAX_SIZE)
        else:
            b = _boundaries(state.text, policy, open_ended=True)
            p = next((p for p in b["delimiter"] if p >= policy.min_chars), None)
            if p is None:
                break
            state, chunk = _emit(state, p, now, ChunkReason.DELIMITER)
        chunks.append(chunk)
    return state, chunks


def push_token(
    state: BufferState, token: TokenEvent, policy: ChunkPolicy
) -> tuple[BufferState, list[SpeechChunk]]:
    if state.arrivals and token.t < state.arrivals[-1]:
        raise ValueError(f"token at t={token.t} arrived before t={state.arrivals[-1]}")
    state, chunks = expire(state, token.t, policy)
    state = BufferState(state.text + token.text, state.arrivals + (token.t,) * len(token.text))
    state, more = _drain(state, token.t, policy)
    chunks += more
    state, stale = expire(state, token.t, policy)
    return state, chunks + stale


def flush(state: BufferState, policy: ChunkPolicy, now: int | None = None):
    """End of stream: emit whatever is left, whatever its length."""
    if not state.text:
        return BufferState(), None
    t = now if now is not None else state.arrivals[-1]
    return BufferState(), SpeechChunk(state.text, t, ChunkReason.FLUSH)


def stream_chunks(
    tokens: Iterable[TokenEvent], policy: ChunkPolicy, end_t: int | None = None
) -> list[SpeechChunk]:
    """Drive the aggregator over a timed token stream, firing staleness timers.

    ``end_t`` is when the stream closes (defaults to the last token's time).
    Staleness timers due at or after ``end_t`` lose to the final flush.
    """
    state, chunks = BufferState(), []
    last_t = 0

    def fire_timers(until: int) -> None:
        nonlocal state
        while (due := deadline(state, policy)) is not None and due < until:
            state, out = expire(state, due, policy)
            if not out:
                return  # blocked on an unfinished protected term
            chunks.extend(out)

    for token in tokens:
        fire_timers(token.t)
        state, out = push_token(state, token, policy)
        chunks.extend(out)
        last_t = token.t
    end = last_t if end_t is None else end_t
    if end < last_t:
        raise ValueError("stream cannot end before its last token")
    fire_timers(end)
    state, tail = flush(state, policy, end)
    if tail is not None:
        chunks.append(tail)
    return chunks


def segment(text: str, policy: ChunkPolicy) -> list[int]:
    """Cut offsets for ``text`` delivered as a single untimed token.

    The last offset is always ``len(text)`` for non-empty text.
    """
    untimed = replace(policy, max_buffer_wait_ms=None)
    chunks = stream_chunks([TokenEvent(0, text)], untimed) if text else []
    offsets, pos = [], 0
    for chunk in chunks:
        pos += len(chunk.text)
        offsets.append(pos)
    return offsets

