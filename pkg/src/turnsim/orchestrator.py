"""Admission-controlled turn execution.

A turn passes through ASR -> (repair) -> retrieval -> context fetch -> LLM ->
TTS strictly in sequence.  Every stage boundary is an event on the shared
:class:`~turnsim.events.EventLoop`, so a pending turn can be cancelled between
any two stages.  A bounded FIFO gate limits how many turns run at once; the
time a turn spends waiting for a slot is reported as ``queue_wait``.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Mapping, Sequence

from . import adapters
from .adapters import ComponentProfile, RngStreams
from .aggregator import ChunkPolicy, TokenEvent, stream_chunks
from .events import EventLoop
from .repair import PhraseSet, RepairConfig, normalize_words, repair_transcript
from .timebase import to_ticks


class GateError(RuntimeError):
    pass


class ConcurrencyGate:
    """Counting semaphore with a FIFO wait queue, driven by explicit release."""

    def __init__(self, capacity: int = 4) -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.in_flight: set[str] = set()
        self.waiting: deque[tuple[str, int, Callable[[int], None]]] = deque()
        self.peak = 0
        self.admissions: list[str] = []

    def acquire(self, request_id: str, now: int, on_admit: Callable[[int], None]) -> bool:
        """Admit now (calling ``on_admit(0)``) or queue; returns whether admitted now."""
        if request_id in self.in_flight or any(r == request_id for r, _, _ in self.waiting):
            raise GateError(f"request {request_id!r} already admitted or queued")
        if len(self.in_flight) < self.capacity:
            self._admit(request_id)
            on_admit(0)
            return True
        self.waiting.append((request_id, now, on_admit))
        return False

    def release(self, request_id: str, now: int) -> None:
        self.in_flight.discard(request_id)
        while self.waiting and len(self.in_flight) < self.capacity:
            rid, queued_at, on_admit = self.waiting.popleft()
            self._admit(rid)
            on_admit(now - queued_at)

    def withdraw(self, request_id: str) -> bool:
        for item in self.waiting:
            if item[0] == request_id:
                self.waiting.remove(item)
                return True
        return False

    def _admit(self, request_id: str) -> None:
        self.in_flight.add(request_id)
        self.admissions.append(request_id)
        self.peak = max(self.peak, len(self.in_flight))


@dataclass(frozen=True)
class Message:
    role: str
    text: str
    t: int


class ConversationStore:
    def __init__(self, fetch_latency_ms: float = 0.0) -> None:
        self.fetch_latency_ms = fetch_latency_ms
        self._history: dict[object, list[Message]] = {}

    def history(self, session: object) -> list[Message]:
        return list(self._history.get(session, ()))

    def append(self, session: object, role: str, text: str, t: int) -> None:
        self._history.setdefault(session, []).append(Message(role, text, t))


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    text: str
    score: int


@dataclass(frozen=True)
class RagConfig:
    documents: tuple[Document, ...] = ()
    top_k: int = 1
    retrieval_overhead_ms: float = 0.0


@dataclass(frozen=True)
class Prompt:
    history: tuple[Message, ...]
    chunks: tuple[Chunk, ...]
    transcript: str

    def render(self) -> str:
        lines = [f"{m.role}: {m.text}" for m in self.history]
        lines += [f"context[{c.doc_id}]: {c.text}" for c in self.chunks]
        lines.append(f"user: {self.transcript}")
        return "\n".join(lines)


def _token_set(text: str) -> set[str]:
    return set(normalize_words(text))


def retrieve(rag: RagConfig, query: str) -> tuple[list[Chunk], float]:
    """Top-k documents by distinct shared tokens; ties go to the smaller doc_id."""
    if rag.top_k < 1:
        raise ValueError("top_k must be at least 1")
    q = _token_set(query)
    scored = [Chunk(d.doc_id, d.text, len(q & _token_set(d.text))) for d in rag.documents]
    ranked = sorted(scored, key=lambda c: (-c.score, c.doc_id))
    return ranked[: rag.top_k], rag.retrieval_overhead_ms


def inject_context(
    store: ConversationStore, session: object, transcript: str, chunks: Sequence[Chunk], now: int = 0
) -> tuple[Prompt, float]:
    """Assemble history + chunks + transcript, then record the user turn."""
    prompt = Prompt(tuple(store.history(session)), tuple(chunks), transcript)
    store.append(session, "user", transcript, now)
    return prompt, store.fetch_latency_ms


class IntentClass(enum.Enum):
    PHATIC = "Phatic"
    EPISTEMIC = "Epistemic"


DEFAULT_PHATIC_LEXICON = (
    "hello", "hi", "hey", "thanks", "thank you", "bye", "goodbye", "good morning",
    "good afternoon", "good evening", "how are you", "ok", "okay", "yes", "no",
    "sawasdee", "sawasdee krub", "sawasdee ka",
)


def _normalize_phrase(text: str) -> str:
    return " ".join(normalize_words(text))


def classify_intent(transcript: str, phatic_lexicon: Sequence[str] = DEFAULT_PHATIC_LEXICON) -> IntentClass:
    norm = _normalize_phrase(transcript)
    lexicon = {_normalize_phrase(p) for p in phatic_lexicon}
    words = norm.split()
    if not words or norm in lexicon:
        return IntentClass.PHATIC
    if len(words) <= 2 and all(w in lexicon for w in words):
        return IntentClass.PHATIC
    return IntentClass.EPISTEMIC


DEFAULT_ROUTING: Mapping[IntentClass, str] = {
    IntentClass.PHATIC: "Fluid",
    IntentClass.EPISTEMIC: "Precise",
}


def route(intent: IntentClass, policy: Mapping[IntentClass, str], tiers: Mapping[str, PipelineTier]) -> PipelineTier:
    return tiers[policy[intent]]


@dataclass(frozen=True)
class PipelineTier:
    name: str
    asr: ComponentProfile | None
    repair: ComponentProfile | None
    llm: ComponentProfile | None
    tts: ComponentProfile | None
    cost_per_turn_usd: Decimal
    opaque: ComponentProfile | None = None  # single-stage end-to-end model

    def __post_init__(self) -> None:
        staged = (self.asr, self.llm, self.tts)
        if self.opaque is None and any(p is None for p in staged):
            raise ValueError(f"tier {self.name} needs asr, llm and tts profiles")
        if self.opaque is not None and any(p is not None for p in staged + (self.repair,)):
            raise ValueError(f"opaque tier {self.name} cannot have internal stages")


TIER_NAMES = ("Fluid", "Precise", "Reasoning", "DeepReasoning", "RealtimeBenchmark")

TIER_LAYOUT = {
    "Fluid": {"asr": "typhoon", "repair": "flash-lite-repair", "llm": "flash", "tts": "tts-default"},
    "Precise": {"asr": "google-stt-v1", "llm": "flash", "tts": "tts-default"},
    "Reasoning": {"asr": "typhoon", "repair": "flash-lite-repair", "llm": "gpt5", "tts": "tts-default"},
    "DeepReasoning": {"asr": "google-stt-v1", "llm": "gpt5", "tts": "tts-default"},
    "RealtimeBenchmark": {"opaque": "gpt-realtime"},
}


def build_tiers(
    profiles: Mapping[str, ComponentProfile] | None = None,
    layout: Mapping[str, Mapping[str, str]] | None = None,
    costs: adapters.CostModel = adapters.CostModel(),
) -> dict[str, PipelineTier]:
    profiles = {**adapters.PRESETS, **(profiles or {})}
    tiers = {}
    for name, stages in (layout or TIER_LAYOUT).items():
        picked = {k: profiles[v] for k, v in stages.items() if k != "cost_per_turn_usd" and v}
        cost = Decimal(str(stages.get("cost_per_turn_usd", costs.per_turn_usd.get(name, "0"))))
        tiers[name] = PipelineTier(
            name=name,
            asr=picked.get("asr"),
            repair=picked.get("repair"),
            llm=picked.get("llm"),
            tts=picked.get("tts"),
            cost_per_turn_usd=cost,
            opaque=picked.get("opaque"),
        )
    return tiers


@dataclass(frozen=True)
class TurnRequest:
    session: object
    transcript: str
    t_submitted: int
    request_id: str
    prosody: frozenset[str] = frozenset()


@dataclass
class RunSettings:
    streaming: bool = False
    first_token_fraction: float = 0.3
    fallback_response: str = adapters.FALLBACK_RESPONSE
    chunk_policy: ChunkPolicy = field(default_factory=ChunkPolicy)
    phrase_set: PhraseSet = field(default_factory=PhraseSet)
    repair: RepairConfig = field(default_factory=RepairConfig)
    strict: bool = False


@dataclass
class TurnResult:
    """Stage durations (ticks) and outcome for one request.

    ``first_chunk_offset`` runs from LLM invocation to the moment the first text
    chunk is handed to TTS; in batch mode it equals ``llm_total``.
    ``playback`` lists ``(start, duration)`` per chunk relative to first audio.
    """

    request: TurnRequest
    tier: str
    queue_wait: int = 0
    asr: int = 0
    repair: int = 0
    retrieval: int = 0
    context_fetch: int = 0
    llm_first_token: int = 0
    llm_total: int = 0
    first_chunk_offset: int = 0
    tts_first_chunk: int = 0
    transcript: str = ""
    response: str = ""
    chunks: list[str] = field(default_factory=list)
    playback: list[tuple[int, int]] = field(default_factory=list)
    stamps: dict[str, int] = field(default_factory=dict)
    canceled: bool = False
    error: str | None = None
    cost_usd: Decimal = Decimal("0")

    @property
    def turn_delay(self) -> int:
        return (
            self.queue_wait + self.asr + self.repair + self.retrieval + self.context_fetch
            + self.first_chunk_offset + self.tts_first_chunk
        )

    @property
    def playback_span(self) -> int:
        return max((s + d for s, d in self.playback), default=0)

    @property
    def done(self) -> bool:
        return "synth_done" in self.stamps or self.canceled or self.error is not None


class StageError(RuntimeError):
    pass


class Orchestrator:
    """Runs turns on an event loop.

    ``on_ready(result)`` fires when the first synthesized audio is available;
    ``on_done(result)`` when the turn has fully finished, failed, or been cancelled.
    """

    def __init__(
        self,
        loop: EventLoop,
        gate: ConcurrencyGate | None = None,
        store: ConversationStore | None = None,
        rag: RagConfig = RagConfig(),
        settings: RunSettings | None = None,
        rngs: RngStreams | None = None,
    ) -> None:
        self.loop = loop
        self.gate = gate or ConcurrencyGate()
        self.store = store or ConversationStore()
        self.rag = rag
        self.settings = settings or RunSettings()
        self.rngs = rngs or RngStreams()
        self.results: dict[str, TurnResult] = {}
        self._events: dict[str, set[int]] = {}
        self._callbacks: dict[str, tuple[Callable, Callable]] = {}

    # -- public -----------------------------------------------------------

    def submit(
        self,
        req: TurnRequest,
        tier: PipelineTier,
        on_ready: Callable[[TurnResult], None] = lambda r: None,
        on_done: Callable[[TurnResult], None] = lambda r: None,
    ) -> TurnResult:
        if req.request_id in self.results:
            raise GateError(f"duplicate request id {req.request_id!r}")
        result = TurnResult(req, tier.name)
        result.stamps["submitted"] = self.loop.now
        self.results[req.request_id] = result
        self._events[req.request_id] = set()
        self._callbacks[req.request_id] = (on_ready, on_done)
        self.gate.acquire(req.request_id, self.loop.now, lambda wait: self._admitted(result, tier, wait))
        return result

    def cancel(self, request_id: str) -> bool:
        """Stop a turn that has not produced audio yet."""
        result = self.results.get(request_id)
        if result is None or result.done or "first_audio" in result.stamps:
            return False
        for event_id in self._events.pop(request_id, set()):
            self.loop.cancel(event_id)
        if not self.gate.withdraw(request_id):
            self.gate.release(request_id, self.loop.now)
        result.canceled = True
        result.stamps["canceled"] = self.loop.now
        self._callbacks[request_id][1](result)
        return True

    # -- stages -----------------------------------------------------------

    def _after(self, result: TurnResult, delay: int, fn: Callable[[], None]) -> None:
        rid = result.request.request_id
        holder: list[int] = []

        def fire() -> None:
            self._events[rid].discard(holder[0])
            fn()

        holder.append(self.loop.schedule(fire, delay, result.request.session))
        self._events[rid].add(holder[0])

    def _rng(self, result: TurnResult, profile: ComponentProfile):
        return self.rngs.get(result.request.session, profile.name, adapters._model_seed(profile.latency))

    def _admitted(self, result: TurnResult, tier: PipelineTier, wait: int) -> None:
        result.queue_wait = wait
        result.stamps["admitted"] = self.loop.now
        if tier.opaque is not None:
            self._run_opaque(result, tier)
            return
        heard = adapters.sim_asr(result.request.transcript, tier.asr, self._rng(result, tier.asr),
                                 result.request.prosody)
        result.asr = heard.latency
        self._after(result, heard.latency, lambda: self._asr_done(result, tier, heard.text))

    def _asr_done(self, result: TurnResult, tier: PipelineTier, text: str) -> None:
        result.stamps["asr_done"] = self.loop.now
        if tier.repair is None:
            self._repaired(result, tier, text)
            return
        fixed = repair_transcript(text, self.settings.phrase_set, self.settings.repair)
        result.repair = adapters.sample_ticks(tier.repair.latency, self._rng(result, tier.repair))
        self._after(result, result.repair, lambda: self._repaired(result, tier, fixed.corrected))

    def _repaired(self, result: TurnResult, tier: PipelineTier, text: str) -> None:
        result.stamps["repair_done"] = self.loop.now
        result.transcript = text
        if self.settings.strict and not text.strip():
            self._fail(result, "empty transcript after recognition")
            return
        chunks, overhead_ms = retrieve(self.rag, text)
        result.retrieval = to_ticks(overhead_ms)
        self._after(result, result.retrieval, lambda: self._retrieved(result, tier, chunks))

    def _retrieved(self, result: TurnResult, tier: PipelineTier, chunks: list[Chunk]) -> None:
        result.stamps["retrieval_done"] = self.loop.now
        prompt, fetch_ms = inject_context(
            self.store, result.request.session, result.transcript, chunks, self.loop.now
        )
        result.context_fetch = to_ticks(fetch_ms)
        self._after(result, result.context_fetch, lambda: self._start_llm(result, tier, prompt))

    def _start_llm(self, result: TurnResult, tier: PipelineTier, prompt: Prompt) -> None:
        now = self.loop.now
        result.stamps["llm_start"] = now
        s = self.settings
        reply = adapters.sim_llm(prompt, tier.llm, self._rng(result, tier.llm), s.streaming,
                                 s.first_token_fraction, s.fallback_response)
        result.response = reply.text
        result.llm_total = reply.total
        result.llm_first_token = reply.first_token
        if s.streaming:
            emitted = stream_chunks(reply.tokens, s.chunk_policy, end_t=reply.total)
            plan = [(c.t_emitted, c.text) for c in emitted]
        else:
            plan = [(reply.total, reply.text)] if reply.text else []
        if not plan:
            self._fail(result, "empty response")
            return
        self._schedule_speech(result, tier.tts, plan)

    def _schedule_speech(self, result: TurnResult, tts: ComponentProfile, plan: list[tuple[int, str]]) -> None:
        """Plan synthesis on one TTS worker and sequential playback of the chunks."""
        rng = self._rng(result, tts)
        synth_free = 0
        ready_times, audio = [], []
        for emitted_at, text in plan:
            out = adapters.sim_tts(text, tts, rng)
            synth_free = max(emitted_at, synth_free) + out.synthesis_latency
            ready_times.append(synth_free)
            audio.append(out)
        result.chunks = [text for _, text in plan]
        result.first_chunk_offset = plan[0][0]
        result.tts_first_chunk = audio[0].synthesis_latency
        playback, cursor = [], ready_times[0]
        for ready, out in zip(ready_times, audio):
            start = max(ready, cursor)
            playback.append((start - ready_times[0], out.playback_duration))
            cursor = start + out.playback_duration
        result.playback = playback
        self._after(result, ready_times[0], lambda: self._first_audio(result))
        self._after(result, ready_times[-1], lambda: self._finish(result))

    def _run_opaque(self, result: TurnResult, tier: PipelineTier) -> None:
        model = tier.opaque
        latency = adapters.sample_ticks(model.latency, self._rng(result, model))
        text = result.request.transcript
        chunks, _ = retrieve(self.rag, text)
        reply = next((c.text for c in chunks if c.score > 0), self.settings.fallback_response)
        result.transcript = text
        result.response = reply
        result.llm_total = result.llm_first_token = result.first_chunk_offset = latency
        result.chunks = [reply]
        speech = adapters.sim_tts(reply, adapters.ComponentProfile("speech", adapters.Constant(0),
                                  speaking_rate=model.speaking_rate))
        result.playback = [(0, speech.playback_duration)]
        self.store.append(result.request.session, "user", text, self.loop.now)
        self._after(result, latency, lambda: self._first_audio(result))
        self._after(result, latency, lambda: self._finish(result))

    def _first_audio(self, result: TurnResult) -> None:
        result.stamps["first_audio"] = self.loop.now
        self._callbacks[result.request.request_id][0](result)

    def _finish(self, result: TurnResult) -> None:
        rid = result.request.request_id
        result.stamps["synth_done"] = self.loop.now
        self.store.append(result.request.session, "agent", result.response, self.loop.now)
        self.gate.release(rid, self.loop.now)
        self._events.pop(rid, None)
        self._callbacks[rid][1](result)

    def _fail(self, result: TurnResult, reason: str) -> None:
        rid = result.request.request_id
        result.error = reason
        result.stamps["failed"] = self.loop.now
        self.gate.release(rid, self.loop.now)
        self._events.pop(rid, None)
        self._callbacks[rid][1](result)


def run_turn(
    req: TurnRequest,
    tier: PipelineTier,
    settings: RunSettings | None = None,
    rag: RagConfig = RagConfig(),
    store: ConversationStore | None = None,
    seed: int = 0,
) -> TurnResult:
    """Execute one turn in isolation on a fresh event loop."""
    loop = EventLoop()
    loop.now = req.t_submitted
    orch = Orchestrator(loop, ConcurrencyGate(1), store, rag, settings, RngStreams(seed))
    result = orch.submit(req, tier)
    loop.run_until_idle()
    return result
