"""Latency/error/cost-profiled stand-ins for ASR, LLM and TTS.

Preset profiles carry the measured component latencies as constant models:

=================  ===========  ======================================
preset             latency ms   notes
=================  ===========  ======================================
typhoon            417.1        fast ASR, normalized WER 0.562
google-stt-v1      2457.2       precise ASR, normalized WER 0.243
flash              1148.6       lightweight LLM
flash-lite-repair  623.0        textual repair pass
gpt5               5264.1       high-fidelity LLM
tts-default        450.0        synthesis overhead, 15 chars/s speech
gpt-realtime       U(4000,6000) opaque speech-to-speech benchmark
=================  ===========  ======================================
"""

from __future__ import annotations

import math
import re
import zlib
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Mapping

import numpy as np

from .aggregator import SpeechChunk, TokenEvent
from .repair import PhraseSet
from .timebase import to_ticks


@dataclass(frozen=True)
class Constant:
    ms: float


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float
    seed: int = 0


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float
    seed: int = 0


LatencyModel = Constant | Uniform | LogNormal


def sample_ticks(model: LatencyModel, rng: np.random.Generator) -> int:
    """Draw one latency in ticks.  Constant models never touch ``rng``."""
    if isinstance(model, Constant):
        ms = model.ms
    elif isinstance(model, Uniform):
        ms = rng.uniform(model.lo, model.hi)
    else:
        ms = rng.lognormal(model.mu, model.sigma)
    return max(0, to_ticks(round(float(ms), 1)))


def latency_from_dict(d: Mapping) -> LatencyModel:
    kind = d.get("kind", "constant")
    if kind == "constant":
        return Constant(float(d["ms"]))
    if kind == "uniform":
        return Uniform(float(d["lo"]), float(d["hi"]), int(d.get("seed", 0)))
    if kind == "lognormal":
        return LogNormal(float(d["mu"]), float(d["sigma"]), int(d.get("seed", 0)))
    raise ValueError(f"unknown latency kind {kind!r}")


def latency_to_dict(model: LatencyModel) -> dict:
    if isinstance(model, Constant):
        return {"kind": "constant", "ms": model.ms}
    if isinstance(model, Uniform):
        return {"kind": "uniform", "lo": model.lo, "hi": model.hi, "seed": model.seed}
    return {"kind": "lognormal", "mu": model.mu, "sigma": model.sigma, "seed": model.seed}


@dataclass(frozen=True)
class CorruptionModel:
    phrase_set: PhraseSet
    corruption_rate: float
    seed: int = 0


@dataclass(frozen=True)
class ComponentProfile:
    name: str
    latency: LatencyModel
    meta: Mapping[str, object] = field(default_factory=dict)
    error_injection: CorruptionModel | None = None
    stream_rate: float | None = None  # LLM tokens per second
    speaking_rate: float | None = None  # TTS characters per second


PRESETS: dict[str, ComponentProfile] = {
    p.name: p
    for p in [
        ComponentProfile("typhoon", Constant(417.1), {"wer": 0.562}),
        ComponentProfile("google-stt-v1", Constant(2457.2), {"wer": 0.243}),
        ComponentProfile("flash", Constant(1148.6), stream_rate=10.0),
        ComponentProfile("flash-lite-repair", Constant(623.0), {"correction_score": 0.85}),
        ComponentProfile("gpt5", Constant(5264.1), stream_rate=10.0),
        ComponentProfile("tts-default", Constant(450.0), speaking_rate=15.0),
        ComponentProfile("gpt-realtime", Uniform(4000.0, 6000.0)),
    ]
}


@dataclass(frozen=True)
class CostModel:
    per_turn_usd: Mapping[str, Decimal] = field(
        default_factory=lambda: {
            "Fluid": Decimal("0.0010"),
            "Precise": Decimal("0.0023"),
            "Reasoning": Decimal("0.0046"),
            "DeepReasoning": Decimal("0.0046"),
            "RealtimeBenchmark": Decimal("0.0154"),
        }
    )


def cost_of_turn(tier, model: CostModel = CostModel()) -> Decimal:
    name = getattr(tier, "name", tier)
    try:
        return model.per_turn_usd[name]
    except KeyError:
        raise KeyError(f"no cost configured for tier {name!r}") from None


class RngStreams:
    """Independent, reproducible generators keyed by (session, component).

    Each stream is seeded from the run seed, a CRC of the session and component
    names, and the latency model's own seed, so adding a session never shifts
    another session's draws.
    """

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed
        self._streams: dict[tuple, np.random.Generator] = {}

    def get(self, session: object, component: str, salt: int = 0) -> np.random.Generator:
        key = (str(session), component, salt)
        if key not in self._streams:
            entropy = [
                self.seed,
                zlib.crc32(key[0].encode()),
                zlib.crc32(component.encode()),
                salt,
            ]
            self._streams[key] = np.random.default_rng(entropy)
        return self._streams[key]


def _model_seed(model: LatencyModel) -> int:
    return getattr(model, "seed", 0)


@dataclass(frozen=True)
class TranscriptEvent:
    """ASR output.  Deliberately has no prosody field: tone does not survive."""

    text: str
    latency: int  # ticks
    corrupted_terms: tuple[str, ...] = ()


def corrupt(text: str, model: CorruptionModel, rng: np.random.Generator) -> tuple[str, list[str]]:
    """Replace each canonical occurrence by a random variant with probability ``rate``."""
    hit: list[str] = []
    entries = {e.canonical: e for e in model.phrase_set.entries}
    if not entries:
        return text, hit
    names = sorted(entries, key=len, reverse=True)
    pattern = re.compile(r"(?<!\w)(" + "|".join(re.escape(n) for n in names) + r")(?!\w)")

    def swap(m: re.Match) -> str:
        entry = entries[m.group(1)]
        if rng.random() >= model.corruption_rate:
            return m.group(0)
        hit.append(entry.canonical)
        return entry.variants[int(rng.integers(len(entry.variants)))]

    return pattern.sub(swap, text), hit


def sim_asr(
    text: str,
    profile: ComponentProfile,
    rng: np.random.Generator,
    prosody: frozenset[str] | None = None,
) -> TranscriptEvent:
    """Recognize an utterance.  ``prosody`` is accepted and dropped by design."""
    latency = sample_ticks(profile.latency, rng)
    corrupted: list[str] = []
    if profile.error_injection is not None:
        text, corrupted = corrupt(text, profile.error_injection, rng)
    return TranscriptEvent(text, latency, tuple(corrupted))


FALLBACK_RESPONSE = "I could not find that in the knowledge base."


@dataclass(frozen=True)
class LlmResponse:
    text: str
    total: int  # ticks from invocation until the full text is available
    tokens: tuple[TokenEvent, ...] = ()  # offsets from invocation, streaming only

    @property
    def first_token(self) -> int:
        return self.tokens[0].t if self.tokens else self.total


def tokenize_response(text: str) -> list[str]:
    """Word-plus-trailing-space pieces whose concatenation is ``text``."""
    return re.findall(r"\s*\S+\s*", text) or ([text] if text else [])


def sim_llm(
    prompt,
    profile: ComponentProfile,
    rng: np.random.Generator,
    streaming: bool = False,
    first_token_fraction: float = 0.3,
    fallback: str = FALLBACK_RESPONSE,
) -> LlmResponse:
    """Template response: the best retrieved chunk echoed back, else a fallback line.

    In streaming mode the first token lands at ``first_token_fraction`` of the
    sampled total and the rest follow at ``stream_rate`` tokens per second; the
    stream closes at the later of the total latency and the last token.
    """
    total = sample_ticks(profile.latency, rng)
    chunks = getattr(prompt, "chunks", ()) or ()
    text = next((c.text for c in chunks if c.score > 0), fallback)
    if not streaming:
        return LlmResponse(text, total)
    pieces = tokenize_response(text)
    rate = Fraction(str(profile.stream_rate or 10.0))
    first = round(Fraction(total) * Fraction(str(first_token_fraction)))
    step = Fraction(to_ticks(1000)) / rate
    tokens = tuple(TokenEvent(first + round(i * step), p) for i, p in enumerate(pieces))
    end = max(total, tokens[-1].t) if tokens else total
    return LlmResponse(text, end, tokens)


@dataclass(frozen=True)
class AudioOut:
    synthesis_latency: int  # ticks
    playback_duration: int  # ticks

    @property
    def synthesis_latency_ms(self) -> float:
        return self.synthesis_latency / 10

    @property
    def playback_duration_ms(self) -> float:
        return self.playback_duration / 10


def sim_tts(chunk: SpeechChunk | str, profile: ComponentProfile, rng: np.random.Generator | None = None) -> AudioOut:
    text = chunk.text if isinstance(chunk, SpeechChunk) else chunk
    if not text:
        raise ValueError("cannot synthesize an empty chunk")
    rate = Fraction(str(profile.speaking_rate or 15.0))
    playback_ms = math.ceil(Fraction(len(text) * 1000) / rate)
    latency = sample_ticks(profile.latency, rng if rng is not None else np.random.default_rng(0))
    return AudioOut(latency, to_ticks(playback_ms))
