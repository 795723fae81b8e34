"""Run configuration: one JSON document describing a whole simulation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Any, Mapping

from . import adapters
from .adapters import ComponentProfile, CorruptionModel
from .aggregator import DEFAULT_DELIMITERS, ChunkPolicy
from .floor import FillerPolicy, FullDuplexBargeIn, HalfDuplex, ProcessingSpeechPolicy
from .hearing import VadConfig
from .orchestrator import (
    DEFAULT_PHATIC_LEXICON,
    DEFAULT_ROUTING,
    TIER_LAYOUT,
    Document,
    IntentClass,
    PipelineTier,
    RagConfig,
    RunSettings,
    build_tiers,
)
from .repair import PhraseSet, RepairConfig


class ConfigError(ValueError):
    pass


PIPELINES = {
    "fluid": "Fluid",
    "precise": "Precise",
    "reasoning": "Reasoning",
    "deep-reasoning": "DeepReasoning",
    "realtime": "RealtimeBenchmark",
    "route": None,
}


@dataclass
class ScenarioConfig:
    seed: int = 0
    pipeline: str = "route"
    mode: str = "half"
    interrupt_latency_ms: float = 50.0
    streaming: bool = False
    profiles: dict[str, ComponentProfile] = field(default_factory=dict)
    tier_layout: dict[str, dict] = field(default_factory=lambda: {k: dict(v) for k, v in TIER_LAYOUT.items()})
    costs: adapters.CostModel = field(default_factory=adapters.CostModel)
    phrase_set: PhraseSet = field(default_factory=PhraseSet)
    repair: RepairConfig = field(default_factory=RepairConfig)
    vad: VadConfig = field(default_factory=VadConfig)
    filler: FillerPolicy = field(default_factory=FillerPolicy)
    processing_speech: ProcessingSpeechPolicy = ProcessingSpeechPolicy.CANCEL_AND_RESTART
    retry_ignored: bool = True
    gate_capacity: int = 4
    context_fetch_ms: float = 0.0
    rag: RagConfig = field(default_factory=RagConfig)
    routing: dict[IntentClass, str] = field(default_factory=lambda: dict(DEFAULT_ROUTING))
    phatic_lexicon: tuple[str, ...] = DEFAULT_PHATIC_LEXICON
    chunk_policy: ChunkPolicy | None = None  # None: protect the phrase-set canonicals
    first_token_fraction: float = 0.3
    fallback_response: str = adapters.FALLBACK_RESPONSE
    strict: bool = False

    def __post_init__(self) -> None:
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.pipeline!r}; choose from {sorted(PIPELINES)}")
        if self.mode not in ("half", "full"):
            raise ConfigError(f"mode must be 'half' or 'full', got {self.mode!r}")

    @property
    def duplex(self):
        return HalfDuplex() if self.mode == "half" else FullDuplexBargeIn(self.interrupt_latency_ms)

    def tiers(self) -> dict[str, PipelineTier]:
        return build_tiers(self.profiles, self.tier_layout, self.costs)

    def effective_chunk_policy(self) -> ChunkPolicy:
        if self.chunk_policy is not None:
            return self.chunk_policy
        terms = tuple(t for t in self.phrase_set.canonicals if t)
        longest = max((len(t) for t in terms), default=0)
        return ChunkPolicy(max_chars=max(80, longest), protected_lexicon=terms)

    def settings(self) -> RunSettings:
        return RunSettings(
            streaming=self.streaming,
            first_token_fraction=self.first_token_fraction,
            fallback_response=self.fallback_response,
            chunk_policy=self.effective_chunk_policy(),
            phrase_set=self.phrase_set,
            repair=self.repair,
            strict=self.strict,
        )

    def with_overrides(self, **kw: Any) -> ScenarioConfig:
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    # -- (de)serialization -------------------------------------------------

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> ScenarioConfig:
        try:
            return _from_dict(raw)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    def to_dict(self) -> dict:
        """Summary of the knobs that shape the report (embedded as report metadata)."""
        return {
            "seed": self.seed,
            "pipeline": self.pipeline,
            "mode": self.mode,
            "interrupt_latency_ms": self.interrupt_latency_ms,
            "streaming": self.streaming,
            "gate_capacity": self.gate_capacity,
            "processing_speech": self.processing_speech.value,
            "filler_threshold_ms": self.filler.silence_threshold_ms,
        }


def _profile(name: str, spec: Mapping[str, Any], phrase_set: PhraseSet) -> ComponentProfile:
    base = adapters.PRESETS.get(spec.get("base", name))
    latency = adapters.latency_from_dict(spec["latency"]) if "latency" in spec else None
    if latency is None and base is None:
        raise ConfigError(f"profile {name!r} needs a latency or a known base preset")
    rate = spec.get("corruption_rate")
    injection = None
    if rate:
        injection = CorruptionModel(phrase_set, float(rate), int(spec.get("corruption_seed", 0)))
    elif base is not None:
        injection = base.error_injection
    return ComponentProfile(
        name=name,
        latency=latency or base.latency,
        meta=dict(spec.get("meta", base.meta if base else {})),
        error_injection=injection,
        stream_rate=spec.get("stream_rate", base.stream_rate if base else None),
        speaking_rate=spec.get("speaking_rate", base.speaking_rate if base else None),
    )


def _chunk_policy(spec: Mapping[str, Any], phrase_set: PhraseSet) -> ChunkPolicy:
    lexicon = spec.get("protected_lexicon")
    if lexicon is None:
        lexicon = phrase_set.canonicals
    return ChunkPolicy(
        min_chars=int(spec.get("min_chars", 12)),
        max_chars=int(spec.get("max_chars", 80)),
        delimiters=frozenset(spec.get("delimiters", DEFAULT_DELIMITERS)),
        max_buffer_wait_ms=spec.get("max_buffer_wait_ms", 400),
        protected_lexicon=tuple(lexicon),
        continuous_script=bool(spec.get("continuous_script", False)),
    )


def _from_dict(raw: Mapping[str, Any]) -> ScenarioConfig:
    known = {
        "seed", "pipeline", "mode", "interrupt_latency_ms", "streaming", "profiles", "tiers",
        "phrase_set", "repair", "vad", "filler", "processing_speech", "retry_ignored", "gate",
        "context", "rag", "routing", "phatic_lexicon", "aggregator", "llm", "strict",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    phrase_set = PhraseSet.from_records(raw.get("phrase_set", []))
    profiles = {n: _profile(n, s, phrase_set) for n, s in raw.get("profiles", {}).items()}

    layout = {k: dict(v) for k, v in TIER_LAYOUT.items()}
    costs = dict(adapters.CostModel().per_turn_usd)
    for name, spec in raw.get("tiers", {}).items():
        spec = dict(spec)
        if "cost_per_turn_usd" in spec:
            costs[name] = Decimal(str(spec.pop("cost_per_turn_usd")))
        layout[name] = {**layout.get(name, {}), **spec}
    for name, stages in layout.items():
        for stage, prof in stages.items():
            if prof and prof not in profiles and prof not in adapters.PRESETS:
                raise ConfigError(f"tier {name!r} stage {stage!r} names unknown profile {prof!r}")

    floor = raw.get("filler", {})
    rag = raw.get("rag", {})
    llm = raw.get("llm", {})
    routing = {IntentClass(k): v for k, v in raw.get("routing", {}).items()}
    cfg = ScenarioConfig(
        seed=int(raw.get("seed", 0)),
        pipeline=raw.get("pipeline", "route"),
        mode=raw.get("mode", "half"),
        interrupt_latency_ms=float(raw.get("interrupt_latency_ms", 50.0)),
        streaming=bool(raw.get("streaming", False)),
        profiles=profiles,
        tier_layout=layout,
        costs=adapters.CostModel(costs),
        phrase_set=phrase_set,
        repair=RepairConfig(**raw.get("repair", {})),
        vad=VadConfig(**raw.get("vad", {})),
        filler=FillerPolicy(**floor),
        processing_speech=ProcessingSpeechPolicy(raw.get("processing_speech", "cancel_and_restart")),
        retry_ignored=bool(raw.get("retry_ignored", True)),
        gate_capacity=int(raw.get("gate", {}).get("capacity", 4)),
        context_fetch_ms=float(raw.get("context", {}).get("fetch_latency_ms", 0.0)),
        rag=RagConfig(
            documents=tuple(Document(d["doc_id"], d["text"]) for d in rag.get("documents", [])),
            top_k=int(rag.get("top_k", 1)),
            retrieval_overhead_ms=float(rag.get("retrieval_overhead_ms", 0.0)),
        ),
        routing={**DEFAULT_ROUTING, **routing},
        phatic_lexicon=tuple(raw.get("phatic_lexicon", DEFAULT_PHATIC_LEXICON)),
        chunk_policy=_chunk_policy(raw["aggregator"], phrase_set) if "aggregator" in raw else None,
        first_token_fraction=float(llm.get("first_token_fraction", 0.3)),
        fallback_response=llm.get("fallback_response", adapters.FALLBACK_RESPONSE),
        strict=bool(raw.get("strict", False)),
    )
    tiers = set(layout)
    missing = [t for t in cfg.routing.values() if t not in tiers]
    if missing:
        raise ConfigError(f"routing targets unknown tiers: {missing}")
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return ScenarioConfig.from_dict(raw)
