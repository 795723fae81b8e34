"""Trace-driven scenario execution and reporting.

A trace is line-delimited JSON, one event per line::

    {"t_ms": 0, "session": "s1", "kind": "utterance", "text": "deploy on Azure", "duration_ms": 1200}
    {"t_ms": 0, "session": "s2", "kind": "frame", "vad_raw": 0.93, "gain": 1.0}
    {"t_ms": 3500, "session": "s1", "kind": "barge_in", "text": "are you still there"}
    {"t_ms": 9000, "session": "s1", "kind": "end"}

:func:`run_scenario` replays it through hearing, floor control and the
orchestrator on one event loop and returns a :class:`Report`.
"""

from __future__ import annotations

import csv
import io
import json
from importlib import resources
from collections import deque
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import floor as fl
from .adapters import RngStreams
from .config import PIPELINES, ScenarioConfig, load_config
from .events import EventLoop
from .floor import ActionKind, FloorAction, FloorState, Phase
from .hearing import AudioFrame, FloorSignal, SignalKind, ValidationError, VadState, step_vad
from .orchestrator import (
    ConcurrencyGate,
    ConversationStore,
    Orchestrator,
    TurnRequest,
    TurnResult,
    classify_intent,
    route,
)
from .timebase import to_ms, to_ticks


class TraceError(ValueError):
    pass


_FIELDS = {
    "frame": ({"vad_raw"}, {"gain", "prosody", "text"}),
    "utterance": ({"text", "duration_ms"}, {"prosody"}),
    "barge_in": ({"text"}, {"duration_ms", "prosody"}),
    "end": (set(), set()),
}


@dataclass(frozen=True)
class TraceEvent:
    t_ms: float
    session: str
    kind: str
    vad_raw: float | None = None
    gain: float = 1.0
    prosody: tuple[str, ...] = ()
    text: str = ""
    duration_ms: float = 0.0

    @property
    def t(self) -> int:
        return to_ticks(self.t_ms)


def parse_trace(lines: Iterable[str]) -> list[TraceEvent]:
    events: list[TraceEvent] = []
    last_t: dict[str, float] = {}
    style: dict[str, str] = {}
    ended: set[str] = set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"line {lineno}: malformed JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise TraceError(f"line {lineno}: expected a JSON object")
        kind = obj.get("kind")
        if kind not in _FIELDS:
            raise TraceError(f"line {lineno}: unknown kind {kind!r}")
        required, optional = _FIELDS[kind]
        keys = set(obj) - {"t_ms", "session", "kind"}
        if "t_ms" not in obj or "session" not in obj:
            raise TraceError(f"line {lineno}: t_ms and session are required")
        if required - keys:
            raise TraceError(f"line {lineno}: {kind} missing {sorted(required - keys)}")
        if keys - required - optional:
            raise TraceError(f"line {lineno}: unexpected fields {sorted(keys - required - optional)}")
        t, session = obj["t_ms"], str(obj["session"])
        if not isinstance(t, (int, float)) or t < 0:
            raise TraceError(f"line {lineno}: t_ms must be a non-negative number")
        if session in ended:
            raise TraceError(f"line {lineno}: event after end of session {session!r}")
        if t < last_t.get(session, 0):
            raise TraceError(f"line {lineno}: time regression in session {session!r}")
        if kind in ("frame", "utterance"):
            if style.setdefault(session, kind) != kind:
                raise TraceError(f"line {lineno}: session {session!r} mixes frame and utterance events")
        if kind == "frame" and not isinstance(obj["vad_raw"], (int, float)):
            raise TraceError(f"line {lineno}: vad_raw must be a number")
        if kind == "end":
            ended.add(session)
        last_t[session] = t
        events.append(
            TraceEvent(
                t_ms=t,
                session=session,
                kind=kind,
                vad_raw=obj.get("vad_raw"),
                gain=float(obj.get("gain", 1.0)),
                prosody=tuple(obj.get("prosody", ())),
                text=str(obj.get("text", "")),
                duration_ms=float(obj.get("duration_ms", 0.0)),
            )
        )
    return events


def load_trace(path: str | Path) -> list[TraceEvent]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_trace(fh)
    except OSError as exc:
        raise TraceError(f"cannot read trace {path}: {exc}") from exc


def dump_trace(events: Sequence[TraceEvent]) -> str:
    out = []
    for e in events:
        obj: dict[str, Any] = {"t_ms": e.t_ms, "session": e.session, "kind": e.kind}
        required, optional = _FIELDS[e.kind]
        for name in sorted(required | optional):
            value = getattr(e, name)
            if name in required or value not in ((), "", None, 1.0, 0.0):
                obj[name] = list(value) if name == "prosody" else value
        out.append(json.dumps(obj))
    return "\n".join(out) + ("\n" if out else "")


# -- metrics -------------------------------------------------------------------


@dataclass
class TurnMetrics:
    session: str
    turn_index: int
    request_id: str
    tier: str
    queue_wait_ms: float
    asr_ms: float
    repair_ms: float
    retrieval_ms: float
    context_fetch_ms: float
    llm_first_token_ms: float
    llm_total_ms: float
    first_chunk_offset_ms: float
    tts_first_chunk_ms: float
    turn_delay_ms: float | None
    turn_end_ms: float
    playback_start_ms: float | None
    playback_end_ms: float | None
    filler_emitted: bool
    filler_at_ms: float | None
    canceled: bool
    halted: bool
    error: str | None
    chunks: int
    transcript: str
    response: str
    cost_usd: float


@dataclass
class Report:
    turns: list[TurnMetrics] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)
    actions: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "meta": self.meta,
            "aggregates": summarize(self),
            "tiers": tier_rows(self),
            "turns": [asdict(t) for t in self.turns],
            "errors": list(self.errors),
            "actions": list(self.actions),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Report:
        return cls(
            turns=[TurnMetrics(**t) for t in d.get("turns", [])],
            meta=dict(d.get("meta", {})),
            errors=list(d.get("errors", [])),
            actions=list(d.get("actions", [])),
        )

    def merged(self, other: Report) -> Report:
        return Report(self.turns + other.turns, {**self.meta, **other.meta},
                      self.errors + other.errors, self.actions + other.actions)


def nearest_rank(values: Sequence[float], pct: float) -> float:
    return float(np.percentile(np.asarray(values, dtype=float), pct, method="inverted_cdf"))


def _delay_stats(delays: Sequence[float]) -> dict[str, float | None]:
    if not delays:
        return {"mean_turn_delay_ms": None, "p50_turn_delay_ms": None, "p95_turn_delay_ms": None}
    return {
        "mean_turn_delay_ms": round(float(np.mean(delays)), 3),
        "p50_turn_delay_ms": nearest_rank(delays, 50),
        "p95_turn_delay_ms": nearest_rank(delays, 95),
    }


def _completed(turns: Iterable[TurnMetrics]) -> list[TurnMetrics]:
    return [t for t in turns if t.turn_delay_ms is not None]


def summarize(report: Report) -> dict[str, Any]:
    """Mean and nearest-rank p50/p95 turn delay over completed turns, plus cost totals."""
    done = _completed(report.turns)
    total = sum((Decimal(str(t.cost_usd)) for t in report.turns), Decimal("0"))
    return {
        "empty": not done,
        "turns": len(report.turns),
        "completed": len(done),
        **_delay_stats([t.turn_delay_ms for t in done]),
        "total_cost_usd": float(total),
    }


TABLE_COLUMNS = ("tier", "cost_per_turn_usd", "turns", "mean_turn_delay_ms",
                 "p50_turn_delay_ms", "p95_turn_delay_ms")
TIER_ORDER = ("Fluid", "Precise", "Reasoning", "DeepReasoning", "RealtimeBenchmark")


def tier_rows(report: Report) -> list[dict[str, Any]]:
    names = sorted({t.tier for t in report.turns},
                   key=lambda n: (TIER_ORDER.index(n) if n in TIER_ORDER else len(TIER_ORDER), n))
    costs = report.meta.get("tier_costs", {})
    rows = []
    for name in names:
        done = _completed(t for t in report.turns if t.tier == name)
        rows.append({
            "tier": name,
            "cost_per_turn_usd": costs.get(name),
            "turns": len(done),
            **_delay_stats([t.turn_delay_ms for t in done]),
        })
    return rows


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}" if value < 1 else f"{value:.1f}"
    return str(value)


def render_table(report: Report, fmt: str = "table") -> str:
    rows = tier_rows(report)
    if fmt == "json":
        return json.dumps({"aggregates": summarize(report), "tiers": rows}, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in TABLE_COLUMNS})
        return buf.getvalue()
    if fmt == "table":
        cells = [list(TABLE_COLUMNS)] + [[_fmt(r[k]) for k in TABLE_COLUMNS] for r in rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(TABLE_COLUMNS))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


# -- simulation ----------------------------------------------------------------


@dataclass
class _TurnLog:
    turn_index: int
    turn_end: int
    playback_start: int | None = None
    playback_end: int | None = None
    filler_at: int | None = None
    halted: bool = False


@dataclass
class _Session:
    name: str
    floor: FloorState
    vad: VadState = field(default_factory=VadState)
    capture: str | None = None  # where current user speech goes: turn/followup/ignored
    parts: list[str] = field(default_factory=list)
    onset: int = 0
    end_event: int | None = None
    end_at: int = 0
    prosody: frozenset[str] = frozenset()
    frame_text: list[str] = field(default_factory=list)
    followups: deque = field(default_factory=deque)
    retries: deque = field(default_factory=deque)
    playback_event: int | None = None
    playing: str | None = None


class _Runner:
    def __init__(self, config: ScenarioConfig) -> None:
        self.cfg = config
        self.loop = EventLoop()
        self.tiers = config.tiers()
        self.orch = Orchestrator(
            self.loop,
            ConcurrencyGate(config.gate_capacity),
            ConversationStore(config.context_fetch_ms),
            config.rag,
            config.settings(),
            RngStreams(config.seed),
        )
        self.sessions: dict[str, _Session] = {}
        self.logs: dict[str, _TurnLog] = {}
        self.order: list[str] = []
        self.report = Report()

    # -- bookkeeping --------------------------------------------------------

    def session(self, name: str) -> _Session:
        if name not in self.sessions:
            self.sessions[name] = _Session(name, FloorState(session=name))
        return self.sessions[name]

    def act(self, s: _Session, actions: Sequence[FloorAction]) -> None:
        for a in actions:
            self.report.actions.append(
                {"session": s.name, "kind": a.kind.value, "at_ms": to_ms(a.at), "request_id": a.request_id}
            )

    def guarded(self, fn, *args) -> None:
        try:
            fn(*args)
        except (fl.ProtocolError, ValidationError, ValueError) as exc:
            self.report.errors.append(f"t={to_ms(self.loop.now)}: {type(exc).__name__}: {exc}")

    def later(self, s: _Session, at: int, fn, *args) -> int:
        return self.loop.schedule_at(lambda: self.guarded(fn, *args), max(at, self.loop.now), s.name)

    # -- user speech --------------------------------------------------------

    def speech_onset(self, s: _Session, text: str, duration: int | None, prosody=frozenset()) -> None:
        now = self.loop.now
        phase = s.floor.phase
        if phase is Phase.USER_TURN and s.capture == "turn":
            s.parts.append(text)
            if duration is not None:
                self.schedule_end(s, max(s.end_at, now + duration))
            return
        if phase is Phase.IDLE:
            s.floor, actions = fl.on_floor_signal(s.floor, FloorSignal(SignalKind.TURN_START, now, s.name))
            self.act(s, actions)
            self.begin_capture(s, "turn", [text], duration, prosody)
        elif phase is Phase.PROCESSING:
            rid = s.floor.request_id
            s.floor, actions = fl.on_user_speech_during_processing(s.floor, self.cfg.processing_speech, now)
            self.act(s, actions)
            if any(a.kind is ActionKind.CANCEL_REQUEST for a in actions):
                pending = self.orch.results[rid]
                self.orch.cancel(rid)
                self.begin_capture(s, "turn", [pending.request.transcript, text], duration, prosody)
            else:
                self.begin_capture(s, "followup", [text], duration, prosody)
        elif phase is Phase.AGENT_TURN:
            s.floor, actions = fl.on_user_speech_during_agent_turn(s.floor, self.cfg.duplex, now)
            self.act(s, actions)
            halt = next((a for a in actions if a.kind is ActionKind.HALT_PLAYBACK), None)
            if halt is None:
                self.begin_capture(s, "ignored", [text], duration, prosody)
                return
            self.later(s, halt.at, self.halt_playback, s, halt)
            if duration is not None:
                duration = max(duration, halt.at - now)
            self.begin_capture(s, "turn", [text], duration, prosody)
        else:
            raise fl.ProtocolError(f"speech onset in {phase.value}")

    def begin_capture(self, s: _Session, mode: str, parts: list[str], duration: int | None, prosody) -> None:
        s.capture, s.onset, s.prosody = mode, self.loop.now, frozenset(prosody)
        s.parts = [p for p in parts if p] + s.frame_text
        s.frame_text = []
        if duration is not None:
            self.schedule_end(s, self.loop.now + duration)

    def schedule_end(self, s: _Session, at: int) -> None:
        if s.end_event is not None:
            self.loop.cancel(s.end_event)
        s.end_at = at
        s.end_event = self.later(s, at, self.speech_end, s)

    def speech_end(self, s: _Session) -> None:
        now = self.loop.now
        s.end_event = None
        text = " ".join(p for p in s.parts if p)
        mode, s.capture, s.parts = s.capture, None, []
        if mode == "followup":
            s.followups.append(text)
        elif mode == "ignored":
            if self.cfg.retry_ignored:
                s.retries.append((text, now - s.onset))
        elif mode == "turn" and s.floor.phase is Phase.USER_TURN:
            s.floor, actions = fl.on_floor_signal(s.floor, FloorSignal(SignalKind.TURN_END, now, s.name))
            self.act(s, actions)
            for a in actions:
                if a.kind is ActionKind.DISPATCH_TURN:
                    self.dispatch(s, a.request_id, text)

    # -- turns --------------------------------------------------------------

    def dispatch(self, s: _Session, rid: str, text: str) -> None:
        now = self.loop.now
        if self.cfg.pipeline == "route":
            tier = route(classify_intent(text, self.cfg.phatic_lexicon), self.cfg.routing, self.tiers)
        else:
            tier = self.tiers[PIPELINES[self.cfg.pipeline]]
        self.logs[rid] = _TurnLog(turn_index=s.floor.turns - 1, turn_end=now)
        self.order.append(rid)
        self.later(s, now + to_ticks(self.cfg.filler.silence_threshold_ms), self.filler_check, s, rid)
        req = TurnRequest(s.name, text, now, rid, s.prosody)
        self.orch.submit(req, tier, lambda r: self.guarded(self.response_ready, s, r))

    def filler_check(self, s: _Session, rid: str) -> None:
        if s.floor.request_id != rid:
            return
        action = fl.maybe_emit_filler(s.floor, self.loop.now, self.cfg.filler)
        if action is None:
            return
        self.act(s, [action])
        log = self.logs[rid]
        if log.filler_at is None:
            log.filler_at = self.loop.now
        s.floor = fl.record_filler(s.floor, self.loop.now, self.cfg.filler)
        if self.cfg.filler.repeat:
            self.later(s, s.floor.filler_until, self.filler_check, s, rid)

    def response_ready(self, s: _Session, result: TurnResult) -> None:
        rid = result.request.request_id
        s.floor, actions = fl.on_response_ready(s.floor, rid, self.loop.now)
        self.act(s, actions)
        log = self.logs[rid]
        log.playback_start = self.loop.now
        s.playing = rid
        s.playback_event = self.later(s, self.loop.now + result.playback_span, self.playback_done, s)

    def playback_done(self, s: _Session) -> None:
        s.floor, actions = fl.on_playback_done(s.floor, self.loop.now)
        self.act(s, actions)
        self.logs[s.playing].playback_end = self.loop.now
        s.playing, s.playback_event = None, None
        if s.followups:
            self.speech_onset(s, s.followups.popleft(), 0)
        elif s.retries:
            text, duration = s.retries.popleft()
            self.speech_onset(s, text, duration)

    def halt_playback(self, s: _Session, action: FloorAction) -> None:
        if s.playback_event is None or s.playing != action.request_id:
            return
        self.loop.cancel(s.playback_event)
        log = self.logs[s.playing]
        log.playback_end, log.halted = self.loop.now, True
        s.playing, s.playback_event = None, None

    # -- trace events -------------------------------------------------------

    def frame(self, s: _Session, e: TraceEvent) -> None:
        if e.text:
            (s.parts if s.capture else s.frame_text).append(e.text)
        frame = AudioFrame(e.t, s.name, float(e.vad_raw), e.gain, frozenset(e.prosody))
        s.vad, signal = step_vad(s.vad, frame, self.cfg.vad)
        if signal is None:
            return
        if signal.kind is SignalKind.TURN_START:
            self.speech_onset(s, "", None, e.prosody)
        elif s.capture is not None:
            self.speech_end(s)

    def feed(self, e: TraceEvent) -> None:
        s = self.session(e.session)
        if e.kind == "frame":
            self.frame(s, e)
        elif e.kind in ("utterance", "barge_in"):
            self.speech_onset(s, e.text, to_ticks(e.duration_ms), e.prosody)

    # -- output -------------------------------------------------------------

    def metrics(self) -> list[TurnMetrics]:
        rows = []
        for rid in self.order:
            r, log = self.orch.results[rid], self.logs[rid]
            completed = log.playback_start is not None
            ok = r.error is None and not r.canceled
            rows.append(TurnMetrics(
                session=str(r.request.session),
                turn_index=log.turn_index,
                request_id=rid,
                tier=r.tier,
                queue_wait_ms=to_ms(r.queue_wait),
                asr_ms=to_ms(r.asr),
                repair_ms=to_ms(r.repair),
                retrieval_ms=to_ms(r.retrieval),
                context_fetch_ms=to_ms(r.context_fetch),
                llm_first_token_ms=to_ms(r.llm_first_token),
                llm_total_ms=to_ms(r.llm_total),
                first_chunk_offset_ms=to_ms(r.first_chunk_offset),
                tts_first_chunk_ms=to_ms(r.tts_first_chunk),
                turn_delay_ms=to_ms(log.playback_start - log.turn_end) if completed else None,
                turn_end_ms=to_ms(log.turn_end),
                playback_start_ms=to_ms(log.playback_start) if completed else None,
                playback_end_ms=to_ms(log.playback_end) if log.playback_end is not None else None,
                filler_emitted=log.filler_at is not None,
                filler_at_ms=to_ms(log.filler_at) if log.filler_at is not None else None,
                canceled=r.canceled,
                halted=log.halted,
                error=r.error,
                chunks=len(r.chunks) if completed else 0,
                transcript=r.transcript,
                response=r.response if completed else "",
                cost_usd=float(self.tiers[r.tier].cost_per_turn_usd) if ok and completed else 0.0,
            ))
        return rows

    def run(self, trace: Sequence[TraceEvent]) -> Report:
        for e in trace:
            self.loop.schedule_at(lambda e=e: self.guarded(self.feed, e), e.t, e.session)
        end = self.loop.run_until_idle()
        self.report.turns = self.metrics()
        self.report.meta = {
            **self.cfg.to_dict(),
            "end_ms": to_ms(end),
            "tier_costs": {n: float(t.cost_per_turn_usd) for n, t in self.tiers.items()},
        }
        return self.report


def run_scenario(trace: Sequence[TraceEvent], config: ScenarioConfig | None = None) -> Report:
    """Replay ``trace`` under ``config``; deterministic for a fixed seed."""
    return _Runner(config or ScenarioConfig()).run(trace)


def compare_tiers(
    trace: Sequence[TraceEvent],
    config: ScenarioConfig,
    pipelines: Sequence[str] = ("fluid", "precise", "reasoning", "realtime"),
) -> Report:
    """Run the same trace once per pipeline and merge the rows into one report."""
    merged = Report()
    for name in pipelines:
        merged = merged.merged(run_scenario(trace, config.with_overrides(pipeline=name)))
    merged.meta["pipeline"] = ",".join(pipelines)
    return merged


def vad_check(trace: Sequence[TraceEvent], config: ScenarioConfig | None = None) -> dict[str, list[dict]]:
    """Floor signals detected per session from frame events only."""
    cfg = (config or ScenarioConfig()).vad
    states: dict[str, VadState] = {}
    out: dict[str, list[dict]] = {}
    for e in trace:
        if e.kind != "frame":
            continue
        state = states.get(e.session, VadState())
        frame = AudioFrame(e.t, e.session, float(e.vad_raw), e.gain, frozenset(e.prosody))
        states[e.session], signal = step_vad(state, frame, cfg)
        out.setdefault(e.session, [])
        if signal is not None:
            out[e.session].append({"kind": signal.kind.value, "t_ms": to_ms(signal.t)})
    return out


SCENARIOS = ("table1", "repair_rigidity", "cancel_on_speech", "routing", "frames")


def scenario_files(name: str) -> tuple[Path, Path | None]:
    """Paths of a shipped scenario's trace and (if it has one) config."""
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    root = Path(str(resources.files("turnsim") / "scenarios"))
    config = root / f"{name}.config.json"
    return root / f"{name}.jsonl", config if config.exists() else None


def load_scenario(name: str) -> tuple[list[TraceEvent], ScenarioConfig]:
    trace, config = scenario_files(name)
    return load_trace(trace), load_config(config) if config else ScenarioConfig()
