"""Session turn-taking: half-duplex output gate, barge-in, fillers, cancel-on-speech.

Transitions are pure: each function takes a :class:`FloorState` and returns the
new state plus a list of :class:`FloorAction` effects for the caller to carry
out.  Times are ticks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .hearing import FloorSignal, SignalKind
from .timebase import to_ticks


class ProtocolError(RuntimeError):
    """A signal arrived that the current floor phase cannot accept."""


class Phase(enum.Enum):
    IDLE = "Idle"
    USER_TURN = "UserTurn"
    PROCESSING = "Processing"
    AGENT_TURN = "AgentTurn"


class ActionKind(enum.Enum):
    DISPATCH_TURN = "DispatchTurn"
    IGNORED = "Ignored"
    HALT_PLAYBACK = "HaltPlayback"
    EMIT_FILLER = "EmitFiller"
    CANCEL_REQUEST = "CancelRequest"
    START_PLAYBACK = "StartPlayback"
    PLAYBACK_DONE = "PlaybackDone"


@dataclass(frozen=True)
class FloorAction:
    kind: ActionKind
    at: int
    request_id: str | None = None


@dataclass(frozen=True)
class FloorState:
    session: object
    phase: Phase = Phase.IDLE
    request_id: str | None = None
    entered_at: int | None = None  # Processing start
    playback_id: str | None = None
    started_at: int | None = None  # AgentTurn start
    filler_until: int | None = None  # end of the last filler emitted in this Processing phase
    turns: int = 0


@dataclass(frozen=True)
class HalfDuplex:
    pass


@dataclass(frozen=True)
class FullDuplexBargeIn:
    interrupt_latency_ms: float = 50.0

    def __post_init__(self) -> None:
        if self.interrupt_latency_ms < 0:
            raise ValueError("interrupt_latency_ms must be non-negative")


DuplexMode = HalfDuplex | FullDuplexBargeIn


@dataclass(frozen=True)
class FillerPolicy:
    silence_threshold_ms: float = 3000
    filler_duration_ms: float = 800
    repeat: bool = False

    def __post_init__(self) -> None:
        if self.silence_threshold_ms <= 0:
            raise ValueError("silence_threshold_ms must be positive")


class ProcessingSpeechPolicy(enum.Enum):
    CANCEL_AND_RESTART = "cancel_and_restart"
    QUEUE_AS_FOLLOW_UP = "queue_as_follow_up"


def request_id_for(session: object, index: int) -> str:
    return f"{session}#{index}"


def _start_user_turn(state: FloorState) -> FloorState:
    return FloorState(session=state.session, phase=Phase.USER_TURN, turns=state.turns)


def on_floor_signal(
    state: FloorState,
    signal: FloorSignal,
    mode: DuplexMode = HalfDuplex(),
    policy: ProcessingSpeechPolicy = ProcessingSpeechPolicy.CANCEL_AND_RESTART,
) -> tuple[FloorState, list[FloorAction]]:
    if signal.session != state.session:
        raise ProtocolError(f"signal for {signal.session!r} sent to session {state.session!r}")
    start = signal.kind is SignalKind.TURN_START

    if state.phase is Phase.IDLE:
        if not start:
            raise ProtocolError("TurnEnd while Idle")
        return _start_user_turn(state), []
    if state.phase is Phase.USER_TURN:
        if start:
            raise ProtocolError("TurnStart during UserTurn")
        rid = request_id_for(state.session, state.turns)
        new = FloorState(
            session=state.session,
            phase=Phase.PROCESSING,
            request_id=rid,
            entered_at=signal.t,
            turns=state.turns + 1,
        )
        return new, [FloorAction(ActionKind.DISPATCH_TURN, signal.t, rid)]
    if not start:
        # End of speech the gate already refused or deferred.
        return state, [FloorAction(ActionKind.IGNORED, signal.t, state.request_id)]
    if state.phase is Phase.PROCESSING:
        return on_user_speech_during_processing(state, policy, signal.t)
    return on_user_speech_during_agent_turn(state, mode, signal.t)


def on_user_speech_during_agent_turn(
    state: FloorState, mode: DuplexMode, now: int
) -> tuple[FloorState, list[FloorAction]]:
    if state.phase is Phase.IDLE:
        return _start_user_turn(state), []
    if state.phase is not Phase.AGENT_TURN:
        raise ProtocolError(f"expected AgentTurn, in {state.phase.value}")
    if isinstance(mode, HalfDuplex):
        return state, [FloorAction(ActionKind.IGNORED, now, state.playback_id)]
    halt_at = now + to_ticks(mode.interrupt_latency_ms)
    return _start_user_turn(state), [
        FloorAction(ActionKind.HALT_PLAYBACK, halt_at, state.playback_id)
    ]


def on_user_speech_during_processing(
    state: FloorState, policy: ProcessingSpeechPolicy, now: int
) -> tuple[FloorState, list[FloorAction]]:
    if state.phase is not Phase.PROCESSING:
        raise ProtocolError(f"expected Processing, in {state.phase.value}")
    if policy is ProcessingSpeechPolicy.QUEUE_AS_FOLLOW_UP:
        return state, []
    if state.request_id is None:
        raise ProtocolError("CancelAndRestart with no pending request")
    return _start_user_turn(state), [
        FloorAction(ActionKind.CANCEL_REQUEST, now, state.request_id)
    ]


def on_response_ready(
    state: FloorState, playback_id: str, now: int
) -> tuple[FloorState, list[FloorAction]]:
    """Processing -> AgentTurn when the first synthesized audio is available."""
    if state.phase is not Phase.PROCESSING:
        raise ProtocolError(f"response ready while {state.phase.value}")
    new = replace(
        state,
        phase=Phase.AGENT_TURN,
        playback_id=playback_id,
        started_at=now,
        entered_at=None,
        filler_until=None,
    )
    return new, [FloorAction(ActionKind.START_PLAYBACK, now, playback_id)]


def on_playback_done(state: FloorState, now: int) -> tuple[FloorState, list[FloorAction]]:
    if state.phase is not Phase.AGENT_TURN:
        raise ProtocolError(f"playback done while {state.phase.value}")
    done = FloorAction(ActionKind.PLAYBACK_DONE, now, state.playback_id)
    return FloorState(session=state.session, turns=state.turns), [done]


def maybe_emit_filler(state: FloorState, now: int, policy: FillerPolicy) -> FloorAction | None:
    if state.phase is not Phase.PROCESSING or state.entered_at is None:
        return None
    if now - state.entered_at < to_ticks(policy.silence_threshold_ms):
        return None
    if state.filler_until is not None and not (policy.repeat and now >= state.filler_until):
        return None
    return FloorAction(ActionKind.EMIT_FILLER, now, state.request_id)


def record_filler(state: FloorState, now: int, policy: FillerPolicy) -> FloorState:
    return replace(state, filler_until=now + to_ticks(policy.filler_duration_ms))
