"""Endpointing: VAD probabilities to TurnStart/TurnEnd floor signals.

The detector smooths per-frame speech probabilities with an exponential moving
average, then runs a four-phase state machine with asymmetric thresholds:

* ``Silent`` -> ``Arming`` once the smoothed value reaches ``theta_start``;
  ``start_frames`` consecutive confident frames are needed to open a turn.
* ``InTurn`` -> ``Cooling`` once the smoothed value drops to ``theta_end``; the
  turn only closes after ``hangover_ms`` of sustained low probability, so short
  mid-sentence pauses are absorbed.

Frame timestamps are in ticks (see :mod:`turnsim.timebase`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable

from .timebase import to_ticks


class ValidationError(ValueError):
    pass


@dataclass(frozen=True)
class AudioFrame:
    t: int
    session: object
    vad_raw: float
    gain: float = 1.0
    prosody: frozenset[str] = frozenset()


@dataclass(frozen=True)
class VadConfig:
    alpha: float = 0.3
    theta_start: float = 0.80
    theta_end: float = 0.40
    start_frames: int = 3
    hangover_ms: float = 600
    frame_period_ms: float = 20

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ValidationError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 <= self.theta_end < self.theta_start <= 1:
            raise ValidationError("thresholds must satisfy 0 <= theta_end < theta_start <= 1")
        if self.start_frames < 1:
            raise ValidationError("start_frames must be positive")
        if self.frame_period_ms <= 0 or self.hangover_ms < self.frame_period_ms:
            raise ValidationError("need 0 < frame_period_ms <= hangover_ms")

    @cached_property
    def frame_period(self) -> int:
        return to_ticks(self.frame_period_ms)

    @cached_property
    def hangover(self) -> int:
        return to_ticks(self.hangover_ms)


class Phase(enum.Enum):
    SILENT = "Silent"
    ARMING = "Arming"
    IN_TURN = "InTurn"
    COOLING = "Cooling"


@dataclass(frozen=True)
class VadState:
    smoothed: float = 0.0
    phase: Phase = Phase.SILENT
    # Arming: consecutive confident frames.  Cooling: ticks since the last
    # frame above theta_end.
    count: int = 0
    elapsed: int = 0
    last_t: int | None = None


class SignalKind(enum.Enum):
    TURN_START = "TurnStart"
    TURN_END = "TurnEnd"


@dataclass(frozen=True)
class FloorSignal:
    kind: SignalKind
    t: int
    session: object = None
    text: str = field(default="", compare=False)


def normalize_frame(frame: AudioFrame, target_gain: float = 1.0) -> AudioFrame:
    """Bring a frame to ``target_gain`` and clamp its probability to [0, 1].

    Only gain is rescaled; the probability itself is not gain-dependent in this
    model, so normalization leaves ``vad_raw`` alone apart from the clamp.
    """
    if frame.gain <= 0:
        raise ValidationError(f"gain must be positive, got {frame.gain}")
    return replace(frame, gain=target_gain, vad_raw=min(1.0, max(0.0, frame.vad_raw)))


def smooth(prev: float, raw: float, alpha: float) -> float:
    value = alpha * raw + (1.0 - alpha) * prev
    return min(1.0, max(0.0, value))


def step_vad(
    state: VadState, frame: AudioFrame, cfg: VadConfig
) -> tuple[VadState, FloorSignal | None]:
    if state.last_t is not None and frame.t != state.last_t + cfg.frame_period:
        raise ValidationError(
            f"frame at t={frame.t} does not follow t={state.last_t} by one frame period"
        )
    if frame.gain <= 0:
        raise ValidationError(f"gain must be positive, got {frame.gain}")
    s = smooth(state.smoothed, min(1.0, max(0.0, frame.vad_raw)), cfg.alpha)
    phase, count, elapsed = state.phase, state.count, state.elapsed
    signal = None

    if phase in (Phase.SILENT, Phase.ARMING):
        if s >= cfg.theta_start:
            count = count + 1 if phase is Phase.ARMING else 1
            if count >= cfg.start_frames:
                phase, count = Phase.IN_TURN, 0
                signal = FloorSignal(SignalKind.TURN_START, frame.t, frame.session)
            else:
                phase = Phase.ARMING
        else:
            phase, count = Phase.SILENT, 0
    elif s > cfg.theta_end:
        phase, elapsed = Phase.IN_TURN, 0
    else:
        elapsed = elapsed + cfg.frame_period if phase is Phase.COOLING else cfg.frame_period
        phase = Phase.COOLING
        if elapsed >= cfg.hangover:
            phase, elapsed = Phase.SILENT, 0
            signal = FloorSignal(SignalKind.TURN_END, frame.t, frame.session)

    return VadState(s, phase, count, elapsed, frame.t), signal


def detect(frames: Iterable[AudioFrame], cfg: VadConfig | None = None) -> list[FloorSignal]:
    """Run one session's frames through the detector and collect its signals."""
    cfg = cfg or VadConfig()
    state = VadState()
    signals = []
    for frame in frames:
        state, signal = step_vad(state, frame, cfg)
        if signal is not None:
            signals.append(signal)
    return signals
