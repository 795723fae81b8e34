"""
Endpointing with smoothing, hysteresis and hangover
===================================================

A speaker pauses mid-sentence for 300 ms.  The detector should hold the floor
through the pause and close the turn only after sustained silence.
"""

from turnsim import load_scenario
from turnsim.harness import vad_check
from turnsim.hearing import AudioFrame, VadConfig, VadState, step_vad
from turnsim.timebase import to_ms

trace, config = load_scenario("frames")
frames = [e for e in trace if e.kind == "frame"]
print(f"{len(frames)} frames, 20 ms apart")

# Walk the state machine and print every phase change.
state, phase = VadState(), None
for e in frames:
    state, signal = step_vad(state, AudioFrame(e.t, e.session, e.vad_raw, e.gain), config.vad)
    if state.phase != phase or signal:
        note = f"  -> {signal.kind.value}" if signal else ""
        print(f"t={to_ms(e.t):7.1f} ms raw={e.vad_raw:.2f} smoothed={state.smoothed:.3f} {state.phase.value}{note}")
        phase = state.phase

# A shorter hangover gives up the floor during the micro-pause.
for hangover in (600, 200):
    cfg = VadConfig(hangover_ms=hangover)
    signals = vad_check(trace, config.with_overrides(vad=cfg))["mic-1"]
    print(f"hangover {hangover} ms: {[(s['kind'], s['t_ms']) for s in signals]}")
