"""
Routing by intent, fillers and the restart loop
================================================

Small talk goes to the fast tier and technical questions to the precise one.
Long waits get an audio filler, and a user who asks "are you still there"
during a long wait cancels their own request.
"""

from turnsim import load_scenario, run_scenario
from turnsim.floor import ProcessingSpeechPolicy

trace, config = load_scenario("routing")
for turn in run_scenario(trace, config).turns:
    print(f"{turn.transcript[:50]!r:<54} -> {turn.tier:<8} delay {turn.turn_delay_ms} ms, filler {turn.filler_emitted}")

trace, config = load_scenario("cancel_on_speech")
for policy in ProcessingSpeechPolicy:
    report = run_scenario(trace, config.with_overrides(processing_speech=policy))
    print(f"\n{policy.value}")
    for a in report.actions:
        print(f"  {a['at_ms']:8.1f} ms  {a['kind']:<14} {a['request_id']}")
