"""
Correcting the agent mid-answer
===============================

The agent misunderstands and starts a 10 second wrong answer.  Half a second
in, the user says "no I said the Azure region".  With a half-duplex gate the
correction is ignored until playback ends and must be repeated; with
full-duplex barge-in playback stops 50 ms later and the correction is handled
right away.
"""

from turnsim import load_scenario, run_scenario

trace, config = load_scenario("repair_rigidity")
noticed = next(e.t_ms for e in trace if e.kind == "barge_in")

results = {}
for mode in ("half", "full"):
    report = run_scenario(trace, config.with_overrides(mode=mode))
    print(f"\n{mode}-duplex")
    for a in report.actions:
        print(f"  {a['at_ms']:8.1f} ms  {a['kind']:<14} {a['request_id'] or ''}")
    correction = report.turns[-1]
    results[mode] = correction.playback_start_ms - noticed
    print(f"  corrected answer starts {results[mode] / 1000:.1f} s after the user objected")

print(f"\nhalf-duplex loop is {results['half'] / results['full']:.1f}x longer")
