"""
Latency and cost of the pipeline tiers
======================================

Replays one user question through every tier and prints the comparison table.
"""

from decimal import Decimal

from turnsim import compare_tiers, load_scenario, render_table
from turnsim.adapters import cost_of_turn

# One utterance, constant component latencies, batch mode.
trace, config = load_scenario("table1")
report = compare_tiers(trace, config, ["fluid", "precise", "reasoning", "deep-reasoning", "realtime"])
print(render_table(report, "table"))

# Each modular tier's delay is just the sum of its stages.
for turn in report.turns:
    stages = [turn.asr_ms, turn.repair_ms, turn.llm_total_ms, turn.tts_first_chunk_ms]
    print(f"{turn.tier:<18} {' + '.join(f'{s:g}' for s in stages if s)} = {turn.turn_delay_ms} ms")

# Fast recognition plus repair still beats the precise recognizer alone.
fluid = next(t for t in report.turns if t.tier == "Fluid")
print(f"\nfast ASR + repair: {fluid.asr_ms + fluid.repair_ms:.1f} ms (precise ASR alone: 2457.2 ms)")

ratio = cost_of_turn("RealtimeBenchmark") / cost_of_turn("Fluid")
print(f"Fluid is {ratio.quantize(Decimal('0.1'))}x cheaper per turn than the realtime benchmark")
