"""The twelve acceptance criteria, each at its stated tolerance.

Every test records a PASS/FAIL line (see ``verdicts.py``); pytest prints them
together at the end of the run.
"""

import random
from decimal import Decimal
from fractions import Fraction

from oracles import all_sequences, batch_edit_distances, repair_oracle
from props import ROUNDTRIP_PHRASES, check_aggregator, check_vad, frames_of, roundtrip_testset
from verdicts import verdict

from turnsim.adapters import PRESETS, CostModel, cost_of_turn
from turnsim.config import ScenarioConfig
from turnsim.events import EventLoop
from turnsim.harness import SCENARIOS, load_scenario, parse_trace, run_scenario
from turnsim.hearing import SignalKind, VadConfig, detect
from turnsim.orchestrator import ConcurrencyGate, Orchestrator, TurnRequest, build_tiers
from turnsim.repair import PhraseSet, RepairConfig, correction_score, normalized_wer, repair_transcript
from turnsim.timebase import to_ticks


def preset_ticks(*names):
    return sum(to_ticks(PRESETS[n].latency.ms) for n in names)


def delays_by_tier(pipelines):
    trace, cfg = load_scenario("table1")
    out = {}
    for p in pipelines:
        (turn,) = run_scenario(trace, cfg.with_overrides(pipeline=p)).turns
        out[turn.tier] = turn
    return out


def test_01_table1_tiers():
    turns = delays_by_tier(["fluid", "precise", "reasoning", "deep-reasoning"])
    expected = {
        "Fluid": (preset_ticks("typhoon", "flash-lite-repair", "flash", "tts-default"), 26387, (2000, 3000)),
        "Precise": (preset_ticks("google-stt-v1", "flash", "tts-default"), 40558, (3000, 5000)),
        "Reasoning": (preset_ticks("typhoon", "flash-lite-repair", "gpt5", "tts-default"), 67542, (5000, 7000)),
        "DeepReasoning": (preset_ticks("google-stt-v1", "gpt5", "tts-default"), 81713, (8000, 9000)),
    }
    ok, parts = True, []
    for tier, (summed, hand, (lo, hi)) in expected.items():
        t = turns[tier]
        got = to_ticks(t.turn_delay_ms)
        good = got == summed == hand and lo <= t.turn_delay_ms <= hi
        good &= t.queue_wait_ms == t.retrieval_ms == t.context_fetch_ms == 0
        ok &= good
        parts.append(f"{tier}={t.turn_delay_ms}")
    verdict(1, "tier latency reproduction, exact", ok, ", ".join(parts))


def test_02_hybrid_sub_pipeline():
    fluid = delays_by_tier(["fluid"])["Fluid"]
    hybrid = Fraction(to_ticks(fluid.asr_ms) + to_ticks(fluid.repair_ms), 10)
    ok = hybrid == Fraction(10401, 10) and abs(hybrid - 1040) <= Fraction(1, 2)
    ok &= hybrid < Fraction(1, 2) * Fraction(24572, 10)
    verdict(2, "fast ASR + repair vs precise ASR", ok, f"{float(hybrid)} ms vs half of 2457.2 = 1228.6 ms")


def test_03_cost_table():
    model = CostModel()
    costs = [cost_of_turn(t, model) for t in ("Fluid", "Precise", "Reasoning", "RealtimeBenchmark")]
    ratio = costs[3] / costs[0]
    ok = costs == [Decimal("0.0010"), Decimal("0.0023"), Decimal("0.0046"), Decimal("0.0154")]
    ok &= ratio == Decimal("15.4") and ratio >= 15
    tiers = build_tiers()
    ok &= all(tiers[t].cost_per_turn_usd == cost_of_turn(t) for t in tiers)
    verdict(3, "per-turn cost table", ok, f"{[str(c) for c in costs]}, ratio {ratio}")


def test_04_repair_rigidity():
    trace, cfg = load_scenario("repair_rigidity")
    noticed = next(e.t_ms for e in trace if e.kind == "barge_in")
    out = {}
    for mode in ("half", "full"):
        report = run_scenario(trace, cfg.with_overrides(mode=mode, interrupt_latency_ms=50.0))
        wrong, correction = report.turns
        out[mode] = (wrong, correction, correction.playback_start_ms - noticed)
    wrong, correction, half = out["half"]
    _, _, full = out["full"]
    ok = wrong.playback_end_ms - wrong.playback_start_ms == 10000 and correction.turn_delay_ms == 2000
    ok &= half >= 12000 and full <= 3500 and half >= 3 * full
    ok &= out["full"][0].halted and not wrong.halted
    verdict(4, "half-duplex repair rigidity", ok, f"half {half / 1000:.1f} s, full {full / 1000:.1f} s, x{half / full:.2f}")


def filler_run(d_ms):
    zero = {"latency": {"ms": 0}}
    cfg = ScenarioConfig.from_dict(
        {
            "pipeline": "precise",
            "profiles": {"google-stt-v1": zero, "tts-default": zero, "flash": {"latency": {"ms": d_ms}}},
        }
    )
    trace = parse_trace(['{"t_ms": 0, "session": "s", "kind": "utterance", "text": "hi there", "duration_ms": 700}'])
    return run_scenario(trace, cfg)


def test_05_filler_property():
    rng = random.Random(5)
    durations = [0, 1, 2999.9, 3000, 3000.1, 4500, 8171.3] + [round(rng.uniform(0, 10000), 1) for _ in range(200)]
    bad = []
    for d in durations:
        report = filler_run(d)
        (turn,) = report.turns
        kinds = [a["kind"] for a in report.actions]
        emitted = "EmitFiller" in kinds
        if turn.turn_delay_ms != d or emitted != (d >= 3000) or turn.filler_emitted != emitted:
            bad.append(d)
        elif emitted and not (kinds.index("EmitFiller") < kinds.index("StartPlayback")
                              and turn.filler_at_ms <= turn.playback_start_ms):
            bad.append(d)
    verdict(5, "filler iff processing >= 3000 ms, before first audio", not bad,
            f"{len(durations)} durations, violations {bad[:5]}")


def test_06_cancel_on_speech():
    trace, cfg = load_scenario("cancel_on_speech")
    original, restarted = run_scenario(trace, cfg).turns
    baseline_trace = [e for e in trace if e.kind != "barge_in"]
    (baseline,) = run_scenario(baseline_trace, cfg).turns
    barge = next(e.t_ms for e in trace if e.kind == "barge_in")
    ok = original.canceled and original.playback_start_ms is None and original.tier == "DeepReasoning"
    ok &= barge - original.turn_end_ms == 3500 and baseline.turn_delay_ms == 8171.3
    ok &= restarted.playback_start_ms > baseline.playback_start_ms
    ok &= restarted.playback_end_ms > baseline.playback_end_ms
    verdict(6, "cancel-on-speech restart loop", ok,
            f"restart audio at {restarted.playback_start_ms} ms vs baseline {baseline.playback_start_ms} ms")


def test_07_vad_properties():
    failures = [(s, msg) for s in range(1000) for msg in check_vad(s)]
    raw = VadConfig(alpha=1.0, start_frames=3, hangover_ms=600, frame_period_ms=20)
    p = raw.frame_period
    hand = [
        detect(frames_of([0.0] * 300, raw), raw) == [],
        [(s.kind, s.t) for s in detect(frames_of([1.0] * 10, raw), raw)] == [(SignalKind.TURN_START, 2 * p)],
        [s.kind for s in detect(frames_of([1.0] * 5 + [0.1] * 29 + [1.0] * 5, raw), raw)] == [SignalKind.TURN_START],
        [(s.kind, s.t) for s in detect(frames_of([1.0] * 5 + [0.1] * 40, raw), raw)]
        == [(SignalKind.TURN_START, 2 * p), (SignalKind.TURN_END, 4 * p + raw.hangover)],
    ]
    verdict(7, "VAD property suite", not failures and all(hand),
            f"1000 seeds, {len(failures)} violations, hand examples {sum(hand)}/4")


def test_08_aggregator_properties():
    failures = [(s, msg) for s in range(1000) for msg in check_aggregator(s)]
    verdict(8, "aggregator property suite", not failures, f"1000 seeds, {len(failures)} violations {failures[:3]}")


def test_09_repair_and_wer():
    seqs = all_sequences("abc", 6)
    by_len = {}
    for s in seqs:
        by_len.setdefault(len(s), []).append(s)
    pairs = mismatches = 0
    for left in by_len.values():
        joined_left = [" ".join(a) for a in left]
        for right in by_len.values():
            table = batch_edit_distances(left, right)
            joined_right = [" ".join(b) for b in right]
            for i, a in enumerate(joined_left):
                denom = max(1, len(left[i]))
                row = table[i]
                for j, b in enumerate(joined_right):
                    pairs += 1
                    if normalized_wer(a, b) != Fraction(int(row[j]), denom):
                        mismatches += 1

    cfg = RepairConfig()
    examples = [
        ([("Azure", ["a sure"])], "deploy on a sure", "deploy on Azure"),
        ([("AWS", ["a double u s"])], "move it to a double u s today", "move it to AWS today"),
        ([("PostgreSQL", ["post gress"]), ("SQL", ["gress"])], "post gress", "PostgreSQL"),
    ]
    examples_ok = all(
        repair_transcript(text, PhraseSet.from_records([{"canonical": c, "variants": v} for c, v in entries]), cfg).corrected
        == repair_oracle(text, entries, cfg.max_norm_edit_distance, cfg.max_window_tokens)
        == want
        for entries, text, want in examples
    )

    items, _ = roundtrip_testset(seed=2024, n=50)
    score = correction_score(items, PhraseSet.from_records(ROUNDTRIP_PHRASES), RepairConfig(max_norm_edit_distance=0.0))
    ok = pairs == 1093 ** 2 and mismatches == 0 and examples_ok and score == 1
    verdict(9, "WER oracle, repair oracle, corruption round trip", ok,
            f"{pairs} WER pairs, {mismatches} mismatches, round-trip score {score} on {len(items)} items")


def test_10_gate():
    # k simultaneous identical turns through the full stack, capacity 1.
    cfg = ScenarioConfig.from_dict({"pipeline": "fluid", "gate": {"capacity": 1}})
    k = 6
    lines = [
        f'{{"t_ms": 0, "session": "s{i}", "kind": "utterance", "text": "same question", "duration_ms": 500}}'
        for i in range(k)
    ]
    turns = run_scenario(parse_trace(lines), cfg).turns
    service = to_ticks(2638.7)
    waits = sorted(to_ticks(t.queue_wait_ms) for t in turns)
    ok = waits == [i * service for i in range(k)]

    starved = 0
    tiers = build_tiers()
    for seed in range(100):
        rng = random.Random(seed)
        loop = EventLoop()
        orch = Orchestrator(loop, ConcurrencyGate(rng.randint(1, 3)))
        submitted = []
        for i in range(rng.randint(1, 12)):
            tier = tiers[rng.choice(["Fluid", "Precise", "Reasoning", "DeepReasoning"])]
            at = to_ticks(round(rng.uniform(0, 20000), 1))

            def submit(i=i, tier=tier):
                req = TurnRequest(f"u{i}", "status of the cluster", loop.now, f"u{i}#0")
                submitted.append(req.request_id)
                orch.submit(req, tier)

            loop.schedule_at(submit, at)
        loop.run_until_idle()
        results = orch.results.values()
        if (orch.gate.admissions != submitted or orch.gate.peak > orch.gate.capacity
                or not all("first_audio" in r.stamps for r in results)):
            starved += 1
    ok &= starved == 0
    verdict(10, "gate waits 0, T, 2T and FIFO without starvation", ok,
            f"waits {[w / 10 for w in waits]} ms, {starved}/100 bad schedules")


def test_11_determinism():
    variants = []
    for name in SCENARIOS:
        trace, cfg = load_scenario(name)
        if name == "frames":
            cfg = cfg.with_overrides(pipeline="fluid")
        for kw in ({}, {"streaming": True}, {"mode": "full"}, {"pipeline": "realtime", "seed": 9}):
            variants.append((name, trace, cfg.with_overrides(**kw)))
    differing = [n for n, trace, cfg in variants if run_scenario(trace, cfg).to_json() != run_scenario(trace, cfg).to_json()]
    verdict(11, "byte-identical reports for a fixed seed", not differing,
            f"{len(variants)} scenario variants, differing {differing}")


def test_12_routing():
    trace, cfg = load_scenario("routing")
    tiers = {t.session: t.tier for t in run_scenario(trace, cfg).turns}
    texts = {e.session: e.text for e in trace}
    ok = cfg.pipeline == "route" and tiers == {"caller-a": "Fluid", "caller-b": "Precise"}
    ok &= texts["caller-a"] == "Hello"
    verdict(12, "hybrid routing end to end", ok, f"{texts['caller-a']!r} -> {tiers['caller-a']}, jargon query -> {tiers['caller-b']}")
