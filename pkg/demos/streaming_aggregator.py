"""
Streaming tokens into speakable chunks
======================================

Batch mode waits for the whole LLM response before synthesis.  Streaming hands
breath-group chunks to TTS as they form, which moves first audio forward.  The
staleness timer trades chunk size for latency.
"""

from turnsim.aggregator import ChunkPolicy, TokenEvent, stream_chunks
from turnsim.orchestrator import Document, RagConfig, RunSettings, TurnRequest, build_tiers, run_turn
from turnsim.timebase import to_ms, to_ticks

answer = ("Your cluster runs on Azure in the Southeast Asia region. Failover goes to "
          "the Australia East pair. Replication lag is under two seconds.")
rag = RagConfig(documents=(Document("cluster", answer),))
request = TurnRequest("s", "which Azure region is my cluster in", 0, "s#0")
tier = build_tiers()["Reasoning"]
policy = ChunkPolicy(min_chars=12, max_chars=80, protected_lexicon=("Azure", "Southeast Asia", "Australia East"))

for streaming in (False, True):
    result = run_turn(request, tier, RunSettings(streaming=streaming, chunk_policy=policy), rag=rag)
    print(f"streaming={streaming!s:<5} turn delay {to_ms(result.turn_delay):7.1f} ms, {len(result.chunks)} chunk(s)")
    for text in result.chunks:
        print(f"    {text!r}")

# A slow producer: tokens every 300 ms.  Shorter waits release text sooner but
# in smaller, choppier pieces.
words = "so the short answer is that it depends on the region".split()
tokens = [TokenEvent(to_ticks(300 * i), w + " ") for i, w in enumerate(words)]
for wait in (None, 1000, 400, 100):
    chunks = stream_chunks(tokens, ChunkPolicy(max_buffer_wait_ms=wait), end_t=to_ticks(300 * len(words)))
    first = to_ms(chunks[0].t_emitted)
    print(f"max wait {wait!s:>5} ms: first chunk at {first:6.1f} ms, sizes {[len(c.text) for c in chunks]}")
