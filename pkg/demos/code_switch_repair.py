"""
Restoring code-switched jargon
==============================

A fast recognizer turns English technical terms into phonetic spellings.  The
repair pass maps them back using a phrase set, and WER shows the gain.
"""

import numpy as np

from turnsim.adapters import CorruptionModel, corrupt
from turnsim.repair import PhraseSet, normalized_wer, repair_transcript

phrases = PhraseSet.from_records({
    "Azure": ["a sure", "ash sure"],
    "AWS": ["a double u s"],
    "PostgreSQL": ["post gress", "post gres q l"],
    "Kubernetes": ["cooper net ease"],
})
sentences = [
    "move the PostgreSQL replica from AWS to Azure",
    "why does Kubernetes restart the pod",
    "is Azure cheaper than AWS for this",
]

rng = np.random.default_rng(4)
model = CorruptionModel(phrases, corruption_rate=1.0)
for gold in sentences:
    heard, _ = corrupt(gold, model, rng)
    fixed = repair_transcript(heard, phrases)
    print(f"gold     {gold}")
    print(f"heard    {heard}   (WER {float(normalized_wer(gold, heard)):.2f})")
    print(f"repaired {fixed.corrected}   (WER {float(normalized_wer(gold, fixed.corrected)):.2f})")
    print(f"         {[(s.variant, s.canonical) for s in fixed.substitutions]}\n")

# Fuzzy matching tolerates small spelling drift up to the configured distance.
print(repair_transcript("deploy it on a shure", phrases).corrected)
