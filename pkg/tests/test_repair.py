import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import all_sequences, batch_edit_distances, edit_distance_recursive, repair_oracle
from props import ROUNDTRIP_PHRASES, roundtrip_testset

from turnsim.repair import (
    PhraseSet,
    RepairConfig,
    correction_score,
    edit_distance,
    normalized_wer,
    repair_transcript,
)

AZURE = PhraseSet.from_records([{"canonical": "Azure", "variants": ["a sure"]}])
AWS = PhraseSet.from_records([{"canonical": "AWS", "variants": ["a double u s"]}])
OVERLAP = PhraseSet.from_records(
    [
        {"canonical": "PostgreSQL", "variants": ["post gress"]},
        {"canonical": "SQL", "variants": ["gress"]},
    ]
)


def entries(ps):
    return [(e.canonical, list(e.variants)) for e in ps.entries]


def test_empty_phrase_set_is_identity():
    text = "  keep   this, exactly.  "
    result = repair_transcript(text, PhraseSet())
    assert result.corrected == text and result.substitutions == []
    assert result.latency_ms == 623.0


@pytest.mark.parametrize(
    "ps, text, expected",
    [
        (AZURE, "deploy on a sure", "deploy on Azure"),
        (AWS, "move it to a double u s today", "move it to AWS today"),
        (OVERLAP, "post gress", "PostgreSQL"),
    ],
)
def test_examples_match_the_oracle(ps, text, expected):
    cfg = RepairConfig()
    result = repair_transcript(text, ps, cfg)
    assert result.corrected == expected
    assert repair_oracle(text, entries(ps), cfg.max_norm_edit_distance, cfg.max_window_tokens) == expected
    assert len(result.substitutions) == 1


def test_substitution_records_token_span():
    sub = repair_transcript("move it to a double u s today", AWS).substitutions[0]
    assert (sub.start, sub.stop, sub.variant, sub.canonical) == (3, 7, "a double u s", "AWS")


def test_tie_break_by_distance_then_order():
    ps = PhraseSet.from_records(
        [
            {"canonical": "First", "variants": ["abcdx"]},
            {"canonical": "Second", "variants": ["abcde"]},
            {"canonical": "Third", "variants": ["abcdy"]},
        ]
    )
    assert repair_transcript("abcde", ps).corrected == "Second"  # distance 0 beats 1/5
    assert repair_transcript("abcdz", ps).corrected == "First"  # equal distance: phrase-set order


def test_edge_punctuation_and_spacing_preserved():
    assert repair_transcript("Deploy on a sure.", AZURE).corrected == "Deploy on Azure."
    assert repair_transcript("(a  sure) ok", AZURE).corrected == "(Azure) ok"


def test_fuzzy_match_within_threshold():
    assert repair_transcript("deploy on a shure", AZURE).corrected == "deploy on Azure"
    assert repair_transcript("deploy on a shore", AZURE).corrected == "deploy on a shore"
    strict = RepairConfig(max_norm_edit_distance=0.0)
    assert repair_transcript("deploy on a shure", AZURE, strict).corrected == "deploy on a shure"


def test_window_must_cover_longest_variant():
    with pytest.raises(ValueError):
        repair_transcript("x", AWS, RepairConfig(max_window_tokens=3))


def test_phrase_set_validation():
    with pytest.raises(ValueError):
        PhraseSet.from_records([{"canonical": "A", "variants": ["a"]}, {"canonical": "A", "variants": ["b"]}])
    with pytest.raises(ValueError):
        PhraseSet.from_records([{"canonical": "A", "variants": ["A"]}])
    with pytest.raises(ValueError):
        PhraseSet.from_records([{"canonical": "A", "variants": [" "]}])
    records = [{"canonical": "A", "variants": ["ay", "eh"]}]
    assert PhraseSet.from_records(records).to_records() == records
    assert PhraseSet.from_records({"A": ["ay", "eh"]}).to_records() == records


VOCAB = ["post", "gress", "a", "sure", "shure", "double", "u", "s", "deploy", "on", "to", "the", "qx"]
FUZZY = PhraseSet.from_records(
    [
        {"canonical": "PostgreSQL", "variants": ["post gress", "post gres"]},
        {"canonical": "SQL", "variants": ["gress"]},
        {"canonical": "Azure", "variants": ["a sure"]},
        {"canonical": "AWS", "variants": ["a double u s"]},
        {"canonical": "Dub", "variants": ["double"]},
    ]
)


@pytest.mark.parametrize("threshold", [0.0, 0.2, 0.35])
def test_random_transcripts_match_the_oracle(threshold):
    rng = random.Random(threshold)
    cfg = RepairConfig(max_norm_edit_distance=threshold)
    for _ in range(300):
        text = " ".join(rng.choice(VOCAB) for _ in range(rng.randint(0, 10)))
        got = repair_transcript(text, FUZZY, cfg).corrected
        assert " ".join(got.split()) == repair_oracle(text, entries(FUZZY), threshold, cfg.max_window_tokens)


@given(st.lists(st.sampled_from(VOCAB), max_size=12))
def test_idempotent_local_and_deterministic(words):
    text = " ".join(words)
    once = repair_transcript(text, FUZZY)
    assert repair_transcript(once.corrected, FUZZY).corrected == once.corrected
    assert repair_transcript(text, FUZZY) == once
    spans = once.substitutions
    assert all(a.stop <= b.start for a, b in zip(spans, spans[1:]))
    covered = {i for s in spans for i in range(s.start, s.stop)}
    untouched = [w for i, w in enumerate(words) if i not in covered]
    out = once.corrected.split()
    for w in untouched:
        assert w in out


def test_repair_never_worsens_single_variant_items():
    items, _ = roundtrip_testset(seed=3, n=50)
    ps = PhraseSet.from_records(ROUNDTRIP_PHRASES)
    for corrupted, gold in items:
        repaired = repair_transcript(corrupted, ps).corrected
        assert normalized_wer(gold, repaired) <= normalized_wer(gold, corrupted)


def test_wer_examples():
    assert normalized_wer("Hello, World!", "hello world") == 0
    assert normalized_wer("a b c", "a x c") == Fraction(1, 3)
    assert normalized_wer("a", "a b c") == 2
    assert normalized_wer("", "") == 0
    assert normalized_wer("", "a b") == 2


def test_wer_symmetry_only_before_normalization():
    ref, hyp = "a b c d", "a"
    assert edit_distance(ref.split(), hyp.split()) == edit_distance(hyp.split(), ref.split())
    assert normalized_wer(ref, hyp) == Fraction(3, 4)
    assert normalized_wer(hyp, ref) == 3


def test_wer_matches_oracle_up_to_length_4():
    seqs = all_sequences("abc", 4)
    by_len = {}
    for s in seqs:
        by_len.setdefault(len(s), []).append(s)
    for left in by_len.values():
        for right in by_len.values():
            table = batch_edit_distances(left, right)
            for i, a in enumerate(left):
                for j, b in enumerate(right):
                    expected = Fraction(int(table[i, j]), max(1, len(a)))
                    assert normalized_wer(" ".join(a), " ".join(b)) == expected


def test_batch_oracle_agrees_with_recursive_definition():
    seqs = all_sequences("ab", 4)
    for a in seqs:
        row = batch_edit_distances([a], seqs[-16:])[0]
        for b, d in zip(seqs[-16:], row):
            assert d == edit_distance_recursive(a, b)


def test_correction_score():
    assert correction_score([("a b", "a b"), ("c", "C.")], PhraseSet()) == 1
    items = [
        ("deploy on a sure", "deploy on Azure"),
        ("run on a sure today", "run on Azure today"),
        ("hello a sure", "hello Azure"),
        ("deploy on gcp", "deploy on Azure"),
    ]
    assert correction_score(items, AZURE) == Fraction(3, 4)
    with pytest.raises(ValueError):
        correction_score([], AZURE)


def test_corruption_repair_round_trip():
    items, _ = roundtrip_testset(seed=11, n=50)
    ps = PhraseSet.from_records(ROUNDTRIP_PHRASES)
    exact = RepairConfig(max_norm_edit_distance=0.0)
    assert all(repair_transcript(c, ps, exact).corrected == g for c, g in items)
    assert correction_score(items, ps, exact) == 1


@given(st.text(alphabet="abc", max_size=9), st.text(alphabet="abc", max_size=9))
def test_edit_distance_matches_recursive_definition(a, b):
    assert edit_distance(a, b) == edit_distance_recursive(tuple(a), tuple(b))
    assert edit_distance(list(a), list(b)) == edit_distance(b, a)
