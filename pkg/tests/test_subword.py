"""BPE learning, application, threshold splitting, and reversion tests."""

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxnmt.errors import MalformedSegmentationError
from ctxnmt.subword import (
    apply_bpe,
    apply_bpe_line,
    learn_bpe,
    load_bpe_model,
    revert_bpe,
    save_bpe_model,
    word_frequencies,
)

DATA = Path(__file__).parent / "data"


class TestLearn:
    def test_single_pair(self):
        model = learn_bpe({"aa": 5}, 1)
        assert model.merges == (("a", "a"),)

    def test_zero_merges(self):
        model = learn_bpe({"abc": 2}, 0)
        assert model.merges == ()
        assert apply_bpe(model, "ab") == ["a@@", "b"]

    def test_most_frequent_pair_wins(self):
        model = learn_bpe({"ab": 3, "abc": 2}, 1)
        assert model.merges == (("a", "b"),)

    def test_merges_exhaust(self):
        # "ab" has at most 3 merges: (a,b), (ab,</w>) ... until one symbol remains
        model = learn_bpe({"ab": 1}, 100)
        assert len(model.merges) == 2

    def test_lexicographic_tie_break(self):
        # "ba" and "bc" both give pairs with count 1 after the (b,*) stage;
        # pairs (b,a) and (b,c) tie at 1, (b,a) must win
        model = learn_bpe({"ba": 1, "bc": 1}, 1)
        assert model.merges[0] == ("b", "a")

    def test_subword_vocab_counts(self):
        model = learn_bpe({"ab": 3, "ac": 2}, 0)
        assert model.subword_vocab == {"a@@": 5, "b": 3, "c": 2}


class TestApply:
    def test_learned_merge_applies(self):
        model = learn_bpe({"aa": 5}, 1)
        assert apply_bpe(model, "aa") == ["aa"]

    def test_character_fallback(self):
        model = learn_bpe({"xy": 1}, 0)
        assert apply_bpe(model, "ab") == ["a@@", "b"]

    def test_threshold_dominates(self):
        model = learn_bpe({"abab": 4}, 10)
        out = apply_bpe(model, "abab", vocab_threshold=10 ** 6)
        assert out == ["a@@", "b@@", "a@@", "b"]

    def test_threshold_zero_keeps_merges(self):
        model = learn_bpe({"abab": 4}, 10)
        assert apply_bpe(model, "abab", vocab_threshold=0) == ["abab"]

    def test_threshold_splits_rare(self):
        # "ab" frequent, "abc" rare: with a threshold above 2 the merged
        # "abc" form must fall back to pieces that meet the threshold
        model = learn_bpe({"ab": 50, "abc": 2}, 10)
        out = apply_bpe(model, "abc", vocab_threshold=10)
        for piece in out:
            count = model.subword_vocab.get(piece, 0)
            assert count >= 10 or len(piece.replace("@@", "")) == 1
        assert revert_bpe(out) == ["abc"]

    def test_protected_tokens(self):
        model = learn_bpe({"ab": 2}, 3)
        assert apply_bpe(model, "_BREAK_") == ["_BREAK_"]
        assert apply_bpe(model, "cc_siehst") == ["cc_siehst"]

    def test_single_char_token(self):
        model = learn_bpe({"a": 1}, 0)
        assert apply_bpe(model, "a") == ["a"]


class TestRevert:
    def test_join(self):
        assert revert_bpe(["a@@", "b"]) == ["ab"]

    def test_no_markers(self):
        assert revert_bpe(["look", ",", "Bob", "!"]) == ["look", ",", "Bob", "!"]

    def test_dangling_marker(self):
        with pytest.raises(MalformedSegmentationError):
            revert_bpe(["a@@"])

    def test_empty(self):
        assert revert_bpe([]) == []


token_st = st.text(alphabet="abcdefgh-.", min_size=1, max_size=8)
corpus_words_st = st.dictionaries(token_st, st.integers(min_value=1, max_value=40), min_size=1, max_size=20)


@settings(max_examples=120, deadline=None)
@given(
    words=corpus_words_st,
    num_merges=st.integers(min_value=0, max_value=40),
    threshold=st.integers(min_value=0, max_value=30),
    tokens=st.lists(token_st, min_size=0, max_size=12),
)
def test_round_trip_property(words, num_merges, threshold, tokens):
    model = learn_bpe(words, num_merges)
    segmented = apply_bpe_line(model, tokens, threshold)
    assert revert_bpe(segmented) == list(tokens)


@settings(max_examples=80, deadline=None)
@given(
    words=corpus_words_st,
    num_merges=st.integers(min_value=0, max_value=30),
    token=token_st,
    t1=st.integers(min_value=0, max_value=20),
    t2=st.integers(min_value=0, max_value=20),
)
def test_threshold_monotonicity(words, num_merges, token, t1, t2):
    lo, hi = min(t1, t2), max(t1, t2)
    model = learn_bpe(words, num_merges)
    assert len(apply_bpe(model, token, hi)) >= len(apply_bpe(model, token, lo))


@settings(max_examples=60, deadline=None)
@given(words=corpus_words_st, num_merges=st.integers(min_value=0, max_value=30))
def test_learn_deterministic(words, num_merges):
    assert learn_bpe(words, num_merges) == learn_bpe(words, num_merges)


class TestModelFile:
    def test_round_trip(self, tmp_path):
        model = learn_bpe({"look": 5, "looked": 3, "book": 4}, 12)
        path = tmp_path / "codes.bpe"
        save_bpe_model(model, path)
        again = load_bpe_model(path)
        assert again.merges == model.merges
        assert again.subword_vocab == model.subword_vocab
        assert again.eow_marker == model.eow_marker
        assert again.join_marker == model.join_marker

    def test_golden_merges(self):
        # frozen merge list: regression against the committed learning corpus
        lines = [l.split() for l in (DATA / "bpe_corpus.txt").read_text().splitlines()]
        model = learn_bpe(word_frequencies(lines), 40)
        golden = load_bpe_model(DATA / "golden_bpe.model")
        assert model.merges == golden.merges
        assert model.subword_vocab == golden.subword_vocab


def test_word_frequencies_skips_protected():
    freqs = word_frequencies([["a", "_BREAK_", "cc_x", "a"]])
    assert freqs == {"a": 2}
