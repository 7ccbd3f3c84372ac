import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zingel.errors import EmptyCorpusError
from zingel.text import (
    PAD_INDEX,
    TAG_TOKENS,
    UNK_INDEX,
    Vocabulary,
    encode,
    normalize,
    tokenize,
)

from conftest import load_golden_fixtures

TWEETISH = st.text(
    alphabet=st.sampled_from(
        list("abcdefghijklmnoprstuwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789")
        + list(" #@:;()/!?.<>-_'\"3www.http")
    ),
    max_size=60,
)


class TestNormalize:
    def test_url_fixture(self):
        assert normalize("Check http://t.co/abc") == "check <url>"

    def test_empty_input(self):
        assert normalize("") == ""

    def test_composite_fixture(self):
        assert normalize("hello @jane #WOW!!!") == "hello <user> <hashtag> wow <allcaps> ! <repeat>"

    @pytest.mark.parametrize("raw,expected", load_golden_fixtures())
    def test_golden_fixtures(self, raw, expected):
        assert normalize(raw) == expected

    def test_no_urls_or_mentions_survive(self):
        out = normalize("go http://x.io/y and email @sam or https://??? now")
        assert "http" not in out.replace("<url>", "")
        assert all(not tok.startswith("@") or tok == "@" for tok in out.split())

    @given(TWEETISH)
    @settings(max_examples=300, deadline=None)
    def test_idempotent(self, raw):
        once = normalize(raw)
        assert normalize(once) == once

    @given(TWEETISH)
    @settings(deadline=None)
    def test_tokens_have_no_internal_whitespace(self, raw):
        for tok in tokenize(normalize(raw)):
            assert tok
            assert not any(ch.isspace() for ch in tok)


class TestTokenize:
    def test_keeps_tags_whole(self):
        assert tokenize("check <url>") == ["check", "<url>"]

    def test_empty(self):
        assert tokenize("") == []

    def test_whitespace_separated_passthrough(self):
        assert tokenize("a , b") == ["a", ",", "b"]

    def test_splits_glued_punctuation(self):
        assert tokenize("wait,what?") == ["wait", ",", "what", "?"]

    def test_keeps_contractions(self):
        assert tokenize("don't stop") == ["don't", "stop"]


class TestVocabulary:
    def test_reserved_slots(self):
        vocab = Vocabulary.build([["the"]], {"the"})
        assert vocab.token_at(PAD_INDEX) == "<pad>"
        assert vocab.token_at(UNK_INDEX) == "<unk>"

    def test_keeps_only_pretrained_tokens(self):
        vocab = Vocabulary.build([["the", "zzzqqq"]], {"the"})
        assert "the" in vocab
        assert "zzzqqq" not in vocab

    def test_tag_tokens_always_present(self):
        vocab = Vocabulary.build([["plainword"]], set())
        for tag in TAG_TOKENS:
            assert tag in vocab
        assert len(vocab) == 2 + len(TAG_TOKENS)

    def test_deterministic_indices(self):
        corpus = [["b", "a"], ["c", "a"]]
        v1 = Vocabulary.build(corpus, {"a", "b", "c"})
        v2 = Vocabulary.build(list(corpus), {"a", "b", "c"})
        assert v1 == v2
        assert v1.tokens == v2.tokens

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyCorpusError):
            Vocabulary.build([[], []], {"the"})

    def test_bijective_indexing(self):
        vocab = Vocabulary.build([["a", "b"]], {"a", "b"})
        for i in range(len(vocab)):
            assert vocab.index_of(vocab.token_at(i)) == i


class TestEncode:
    @pytest.fixture
    def vocab(self):
        return Vocabulary.build([["a", "b", "c", "d"]], {"a", "b", "c", "d"})

    def test_pads_short_sequences(self, vocab):
        enc = encode(["a"], vocab, 3)
        assert enc.indices[0] == vocab.index_of("a")
        assert list(enc.indices[1:]) == [PAD_INDEX, PAD_INDEX]
        assert list(enc.mask) == [True, False, False]
        assert enc.true_length == 1

    def test_truncates_tail(self, vocab):
        enc = encode(["a", "b", "c", "d"], vocab, 2)
        assert list(enc.indices) == [vocab.index_of("a"), vocab.index_of("b")]
        assert list(enc.mask) == [True, True]

    def test_oov_maps_to_unk(self, vocab):
        enc = encode(["zzzqqq"], vocab, 2)
        assert enc.indices[0] == UNK_INDEX
        assert enc.indices[1] == PAD_INDEX

    def test_requires_positive_length(self, vocab):
        with pytest.raises(ValueError):
            encode(["a"], vocab, 0)

    @given(st.lists(st.sampled_from(["a", "b", "c", "zzz"]), max_size=12), st.integers(1, 8))
    @settings(deadline=None)
    def test_mask_sum_and_index_bounds(self, tokens, n):
        vocab = Vocabulary.build([["a", "b", "c"]], {"a", "b", "c"})
        enc = encode(tokens, vocab, n)
        assert enc.mask.sum() == min(len(tokens), n)
        assert (enc.indices < len(vocab)).all()
        assert (enc.indices >= 0).all()
        # padding exactly where the mask is off
        assert ((enc.indices == PAD_INDEX) == ~enc.mask).all()

    def test_encoding_is_repeatable(self, vocab):
        a = encode(["a", "b"], vocab, 4)
        b = encode(["a", "b"], vocab, 4)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.mask, b.mask)
