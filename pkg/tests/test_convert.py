import numpy as np
import pytest

from zett.convert import (
    DecompositionSet,
    enumerate_decompositions,
    preservation_rate,
    to_byte_level,
    unigramify,
)
from zett.errors import EmptyCorpus
from zett.tokenizer import (
    BpeModel,
    TokenizerSpec,
    UnigramModel,
    Vocabulary,
    encode_tokens,
    segment_pretoken,
    train_bpe,
)

CORPUS = [
    "the cat sat on the mat",
    "the dog sat on the log",
    "a cat and a dog and a mat",
    "les chats aiment le thé",
    "on a mat a cat sat",
] * 4


def byte_bpe():
    return train_bpe(CORPUS, vocab_size=300, byte_level=True)


def char_bpe():
    return train_bpe(CORPUS, vocab_size=80, byte_level=False)


class TestToByteLevel:
    def test_byte_level_bpe_unchanged(self):
        t = byte_bpe()
        t2, extra = to_byte_level(t)
        assert extra == 0
        assert t2.byte_level
        assert t2.vocab.tokens == t.vocab.tokens
        assert preservation_rate(t, t2, CORPUS, n=500) == 1.0

    def test_char_vocab_with_accent(self):
        # char-level vocab containing "é": conversion adds its two UTF-8
        # bytes and one assembly merge
        v = Vocabulary(["a".encode(), "é".encode(), "aé".encode()])
        m = BpeModel(["a".encode(), "é".encode()], [("a".encode(), "é".encode())], v)
        t = TokenizerSpec("bpe", m)
        t2, extra = to_byte_level(t)
        assert t2.byte_level
        assert bytes([0xC3]) in t2.vocab.index and bytes([0xA9]) in t2.vocab.index
        assembly = [mg for mg in t2.model.merges if mg not in m.merges]
        assert (bytes([0xC3]), bytes([0xA9])) in assembly
        # 254 missing singles (a and é..no: é is 2 bytes) -> 255 singles missing? a present
        assert extra == 255  # 256 bytes minus the 1-byte symbol "a"
        assert encode_tokens("aé", t2) == ["aé".encode()]

    def test_char_level_bpe_preserves_tokenization(self):
        t = char_bpe()
        t2, extra = to_byte_level(t)
        assert extra > 0
        assert t2.byte_level
        assert preservation_rate(t, t2, CORPUS, n=2000) >= 0.99
        # converted tokenizer segments arbitrary bytes
        assert segment_pretoken(bytes([0xFF, 0x00]), t2)

    def test_unigram_conversion_and_idempotence(self):
        m = UnigramModel(Vocabulary([b"a", b"b", b"ab"]), [-1.0, -1.0, -1.5])
        t = TokenizerSpec("unigram", m)
        t2, extra = to_byte_level(t)
        assert extra == 254  # a and b already present
        assert t2.byte_level
        added = t2.model.scores[3:]
        assert np.all(added == t.model.scores.min() - 10.0)
        # added bytes never displace real tokens
        assert encode_tokens("ab", t2) == [b"ab"]
        t3, extra2 = to_byte_level(t2)
        assert extra2 == 0
        assert t3.vocab.tokens == t2.vocab.tokens

    def test_bpe_idempotent(self):
        t2, _ = to_byte_level(char_bpe())
        t3, extra = to_byte_level(t2)
        assert extra == 0


class TestPreservation:
    def test_identical_tokenizers(self):
        t = byte_bpe()
        assert preservation_rate(t, t, CORPUS, n=100) == 1.0

    def test_empty_corpus(self):
        t = byte_bpe()
        with pytest.raises(EmptyCorpus):
            preservation_rate(t, t, [], n=10)

    def test_deterministic_under_seed(self):
        a, b = byte_bpe(), char_bpe()
        r1 = preservation_rate(a, b, CORPUS, n=300, seed=7)
        r2 = preservation_rate(a, b, CORPUS, n=300, seed=7)
        assert r1 == r2


class TestEnumerate:
    def spec(self):
        m = UnigramModel(Vocabulary([b"a", b"b", b"ab"]), [-1.0, -1.0, -1.5])
        return TokenizerSpec("unigram", m)

    def test_hand_enumeration(self):
        ds = enumerate_decompositions(b"aab", self.spec(), cap=32)
        as_tokens = {tuple(self.spec().vocab.tokens[i] for i in d) for d in ds.decomps}
        assert as_tokens == {(b"a", b"a", b"b"), (b"a", b"ab")}
        assert ds.reference in ds.decomps

    def test_single(self):
        m = UnigramModel(Vocabulary([b"a"]), [-1.0])
        ds = enumerate_decompositions(b"a", TokenizerSpec("unigram", m), cap=8)
        assert ds.decomps == [(0,)]

    def test_cap_one_keeps_reference_only(self):
        ds = enumerate_decompositions(b"aab", self.spec(), cap=1)
        assert ds.decomps == [ds.reference]

    def test_kbest_kicks_in_above_cap(self):
        tokens = [b"a", b"aa", b"aaa"]
        m = UnigramModel(Vocabulary(tokens), [-1.0, -1.9, -2.7])
        t = TokenizerSpec("unigram", m)
        ds = enumerate_decompositions(b"a" * 12, t, cap=4)
        assert len(ds.decomps) == 4
        assert ds.reference in ds.decomps
        scores = []
        for d in ds.decomps:
            scores.append(sum(m.scores[i] for i in d))
        assert scores == sorted(scores, reverse=True)


class TestUnigramify:
    def test_constructed_merge_instance(self):
        # BPE {a,b,ab; merge (a,b)}: on X = {"ab","aab"} the constraints
        # reduce to s(ab) > s(a)+s(b); e.g. s(a)=s(b)=-1, s(ab)=-1.5 works
        v = Vocabulary([b"a", b"b", b"ab"])
        m = BpeModel([b"a", b"b"], [(b"a", b"b")], v)
        t = TokenizerSpec("bpe", m)
        corpus = ["ab aab"] * 3
        result, report = unigramify(t, corpus, top_n=10, backend="simplex")
        assert report.residual_loss == 0.0
        assert report.preserved == 1.0
        s = result.model.scores
        ia, ib, iab = (v.id(b"a"), v.id(b"b"), v.id(b"ab"))
        assert s[iab] > s[ia] + s[ib]
        hand = UnigramModel(v, [-1.0, -1.0, -1.5])
        for p in (b"ab", b"aab"):
            assert segment_pretoken(p, result) == segment_pretoken(
                p, TokenizerSpec("unigram", hand)
            )

    def test_already_unigram_source_is_exact(self):
        rng = np.random.default_rng(0)
        tokens = [bytes([b]) for b in b"abcd "] + [b"ab", b"cd", b"abcd", b"bc", b" ab"]
        m = UnigramModel(Vocabulary(tokens), rng.normal(-3, 1, len(tokens)))
        t = TokenizerSpec("unigram", m)
        corpus = ["abcd ab cd abab dcba bcbc abcab"] * 2
        result, report = unigramify(t, corpus, top_n=20, backend="simplex")
        assert report.residual_loss == 0.0
        assert report.preserved == 1.0
        assert report.skipped == 0

    def test_unsegmentable_pretokens_are_skipped(self):
        v = Vocabulary([b"a", b"b", b" "])
        m = BpeModel([b"a", b"b", b" "], [], v)
        t = TokenizerSpec("bpe", m)
        result, report = unigramify(t, ["aa bb qq"], top_n=10, backend="simplex")
        assert report.skipped == 1
        assert report.preserved == 1.0

    def test_byte_level_bpe_subgradient(self):
        t = byte_bpe()
        result, report = unigramify(t, CORPUS, top_n=200, backend="subgradient")
        assert result.kind == "unigram"
        assert result.byte_level
        assert report.preserved >= 0.99
        assert report.residual_loss <= 1e-6 * report.constraints

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            unigramify(byte_bpe(), [], top_n=5)
