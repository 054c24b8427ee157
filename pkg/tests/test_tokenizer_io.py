import json

import numpy as np
import pytest

from zett.errors import DataError
from zett.tokenizer import (
    BpeModel,
    PretokenizerConfig,
    TokenizerSpec,
    UnigramModel,
    Vocabulary,
    dumps_tokenizer,
    encode_tokens,
    load_community_tokenizer,
    load_tokenizer,
    loads_tokenizer,
    save_tokenizer,
)
from zett.tokenizer.io import gpt2_byte_to_unicode


def unigram_spec():
    tokens = [b"a", b"b", b"ab", bytes([0xC3]), bytes([0xFF, 0xFE])]
    m = UnigramModel(Vocabulary(tokens), [-1.0, -2.0, -1.5, -9.25, -30.0])
    return TokenizerSpec(kind="unigram", model=m)


def bpe_spec():
    v = Vocabulary([b"a", b"b", b"ab", b"abab"])
    m = BpeModel([b"a", b"b"], [(b"a", b"b"), (b"ab", b"ab")], v)
    return TokenizerSpec(kind="bpe", model=m, pretok=PretokenizerConfig(prefix_space=True))


def test_round_trip_unigram(tmp_path):
    spec = unigram_spec()
    path = tmp_path / "tok.json"
    save_tokenizer(spec, path)
    back = load_tokenizer(path)
    assert back.kind == "unigram"
    assert back.vocab.tokens == spec.vocab.tokens
    assert np.array_equal(back.model.scores, spec.model.scores)
    assert back.pretok == spec.pretok
    assert back.byte_level == spec.byte_level


def test_round_trip_bpe(tmp_path):
    spec = bpe_spec()
    path = tmp_path / "tok.json"
    save_tokenizer(spec, path)
    back = load_tokenizer(path)
    assert back.model.merges == spec.model.merges
    assert back.model.alphabet == spec.model.alphabet
    assert back.vocab.tokens == spec.vocab.tokens
    assert back.pretok.prefix_space is True


def test_serialization_is_bit_exact():
    spec = unigram_spec()
    a = dumps_tokenizer(spec)
    b = dumps_tokenizer(loads_tokenizer(a))
    assert a == b


def test_non_utf8_tokens_use_b64():
    text = dumps_tokenizer(unigram_spec())
    obj = json.loads(text)
    raw = [e[0] for e in obj["vocab"]]
    assert {"b64": "//4="} in raw  # 0xFF 0xFE
    assert "a" in raw


def test_float_scores_survive_exactly():
    scores = [-1.3333333333333333, 1e-300, 7.1]
    m = UnigramModel(Vocabulary([b"a", b"b", b"c"]), scores)
    back = loads_tokenizer(dumps_tokenizer(TokenizerSpec(kind="unigram", model=m)))
    assert back.model.scores.tolist() == scores


def test_malformed_raises_data_error():
    with pytest.raises(DataError):
        loads_tokenizer('{"kind": "unigram"}')
    with pytest.raises(DataError):
        loads_tokenizer('{"kind": "wordpiece", "vocab": [], "merges": [], '
                        '"pretokenizer": {"rule": "gpt2m", "prefix_space": false, '
                        '"ws_run_max": 16}, "byte_level": false}')


class TestCommunityLoader:
    def test_unigram_metaspace(self, tmp_path):
        obj = {
            "model": {"type": "Unigram", "vocab": [["▁the", -2.0], ["a", -3.0], ["▁", -5.0]]},
            "pre_tokenizer": {"type": "Metaspace", "replacement": "▁", "add_prefix_space": True},
        }
        p = tmp_path / "tokenizer.json"
        p.write_text(json.dumps(obj))
        spec = load_community_tokenizer(p)
        assert spec.kind == "unigram"
        assert b" the" in spec.vocab.index
        assert spec.pretok.prefix_space is True

    def test_byte_level_bpe(self, tmp_path):
        b2u = gpt2_byte_to_unicode()
        enc = lambda bs: "".join(b2u[b] for b in bs)
        vocab_tokens = [bytes([b]) for b in range(256)] + [b" a", b"ab"]
        vocab = {enc(t): i for i, t in enumerate(vocab_tokens)}
        merges = [f"{enc(b' ')} {enc(b'a')}", f"{enc(b'a')} {enc(b'b')}"]
        obj = {
            "model": {"type": "BPE", "vocab": vocab, "merges": merges},
            "pre_tokenizer": {"type": "ByteLevel", "add_prefix_space": False},
        }
        p = tmp_path / "tokenizer.json"
        p.write_text(json.dumps(obj))
        spec = load_community_tokenizer(p)
        assert spec.kind == "bpe"
        assert spec.byte_level is True
        assert spec.model.merges == [(b" ", b"a"), (b"a", b"b")]
        assert encode_tokens("ab a", spec) == [b"ab", b" a"]

    def test_merges_as_pairs(self, tmp_path):
        obj = {
            "model": {
                "type": "BPE",
                "vocab": {"a": 0, "b": 1, "ab": 2},
                "merges": [["a", "b"]],
            },
        }
        p = tmp_path / "tokenizer.json"
        p.write_text(json.dumps(obj))
        spec = load_community_tokenizer(p)
        assert spec.model.merges == [(b"a", b"b")]

    def test_unsupported_type(self, tmp_path):
        p = tmp_path / "tokenizer.json"
        p.write_text(json.dumps({"model": {"type": "WordLevel", "vocab": {}}}))
        with pytest.raises(DataError):
            load_community_tokenizer(p)
