"""Tokenizer data model, pretokenization, segmentation, file formats."""

from .io import (
    dumps_tokenizer,
    load_community_tokenizer,
    load_tokenizer,
    loads_tokenizer,
    save_tokenizer,
)
from .pretokenize import normalize, pretokenize, pretokenize_str
from .segment import (
    bpe_encode,
    decode,
    encode,
    encode_tokens,
    segment_pretoken,
    unigram_segment,
    unigram_segment_brute,
)
from .train import count_pretokens, train_bpe
from .types import BpeModel, PretokenizerConfig, TokenizerSpec, UnigramModel, Vocabulary

__all__ = [
    "BpeModel",
    "PretokenizerConfig",
    "TokenizerSpec",
    "UnigramModel",
    "Vocabulary",
    "bpe_encode",
    "count_pretokens",
    "decode",
    "dumps_tokenizer",
    "encode",
    "encode_tokens",
    "load_community_tokenizer",
    "load_tokenizer",
    "loads_tokenizer",
    "normalize",
    "pretokenize",
    "pretokenize_str",
    "save_tokenizer",
    "segment_pretoken",
    "train_bpe",
    "unigram_segment",
    "unigram_segment_brute",
]
