"""Tokenizer file formats.

Native schema (canonical, bit-exact: saving the same spec twice yields
identical bytes):

    {"kind": "unigram"|"bpe",
     "vocab": [[token, score], ...]      # score only for unigram
     "merges": [[l, r], ...],            # bpe only, rank order
     "pretokenizer": {"rule": "gpt2m", "prefix_space": bool, "ws_run_max": int},
     "byte_level": bool}

Tokens are UTF-8 strings, or {"b64": "..."} when the bytes are not valid
UTF-8. The BPE alphabet is not stored: on load it is recovered as the
vocab tokens that are not the result of any merge (models where a merge
result is also an alphabet symbol are normalized by this round trip).

`load_community_tokenizer` additionally accepts the common community
tokenizer-file layout (a top-level "model" object of type "Unigram" or
"BPE") and maps it into the native schema, undoing the byte-to-unicode
remapping of byte-level BPE files and the metaspace convention of
sentencepiece-style unigram files.
"""

import base64
import json

from ..errors import DataError
from .types import BpeModel, PretokenizerConfig, TokenizerSpec, UnigramModel, Vocabulary


def _token_to_json(t: bytes):
    try:
        s = t.decode("utf-8")
    except UnicodeDecodeError:
        return {"b64": base64.b64encode(t).decode("ascii")}
    if s.encode("utf-8") != t:  # surrogate oddities
        return {"b64": base64.b64encode(t).decode("ascii")}
    return s


def _token_from_json(v) -> bytes:
    if isinstance(v, str):
        return v.encode("utf-8")
    if isinstance(v, dict) and set(v) == {"b64"}:
        return base64.b64decode(v["b64"])
    raise DataError(f"bad token entry {v!r}")


def dumps_tokenizer(spec: TokenizerSpec) -> str:
    if spec.kind == "unigram":
        vocab = [[_token_to_json(t), float(s)] for t, s in zip(spec.vocab.tokens, spec.model.scores)]
        merges = []
    else:
        vocab = [[_token_to_json(t)] for t in spec.vocab.tokens]
        merges = [[_token_to_json(l), _token_to_json(r)] for l, r in spec.model.merges]
    obj = {
        "kind": spec.kind,
        "vocab": vocab,
        "merges": merges,
        "pretokenizer": {
            "rule": spec.pretok.rule,
            "prefix_space": spec.pretok.prefix_space,
            "ws_run_max": spec.pretok.whitespace_run_max,
        },
        "byte_level": spec.byte_level,
    }
    return json.dumps(obj, ensure_ascii=True, separators=(",", ":"))


def save_tokenizer(spec: TokenizerSpec, path) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write(dumps_tokenizer(spec))


def loads_tokenizer(text: str) -> TokenizerSpec:
    obj = json.loads(text)
    try:
        kind = obj["kind"]
        pre = obj["pretokenizer"]
        pretok = PretokenizerConfig(
            rule=pre["rule"],
            prefix_space=bool(pre["prefix_space"]),
            whitespace_run_max=int(pre["ws_run_max"]),
        )
        byte_level = bool(obj["byte_level"])
        if kind == "unigram":
            tokens = [_token_from_json(e[0]) for e in obj["vocab"]]
            scores = [float(e[1]) for e in obj["vocab"]]
            model = UnigramModel(Vocabulary(tokens), scores)
        elif kind == "bpe":
            tokens = [_token_from_json(e[0]) for e in obj["vocab"]]
            merges = [(_token_from_json(l), _token_from_json(r)) for l, r in obj["merges"]]
            vocab = Vocabulary(tokens)
            results = {l + r for l, r in merges}
            alphabet = [t for t in tokens if t not in results]
            model = BpeModel(alphabet, merges, vocab)
        else:
            raise DataError(f"unknown kind {kind!r}")
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise DataError(f"malformed tokenizer file: {exc}") from exc
    return TokenizerSpec(kind=kind, model=model, pretok=pretok, byte_level=byte_level)


def load_tokenizer(path) -> TokenizerSpec:
    with open(path, encoding="utf-8") as f:
        return loads_tokenizer(f.read())


def gpt2_byte_to_unicode() -> dict[int, str]:
    """The gpt2 printable-codepoint alias for each byte value."""
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, map(chr, cs)))


def _decode_bytelevel_token(s: str, inv: dict[str, int]) -> bytes:
    try:
        return bytes(inv[ch] for ch in s)
    except KeyError as exc:
        raise DataError(f"token {s!r} outside byte-level alphabet") from exc


def _find_pretok_types(pre) -> list[dict]:
    if pre is None:
        return []
    if pre.get("type") == "Sequence":
        out = []
        for p in pre.get("pretokenizers", []):
            out.extend(_find_pretok_types(p))
        return out
    return [pre]


def load_community_tokenizer(path, prefix_space=None) -> TokenizerSpec:
    """Import a community tokenizer.json (Unigram or BPE model) as a spec."""
    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    model = obj.get("model")
    if not isinstance(model, dict):
        raise DataError("no model object in tokenizer file")
    mtype = model.get("type")
    pres = _find_pretok_types(obj.get("pre_tokenizer"))
    byte_level_pre = any(p.get("type") == "ByteLevel" for p in pres)
    if prefix_space is None:
        prefix_space = any(
            p.get("add_prefix_space", False) for p in pres if p.get("type") in ("ByteLevel", "Metaspace")
        )
    pretok = PretokenizerConfig(prefix_space=bool(prefix_space))

    if mtype == "Unigram":
        tokens, scores = [], []
        for piece, score in model["vocab"]:
            tokens.append(piece.replace("▁", " ").encode("utf-8"))
            scores.append(float(score))
        # metaspace replacement may alias pieces; keep first occurrence
        seen, keep_t, keep_s = set(), [], []
        for t, s in zip(tokens, scores):
            if t and t not in seen:
                seen.add(t)
                keep_t.append(t)
                keep_s.append(s)
        um = UnigramModel(Vocabulary(keep_t), keep_s)
        spec = TokenizerSpec(kind="unigram", model=um, pretok=pretok, byte_level=False)
    elif mtype == "BPE":
        inv = {c: b for b, c in gpt2_byte_to_unicode().items()} if byte_level_pre else None

        def conv(s: str) -> bytes:
            return _decode_bytelevel_token(s, inv) if inv else s.encode("utf-8")

        vocab_map = model["vocab"]
        tokens = [conv(s) for s, _ in sorted(vocab_map.items(), key=lambda kv: kv[1])]
        merges = []
        for m in model["merges"]:
            if isinstance(m, str):
                l, _, r = m.partition(" ")
            else:
                l, r = m
            merges.append((conv(l), conv(r)))
        vocab = Vocabulary(tokens)
        results = {l + r for l, r in merges}
        alphabet = [t for t in tokens if t not in results]
        bm = BpeModel(alphabet, merges, vocab)
        spec = TokenizerSpec(kind="bpe", model=bm, pretok=pretok, byte_level=False)
    else:
        raise DataError(f"unsupported community model type {mtype!r}")
    if spec._byte_complete():
        spec.byte_level = True
    return spec
