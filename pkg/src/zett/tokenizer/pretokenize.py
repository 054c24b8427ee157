"""The "gpt2m" pretokenizer: a fixed state machine over unicode text.

This is the normative definition of the rule (the JSON name "gpt2m"
refers to exactly this). It reproduces the gpt2 splitting regex

    's|'t|'re|'ve|'m|'ll|'d| ?L+| ?N+| ?P+| \\s+(?!\\S) | \\s+

with one adjustment: characters in the Unicode Mark categories (Mn, Mc,
Me) count as word characters alongside Letters, so scripts that encode
vowel signs as combining marks are not over-segmented. At each position
the first matching alternative wins:

  1. a contraction: ' followed by s, t, m, d, re, ve or ll (lowercase);
  2. one optional space (U+0020) then a run of Letter/Mark characters;
  3. one optional space then a run of Number characters;
  4. one optional space then a run of characters that are none of
     whitespace / Letter / Number / Mark;
  5. a whitespace run, minus its final character when the run is
     followed by non-whitespace (an empty match fails);
  6. a whitespace run.

After matching, whitespace-only pretokens longer than
`whitespace_run_max` characters are split left-to-right into chunks of
at most that length. If `prefix_space` is set, a single space is
prepended to the (non-empty) text first. Pretokens are returned as
UTF-8 bytes; their concatenation reproduces the prefix-space-normalized
input exactly.
"""

import unicodedata

from .types import PretokenizerConfig

_CONTRACTIONS = ("'s", "'t", "'re", "'ve", "'m", "'ll", "'d")


def _is_word(ch: str) -> bool:
    return unicodedata.category(ch)[0] in ("L", "M")


def _is_number(ch: str) -> bool:
    return unicodedata.category(ch)[0] == "N"


def _is_other(ch: str) -> bool:
    return not (ch.isspace() or _is_word(ch) or _is_number(ch))


def _run(text: str, start: int, pred) -> int:
    i = start
    while i < len(text) and pred(text[i]):
        i += 1
    return i


def pretokenize_str(text: str, cfg: PretokenizerConfig) -> list[str]:
    """Split text into pretokens (str form); total over arbitrary text."""
    if cfg.prefix_space and text:
        text = " " + text
    out = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "'":
            for c in _CONTRACTIONS:
                if text.startswith(c, i):
                    out.append(c)
                    i += len(c)
                    break
            else:
                end = _run(text, i, _is_other)
                out.append(text[i:end])
                i = end
            continue
        j = i + 1 if ch == " " else i
        matched = False
        if j < n:
            for pred in (_is_word, _is_number, _is_other):
                if pred(text[j]):
                    end = _run(text, j, pred)
                    out.append(text[i:end])
                    i = end
                    matched = True
                    break
        if matched:
            continue
        # whitespace (ch is whitespace here: any non-space ch matched above)
        end = _run(text, i, str.isspace)
        if end < n and end - i > 1:
            end -= 1  # leave the last space to lead the next word
        out.append(text[i:end])
        i = end
    return _split_ws_runs(out, cfg.whitespace_run_max)


def _split_ws_runs(pretokens: list[str], max_run: int) -> list[str]:
    out = []
    for p in pretokens:
        if len(p) > max_run and p.isspace():
            out.extend(p[k : k + max_run] for k in range(0, len(p), max_run))
        else:
            out.append(p)
    return out


def pretokenize(text: str, cfg: PretokenizerConfig) -> list[bytes]:
    """Split text into pretokens as UTF-8 byte strings."""
    return [p.encode("utf-8") for p in pretokenize_str(text, cfg)]


def normalize(text: str, cfg: PretokenizerConfig) -> str:
    """The text whose bytes a round trip reproduces (prefix space applied)."""
    if cfg.prefix_space and text:
        return " " + text
    return text
