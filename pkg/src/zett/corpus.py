"""Corpus ingestion: plain text (one document per line) or JSON lines.

JSONL documents carry the text under a "text" field. Blank documents
are dropped. Loading is streaming-capable via iter_corpus.
"""

import json
import os

from .errors import DataError, EmptyCorpus


def iter_corpus(path):
    jsonl = str(path).endswith((".jsonl", ".ndjson"))
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if jsonl:
                try:
                    obj = json.loads(line)
                    text = obj["text"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise DataError(f"{path}:{lineno}: bad JSONL document: {exc}") from exc
                if text.strip():
                    yield text
            else:
                yield line


def load_corpus(path) -> list[str]:
    if not os.path.exists(path):
        raise DataError(f"corpus file not found: {path}")
    docs = list(iter_corpus(path))
    if not docs:
        raise EmptyCorpus(f"{path} has no documents")
    return docs
