"""Append-only response caches keyed on content hashes.

One cache file per provider, line-delimited JSON, loaded fully at open.
Caching is transparent: wrapped providers return exactly what the inner
provider would, they just skip repeated calls.
"""

from __future__ import annotations

import hashlib
import json
import threading
import unicodedata
from pathlib import Path
from typing import Sequence

from .base import (
    DecomposerProvider,
    EmbeddingProvider,
    EmbeddingVector,
    NliLogits,
    NliProvider,
)

_SEP = "\x1f"


def content_key(*parts: str) -> str:
    """Hash of NFC-canonicalized text parts; the cache lookup key."""
    joined = _SEP.join(unicodedata.normalize("NFC", p) for p in parts)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


class ResponseCache:
    """Persistent key -> JSON value store with an append-only file backend."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.Lock()
        self._data: dict[str, object] = {}
        if self._path.exists():
            with open(self._path, encoding="utf-8") as f:
                for line in f:
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    self._data[rec["k"]] = rec["v"]
        else:
            self._path.parent.mkdir(parents=True, exist_ok=True)

    def get(self, key: str):
        with self._lock:
            return self._data.get(key)

    def put(self, key: str, value) -> None:
        line = json.dumps({"k": key, "v": value}, ensure_ascii=False)
        with self._lock:
            if key in self._data:
                return
            self._data[key] = value
            with open(self._path, "a", encoding="utf-8") as f:
                f.write(line + "\n")

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)


class CachedNli:
    """NLI provider wrapper that serves repeated pairs from the cache."""

    def __init__(self, inner: NliProvider, cache: ResponseCache):
        self._inner = inner
        self._cache = cache

    def nli_batch(self, pairs: Sequence[tuple[str, str]]) -> list[NliLogits]:
        results: list[NliLogits | None] = [None] * len(pairs)
        missing: list[int] = []
        for i, (premise, hypothesis) in enumerate(pairs):
            hit = self._cache.get(content_key("nli", premise, hypothesis))
            if hit is None:
                missing.append(i)
            else:
                results[i] = NliLogits(*hit)
        if missing:
            fetched = self._inner.nli_batch([pairs[i] for i in missing])
            for i, logits in zip(missing, fetched):
                premise, hypothesis = pairs[i]
                self._cache.put(
                    content_key("nli", premise, hypothesis), list(logits.as_tuple())
                )
                results[i] = logits
        return results  # type: ignore[return-value]


class CachedEmbedding:
    """Embedding provider wrapper that serves repeated texts from the cache."""

    def __init__(self, inner: EmbeddingProvider, cache: ResponseCache):
        self._inner = inner
        self._cache = cache

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        results: list[EmbeddingVector | None] = [None] * len(texts)
        missing: list[int] = []
        for i, text in enumerate(texts):
            hit = self._cache.get(content_key("embed", text))
            if hit is None:
                missing.append(i)
            else:
                results[i] = EmbeddingVector(tuple(hit))
        if missing:
            fetched = self._inner.embed_batch([texts[i] for i in missing])
            for i, vec in zip(missing, fetched):
                self._cache.put(content_key("embed", texts[i]), list(vec.values))
                results[i] = vec
        return results  # type: ignore[return-value]


class CachedDecomposer:
    """Decomposer wrapper that serves repeated sentences from the cache."""

    def __init__(self, inner: DecomposerProvider, cache: ResponseCache):
        self._inner = inner
        self._cache = cache

    def decompose(self, sentence: str, prompt_context: str) -> list[str]:
        key = content_key("decompose", sentence, prompt_context)
        hit = self._cache.get(key)
        if hit is not None:
            return list(hit)
        facts = self._inner.decompose(sentence, prompt_context)
        self._cache.put(key, list(facts))
        return facts
