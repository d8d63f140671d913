"""HTTP clients for the NLI, embedding, and decomposer services.

Wire contract (all bodies UTF-8 JSON):

    POST {endpoint}/nli    {"pairs": [{"premise": s, "hypothesis": s}, ...]}
                        -> {"logits": [[entail, contradict, neutral], ...]}
    POST {endpoint}/embed  {"texts": [s, ...]}
                        -> {"vectors": [[...], ...], "dim": D}
    POST {endpoint}/chat   {"messages": [{"role": r, "content": s}, ...]}
                        -> {"text": s}   # one fact per line, "- " bullets

Non-2xx responses and transport failures are retried with exponential
backoff; after max_attempts the call raises ProviderError carrying the
attempt count. Requests are chunked to batch_size and at most
max_in_flight chunks are posted concurrently; outputs are reassembled in
request order.
"""

from __future__ import annotations

import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import requests

from .base import (
    EmbeddingVector,
    NliLogits,
    ProtocolError,
    ProviderConfig,
    ProviderError,
)
from .decompose import build_decompose_messages, parse_fact_lines


class _HttpClient:
    def __init__(self, config: ProviderConfig):
        if not config.endpoint:
            raise ValueError("http provider requires an endpoint")
        self._config = config
        self._session = requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self._config.auth_env_var:
            token = os.environ.get(self._config.auth_env_var, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, path: str, body: dict) -> dict:
        url = self._config.endpoint.rstrip("/") + path
        retry = self._config.retry
        timeout_s = self._config.timeout_ms / 1000.0
        last_error = "no attempt made"
        for attempt in range(1, retry.max_attempts + 1):
            try:
                resp = self._session.post(
                    url, json=body, headers=self._headers(), timeout=timeout_s
                )
                if 200 <= resp.status_code < 300:
                    return resp.json()
                last_error = f"HTTP {resp.status_code}"
            except requests.RequestException as e:
                last_error = str(e)
            if attempt < retry.max_attempts:
                time.sleep(retry.base_backoff_ms * (2 ** (attempt - 1)) / 1000.0)
        raise ProviderError(
            f"POST {url} failed after {retry.max_attempts} attempts: {last_error}",
            attempts=retry.max_attempts,
        )

    def _batched(self, items: list, worker) -> list:
        """Run `worker` over batch_size chunks, max_in_flight at a time."""
        if not items:
            return []
        size = self._config.batch_size
        chunks = [items[i : i + size] for i in range(0, len(items), size)]
        if len(chunks) == 1:
            return worker(chunks[0])
        with ThreadPoolExecutor(max_workers=self._config.max_in_flight) as pool:
            parts = list(pool.map(worker, chunks))
        out = []
        for part in parts:
            out.extend(part)
        return out


class HttpNliProvider(_HttpClient):
    def nli_batch(self, pairs: Sequence[tuple[str, str]]) -> list[NliLogits]:
        for premise, hypothesis in pairs:
            if not premise or not hypothesis:
                raise ValueError("NLI pair texts must be non-empty")
        return self._batched(list(pairs), self._score_chunk)

    def _score_chunk(self, chunk: list[tuple[str, str]]) -> list[NliLogits]:
        body = {
            "pairs": [{"premise": p, "hypothesis": h} for p, h in chunk]
        }
        data = self._post("/nli", body)
        logits = data.get("logits")
        if not isinstance(logits, list) or len(logits) != len(chunk):
            got = len(logits) if isinstance(logits, list) else "none"
            raise ProtocolError(
                f"NLI response arity mismatch: sent {len(chunk)} pairs, got {got}"
            )
        out = []
        for row in logits:
            if not isinstance(row, list) or len(row) != 3:
                raise ProtocolError(f"NLI logits row malformed: {row!r}")
            out.append(NliLogits(float(row[0]), float(row[1]), float(row[2])))
        return out


class HttpEmbeddingProvider(_HttpClient):
    def __init__(self, config: ProviderConfig):
        super().__init__(config)
        self._dim: int | None = None
        self._dim_lock = threading.Lock()

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        for t in texts:
            if not t:
                raise ValueError("embedding texts must be non-empty")
        return self._batched(list(texts), self._embed_chunk)

    def _embed_chunk(self, chunk: list[str]) -> list[EmbeddingVector]:
        data = self._post("/embed", {"texts": chunk})
        vectors = data.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(chunk):
            got = len(vectors) if isinstance(vectors, list) else "none"
            raise ProtocolError(
                f"embed response arity mismatch: sent {len(chunk)} texts, got {got}"
            )
        dim = data.get("dim", len(vectors[0]) if vectors else 0)
        with self._dim_lock:
            if self._dim is None:
                self._dim = dim
            elif dim != self._dim:
                raise ProtocolError(
                    f"embedding dimension drift: expected {self._dim}, got {dim}"
                )
        out = []
        for vec in vectors:
            if len(vec) != dim:
                raise ProtocolError(
                    f"embedding vector length {len(vec)} != reported dim {dim}"
                )
            out.append(EmbeddingVector(tuple(float(v) for v in vec)))
        return out


class HttpDecomposerProvider(_HttpClient):
    def decompose(self, sentence: str, prompt_context: str) -> list[str]:
        if not sentence:
            raise ValueError("sentence must be non-empty")
        body = {"messages": build_decompose_messages(sentence, prompt_context)}
        data = self._post("/chat", body)
        text = data.get("text")
        if not isinstance(text, str):
            raise ProtocolError("chat response missing 'text' field")
        facts = parse_fact_lines(text)
        if not facts:
            raise ProtocolError("chat response contained no fact lines")
        return facts
