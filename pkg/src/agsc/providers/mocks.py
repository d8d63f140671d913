"""Deterministic in-process providers for tests and offline runs.

Every mock is a pure function of its inputs (plus a fixed seed), so runs
are reproducible across processes and platforms. None of them touch the
network.
"""

from __future__ import annotations

import hashlib
import math
import re
import time
from typing import Callable, Sequence

from .base import DecomposerProvider, EmbeddingVector, NliLogits
from .decompose import split_facts_rule_based

NliRule = Callable[[str, str], "NliLogits | tuple[float, float, float]"]


def _as_logits(value) -> NliLogits:
    if isinstance(value, NliLogits):
        return value
    return NliLogits(*value)


class ScriptedNliProvider:
    """NLI mock driven by an explicit (premise, hypothesis) -> logits map.

    Pairs not covered by the script fall through to `default`, either a
    fixed logits triple or a rule callable.
    """

    def __init__(
        self,
        script: dict[tuple[str, str], tuple[float, float, float]] | None = None,
        default: NliRule | tuple[float, float, float] = (0.0, 0.0, 0.0),
    ):
        self._script = dict(script or {})
        self._default = default

    def nli_batch(self, pairs: Sequence[tuple[str, str]]) -> list[NliLogits]:
        out = []
        for premise, hypothesis in pairs:
            if (premise, hypothesis) in self._script:
                out.append(_as_logits(self._script[(premise, hypothesis)]))
            elif callable(self._default):
                out.append(_as_logits(self._default(premise, hypothesis)))
            else:
                out.append(_as_logits(self._default))
        return out


class HashNliProvider:
    """Seeded pseudo-random logits derived from the pair's content hash.

    Useful for CLI-level determinism checks: distinct pairs get stable,
    platform-independent logits in [-scale, scale].
    """

    def __init__(self, seed: int = 0, scale: float = 4.0):
        self._seed = seed
        self._scale = scale

    def _one(self, premise: str, hypothesis: str) -> NliLogits:
        digest = hashlib.sha256(
            f"{self._seed}\x1f{premise}\x1f{hypothesis}".encode("utf-8")
        ).digest()
        vals = []
        for i in range(3):
            chunk = int.from_bytes(digest[8 * i : 8 * i + 8], "big")
            unit = chunk / float(2**64)  # [0, 1)
            vals.append((2.0 * unit - 1.0) * self._scale)
        return NliLogits(*vals)

    def nli_batch(self, pairs: Sequence[tuple[str, str]]) -> list[NliLogits]:
        return [self._one(p, h) for p, h in pairs]


_TOKEN_RE = re.compile(r"[a-z0-9']+")


def _token_bucket(token: str, dim: int) -> int:
    digest = hashlib.sha1(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dim


class HashEmbeddingProvider:
    """Hashed bag-of-words embedder.

    Lowercased alphanumeric tokens are hashed into `dim` buckets and
    counted; the count vector is L2-normalized. Texts with disjoint
    vocabularies (and no bucket collisions) are exactly orthogonal.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def embed_one(self, text: str) -> EmbeddingVector:
        counts = [0.0] * self.dim
        for token in _TOKEN_RE.findall(text.lower()):
            counts[_token_bucket(token, self.dim)] += 1.0
        norm = math.sqrt(sum(c * c for c in counts))
        if norm == 0.0:
            # No tokens at all: a fixed unit vector keeps the dimension
            # invariant without inventing content.
            counts[0] = 1.0
            norm = 1.0
        return EmbeddingVector(tuple(c / norm for c in counts))

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self.embed_one(t) for t in texts]


class ScriptedDecomposerProvider:
    """Decomposer mock: explicit sentence -> facts map, rule or fallback below."""

    def __init__(
        self,
        script: dict[str, list[str]] | None = None,
        default: Callable[[str, str], list[str]] | None = None,
    ):
        self._script = dict(script or {})
        self._default = default

    def decompose(self, sentence: str, prompt_context: str) -> list[str]:
        if sentence in self._script:
            return list(self._script[sentence])
        if self._default is not None:
            return list(self._default(sentence, prompt_context))
        return split_facts_rule_based(sentence)


class FixedLatencyDecomposer:
    """Adds a fixed per-call sleep around an inner decomposer.

    Stands in for a slow fact-extraction service when measuring how much
    decomposition work a pipeline variant performs.
    """

    def __init__(self, inner: DecomposerProvider, latency_ms: float = 1.0):
        self._inner = inner
        self.latency_ms = latency_ms

    def decompose(self, sentence: str, prompt_context: str) -> list[str]:
        time.sleep(self.latency_ms / 1000.0)
        return self._inner.decompose(sentence, prompt_context)
