"""Provider-facing types, configuration, and error contracts.

Providers are external services the pipeline talks to: a three-class NLI
scorer, a sentence embedder, and an atomic-fact decomposer. Only the wire
clients in http.py do I/O; the mocks in mocks.py are pure functions of
their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable


class ProviderError(Exception):
    """A provider call failed after exhausting its retry budget."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class ProtocolError(ProviderError):
    """The provider answered, but the response violates the wire contract."""


@dataclass(frozen=True)
class NliLogits:
    """Raw three-class NLI scores: entailment, contradiction, neutral."""

    entail: float
    contradict: float
    neutral: float

    def __post_init__(self) -> None:
        for v in (self.entail, self.contradict, self.neutral):
            if not math.isfinite(v):
                raise ValueError(f"NLI logits must be finite, got {v!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.entail, self.contradict, self.neutral)


@dataclass(frozen=True)
class EmbeddingVector:
    """A dense sentence embedding of provider-reported dimension."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("embedding must be non-empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding entries must be finite")

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff_ms: int = 50

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.base_backoff_ms < 0:
            raise ValueError("base_backoff_ms must be >= 0")


@dataclass(frozen=True)
class ProviderConfig:
    """Transport settings for one provider endpoint.

    Auth tokens are read from the environment variable named by
    auth_env_var, never from configuration files.
    """

    endpoint: str = ""
    auth_env_var: str = ""
    batch_size: int = 32
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    timeout_ms: int = 30000

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.timeout_ms < 1:
            raise ValueError("timeout_ms must be >= 1")


@runtime_checkable
class NliProvider(Protocol):
    def nli_batch(self, pairs: Sequence[tuple[str, str]]) -> list[NliLogits]:
        """Score (premise, hypothesis) pairs; output is order-aligned."""
        ...


@runtime_checkable
class EmbeddingProvider(Protocol):
    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        """Embed texts; output is order-aligned with a constant dimension."""
        ...


@runtime_checkable
class DecomposerProvider(Protocol):
    def decompose(self, sentence: str, prompt_context: str) -> list[str]:
        """Split one sentence into at least one atomic fact string."""
        ...
