"""End-to-end orchestration: score one prompt or a whole corpus.

Stages per prompt: segment -> NLI-score sentences -> route granularity
(keep / skip / decompose) -> score surviving units -> embed -> cluster ->
aggregate. Per-stage wall time is attributed to the stage issuing the
provider call; with timing disabled all durations are zero and reports
become byte-reproducible given the same seed, config, and providers.

Corpus runs fan prompts out over a bounded worker pool, write one report
line per prompt (mirroring the ingestion schema plus result fields, so
report files can be re-ingested), and collect failures without stopping.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregation import (
    MODE_LITERAL,
    MODE_UNIFORM,
    ClusterSummary,
    DegenerateClusteringError,
    FinalScore,
    aggregate_global,
    aggregate_literal,
    aggregate_uniform,
    all_skip_fallback,
)
from .clustering import kmeans_hard, reduce_embeddings, select_k
from .config import (
    CLUSTER_KMEANS,
    CLUSTER_NONE,
    TIMING_WALL,
    PipelineConfig,
    ProviderSpec,
)
from .corpus import SampleSet, segment_sentences
from .providers import (
    CachedDecomposer,
    CachedEmbedding,
    CachedNli,
    DecomposerProvider,
    EmbeddingProvider,
    FixedLatencyDecomposer,
    HashEmbeddingProvider,
    HashNliProvider,
    HttpDecomposerProvider,
    HttpEmbeddingProvider,
    HttpNliProvider,
    NliProvider,
    ProviderError,
    ResilientDecomposer,
    ResponseCache,
    RuleBasedDecomposer,
)
from .routing import SKIPPED, apply_granularity
from .scoring import ReferenceSet

logger = logging.getLogger(__name__)


class PipelineError(Exception):
    """A prompt could not be processed for a non-provider reason."""


@dataclass(frozen=True)
class TimingBreakdown:
    """Per-stage durations (ms) and logical workload counts.

    Counts reflect requested work, not network traffic, so a warm cache
    changes wall time but never the recorded counts.
    """

    t_nli_ms: float = 0.0
    t_atom_ms: float = 0.0
    t_embed_ms: float = 0.0
    t_cluster_ms: float = 0.0
    t_total_ms: float = 0.0
    decomposer_calls: int = 0
    nli_pairs: int = 0
    embed_calls: int = 0


@dataclass(frozen=True)
class SentenceRecord:
    """Routing outcome for one anchor sentence; u_adaptive None == skipped."""

    sentence_index: int
    text: str
    dominant: str
    gap: float
    decision: str
    units: tuple[str, ...]
    u_adaptive: float | None


@dataclass(frozen=True)
class UnitRecord:
    unit_id: str
    text: str
    role: str
    sentence_index: int
    uncertainty: float
    memberships: tuple[float, ...]


@dataclass(frozen=True)
class PromptReport:
    prompt_id: str
    variant: str
    final: FinalScore
    sentences: tuple[SentenceRecord, ...]
    units: tuple[UnitRecord, ...]
    clusters: tuple[ClusterSummary, ...]
    selected_k: int
    timing: TimingBreakdown
    decomposer_fallback: bool
    meta: tuple[tuple[str, object], ...] = (("generation_time_included", False),)

    @property
    def fallback_used(self) -> bool:
        return self.final.fallback_used

    @property
    def u_final(self) -> float:
        return self.final.u_final


@dataclass(frozen=True)
class PromptFailure:
    prompt_id: str
    error: str


class _Stopwatch:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self._totals: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        if not self.enabled:
            yield
            return
        t0 = time.perf_counter()
        try:
            yield
        finally:
            elapsed = (time.perf_counter() - t0) * 1000.0
            self._totals[name] = self._totals.get(name, 0.0) + elapsed

    def total(self, name: str) -> float:
        return self._totals.get(name, 0.0)


class _InstrumentedNli:
    def __init__(self, inner: NliProvider, watch: _Stopwatch, counters: dict):
        self._inner = inner
        self._watch = watch
        self._counters = counters

    def nli_batch(self, pairs):
        self._counters["nli_pairs"] += len(pairs)
        with self._watch.stage("nli"):
            return self._inner.nli_batch(pairs)


class _InstrumentedEmbedding:
    def __init__(self, inner: EmbeddingProvider, watch: _Stopwatch, counters: dict):
        self._inner = inner
        self._watch = watch
        self._counters = counters

    def embed_batch(self, texts):
        self._counters["embed_calls"] += len(texts)
        with self._watch.stage("embed"):
            return self._inner.embed_batch(texts)


class _TimedDecomposer:
    """ResilientDecomposer facade whose calls are billed to the atom stage."""

    def __init__(self, inner: ResilientDecomposer, watch: _Stopwatch):
        self._inner = inner
        self._watch = watch

    def decompose(self, sentence: str, prompt_context: str):
        with self._watch.stage("atom"):
            return self._inner.decompose(sentence, prompt_context)


@dataclass
class ProviderBundle:
    nli: NliProvider
    embedder: EmbeddingProvider
    decomposer: DecomposerProvider


def build_providers(config: PipelineConfig) -> ProviderBundle:
    """Construct providers from config, with optional persistent caching."""
    nli = _build_nli(config.nli)
    embedder = _build_embedder(config.embed)
    decomposer = _build_decomposer(config.decompose)
    if config.cache_dir:
        cache_dir = Path(config.cache_dir)
        nli = CachedNli(nli, ResponseCache(cache_dir / "nli.jsonl"))
        embedder = CachedEmbedding(embedder, ResponseCache(cache_dir / "embed.jsonl"))
        decomposer = CachedDecomposer(
            decomposer, ResponseCache(cache_dir / "decompose.jsonl")
        )
    return ProviderBundle(nli=nli, embedder=embedder, decomposer=decomposer)


def _build_nli(spec: ProviderSpec) -> NliProvider:
    if spec.kind == "http":
        return HttpNliProvider(spec.transport)
    return HashNliProvider(seed=spec.mock_seed)


def _build_embedder(spec: ProviderSpec) -> EmbeddingProvider:
    if spec.kind == "http":
        return HttpEmbeddingProvider(spec.transport)
    return HashEmbeddingProvider(dim=spec.mock_dim)


def _build_decomposer(spec: ProviderSpec) -> DecomposerProvider:
    if spec.kind == "http":
        return HttpDecomposerProvider(spec.transport)
    inner: DecomposerProvider = RuleBasedDecomposer()
    if spec.mock_latency_ms > 0:
        inner = FixedLatencyDecomposer(inner, spec.mock_latency_ms)
    return inner


def prompt_seed(seed: int, prompt_id: str) -> int:
    """Stable per-prompt seed, independent of corpus order and worker count."""
    digest = hashlib.sha256(f"{seed}\x1f{prompt_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def run_prompt(
    sample: SampleSet,
    config: PipelineConfig,
    providers: ProviderBundle,
    debug_sink=None,
) -> PromptReport:
    """Score one sample set end to end.

    With identical config, seed, and provider outputs the report is
    bit-identical across runs. Provider failures propagate as
    ProviderError; the corpus runner turns them into failure records.
    """
    watch = _Stopwatch(config.timing == TIMING_WALL)
    counters = {"nli_pairs": 0, "embed_calls": 0}
    nli = _InstrumentedNli(providers.nli, watch, counters)
    embedder = _InstrumentedEmbedding(providers.embedder, watch, counters)
    decomposer = _TimedDecomposer(ResilientDecomposer(providers.decomposer), watch)

    t0 = time.perf_counter() if watch.enabled else 0.0

    anchor_sentences = segment_sentences(sample.anchor, response_index=0)
    if not anchor_sentences:
        raise PipelineError(f"prompt {sample.prompt_id!r}: anchor has no sentences")
    ref_sentences = [
        segment_sentences(text, response_index=i + 1)
        for i, text in enumerate(sample.references)
    ]
    refset = ReferenceSet(
        sample.references, config.scoring, nli, first_reference_index=1
    )
    gran = apply_granularity(
        anchor_sentences,
        refset,
        decomposer,
        config.granularity,
        prompt_context=sample.prompt,
    )

    memberships: list[tuple[float, ...]] = [() for _ in gran.units]
    summaries: list[ClusterSummary] = []
    selected_k = 0

    if gran.all_skipped:
        final = all_skip_fallback(gran.sentence_uncertainties)
    elif config.clustering_mode == CLUSTER_NONE:
        final = aggregate_uniform([su.uncertainty for su in gran.units])
    else:
        final, summaries, memberships, selected_k = _cluster_and_aggregate(
            sample, config, embedder, watch, gran, ref_sentences, debug_sink
        )

    total_ms = (time.perf_counter() - t0) * 1000.0 if watch.enabled else 0.0
    timing = TimingBreakdown(
        t_nli_ms=watch.total("nli"),
        t_atom_ms=watch.total("atom"),
        t_embed_ms=watch.total("embed"),
        t_cluster_ms=watch.total("cluster"),
        t_total_ms=total_ms,
        decomposer_calls=gran.decomposer_calls,
        nli_pairs=counters["nli_pairs"],
        embed_calls=counters["embed_calls"],
    )
    return PromptReport(
        prompt_id=sample.prompt_id,
        variant=config.variant,
        final=final,
        sentences=tuple(_sentence_record(d) for d in gran.decisions),
        units=tuple(
            UnitRecord(
                unit_id=su.unit.unit_id,
                text=su.unit.text,
                role=su.unit.role,
                sentence_index=su.unit.origin.sentence_index,
                uncertainty=su.uncertainty,
                memberships=memberships[i],
            )
            for i, su in enumerate(gran.units)
        ),
        clusters=tuple(summaries),
        selected_k=selected_k,
        timing=timing,
        decomposer_fallback=gran.decomposer_fallback,
    )


def _cluster_and_aggregate(
    sample, config, embedder, watch, gran, ref_sentences, debug_sink
):
    cluster_cfg = config.clustering
    if cluster_cfg.unit_source == "sentences":
        anchor_texts = [su.unit.origin.text for su in gran.units]
    else:
        anchor_texts = [su.unit.text for su in gran.units]
    ref_texts = [s.text for sents in ref_sentences for s in sents]
    vectors = embedder.embed_batch(anchor_texts + ref_texts)
    data = np.array([v.values for v in vectors], dtype=np.float64)

    seed = prompt_seed(config.seed, sample.prompt_id)
    with watch.stage("cluster"):
        reduced = reduce_embeddings(data, cluster_cfg.target_dim)
        selection = select_k(
            reduced, dataclasses.replace(cluster_cfg, seed=seed)
        )
        k = selection.fit.params.n_components
        if config.clustering_mode == CLUSTER_KMEANS:
            gamma = kmeans_hard(reduced, k, seed)
        else:
            gamma = selection.fit.responsibilities

    n_anchor = len(gran.units)
    uncertainties = [su.uncertainty for su in gran.units]
    anchor_mask = [True] * n_anchor + [False] * len(ref_texts)
    if config.aggregation_mode == MODE_LITERAL:
        final, summaries = aggregate_literal(gamma[:n_anchor], uncertainties)
    elif config.aggregation_mode == MODE_UNIFORM:
        final, summaries = aggregate_uniform(uncertainties), []
    else:
        try:
            final, summaries = aggregate_global(gamma, anchor_mask, uncertainties)
        except DegenerateClusteringError:
            final = all_skip_fallback(gran.sentence_uncertainties)
            summaries = []

    if debug_sink is not None:
        debug_sink(
            {
                "prompt_id": sample.prompt_id,
                "selected_k": k,
                "k_max": selection.k_max,
                "bic_trace": [[kk, b] for kk, b in selection.bic_trace],
                "reduced": reduced.tolist(),
                "gamma": gamma.tolist(),
            }
        )
    memberships = [tuple(float(g) for g in row) for row in gamma[:n_anchor]]
    return final, summaries, memberships, k


def _sentence_record(decision) -> SentenceRecord:
    u = decision.adaptive_uncertainty
    return SentenceRecord(
        sentence_index=decision.signal.sentence.sentence_index,
        text=decision.signal.sentence.text,
        dominant=decision.signal.dominant,
        gap=decision.signal.gap,
        decision=decision.kind,
        units=tuple(unit.unit_id for unit in decision.resulting_units),
        u_adaptive=None if u is SKIPPED else float(u),
    )


# -- report (de)serialization --


def report_to_dict(report: PromptReport, sample: SampleSet) -> dict:
    """One report line: the ingestion fields plus all result fields."""
    line: dict = {
        "prompt_id": sample.prompt_id,
        "prompt": sample.prompt,
        "responses": list(sample.responses),
    }
    if sample.factuality is not None:
        line["factuality"] = sample.factuality
    line.update(
        {
            "variant": report.variant,
            "u_final": report.final.u_final,
            "aggregation_mode": report.final.mode,
            "fallback_used": report.final.fallback_used,
            "decomposer_fallback": report.decomposer_fallback,
            "selected_k": report.selected_k,
            "sentences": [
                {
                    "sentence_index": s.sentence_index,
                    "text": s.text,
                    "dominant": s.dominant,
                    "gap": s.gap,
                    "decision": s.decision,
                    "units": list(s.units),
                    "u_adaptive": s.u_adaptive,
                }
                for s in report.sentences
            ],
            "units": [
                {
                    "unit_id": u.unit_id,
                    "text": u.text,
                    "role": u.role,
                    "sentence_index": u.sentence_index,
                    "uncertainty": u.uncertainty,
                    "memberships": list(u.memberships),
                }
                for u in report.units
            ],
            "clusters": [dataclasses.asdict(c) for c in report.clusters],
            "timing": dataclasses.asdict(report.timing),
            "meta": dict(report.meta),
        }
    )
    return line


def report_from_dict(line: dict) -> PromptReport:
    """Inverse of report_to_dict (the sample fields ride along untouched)."""
    return PromptReport(
        prompt_id=line["prompt_id"],
        variant=line["variant"],
        final=FinalScore(
            u_final=line["u_final"],
            mode=line["aggregation_mode"],
            fallback_used=line["fallback_used"],
        ),
        sentences=tuple(
            SentenceRecord(
                sentence_index=s["sentence_index"],
                text=s["text"],
                dominant=s["dominant"],
                gap=s["gap"],
                decision=s["decision"],
                units=tuple(s["units"]),
                u_adaptive=s["u_adaptive"],
            )
            for s in line["sentences"]
        ),
        units=tuple(
            UnitRecord(
                unit_id=u["unit_id"],
                text=u["text"],
                role=u["role"],
                sentence_index=u["sentence_index"],
                uncertainty=u["uncertainty"],
                memberships=tuple(u["memberships"]),
            )
            for u in line["units"]
        ),
        clusters=tuple(
            ClusterSummary(
                k=c["k"],
                mass=c["mass"],
                uncertainty=c["uncertainty"],
                weight=c["weight"],
            )
            for c in line["clusters"]
        ),
        selected_k=line["selected_k"],
        timing=TimingBreakdown(**line["timing"]),
        decomposer_fallback=line["decomposer_fallback"],
        meta=tuple(line["meta"].items()),
    )


# -- corpus runs --


@dataclass
class CorpusSummary:
    n_prompts: int
    n_failed: int
    failures: list[PromptFailure] = field(default_factory=list)
    scores: dict[str, float] = field(default_factory=dict)
    timing_totals: TimingBreakdown = field(default_factory=TimingBreakdown)


def run_many(
    samples: Sequence[SampleSet],
    config: PipelineConfig,
    providers: ProviderBundle,
    debug_sink=None,
) -> list[PromptReport | PromptFailure]:
    """Score prompts over a bounded worker pool, preserving dataset order."""

    def one(sample: SampleSet):
        try:
            return run_prompt(sample, config, providers, debug_sink=debug_sink)
        except ProviderError as e:
            logger.warning("prompt %s failed: %s", sample.prompt_id, e)
            return PromptFailure(prompt_id=sample.prompt_id, error=str(e))

    workers = min(config.effective_workers(), max(len(samples), 1))
    if workers <= 1:
        return [one(s) for s in samples]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, samples))


def _sum_timing(reports: Sequence[PromptReport]) -> TimingBreakdown:
    return TimingBreakdown(
        t_nli_ms=sum(r.timing.t_nli_ms for r in reports),
        t_atom_ms=sum(r.timing.t_atom_ms for r in reports),
        t_embed_ms=sum(r.timing.t_embed_ms for r in reports),
        t_cluster_ms=sum(r.timing.t_cluster_ms for r in reports),
        t_total_ms=sum(r.timing.t_total_ms for r in reports),
        decomposer_calls=sum(r.timing.decomposer_calls for r in reports),
        nli_pairs=sum(r.timing.nli_pairs for r in reports),
        embed_calls=sum(r.timing.embed_calls for r in reports),
    )


_SAFE_ID = re.compile(r"[^A-Za-z0-9._-]+")


def run_corpus(
    samples: Sequence[SampleSet],
    config: PipelineConfig,
    providers: ProviderBundle,
) -> tuple[list[PromptReport], CorpusSummary]:
    """Score a corpus and write reports.jsonl plus summary.json.

    Failed prompts are listed in the summary and omitted from the report
    file; the run keeps going. An empty corpus yields an empty summary.
    """
    report_dir = Path(config.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)

    debug_sink = None
    if config.debug_clusters:

        def debug_sink(payload: dict) -> None:
            name = _SAFE_ID.sub("_", payload["prompt_id"]) or "prompt"
            path = report_dir / f"{name}.clusters.json"
            path.write_text(
                json.dumps(payload, ensure_ascii=False, indent=2) + "\n",
                encoding="utf-8",
            )

    results = run_many(samples, config, providers, debug_sink=debug_sink)
    reports: list[PromptReport] = []
    failures: list[PromptFailure] = []
    with open(report_dir / "reports.jsonl", "w", encoding="utf-8") as f:
        for sample, result in zip(samples, results):
            if isinstance(result, PromptFailure):
                failures.append(result)
                continue
            reports.append(result)
            f.write(json.dumps(report_to_dict(result, sample), ensure_ascii=False))
            f.write("\n")

    summary = CorpusSummary(
        n_prompts=len(samples),
        n_failed=len(failures),
        failures=failures,
        scores={r.prompt_id: r.final.u_final for r in reports},
        timing_totals=_sum_timing(reports),
    )
    summary_dict = {
        "n_prompts": summary.n_prompts,
        "n_failed": summary.n_failed,
        "failures": [dataclasses.asdict(x) for x in failures],
        "scores": summary.scores,
        "timing_totals": dataclasses.asdict(summary.timing_totals),
        "variant": config.variant,
    }
    (report_dir / "summary.json").write_text(
        json.dumps(summary_dict, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    return reports, summary
